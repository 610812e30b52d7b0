"""Cost-aware Bayesian optimization with Pandora's Box Gittins index acquisitions."""

from .acquisition import (
    AcquisitionContext,
    EIAcquisition,
    EIPCAcquisition,
    KnownCost,
    PBGIAcquisition,
    PbgiDecayState,
    ThompsonAcquisition,
    UCBAcquisition,
    UniformCost,
    UnknownCost,
    ei,
    eipc,
    pbgi,
    pbgi_d_update,
    pbgi_grad,
    pbgi_u,
    thompson_objective,
    ucb,
)
from .bench import RegretRecord, run_experiment, summarize
from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .gp import (
    Dataset,
    GaussianProcess,
    KernelSpec,
    NumericalError,
    fit_log_cost_posterior,
    fit_posterior,
    mean_std,
    mean_std_gradients,
    sample_prior_path,
)
from .objectives import ackley, bayes_regret_objective, bump_counterexample, levy, linear_cost, rosenbrock
from .optimize import DomainBox, OptimizeReport, maximize, select_restarts, sobol_candidates
from .pandora import (
    FiniteSupport,
    Gaussian,
    MixedBudgetPolicy,
    PandoraBox,
    PandoraInstance,
    PolicyTrace,
    brute_force_value,
    budget_lambda,
    expected_improvement_dist,
    gittins_index,
    lagrangian_value,
    policy_value,
    run_gittins_policy,
)

__version__ = "0.1.0"
