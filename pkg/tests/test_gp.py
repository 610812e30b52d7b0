import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from pandorabo.gp import (
    AmplitudeBump,
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

M52 = KernelSpec("matern52", 0.1)


def _fd(fun, x, h=1e-5):
    return np.array([(fun(x + h * e) - fun(x - h * e)) / (2 * h) for e in np.eye(len(x))])


def test_kernel_validation():
    with pytest.raises(ValueError):
        KernelSpec("matern12", 0.1)
    with pytest.raises(ValueError):
        KernelSpec(lengthscale=0.0)
    with pytest.raises(ValueError):
        KernelSpec(amplitude=-1.0)
    with pytest.raises(ValueError):
        KernelSpec(jitter=0.0)


def test_empty_data_gives_prior():
    post = fit_posterior(KernelSpec("squared-exponential", 0.3, amplitude=2.0), Dataset.empty(2))
    mu, sigma = post.mean_std(np.random.default_rng(0).uniform(size=(7, 2)))
    np.testing.assert_array_equal(mu, 0.0)
    np.testing.assert_allclose(sigma, 2.0)


def test_single_point_interpolation():
    k = KernelSpec("matern52", 0.1, amplitude=1.5)
    post = fit_posterior(k, Dataset([[0.4]], [3.0]))
    mu, sigma = mean_std(post, [0.4])
    assert mu == pytest.approx(3.0, abs=1e-6)
    assert sigma <= np.sqrt(k.jitter) * k.amplitude + 1e-12


def test_two_point_posterior_matches_dense_oracle():
    # Reference values from scikit-learn's Matern kernel and a dense solve.
    post = fit_posterior(M52, Dataset([[0.2], [0.35]], [1.0, -0.5]))
    mu, sigma = mean_std(post, [0.27])
    assert mu == pytest.approx(0.3286716186260279, rel=1e-9)
    assert sigma == pytest.approx(0.5344575443717257, rel=1e-9)


def test_five_point_posterior_matches_dense_oracle():
    X = [[0.1, 0.2], [0.4, 0.8], [0.5, 0.5], [0.9, 0.1], [0.7, 0.6]]
    post = fit_posterior(M52, Dataset(X, [0.3, -1.2, 0.8, 0.1, -0.4]))
    mu, sigma = mean_std(post, [0.55, 0.45])
    assert mu == pytest.approx(0.5493603074440567, rel=1e-9)
    assert sigma == pytest.approx(0.7100370537753962, rel=1e-9)


def test_dense_oracle_on_random_data():
    from sklearn.gaussian_process.kernels import RBF, Matern

    rng = np.random.default_rng(3)
    X, y, Xs = rng.uniform(size=(6, 3)), rng.normal(size=6), rng.uniform(size=(4, 3))
    for spec, ref in [
        (KernelSpec("matern32", 0.4), Matern(0.4, nu=1.5)),
        (KernelSpec("matern52", 0.4), Matern(0.4, nu=2.5)),
        (KernelSpec("squared-exponential", 0.4), RBF(0.4)),
    ]:
        K = ref(X) + spec.jitter * np.eye(6)
        ks = ref(Xs, X)
        mu_ref = ks @ np.linalg.solve(K, y)
        var_ref = 1.0 - np.sum(ks * np.linalg.solve(K, ks.T).T, axis=1)
        mu, sigma = GaussianProcess(spec).fit(X, y).mean_std(Xs)
        np.testing.assert_allclose(mu, mu_ref, rtol=1e-8, atol=1e-10)
        np.testing.assert_allclose(sigma**2, var_ref, rtol=1e-7, atol=1e-10)


@pytest.mark.parametrize("family", ["matern52", "squared-exponential"])
def test_gradients_match_finite_differences(family):
    rng = np.random.default_rng(11)
    worst, n = 0.0, 0
    while n < 100:
        d = int(rng.integers(1, 4))
        k = KernelSpec(family, rng.uniform(0.2, 0.8))
        X = rng.uniform(size=(int(rng.integers(1, 6)), d))
        post = GaussianProcess(k).fit(X, rng.normal(size=len(X)))
        x = rng.uniform(size=d)
        # Finite differences of sigma lose accuracy where sigma is tiny.
        if mean_std(post, x)[1] < 1e-3:
            continue
        n += 1
        dmu, dsig = mean_std_gradients(post, x)
        fd_mu = _fd(lambda z: mean_std(post, z)[0], x)
        fd_sig = _fd(lambda z: mean_std(post, z)[1], x)
        for g, f in ((dmu, fd_mu), (dsig, fd_sig)):
            worst = max(worst, np.linalg.norm(g - f) / max(np.linalg.norm(f), 1e-8))
    assert worst <= 1e-4


def test_prior_gradients_are_zero():
    post = fit_posterior(M52, Dataset.empty(3))
    dmu, dsig = mean_std_gradients(post, [0.1, 0.5, 0.9])
    np.testing.assert_array_equal(dmu, 0.0)
    np.testing.assert_array_equal(dsig, 0.0)


def test_symmetric_midpoint_has_zero_mean_gradient():
    post = fit_posterior(KernelSpec("matern52", 0.3), Dataset([[0.3], [0.7]], [1.0, 1.0]))
    dmu, _ = mean_std_gradients(post, [0.5])
    assert abs(dmu[0]) < 1e-12


def test_sigma_gradient_at_training_point():
    # Jitter keeps sigma smooth at the data, with a symmetric minimum there.
    post = fit_posterior(M52, Dataset([[0.5]], [1.0]))
    _, dsig = mean_std_gradients(post, [0.5])
    np.testing.assert_array_equal(dsig, 0.0)
    # With negligible jitter the variance collapses and the gradient is flagged.
    tight = fit_posterior(KernelSpec("matern52", 0.1, jitter=1e-14), Dataset([[0.5]], [1.0]))
    _, dsig = mean_std_gradients(tight, [0.5])
    assert np.all(np.isnan(dsig))


def test_bumped_kernel_gradients():
    k = KernelSpec("matern52", 0.7, scale=AmplitudeBump(0.1, 10.0, 1.0))
    rng = np.random.default_rng(2)
    post = GaussianProcess(k).fit(rng.uniform(-2, 2, size=(3, 1)), rng.normal(size=3))
    for x in ([-1.3], [0.4], [2.5]):
        x = np.array(x)
        dmu, dsig = mean_std_gradients(post, x)
        np.testing.assert_allclose(dmu, _fd(lambda z: mean_std(post, z)[0], x), rtol=1e-5, atol=1e-7)
        np.testing.assert_allclose(dsig, _fd(lambda z: mean_std(post, z)[1], x), rtol=1e-5, atol=1e-7)


def test_factorization_failure_raises(monkeypatch):
    def broken(_):
        raise np.linalg.LinAlgError("not positive definite")

    monkeypatch.setattr(np.linalg, "cholesky", broken)
    with pytest.raises(NumericalError):
        GaussianProcess(M52).fit([[0.1], [0.2]], [0.0, 1.0])


def test_duplicate_inputs_are_stabilized_by_jitter():
    post = GaussianProcess(M52).fit([[0.1], [0.1], [0.3]], [1.0, 1.0, 0.0])
    assert post.jitter_ >= M52.jitter
    assert np.isfinite(post.mean_std([[0.2]])[0]).all()


def test_estimator_api():
    gp = GaussianProcess(kernel=M52, standardize=True)
    params = gp.get_params()
    assert params["kernel"] is M52 and params["standardize"] is True
    gp2 = clone(gp).set_params(noise_variance=1e-3)
    X = np.random.default_rng(0).uniform(size=(5, 2))
    y = X.sum(axis=1)
    mu, sd = gp2.fit(X, y).predict(X, return_std=True)
    assert mu.shape == (5,) and sd.shape == (5,)
    with pytest.raises(ValueError):
        gp2.predict(np.zeros((1, 3)))


def test_standardized_fit_interpolates_on_original_scale():
    X = np.array([[0.1], [0.5], [0.9]])
    y = np.array([10.0, 12.0, 11.0])
    mu = GaussianProcess(KernelSpec("matern52", 0.3), standardize=True).fit(X, y).predict(X)
    np.testing.assert_allclose(mu, y, atol=1e-5)


def test_log_cost_posterior():
    k = KernelSpec("matern52", 0.1)
    post = fit_log_cost_posterior(k, [[0.3]], [1.0])
    assert mean_std(post, [0.3])[0] == pytest.approx(0.0, abs=1e-9)
    prior = fit_log_cost_posterior(k, np.zeros((0, 1)), [])
    assert mean_std(prior, [0.7]) == (0.0, 1.0)
    # Dense oracle on log-costs (scikit-learn kernel).
    two = fit_log_cost_posterior(k, [[0.2], [0.3]], [2.0, 0.5])
    mu, sigma = mean_std(two, [0.25])
    assert mu == pytest.approx(0.0, abs=1e-12)
    assert sigma == pytest.approx(0.31443393482031684, rel=1e-9)
    with pytest.raises(ValueError):
        fit_log_cost_posterior(k, [[0.2]], [0.0])
    with pytest.raises(ValueError):
        fit_log_cost_posterior(k, [[0.2]], [-1.0])


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    n=st.integers(1, 8),
    family=st.sampled_from(["matern32", "matern52", "squared-exponential"]),
)
def test_posterior_variance_bounded_and_monotone(seed, n, family):
    rng = np.random.default_rng(seed)
    k = KernelSpec(family, rng.uniform(0.05, 1.0), amplitude=rng.uniform(0.5, 2.0))
    X = rng.uniform(size=(n + 1, 2))
    y = rng.normal(size=n + 1)
    Xs = rng.uniform(size=(10, 2))
    small = GaussianProcess(k).fit(X[:n], y[:n])
    large = GaussianProcess(k).fit(X, y)
    s_small = small.mean_std(Xs)[1]
    s_large = large.mean_std(Xs)[1]
    assert np.all(s_small**2 <= k.amplitude**2 * (1 + 1e-9))
    assert np.all(s_large >= 0)
    assert np.all(s_large <= s_small + 1e-6 * k.amplitude)


def test_prior_path_is_deterministic():
    p1 = sample_prior_path(M52, 64, seed=5, dim=2)
    p2 = sample_prior_path(M52, 64, seed=5, dim=2)
    x = np.array([[0.3, 0.4]])
    assert p1(x)[0] == p2(x)[0]
    assert p1(x)[0] == p1(x)[0]
    with pytest.raises(ValueError):
        sample_prior_path(M52, 0, seed=1)


def test_prior_path_gradient():
    path = sample_prior_path(KernelSpec("matern32", 0.5), 128, seed=1, dim=3)
    x = np.array([0.2, 0.6, 0.4])
    np.testing.assert_allclose(path.gradient(x[None])[0], _fd(lambda z: path(z[None])[0], x), rtol=1e-6, atol=1e-8)


@pytest.mark.parametrize("family", ["matern52", "squared-exponential"])
def test_prior_path_covariance_matches_kernel(family):
    # Each seed redraws the features, so the cross-seed covariance is the kernel itself.
    k = KernelSpec(family, 0.3, amplitude=1.3)
    rng = np.random.default_rng(0)
    A = rng.uniform(size=(20, 2))
    B = A + rng.normal(scale=0.15, size=(20, 2))
    n = 10_000
    fa = np.empty((n, 20))
    fb = np.empty((n, 20))
    for s in range(n):
        p = sample_prior_path(k, 16, seed=s, dim=2)
        fa[s], fb[s] = p(A), p(B)
    prod = fa * fb
    est = prod.mean(axis=0)
    se = prod.std(axis=0, ddof=1) / np.sqrt(n)
    target = np.array([k(A[i : i + 1], B[i : i + 1])[0, 0] for i in range(20)])
    assert np.all(np.abs(est - target) <= 3 * se)
    var = (fa**2).mean(axis=0)
    var_se = (fa**2).std(axis=0, ddof=1) / np.sqrt(n)
    assert np.all(np.abs(var - k.amplitude**2) <= 3 * var_se)
