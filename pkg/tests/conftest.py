"""Prints one PASS/FAIL line per acceptance criterion at the end of the run."""

# criterion number -> {nodeid: (title, failed, detail)}
_CRITERIA = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py::" not in report.nodeid:
        return
    props = dict(report.user_properties)
    if "criterion" not in props:
        return
    runs = _CRITERIA.setdefault(props["criterion"], {})
    _, failed_before, _ = runs.get(report.nodeid, (None, False, None))
    runs[report.nodeid] = (props.get("title", ""), failed_before or report.failed, props.get("detail", ""))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_CRITERIA):
        runs = list(_CRITERIA[key].values())
        status = "FAIL" if any(failed for _, failed, _ in runs) else "PASS"
        details = "; ".join(d for _, _, d in runs if d)
        line = f"criterion {key:2d} {status}  {runs[0][0]}"
        terminalreporter.write_line(line + (f"  [{details}]" if details else ""))
