import pytest


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    if rep.when == "call":
        # lets the acceptance verdict fixture report PASS/FAIL on teardown
        item.rep_failed = rep.failed
