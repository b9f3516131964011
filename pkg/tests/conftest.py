import sys


def pytest_runtest_logreport(report):
    """One pass/fail line per acceptance criterion, visible without -s."""
    if "test_acceptance" not in report.nodeid or report.when != "call":
        return
    verdict = "PASS" if report.passed else "FAIL"
    name = report.nodeid.split("::")[-1]
    print(f"ACCEPTANCE {verdict}: {name}", file=sys.stderr)
