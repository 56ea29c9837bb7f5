import sys
from pathlib import Path

from hypothesis import HealthCheck, settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

FIXTURES = Path(__file__).parent / "fixtures"

_criteria: dict[str, tuple[str, float]] = {}


def pytest_runtest_logreport(report):
    if "acceptance" in report.keywords and "::test_criterion_" in report.nodeid:
        name = report.nodeid.split("::")[-1].removeprefix("test_")
        if report.when == "call" or report.outcome != "passed":
            outcome = "PASS" if report.passed else "FAIL"
            prev = _criteria.get(name)
            if prev is None or prev[0] == "PASS":
                _criteria[name] = (outcome, report.duration)


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for name in sorted(_criteria, key=lambda n: int(n.split("_")[1])):
            outcome, duration = _criteria[name]
            terminalreporter.write_line(f"{outcome}  {name}  ({duration:.2f}s)")
