import pytest
from hypothesis import settings

from mamsopt.bank import BankConfig, build_bank

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture(scope="session")
def small_bank():
    """K=3, J=2 bank large enough for quick rate checks."""
    return build_bank(BankConfig(replicates=4000, K=3, J=2, n_max=20, seed=12345))


@pytest.fixture(scope="session")
def tiny_bank():
    return build_bank(BankConfig(replicates=200, K=3, J=2, n_max=8, seed=99))


# ---------------------------------------------------------------------------
# acceptance reporting: one line per criterion in the terminal summary

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and report.passed):
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "checks": []})
    details = [v for k, v in item.user_properties if k == "detail"]
    entry["checks"].append((item.name, report.passed, details))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        ok = all(passed for _, passed, _ in entry["checks"])
        failed = [name for name, passed, _ in entry["checks"] if not passed]
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {entry['title']}"
        line += f" ({len(entry['checks']) - len(failed)}/{len(entry['checks'])} checks)"
        tr.write_line(line)
        for name, passed, details in entry["checks"]:
            for d in details:
                tr.write_line(f"    {name}: {d}")
        for name in failed:
            tr.write_line(f"    failed: {name}")
