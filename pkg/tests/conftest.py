import pytest

from qaprobe.corpus import ContextRecord
from qaprobe.syntax import StaticTaggerBackend

import toy_corpus


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(num, title): acceptance criterion identity"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when != "call":
        return
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    reporter = item.config.pluginmanager.get_plugin("terminalreporter")
    if reporter is None:
        return
    num, title = marker.args
    status = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    reporter.write_line(f"ACCEPTANCE CRITERION {num}: {status} - {title}")


@pytest.fixture(scope="session")
def toy_backend():
    return StaticTaggerBackend(toy_corpus.backend_table())


@pytest.fixture(scope="session")
def toy_records():
    return {
        rec_id: ContextRecord(id=rec_id, source="custom", text=text)
        for rec_id, text, _ in toy_corpus.TOY_RECORDS
    }
