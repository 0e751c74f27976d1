import io
import time

import pytest

from nesterov_lab import cli

_LINES = {}
_DETAILS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion this test checks")


@pytest.fixture
def detail(request):
    """Record a one-line measurement for the acceptance summary of this test."""
    key = request.node.nodeid

    def put(text):
        _DETAILS.setdefault(key, []).append(text)

    return put


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    n, title = mark.args
    if hasattr(rep, "wasxfail"):
        status = "FAIL (expected; see decisions ledger)"
    else:
        status = "PASS" if rep.passed else "FAIL"
    _LINES.setdefault(n, []).append((title, status, item.nodeid))


def pytest_terminal_summary(terminalreporter):
    if not _LINES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_LINES):
        for title, status, nodeid in _LINES[n]:
            info = "; ".join(_DETAILS.get(nodeid, []))
            tr.write_line(f"criterion {n:>2} {status:<5} {title}" + (f" | {info}" if info else ""))


@pytest.fixture(scope="session")
def fig2(tmp_path_factory):
    """The canonical reproduction run, done once through the CLI."""
    out_dir = tmp_path_factory.mktemp("fig2")
    buf = io.StringIO()
    clock = time.perf_counter()
    traj, report = cli.simulate(cli.fig2_config(out_dir), out=buf)
    seconds = time.perf_counter() - clock
    return {"traj": traj, "report": report, "dir": out_dir, "stdout": buf.getvalue(), "seconds": seconds}
