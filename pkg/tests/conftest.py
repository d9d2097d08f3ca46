import pytest

from hyperttt.service import ServiceConfig, TTTService
from hyperttt.transport import InProcessTransport, serve


@pytest.fixture
def inproc():
    """A service mounted on an in-process transport at http://ttt.api/."""
    svc = TTTService(ServiceConfig(public_url="http://ttt.api"))
    t = InProcessTransport()
    t.mount(svc.root, svc)
    return svc, t


@pytest.fixture
def loopback(tmp_path):
    """A service over real loopback HTTP that exports finished games."""
    svc = TTTService(ServiceConfig(export_dir=tmp_path / "export"))
    handle = serve(svc)
    svc.set_public_url(handle.url)
    yield svc, handle
    handle.close()


def pytest_terminal_summary(terminalreporter):
    from verdicts import lines

    report = lines()
    if report:
        terminalreporter.section("acceptance criteria")
        for line in report:
            terminalreporter.write_line(line)
