import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from qeaas.channel import certs  # noqa: E402
from qeaas.channel.config import Sig  # noqa: E402
from qeaas.service import EntropyBackend, EntropyServer  # noqa: E402

DATA = Path(__file__).parent / "data"


@pytest.fixture(scope="session")
def pkis():
    """One CA + server certificate per signature algorithm, plus a rogue CA."""
    return {sig: certs.make_pki(sig) for sig in Sig}


@pytest.fixture(scope="session")
def rogue_pkis():
    return {sig: certs.make_pki(sig, ca_name="qeaas-ca") for sig in Sig}


@pytest.fixture
def backend_server():
    """Test-mode entropy service with seed 7 on an ephemeral port."""
    server = EntropyServer(("127.0.0.1", 0), EntropyBackend.create("test", seed=7))
    server.start()
    yield server
    server.stop()


ACCEPTANCE: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
