import time

import numpy as np
import pytest

from polymanifold import center, compute_pod, load_catalog
from polymanifold.cli import main as cli_main


ACCEPTANCE_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[ACCEPTANCE_LINES] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(ACCEPTANCE_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)


@pytest.fixture
def verdict(request):
    """Record one acceptance line; returns ``ok`` for use in an assert."""

    def record(label, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {label}: {detail}"
        print(line)
        request.config.stash[ACCEPTANCE_LINES].append(line)
        return ok

    return record


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def random_orthonormal(rng, n, m):
    Q, R = np.linalg.qr(rng.standard_normal((n, m)))
    return Q * np.sign(np.diag(R))


# Shared KdV data. Generated once per session through the command-line entry
# point, so the acceptance suite can also time it.
@pytest.fixture(scope="session")
def kdv_generated(tmp_path_factory):
    out = tmp_path_factory.mktemp("kdv_run")
    t0 = time.perf_counter()
    code = cli_main(["generate", "--out", str(out)])
    elapsed = time.perf_counter() - t0
    assert code == 0
    return out, elapsed


@pytest.fixture(scope="session")
def kdv_catalog(kdv_generated):
    return load_catalog(kdv_generated[0])


@pytest.fixture(scope="session")
def kdv_training(kdv_catalog):
    """Centered training matrix, centering vector and its full POD."""
    Sc, c = center(kdv_catalog.training_matrix())
    return Sc.data, c, compute_pod(Sc)
