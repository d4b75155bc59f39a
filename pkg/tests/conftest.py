from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from vpb_spectra import collision
from vpb_spectra.basis import build_basis
from vpb_spectra.config import RunConfig

ROOT = Path(__file__).resolve().parents[1]
CACHE = ROOT / ".cache"

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")


@pytest.fixture(scope="session")
def asm_small():
    """Cheap degree-6 assembly for structural tests (its MC error is not checked)."""
    return collision.assemble(build_basis(6), 2**16, seed=1, stderr_tol=None)


@pytest.fixture(scope="session")
def default_config():
    return RunConfig(cache_dir=str(CACHE))


@pytest.fixture(scope="session")
def asm_default(default_config):
    """Degree-10, 1e7-sample assembly; built once (about 3 minutes) and cached."""
    c = default_config
    return collision.assemble_cached(c.degree, c.samples, c.seed, c.cache_dir)


@pytest.fixture(scope="session")
def gap_default(asm_default):
    return collision.coercivity_gap(asm_default)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    from tests import test_acceptance
    if test_acceptance.LINES:
        terminalreporter.section("acceptance criteria")
        for line in test_acceptance.LINES:
            terminalreporter.write_line(line)
