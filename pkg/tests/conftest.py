import numpy as np
import pytest
from hypothesis import settings

from stomics.nifti import MaskVolume, Volume4D

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


def small_volume(seed=0, shape=(6, 6, 6), T=20, integer=False, smooth=True):
    """Seeded 4D volume with some shared signal so correlations cross the threshold."""
    rng = np.random.default_rng(seed)
    common = rng.standard_normal(T)
    data = rng.standard_normal(shape + (T,))
    if smooth:
        w = rng.uniform(0, 1.5, size=shape)[..., None]
        data = data + w * common
    if integer:
        data = np.round(data * 2)
    return Volume4D(100.0 + data, spacing_mm=(3.0, 3.0, 3.0), tr_seconds=2.0)


def small_mask(seed=0, shape=(6, 6, 6), drop=0.2):
    rng = np.random.default_rng(seed + 1000)
    m = rng.uniform(size=shape) > drop
    m[0, 0, 0] = True
    return MaskVolume(m)


@pytest.fixture
def vol6():
    return small_volume(0)


@pytest.fixture
def mask6():
    return small_mask(0)


ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Record one acceptance line; the test still asserts on its own."""
    def record(name, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
