import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from advecta.fields import PhysicalFieldSet
from advecta.spectral import GridSpec, build_wavenumber_sets, lowpass

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def grid8():
    return GridSpec(8, 8)


@pytest.fixture(scope="session")
def sets8(grid8):
    return build_wavenumber_sets(grid8)


def band_limited(rng, shape, band):
    """Random field keeping lattice wavenumbers <= band on both axes."""
    return lowpass(rng.standard_normal(shape), 2 * np.pi * band + 1e-9)


def random_fields(rng, grid, band=2, d=0.01, scale=0.2):
    """Smooth random velocity and decay with constant diffusivity."""
    v = np.stack([band_limited(rng, grid.shape, band) for _ in range(2)], axis=-1) * scale
    z = band_limited(rng, grid.shape, band) * 0.3 + 0.5
    return PhysicalFieldSet.build(grid, velocity=v, diffusivity=d, decay=z)


ACCEPTANCE = {}


@pytest.fixture
def record():
    """Log one acceptance criterion: ``record(n, ok, detail)``."""

    def _record(n, ok, detail):
        ACCEPTANCE[n] = (bool(ok), detail)
        print(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} | {detail}")
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'} | {detail}")
