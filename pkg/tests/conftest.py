import numpy as np
import pytest

from rlab.models.config import ScaleLadder
from rlab.zoo.generators import generate, make_spec


@pytest.fixture(scope="session")
def plane():
    return generate(make_spec(shape="plane", n=2, samples=10_000, seed=1))


@pytest.fixture(scope="session")
def small_plane():
    return generate(make_spec(shape="plane", n=2, samples=2_500, seed=3))


@pytest.fixture(scope="session")
def sphere():
    return generate(make_spec(shape="sphere", n=2, samples=20_000, seed=2))


@pytest.fixture(scope="session")
def two_sheet():
    return generate(make_spec(shape="two-sheet", n=2, samples=4_096, seed=4, separation=0.1))


@pytest.fixture(scope="session")
def holed_plane():
    return generate(make_spec(shape="holed-plane", n=2, samples=10_000, seed=5, hole_radius=0.1))


@pytest.fixture(scope="session")
def wavy():
    """a·sin(t/ℓ) graph with a/ℓ = 0.02."""
    return generate(make_spec(shape="graph-sin", n=2, samples=10_000, seed=6, amplitude=0.002, wavelength=0.1))


@pytest.fixture(scope="session")
def rough():
    """a·sin(t/ℓ) graph with a/ℓ = 0.5 and ℓ comparable to the region, far outside any small-ε regime."""
    return generate(make_spec(shape="graph-sin", n=2, samples=10_000, seed=7, amplitude=0.15, wavelength=0.3))


@pytest.fixture
def ladder():
    return ScaleLadder(r0=0.2, ratio=2.0, depth=2)


@pytest.fixture
def origin():
    return np.zeros(3)
