import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile(
    "default", max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

from fosb_em.geometry import geodesic_sphere  # noqa: E402
from fosb_em.operators import MediumParameters  # noqa: E402
from fosb_em.solve import Level, PlaneWave  # noqa: E402


@pytest.fixture(scope="session")
def ico():
    return geodesic_sphere(1)


@pytest.fixture(scope="session")
def sphere2():
    return geodesic_sphere(2)


@pytest.fixture(scope="session")
def sphere4():
    return geodesic_sphere(4)


@pytest.fixture(scope="session")
def canonical_wave():
    return PlaneWave([1.0, 0.0, 0.0], [0.0, 0.0, 1.0])


@pytest.fixture(scope="session")
def pec_level4(sphere4):
    return Level(sphere4, MediumParameters(3.0), "pec", linear_solver="direct")


@pytest.fixture(scope="session")
def de_level4(sphere4):
    return Level(sphere4, MediumParameters(3.0, eps_r=2.1), "de", linear_solver="direct")


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def sphere_r10():
    # unit sphere at ten points per wavelength for k0 = 3
    from fosb_em.geometry import sphere_for_width

    return sphere_for_width(2 * np.pi / 30)


@pytest.fixture(scope="session")
def pec_level_r10(sphere_r10):
    return Level(sphere_r10, MediumParameters(3.0), "pec", linear_solver="direct")


@pytest.fixture(scope="session")
def de_level_r10(sphere_r10):
    return Level(sphere_r10, MediumParameters(3.0, eps_r=2.1), "de", linear_solver="direct")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion ")[1].split(":")[0])):
            terminalreporter.write_line(line)
