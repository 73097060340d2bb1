import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from coordsynth import bundled_problem
from coordsynth.model import problem_from_dict

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", max_examples=200, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

FOURBAR_X0 = [(-5.7114, 2.5202), (-3.8503, -0.4130), (-2.1952, -0.5217), (-2.0260, -3.2762), (-2.8596, 0.8072)]
FOURBAR_TARGETS = [(-2.6301, 1.0126), (-2.1589, 1.0488), (-1.6757, 1.1213), (-1.2408, 1.3630), (-0.6850, 1.7254),
          (-0.2139, 2.2690), (0.0882, 2.8610), (0.2443, 3.5135), (0.2931, 4.1358)]


def single_truss(k=(0.0, 0.0), l=(1.0, 0.0), fixed=(True, False), points=(), options=None):
    """Problem dict for one truss; ``points`` are lists of (node, x, y) pins."""
    return problem_from_dict(dict(
        nodes=[dict(id=0, x=k[0], y=k[1], fixed=fixed[0]), dict(id=1, x=l[0], y=l[1], fixed=fixed[1])],
        trusses=[dict(id=0, k=0, l=1)],
        precision_points=[dict(pins=[dict(node=n, x=x, y=y) for n, x, y in pins]) for pins in points],
        options=options or {}))


@pytest.fixture(scope="session")
def fourbar():
    return bundled_problem("fourbar")


@pytest.fixture(scope="session")
def fourbar_restricted():
    return bundled_problem("fourbar_restricted")


@pytest.fixture(scope="session")
def butterfly():
    return bundled_problem("butterfly")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
