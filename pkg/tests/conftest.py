from __future__ import annotations

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from thicksmooth import geometry, kernels, operators, quadrature

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def unit_square():
    return geometry.unit_square()


@pytest.fixture(scope="session")
def square_rule(unit_square):
    return quadrature.rule_for_region(unit_square, 1e-3, method="structured")


@pytest.fixture(scope="session")
def square_ctx(unit_square, square_rule):
    return operators.SmoothingContext(unit_square, square_rule,
                                      kernels.ScaledKernel.gaussian(0.05))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for num in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[num])
