import math

import numpy as np
import pytest

from mixseries.families import BetaScale, ExponentialIndicator, ExponentialMoment, GammaShape

E_INTERVAL = (math.exp(-2.0), math.exp(-1.0))


@pytest.fixture
def rng():
    return np.random.default_rng(42)


def named_families(a=1.0, b=2.0):
    return [ExponentialIndicator(a, b), ExponentialMoment(a, b), GammaShape(a, b), BetaScale(a, b, 2)]


@pytest.fixture(params=["exp-indicator", "exp-moment", "gamma-shape", "beta-scale"])
def family(request):
    return {f.name: f for f in named_families()}[request.param]
