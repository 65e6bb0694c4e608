import numpy as np
import pytest

from zipshape import CircuitParams, PlantState

# Benchmark circuit used throughout: 30 V source buck feeding a ZIP load
# (5 ohm // 20 W CPL // 1 A) through a 20 ohm / 110 uH line.
STOCK_PARAMS = dict(L1=110e-6, C=1200e-6, L2=110e-6, r=0.15, R2=20.0,
                    E=30.0, R=5.0, P=20.0, i=1.0)

# exact steady duty for v* = 20 on that circuit: (r*7 + 20)/30
MU_STAR = 21.05 / 30.0


@pytest.fixture
def nominal() -> CircuitParams:
    return CircuitParams(**STOCK_PARAMS)


@pytest.fixture
def startup_state() -> PlantState:
    # the hard startup point used by the convergence scenarios
    return PlantState(i1=6.0, vc=15.0, i2=1.0)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20260817)
