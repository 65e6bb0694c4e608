"""Operating-point solve and the disturbance-adjusted reference set."""

import dataclasses

import pytest

from zipshape import (
    DisturbanceVector,
    ReferenceState,
    UnreachableReferenceError,
    mu_star_dynamic,
    reference_derivative,
    solve_equilibrium,
    x3_star_from_balance,
)

from conftest import MU_STAR


def test_benchmark_operating_point(nominal):
    ref = solve_equilibrium(20.0, nominal)
    assert ref.x1_star == pytest.approx(7.0, rel=1e-12)
    assert ref.x2_star == 20.0
    assert ref.x3_star == pytest.approx(1.0, rel=1e-12)
    assert ref.mu_star == pytest.approx(MU_STAR, rel=1e-12)


def test_operating_point_shifts_with_bus_disturbance(nominal):
    # d2 = 1 A supplies one ampere at the bus node: x1* drops by exactly 1
    ref = solve_equilibrium(20.0, nominal, DisturbanceVector(d2=1.0))
    assert ref.x1_star == pytest.approx(6.0, rel=1e-12)
    assert ref.mu_star == pytest.approx(20.9 / 30.0, rel=1e-12)


def test_operating_point_at_lower_setpoint(nominal):
    ref = solve_equilibrium(18.0, nominal)
    assert ref.x1_star == pytest.approx(18 / 5 + 20 / 18 + 1 + 0.9, rel=1e-12)
    assert ref.x3_star == pytest.approx(0.9, rel=1e-12)
    assert ref.mu_star == pytest.approx(0.6330555555555556, rel=1e-9)


def test_operating_point_without_loads(nominal):
    bare = dataclasses.replace(nominal, P=0.0, i=0.0, R=float("inf"))
    ref = solve_equilibrium(20.0, bare)
    assert ref.x1_star == pytest.approx(1.0, rel=1e-12)  # only the line draws
    assert ref.mu_star == pytest.approx(20.15 / 30.0, rel=1e-12)


def test_invalid_setpoints(nominal):
    with pytest.raises(ValueError):
        solve_equilibrium(0.0, nominal)
    with pytest.raises(ValueError):
        solve_equilibrium(-5.0, nominal)
    # 35 V needs steady duty > 1 on a 30 V source
    with pytest.raises(UnreachableReferenceError):
        solve_equilibrium(35.0, nominal)


def test_x3_from_balance(nominal):
    assert x3_star_from_balance(7.0, 20.0, nominal, 0.0) == \
        pytest.approx(1.0, rel=1e-12)
    assert x3_star_from_balance(7.0, 20.0, nominal, 0.5) == \
        pytest.approx(1.5, rel=1e-12)


def test_dynamic_duty_companion(nominal):
    ref = ReferenceState(7.0, 20.0, 1.0, 0.0)
    # no disturbance: line terms cancel (L1 = L2, v* = R2*x3*), static value
    assert mu_star_dynamic(ref, nominal, 0.0, 0.0, 0.0) == \
        pytest.approx(MU_STAR, rel=1e-9)
    # matched channel enters with -1/E
    assert mu_star_dynamic(ref, nominal, 1.0, 0.0, 0.0) == \
        pytest.approx(MU_STAR - 1.0 / 30.0, rel=1e-9)
    # line channel enters with +L1/(L2*E); here L1 = L2
    assert mu_star_dynamic(ref, nominal, 0.0, 1.0, 0.0) == \
        pytest.approx(MU_STAR + 1.0 / 30.0, rel=1e-9)


def test_reference_derivative(nominal):
    ref = ReferenceState(7.0, 20.0, 1.0, MU_STAR)
    # at the consistent triple the rate vanishes; a d1 = 1 V offset adds 1/L1
    assert reference_derivative(ref, nominal, 0.0, MU_STAR) == \
        pytest.approx(0.0, abs=1e-9)
    assert reference_derivative(ref, nominal, 1.0, MU_STAR) == \
        pytest.approx(1.0 / 110e-6, rel=1e-9)
    rest = ReferenceState(0.0, 20.0, 0.0, 0.0)
    assert reference_derivative(rest, nominal, 0.0, 0.0) == \
        pytest.approx(-20.0 / 110e-6, rel=1e-12)
