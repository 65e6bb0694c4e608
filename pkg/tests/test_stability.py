"""Shaped energy function, load condition, convergence-region estimate."""

import numpy as np
import pytest

from zipshape import (
    ErrorState,
    UnreachableDomainError,
    hd_energy,
    initial_membership,
    momentary_condition,
    sample_domain,
)


def test_shaped_energy_frozen_values(nominal):
    # startup error (-1, -5, 0, xc=-1) with (alpha, k) = (10, 2)
    hd = hd_energy(ErrorState(-1.0, -5.0, 0.0, -1.0), nominal, 10.0, 2.0)
    assert hd == pytest.approx(1.01285621, rel=1e-9)
    # pure 1 V voltage error: quadratic term only, 0.5 * C
    hd = hd_energy(ErrorState(0.0, 1.0, 0.0, 0.0), nominal, 10.0, 2.0)
    assert hd == pytest.approx(6.0e-4, rel=1e-12)


def test_shaped_energy_is_positive_definite(nominal, rng):
    for _ in range(500):
        e = ErrorState(rng.normal(0, 5), rng.normal(0, 5), rng.normal(0, 5),
                       rng.normal(0, 2))
        hd = hd_energy(e, nominal, rng.uniform(1, 50), rng.uniform(0.5, 10))
        assert hd > 0.0
    assert hd_energy(ErrorState(0, 0, 0, 0), nominal, 10.0, 2.0) == 0.0


def test_load_condition(nominal):
    ratio, ok = momentary_condition(15.0, 20.0, nominal.R, nominal.P)
    assert ratio == pytest.approx(1.0 / 3.0, rel=1e-12)
    assert ok
    ratio, ok = momentary_condition(4.0, 20.0, nominal.R, nominal.P)
    assert ratio == pytest.approx(1.25, rel=1e-12)
    assert not ok


def test_membership_of_the_hard_startup_point(nominal):
    # the benchmark startup error lies far outside the guaranteed region
    lhs, rhs, inside = initial_membership(
        ErrorState(-1.0, -5.0, 0.0, -1.0), nominal, 10.0, 2.0,
        20.0, nominal.R, nominal.P)
    assert rhs == pytest.approx(15.0, rel=1e-12)
    assert lhs == pytest.approx(41.086, rel=1e-3)
    assert not inside


def test_membership_of_a_small_error(nominal):
    lhs, rhs, inside = initial_membership(
        ErrorState(0.0, -1.0, 0.0, 0.0), nominal, 10.0, 2.0,
        20.0, nominal.R, nominal.P)
    assert lhs == pytest.approx(np.sqrt(2 * 6.0e-4 / 1200e-6), rel=1e-9)
    assert inside


def test_empty_region_is_rejected(nominal):
    # v*^2 = R*P exactly: no margin for the power load
    with pytest.raises(UnreachableDomainError):
        initial_membership(ErrorState(0, 0, 0, 0), nominal, 10.0, 2.0,
                           10.0, nominal.R, nominal.P)


def test_sampling_shapes_and_membership(nominal):
    boundary, interior = sample_domain(nominal, 10.0, 2.0, 20.0,
                                       nominal.R, nominal.P, n=64, seed=7)
    assert boundary.shape == (64, 4)
    assert interior.shape == (64, 4)

    rhs = 20.0 - nominal.R * nominal.P / 20.0
    h_bound = 0.5 * nominal.C * rhs ** 2
    for row in boundary:
        e = ErrorState(row[0] - 7.0, row[1] - 20.0, row[2] - 1.0, row[3])
        assert hd_energy(e, nominal, 10.0, 2.0) == pytest.approx(
            h_bound, rel=1e-9)
    for row in interior:
        e = ErrorState(row[0] - 7.0, row[1] - 20.0, row[2] - 1.0, row[3])
        _, _, inside = initial_membership(e, nominal, 10.0, 2.0, 20.0,
                                          nominal.R, nominal.P)
        assert inside


def test_sampling_is_seeded(nominal):
    a = sample_domain(nominal, 10.0, 2.0, 20.0, nominal.R, nominal.P,
                      n=16, seed=3)
    b = sample_domain(nominal, 10.0, 2.0, 20.0, nominal.R, nominal.P,
                      n=16, seed=3)
    c = sample_domain(nominal, 10.0, 2.0, 20.0, nominal.R, nominal.P,
                      n=16, seed=4)
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])
    assert not np.array_equal(a[0], c[0])

    with pytest.raises(ValueError):
        sample_domain(nominal, 10.0, 2.0, 20.0, nominal.R, nominal.P,
                      n=0, seed=0)
