"""Duty-ratio laws: shaping controller, adaptive variant, PI and RPBC."""

import pytest

from zipshape import (
    ControllerConfig,
    DisturbanceVector,
    EscState,
    PlantState,
    ReferenceState,
    aesc_duty,
    esc_duty,
    esc_integrator_rate,
    mu_star_dynamic,
    pi_duty,
    rpbc_duty_rate,
    saturate_duty,
    simplified_aesc_duty,
    solve_equilibrium,
    static_reference_from_estimates,
    x3_star_from_balance,
)

from conftest import MU_STAR


def test_saturation():
    assert saturate_duty(-0.2) == (0.0, True)
    assert saturate_duty(0.0) == (0.0, False)
    assert saturate_duty(0.5) == (0.5, False)
    assert saturate_duty(1.0) == (1.0, False)
    assert saturate_duty(1.3) == (1.0, True)


def test_integrator_rate():
    assert esc_integrator_rate(PlantState(0.0, 15.0, 0.0), 20.0, 10.0) == 50.0


def test_shaping_duty_frozen_points(nominal):
    ref = ReferenceState(7.0, 20.0, 1.0, MU_STAR)
    # (alpha, k) = (10, 2), xc = -1, current error -1 A
    cfg = ControllerConfig(kind="ESC", alpha=10.0, k=2.0)
    mu = esc_duty(PlantState(6.0, 15.0, 1.0), EscState(xc=-1.0), ref, cfg,
                  nominal)
    assert mu == pytest.approx(0.6017767, rel=1e-7)
    # (alpha, k) = (30, 3), xc = 0, current error +1 A
    cfg = ControllerConfig(kind="ESC", alpha=30.0, k=3.0)
    mu = esc_duty(PlantState(8.0, 20.0, 1.0), EscState(xc=0.0), ref, cfg,
                  nominal)
    assert mu == pytest.approx(0.7001817, rel=1e-7)


def test_adaptive_duty_matches_shaping_duty_at_true_disturbance(nominal, rng):
    """Perfect estimates reduce the adaptive law to the full-information one."""
    cfg = ControllerConfig(kind="AESC", alpha=10.0, k=2.0)
    for _ in range(200):
        d = DisturbanceVector(rng.normal(0, 1), rng.normal(0, 1),
                              rng.normal(0, 1))
        d2_rate = rng.normal(0, 50)
        state = PlantState(rng.uniform(-10, 20), rng.uniform(5, 30),
                           rng.uniform(-5, 5))
        esc = EscState(xc=rng.normal(0, 1))
        x1s = rng.uniform(0, 12)

        x3s = x3_star_from_balance(x1s, 20.0, nominal, d.d2)
        ref = ReferenceState(x1s, 20.0, x3s, 0.0)
        ref.mu_star = mu_star_dynamic(ref, nominal, d.d1, d.d3, d2_rate)
        want = esc_duty(state, esc, ref, cfg, nominal)

        got = aesc_duty(state, esc, ReferenceState(x1s, 20.0, 0.0, 0.0), d,
                        d2_rate, cfg, nominal, mode="dynamic")
        assert got == want

        ref_s = solve_equilibrium(20.0, nominal, d)
        want_s = esc_duty(state, esc, ref_s, cfg, nominal)
        got_s = aesc_duty(state, esc, ref_s, d, 0.0, cfg, nominal,
                          mode="static")
        assert got_s == want_s


def test_adaptive_duty_rejects_unknown_mode(nominal):
    cfg = ControllerConfig(kind="AESC", alpha=10.0, k=2.0)
    with pytest.raises(ValueError):
        aesc_duty(PlantState(0, 20, 0), EscState(), ReferenceState(7, 20, 1, 0),
                  DisturbanceVector(), 0.0, cfg, nominal, mode="fancy")


def test_static_reference_from_estimates_never_raises(nominal):
    # a transient estimate may imply an infeasible duty; saturation handles it
    wild = DisturbanceVector(d1=-100.0, d2=-50.0, d3=200.0)
    ref = static_reference_from_estimates(20.0, nominal, wild)
    assert ref.mu_star > 1.0

    mild = DisturbanceVector(d2=1.0)
    a = static_reference_from_estimates(20.0, nominal, mild)
    b = solve_equilibrium(20.0, nominal, mild)
    assert a == b


def test_pi_duty_and_anti_windup():
    cfg = ControllerConfig(kind="PI", kp=0.05, ki=20.0)
    state = PlantState(0.0, 15.0, 0.0)

    mu_raw, rate = pi_duty(state, 20.0, 0.0, cfg)
    assert mu_raw == pytest.approx(0.25)
    assert rate == pytest.approx(5.0)

    # output pinned above 1 while the error still pushes up: stop integrating
    mu_raw, rate = pi_duty(state, 20.0, 0.1, cfg)
    assert mu_raw == pytest.approx(2.25)
    assert rate == 0.0

    # symmetric case below 0
    mu_raw, rate = pi_duty(PlantState(0.0, 25.0, 0.0), 20.0, -0.1, cfg)
    assert mu_raw == pytest.approx(-2.25)
    assert rate == 0.0

    # saturated but the error now pulls back inside: integration resumes
    mu_raw, rate = pi_duty(PlantState(0.0, 25.0, 0.0), 20.0, 0.2, cfg)
    assert mu_raw == pytest.approx(-0.25 + 4.0)
    assert rate == -5.0


def test_rpbc_rate_frozen_points(nominal):
    cfg = ControllerConfig(kind="RPBC", Kc=600000.0, Tc=5000.0)
    ref = solve_equilibrium(20.0, nominal)
    mu_t = (nominal.r * ref.x1_star + 20.0) / nominal.E  # the target duty

    assert rpbc_duty_rate(mu_t + 0.01, ref, 0.0, cfg, nominal) == \
        pytest.approx(-1.2, rel=1e-9)
    assert rpbc_duty_rate(mu_t, ref, 1000.0, cfg, nominal) == \
        pytest.approx(-6.0, rel=1e-9)


def test_rpbc_divisor_override(nominal):
    cfg = ControllerConfig(kind="RPBC", Kc=600000.0, Tc=5000.0, rpbc_E=35.0)
    ref = solve_equilibrium(20.0, nominal)
    # target term now divides by 35: rate at mu = 21.05/30 is nonzero
    expected = (-600000.0 * (MU_STAR - 21.05 / 35.0)) / 5000.0
    assert rpbc_duty_rate(MU_STAR, ref, 0.0, cfg, nominal) == \
        pytest.approx(expected, rel=1e-9)


def test_simplified_duty_frozen_point(nominal):
    cfg = ControllerConfig(kind="SimplifiedAESC", alpha=10.0, k=1.5,
                           lam=5.0, eta=100.0)
    mu = simplified_aesc_duty(PlantState(6.0, 15.0, 1.0), EscState(xc=-1.0),
                              30.0, 20.0, cfg, nominal)
    assert mu == pytest.approx(-2.849833333333333, rel=1e-12)


def test_config_validation():
    with pytest.raises(ValueError):
        ControllerConfig(kind="LQR")
    with pytest.raises(ValueError):
        ControllerConfig(kind="ESC", alpha=10.0)  # k missing
    with pytest.raises(ValueError):
        ControllerConfig(kind="SimplifiedAESC", alpha=10.0, k=1.5, lam=5.0)
    with pytest.raises(ValueError):
        ControllerConfig(kind="RPBC", Kc=600000.0, Tc=0.0)
    with pytest.raises(ValueError):
        ControllerConfig(kind="PI", kp=0.1, ki=100.0, hold_dt=-1e-3)
    with pytest.raises(ValueError):
        ControllerConfig(kind="RPBC", Kc=1.0, Tc=1.0, rpbc_deriv="spline")
