"""End-to-end acceptance checks for the whole package.

One test per contract item, each printing a single verdict line with the
measured numbers.  Run

    pytest tests/test_acceptance.py -v -s

to see every verdict even for passing items (without -s pytest shows the
prints of failing tests only).  These tests run full 0.5 s closed-loop
simulations and a 100-run batch, so the module takes around a minute on
one core.
"""

import re
import time
from dataclasses import replace

import numpy as np
import pytest

from zipshape import (
    ControllerConfig,
    ErrorState,
    Event,
    ExoSystem,
    ObserverGains,
    PlantState,
    bundled_scenario_path,
    compute_metrics,
    grid_search_pi,
    initial_membership,
    load_scenario,
    run_batch,
    run_scenario,
    sample_domain,
    with_overrides,
)
from zipshape.cli import main


def _verdict(num, ok, detail):
    tag = "PASS" if ok else "FAIL"
    line = f"[{tag}] criterion {num:02d}: {detail}"
    print(line)
    assert ok, line


def _case1():
    return load_scenario(bundled_scenario_path("case1"))


@pytest.fixture(scope="module")
def case1_run():
    # warm the compiled kernel on a short run first so the timed run below
    # measures integration, not compilation
    run_scenario(with_overrides(_case1(), t_end=1e-4))
    t0 = time.perf_counter()
    trace = run_scenario(_case1())
    wall = time.perf_counter() - t0
    return trace, wall


def test_01_equilibrium_oracle(capsys):
    t0 = time.perf_counter()
    code = main(["equilibrium", str(bundled_scenario_path("case1"))])
    wall = time.perf_counter() - t0
    out = capsys.readouterr().out
    assert code == 0
    got = {m.group(1): float(m.group(2))
           for m in re.finditer(r"(\w+) = ([-+0-9.eE]+)", out)}
    x1, x2, x3, mu = got["x1_star"], got["x2_star"], got["x3_star"], got["mu_star"]

    # targets from first principles at v* = 20 V on the shipped circuit:
    # line current 20/20, bus balance 20/5 + 20/20 + 1 + 1, duty (v*+r*x1)/E
    x1_t, x3_t = 7.0, 1.0
    mu_t = (20.0 + 0.15 * 7.0) / 30.0
    rel = max(abs(x1 - x1_t) / x1_t, abs(x3 - x3_t) / x3_t,
              abs(mu - mu_t) / mu_t)

    # independent residual of the averaged circuit equations at the
    # returned point (raw bracket form, volts / amperes)
    b1 = 30.0 * mu - 0.15 * x1 - x2
    b2 = x1 - x2 / 5.0 - 20.0 / x2 - 1.0 - x3
    b3 = x2 - 20.0 * x3
    resid = max(abs(b1), abs(b2), abs(b3))

    _verdict(1, rel < 1e-6 and resid < 1e-9 and wall < 1.0,
             f"equilibrium ({x1:.6g} A, {x3:.6g} A, mu={mu:.6g}), "
             f"rel err {rel:.2e}, residual {resid:.2e}, {wall:.2f} s")


def test_02_startup_convergence(case1_run):
    trace, wall = case1_run
    late = np.abs(trace.vc[trace.t > 0.3] - 20.0)
    worst = float(late.max())
    _verdict(2, worst < 0.1 and wall < 10.0,
             f"max |vc-20| = {worst:.4g} V for t > 0.3 s, "
             f"0.5 s horizon in {wall:.2f} s wall")


def test_03_gain_monotonicity(case1_run):
    trace, _ = case1_run
    slow = compute_metrics(trace, 20.0).settling_time_s
    s = _case1()
    s = replace(s, controller=replace(s.controller, alpha=30.0, k=3.0),
                name="case1-hot")
    fast = compute_metrics(run_scenario(s), 20.0).settling_time_s
    ok = slow is not None and fast is not None and fast < slow
    _verdict(3, ok, f"2% settling {fast:.4g} s at (30,3) "
                    f"vs {slow:.4g} s at (10,2)")


def test_04_shaped_energy_decreases(case1_run):
    trace, _ = case1_run
    hd = trace.col("Hd")
    cond = trace.col("condition12_ratio")
    cond_worst = float(cond.max())
    rel_inc = float((np.diff(hd) / hd[:-1]).max())
    _verdict(4, cond_worst < 1.0 and rel_inc <= 1e-6,
             f"max per-step relative Hd increase {rel_inc:.2e} "
             f"(load/voltage ratio peaks at {cond_worst:.3f} < 1)")


def test_05_observer_exponential_law():
    base = _case1()
    s = replace(
        base,
        controller=ControllerConfig(kind="AESC", alpha=10.0, k=2.0),
        initial=PlantState(7.0, 20.0, 1.0), xc0=0.0,
        gains=ObserverGains(G1=[100.0], G2=[100.0], G3=[100.0]),
        exo2=ExoSystem(A=[[0.0]], M=[1.0], zeta0=[1.0]),
        events=(Event(t=0.0, target="enable_d2"),),
        t_end=0.03, name="const-bias-observer")
    trace = run_scenario(s)
    d2_hat = trace.col("d2_hat")
    tilde0 = abs(d2_hat[0] - 1.0)           # estimate starts at rest
    tilde_end = abs(d2_hat[-1] - trace.col("d2")[-1])
    expected = tilde0 * np.exp(-3.0)        # G=100 over 0.03 s
    dev = abs(tilde_end - expected) / expected
    _verdict(5, dev < 0.005,
             f"|error(0.03)| = {tilde_end:.6g} vs {expected:.6g} "
             f"predicted ({dev * 100:.3g}% off)")


def test_06_disturbance_reconstruction():
    trace = run_scenario(load_scenario(bundled_scenario_path("case2")))
    vc_worst = float(np.abs(trace.vc - 20.0).max())
    # all three channels are live and past their transients on [0.45, 0.5]
    w = trace.t >= 0.45
    amp = {"d1": 1.0, "d2": 1.0, "d3": np.sqrt(2.0)}
    pct = {
        ch: float(np.abs(trace.col(ch + "_hat")[w] - trace.col(ch)[w]).max())
        / amp[ch] * 100.0
        for ch in ("d1", "d2", "d3")
    }
    ok = vc_worst < 0.5 and all(v < 2.0 for v in pct.values())
    _verdict(6, ok,
             "estimate errors "
             + ", ".join(f"{ch} {v:.3g}%" for ch, v in pct.items())
             + f" of amplitude; max |vc-20| = {vc_worst:.3g} V")


def test_07_load_step_robustness_split():
    aesc = run_scenario(load_scenario(bundled_scenario_path("case4_aesc")))
    rpbc = run_scenario(load_scenario(bundled_scenario_path("case4_rpbc")))
    e_a = compute_metrics(aesc, 20.0, t_from=0.2).steady_state_error_V
    e_r = compute_metrics(rpbc, 20.0, t_from=0.2).steady_state_error_V
    _verdict(7, abs(e_a) < 0.05 and abs(e_r) > 0.1,
             f"steady-state error after the load step: adaptive "
             f"{e_a:.4g} V, derivative-feedback baseline {e_r:.4g} V")


def test_08_pi_baseline_comparison():
    base = _case1()
    aesc = replace(
        base,
        controller=ControllerConfig(kind="AESC", alpha=10.0, k=2.0),
        gains=ObserverGains(G1=[100.0], G2=[100.0], G3=[100.0]),
        name="case1-adaptive")
    aesc_pct = compute_metrics(run_scenario(aesc), 20.0).overshoot_pct

    best, rows = grid_search_pi(base)
    assert best is not None
    best_row = next(r for r in rows
                    if (r["kp"], r["ki"]) == (best.kp, best.ki))
    pi_pct = best_row["overshoot_pct"]

    # honest negative: on this averaged model a well-tuned PI also starts
    # cleanly from (6 A, 15 V, 1 A), so the "> 5%" half cannot be met by
    # any fair search; see the repository decision notes
    _verdict(8, aesc_pct < 2.0 and pi_pct > 5.0,
             f"adaptive overshoot {aesc_pct:.3g}% (< 2% required); best "
             f"grid PI (kp={best.kp:g}, ki={best.ki:g}) overshoot "
             f"{pi_pct:.3g}% (> 5% required, not met)")


def test_09_domain_of_attraction():
    base = _case1()
    nom = base.nominal
    _, interior = sample_domain(nom, 10.0, 2.0, 20.0, nom.R, nom.P,
                                n=100, seed=42)
    scenarios = []
    for idx, (i1, vc, i2, xc) in enumerate(interior):
        lhs, rhs, inside = initial_membership(
            ErrorState(i1 - 7.0, vc - 20.0, i2 - 1.0, xc),
            nom, 10.0, 2.0, 20.0, nom.R, nom.P)
        assert inside, f"sampled point {idx} not in the level set"
        scenarios.append(replace(
            base, initial=PlantState(i1, vc, i2), xc0=xc,
            name=f"ic{idx:03d}"))
    results = run_batch(scenarios)
    fails = [r.name for r in results
             if not r.ok or abs(r.final.vc - 20.0) >= 0.1]
    worst = max(abs(r.final.vc - 20.0) for r in results if r.ok)

    # the stock startup state sits outside the certified set yet converges
    lhs, rhs, inside = initial_membership(
        ErrorState(6.0 - 7.0, 15.0 - 20.0, 1.0 - 1.0, -1.0),
        nom, 10.0, 2.0, 20.0, nom.R, nom.P)
    outside_converges = (not inside) and \
        abs(run_scenario(base).vc[-1] - 20.0) < 0.1

    _verdict(9, not fails and outside_converges,
             f"100/100 sampled starts converge (worst |vc-20| = "
             f"{worst:.2e} V); stock start has level {lhs:.3g} > {rhs:.3g} "
             f"bound and still converges")


def test_10_reference_step():
    trace = run_scenario(load_scenario(bundled_scenario_path("case1_refstep")))
    after = np.abs(trace.vc[trace.t >= 0.2] - 18.0)
    worst = float(after.max())
    _verdict(10, worst <= 0.05,
             f"max |vc-18| = {worst:.3g} V from 50 ms past the step on")


def test_11_source_voltage_step():
    s = load_scenario(bundled_scenario_path("exp_estep"))
    trace = run_scenario(s)
    t = trace.t
    peak = float(np.abs(trace.vc[t >= 0.2] - 20.0).max())
    tail = float(np.abs(trace.vc[t >= 0.35] - 20.0).max())

    e_hat = trace.col("d1_hat")  # the scalar source estimate rides here
    eta = s.controller.eta
    mu_bar = float(trace.mu[(t >= 0.2) & (t <= 0.3)].mean())
    t_conv = 0.2 + 5.0 / (eta * mu_bar)
    e_err = float(np.abs(e_hat[t >= t_conv] - 35.0).max())

    ok = peak < 1.0 and tail <= 0.05 and e_err < 0.01 * 35.0
    _verdict(11, ok,
             f"bus dips {peak:.3g} V peak, back to 20 +/- {tail:.3g} V; "
             f"source estimate within {e_err:.3g} V of 35 after "
             f"{t_conv - 0.2:.3g} s")


def test_12_determinism_and_step_convergence(tmp_path, case1_run):
    args = ["simulate", str(bundled_scenario_path("case3_high")),
            "--t-end", "0.02", "--decimate", "10"]
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(a)]) == 0
    assert main(args + ["--out", str(b)]) == 0
    identical = a.read_bytes() == b.read_bytes()

    coarse, _ = case1_run
    fine = run_scenario(with_overrides(_case1(), dt=5e-7))
    drift = abs(float(coarse.vc[-1]) - float(fine.vc[-1]))

    _verdict(12, identical and drift < 1e-6,
             f"repeat runs byte-identical: {identical}; halving dt moves "
             f"final vc by {drift:.2e} V")
