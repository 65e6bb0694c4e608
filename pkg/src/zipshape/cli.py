"""Command-line front end.

Subcommands:
    simulate     run a scenario file; write trace CSV, optional SVG plot,
                 print response metrics
    equilibrium  print the steady-state operating point for a scenario's
                 voltage target
    domain       sample the guaranteed-convergence region boundary/interior
                 point clouds; optional projections plot with trajectory
                 overlays
    sweep        run a controller-gain grid over one scenario; write a
                 merged metrics table
    metrics      recompute response metrics from an existing trace CSV

Exit codes: 0 success, 2 scenario parse/validation error, 3 runtime failure
(bus-voltage collapse, unreachable target, unreachable domain).  The
ZIPSHAPE_THREADS environment variable caps sweep parallelism.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .engine import (Metrics, Scenario, Trace, compute_metrics, run_batch,
                     run_scenario, _final_v_star)
from .plant import CplSingularityError
from .reference import UnreachableReferenceError, solve_equilibrium
from .scenario import ScenarioError, load_scenario, with_overrides
from .stability import UnreachableDomainError, sample_domain

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_RUNTIME = 3

SWEEP_PARAMS = ("alpha", "k", "kp", "ki", "Kc", "Tc", "lambda", "eta")


def _print_metrics(m: Metrics) -> None:
    print(f"overshoot_V          = {m.overshoot_V:.6g}")
    print(f"overshoot_pct        = {m.overshoot_pct:.6g}")
    if m.settling_time_s is None:
        print("settling_time_s      = never (2% band not reached)")
    else:
        print(f"settling_time_s      = {m.settling_time_s:.6g}")
    print(f"steady_state_error_V = {m.steady_state_error_V:.6g}")
    print(f"peak_deviation_V     = {m.peak_deviation_V:.6g}")


def _plot_trace(trace: Trace, scenario: Scenario, path: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, axes = plt.subplots(4, 1, figsize=(8, 11), sharex=True)
    t = trace.t
    axes[0].plot(t, trace.vc, lw=0.8, label="vc")
    axes[0].axhline(_final_v_star(scenario), color="gray", ls="--", lw=0.6)
    axes[0].set_ylabel("vc [V]")
    axes[1].plot(t, trace.i1, lw=0.8, label="i1")
    axes[1].plot(t, trace.i2, lw=0.8, label="i2")
    axes[1].set_ylabel("current [A]")
    axes[1].legend(loc="best", fontsize=8)
    axes[2].plot(t, trace.mu, lw=0.8)
    axes[2].set_ylabel("duty")
    axes[2].set_ylim(-0.05, 1.05)
    for idx, name in ((7, "d1"), (8, "d2"), (9, "d3")):
        axes[3].plot(t, trace.data[:, idx], lw=0.8, label=name)
        axes[3].plot(t, trace.data[:, idx + 3], lw=0.6, ls="--",
                     label=name + "_hat")
    axes[3].set_ylabel("disturbance")
    axes[3].set_xlabel("t [s]")
    axes[3].legend(loc="best", fontsize=7, ncol=3)
    fig.suptitle(scenario.name)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _plot_domain(boundary: np.ndarray, interior: np.ndarray,
                 trajectories: list, path: str) -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    pairs = ((0, 1, "i1 [A]", "vc [V]"), (1, 2, "vc [V]", "i2 [A]"),
             (0, 2, "i1 [A]", "i2 [A]"))
    fig, axes = plt.subplots(1, 3, figsize=(13, 4.2))
    for ax, (a, b, xl, yl) in zip(axes, pairs):
        ax.scatter(boundary[:, a], boundary[:, b], s=3, alpha=0.4,
                   label="boundary")
        ax.scatter(interior[:, a], interior[:, b], s=3, alpha=0.4,
                   label="interior")
        for tr in trajectories:
            ax.plot(tr.data[:, 1 + a], tr.data[:, 1 + b], lw=0.9, color="k")
        ax.set_xlabel(xl)
        ax.set_ylabel(yl)
    axes[0].legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


def _load(args) -> Scenario:
    s = load_scenario(args.scenario)
    return with_overrides(s, dt=getattr(args, "dt", None),
                          t_end=getattr(args, "t_end", None),
                          seed=getattr(args, "seed", None))


def _cmd_simulate(args) -> int:
    scenario = _load(args)
    trace = run_scenario(scenario)
    if args.out:
        trace.to_csv(args.out, decimate=args.decimate)
        print(f"trace written to {args.out}")
    if args.plot:
        _plot_trace(trace, scenario, args.plot)
        print(f"plot written to {args.plot}")
    print(f"scenario {scenario.name}: {len(trace)} records, "
          f"t_end = {trace.t[-1]:.6g} s")
    _print_metrics(compute_metrics(trace, _final_v_star(scenario)))
    return EXIT_OK


def _cmd_equilibrium(args) -> int:
    scenario = load_scenario(args.scenario)
    v_star = args.v_star if args.v_star is not None else scenario.v_star
    ref = solve_equilibrium(v_star, scenario.nominal)
    # 12 significant digits so the printed point supports an independent
    # residual evaluation well below the solver's own tolerance
    print(f"x1_star = {ref.x1_star:.12g} A")
    print(f"x2_star = {ref.x2_star:.12g} V")
    print(f"x3_star = {ref.x3_star:.12g} A")
    print(f"mu_star = {ref.mu_star:.12g}")
    return EXIT_OK


def _cmd_domain(args) -> int:
    scenario = load_scenario(args.scenario)
    cfg = scenario.controller
    if cfg.kind not in ("ESC", "AESC"):
        raise ScenarioError(
            "domain sampling needs an energy-shaping controller "
            "(kind ESC or AESC) for its alpha and k gains", args.scenario)
    boundary, interior = sample_domain(
        scenario.nominal, cfg.alpha, cfg.k, scenario.v_star,
        scenario.nominal.R, scenario.nominal.P, n=args.n, seed=args.seed)

    if args.out:
        header = "kind,i1,vc,i2,xc"
        lines = [header]
        for row in boundary:
            lines.append("boundary," + ",".join(repr(float(v)) for v in row))
        for row in interior:
            lines.append("interior," + ",".join(repr(float(v)) for v in row))
        Path(args.out).write_text("\n".join(lines) + "\n")
        print(f"point cloud written to {args.out}")

    trajectories = []
    if args.traj:
        for spec_str in args.traj:
            vals = [float(v) for v in spec_str.split(",")]
            if len(vals) != 4:
                raise ScenarioError(
                    f"--traj expects 'i1,vc,i2,xc', got {spec_str!r}",
                    args.scenario)
            ic = replace(scenario,
                         initial=type(scenario.initial)(
                             i1=vals[0], vc=vals[1], i2=vals[2]),
                         xc0=vals[3])
            trajectories.append(run_scenario(ic))
    if args.plot:
        _plot_domain(boundary, interior, trajectories, args.plot)
        print(f"plot written to {args.plot}")
    print(f"sampled {len(boundary)} boundary and {len(interior)} interior "
          f"points")
    return EXIT_OK


def _parse_grid(spec_str: str) -> list:
    """'alpha=10,30;k=2,3' -> [('alpha', [10.0, 30.0]), ('k', [2.0, 3.0])]"""
    grid = []
    for part in spec_str.split(";"):
        part = part.strip()
        if not part:
            continue
        if "=" not in part:
            raise ValueError(f"bad grid component {part!r}; "
                             "expected name=v1,v2,...")
        name, _, vals = part.partition("=")
        name = name.strip()
        if name not in SWEEP_PARAMS:
            raise ValueError(f"unknown sweep parameter {name!r}; "
                             f"expected one of {SWEEP_PARAMS}")
        values = [float(v) for v in vals.split(",") if v.strip()]
        if not values:
            raise ValueError(f"empty value list for sweep parameter {name!r}")
        grid.append((name, values))
    if not grid:
        raise ValueError("empty sweep grid")
    return grid


_ATTR_FOR_PARAM = {"lambda": "lam"}


def _cmd_sweep(args) -> int:
    scenario = _load(args)
    grid = _parse_grid(args.grid)

    combos = [()]
    for name, values in grid:
        combos = [c + ((name, v),) for c in combos for v in values]

    scenarios = []
    for combo in combos:
        cfg_kwargs = {_ATTR_FOR_PARAM.get(n, n): v for n, v in combo}
        cfg = replace(scenario.controller, **cfg_kwargs)
        label = "_".join(f"{n}{v:g}" for n, v in combo)
        scenarios.append(replace(scenario, controller=cfg,
                                 name=f"{scenario.name}_{label}"))

    results = run_batch(scenarios, t_from=args.t_from)

    cols = [n for n, _ in grid]
    header = (["name"] + cols
              + ["ok", "overshoot_V", "overshoot_pct", "settling_time_s",
                 "steady_state_error_V", "peak_deviation_V", "error"])
    lines = [",".join(header)]
    for combo, res in zip(combos, results):
        vals = {n: v for n, v in combo}
        row = [res.name] + [repr(vals[c]) for c in cols]
        if res.ok:
            m = res.metrics
            settling = "" if m.settling_time_s is None else repr(
                m.settling_time_s)
            row += ["1", repr(m.overshoot_V), repr(m.overshoot_pct), settling,
                    repr(m.steady_state_error_V), repr(m.peak_deviation_V),
                    ""]
        else:
            row += ["0", "", "", "", "", "", res.error.replace(",", ";")]
        lines.append(",".join(row))
    out = args.out or "sweep_metrics.csv"
    Path(out).write_text("\n".join(lines) + "\n")
    print(f"{len(results)} runs; metrics table written to {out}")
    return EXIT_OK


def _cmd_metrics(args) -> int:
    trace = Trace.from_csv(args.csv)
    _print_metrics(compute_metrics(trace, args.v_star, t_from=args.t_from))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="zipshape",
        description="Closed-loop DC bus voltage regulation simulator: "
                    "energy-shaping control of a converter feeding mixed "
                    "impedance/current/power loads, with disturbance-"
                    "observer compensation.")
    sub = parser.add_subparsers(dest="command", required=True)

    p_sim = sub.add_parser("simulate", help="run a scenario file")
    p_sim.add_argument("scenario", help="path to a .scenario file")
    p_sim.add_argument("--out", help="trace CSV output path")
    p_sim.add_argument("--plot", help="SVG plot output path")
    p_sim.add_argument("--decimate", type=int, default=1,
                       help="keep every Nth trace row in the CSV")
    p_sim.add_argument("--dt", type=float, help="override integration step")
    p_sim.add_argument("--t-end", dest="t_end", type=float,
                       help="override simulation horizon")
    p_sim.add_argument("--seed", type=int, help="override noise seed")
    p_sim.set_defaults(func=_cmd_simulate)

    p_eq = sub.add_parser("equilibrium",
                          help="print the steady-state operating point")
    p_eq.add_argument("scenario")
    p_eq.add_argument("--v-star", dest="v_star", type=float,
                      help="override the voltage target")
    p_eq.set_defaults(func=_cmd_equilibrium)

    p_dom = sub.add_parser("domain",
                           help="sample the guaranteed-convergence region")
    p_dom.add_argument("scenario")
    p_dom.add_argument("--n", type=int, default=500,
                       help="points per cloud (default 500)")
    p_dom.add_argument("--seed", type=int, default=0)
    p_dom.add_argument("--out", help="point-cloud CSV output path")
    p_dom.add_argument("--plot", help="SVG projections plot output path")
    p_dom.add_argument("--traj", action="append",
                       help="overlay a trajectory from 'i1,vc,i2,xc' "
                            "(repeatable)")
    p_dom.set_defaults(func=_cmd_domain)

    p_sw = sub.add_parser("sweep", help="run a controller-gain grid")
    p_sw.add_argument("scenario")
    p_sw.add_argument("--grid", required=True,
                      help="e.g. 'alpha=10,30;k=2,3'")
    p_sw.add_argument("--out", help="metrics table CSV path "
                                    "(default sweep_metrics.csv)")
    p_sw.add_argument("--t-from", dest="t_from", type=float, default=0.0,
                      help="metrics window start time")
    p_sw.add_argument("--dt", type=float, help="override integration step")
    p_sw.add_argument("--t-end", dest="t_end", type=float,
                      help="override simulation horizon")
    p_sw.set_defaults(func=_cmd_sweep)

    p_met = sub.add_parser("metrics",
                           help="recompute metrics from a trace CSV")
    p_met.add_argument("csv")
    p_met.add_argument("--v-star", dest="v_star", type=float, required=True)
    p_met.add_argument("--t-from", dest="t_from", type=float, default=0.0)
    p_met.set_defaults(func=_cmd_metrics)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (CplSingularityError, UnreachableReferenceError,
            UnreachableDomainError) as exc:
        # UnreachableReference/Domain subclass ValueError: match them first
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ValueError as exc:
        print(f"error: invalid configuration: {exc}", file=sys.stderr)
        return EXIT_PARSE


if __name__ == "__main__":
    sys.exit(main())
