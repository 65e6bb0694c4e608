"""Gain selection helpers.

grid_search_pi exists because a fair PI baseline needs honestly-tuned gains:
it sweeps a (kp, ki) grid on a given scenario, ranks every combination that
actually settles, and returns the best one.  Ranking: shortest settling
time, then smallest overshoot, then smallest gains (deterministic
tie-break).
"""

from __future__ import annotations

from dataclasses import replace
from typing import Optional, Sequence, Tuple

from .controllers import ControllerConfig
from .engine import Scenario, run_batch

DEFAULT_KP_GRID = (0.01, 0.02, 0.05, 0.1, 0.2)
DEFAULT_KI_GRID = (5.0, 10.0, 20.0, 50.0, 100.0, 200.0)


def grid_search_pi(base: Scenario,
                   kp_grid: Sequence[float] = DEFAULT_KP_GRID,
                   ki_grid: Sequence[float] = DEFAULT_KI_GRID,
                   t_from: float = 0.0,
                   max_workers: Optional[int] = None
                   ) -> Tuple[Optional[ControllerConfig], list]:
    """Evaluate every (kp, ki) pair on the base scenario.

    Returns (best_config, rows).  best_config is None when no pair settles
    within the scenario horizon.  rows is one dict per grid point, in grid
    order, carrying the gains, the metrics (when the run succeeded) and any
    error message.
    """
    pairs = [(float(kp), float(ki)) for kp in kp_grid for ki in ki_grid]
    if not pairs:
        raise ValueError("empty (kp, ki) grid")
    scenarios = []
    for kp, ki in pairs:
        cfg = ControllerConfig(kind="PI", kp=kp, ki=ki,
                               hold_dt=base.controller.hold_dt)
        scenarios.append(replace(base, controller=cfg,
                                 name=f"{base.name}_pi_kp{kp}_ki{ki}"))
    results = run_batch(scenarios, t_from=t_from, max_workers=max_workers)

    rows = []
    ranked = []
    for (kp, ki), res in zip(pairs, results):
        row = {"kp": kp, "ki": ki, "ok": res.ok, "error": res.error}
        if res.ok:
            row.update(res.metrics.as_dict())
            if res.metrics.settling_time_s is not None:
                ranked.append((res.metrics.settling_time_s,
                               res.metrics.overshoot_V, kp, ki))
        rows.append(row)

    if not ranked:
        return None, rows
    ranked.sort()
    _, _, kp, ki = ranked[0]
    return ControllerConfig(kind="PI", kp=kp, ki=ki,
                            hold_dt=base.controller.hold_dt), rows
