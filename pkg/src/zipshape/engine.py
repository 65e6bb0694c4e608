"""Deterministic fixed-step closed-loop simulation engine.

A Scenario bundles the plant parameters (nominal and actual), the voltage
target, initial conditions, controller and observer configuration, the
disturbance generators, a timed event schedule and an optional measurement
noise model.  run_scenario integrates the whole loop with classical RK4 at a
fixed step and returns a Trace (one record per step).

Events apply between steps: the state is continuous across an event, only
parameters / targets / generator activations jump.  Measurement noise
perturbs only the values fed to the controller and observer -- the true
state integrates noise-free dynamics.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from . import _kernel
from .controllers import ControllerConfig
from .observer import ObserverGains, gain_stability_check
from .plant import (VC_FLOOR, CircuitParams, CplSingularityError, ExoSystem,
                    PlantState)
from .reference import solve_equilibrium

EVENT_TARGETS = ("v_star", "E_actual", "R_actual", "P_actual", "i_actual",
                 "enable_d1", "enable_d2", "enable_d3")
NOISE_CHANNELS = ("i1", "vc", "i2")

_KIND_CODES = {"ESC": 0, "AESC": 1, "PI": 2, "RPBC": 3, "SimplifiedAESC": 4}


def _trivial_exo() -> ExoSystem:
    return ExoSystem(A=[[0.0]], M=[1.0], zeta0=[0.0])


@dataclass
class Event:
    """A one-shot change applied at the first step with time >= t."""
    t: float
    target: str
    value: Optional[float] = None

    def __post_init__(self):
        if self.target not in EVENT_TARGETS:
            raise ValueError(f"unknown event target {self.target!r}; "
                             f"expected one of {EVENT_TARGETS}")
        if self.t < 0.0:
            raise ValueError(f"event time must be >= 0, got {self.t}")
        if self.target.startswith("enable_"):
            if self.value is not None:
                raise ValueError(f"event {self.target!r} takes no value")
        else:
            if self.value is None:
                raise ValueError(f"event {self.target!r} requires a value")
            self.value = float(self.value)


@dataclass
class NoiseSpec:
    """Zero-mean Gaussian measurement noise on selected channels.

    power is the per-sample variance; the same seed always reproduces the
    same noise sequence.  One sample per channel is drawn per step and held
    across the integrator stages of that step.
    """
    seed: int
    power: float
    targets: Tuple[str, ...] = ("vc",)

    def __post_init__(self):
        self.targets = tuple(self.targets)
        for ch in self.targets:
            if ch not in NOISE_CHANNELS:
                raise ValueError(f"unknown noise target {ch!r}; "
                                 f"expected subset of {NOISE_CHANNELS}")
        if self.power < 0.0:
            raise ValueError("noise power must be >= 0")
        self.seed = int(self.seed)


@dataclass
class Scenario:
    nominal: CircuitParams
    controller: ControllerConfig
    v_star: float = 20.0
    actual: Optional[CircuitParams] = None
    initial: PlantState = field(
        default_factory=lambda: PlantState(i1=0.0, vc=20.0, i2=0.0))
    xc0: float = 0.0
    gains: Optional[ObserverGains] = None
    exo1: ExoSystem = field(default_factory=_trivial_exo)
    exo2: ExoSystem = field(default_factory=_trivial_exo)
    exo3: ExoSystem = field(default_factory=_trivial_exo)
    zeta_hat0: Optional[Tuple[Sequence[float], Sequence[float],
                              Sequence[float]]] = None
    x1_star_hat0: Optional[float] = None
    reference_mode: str = "dynamic"
    dt: float = 1e-6
    t_end: float = 0.5
    events: Tuple[Event, ...] = ()
    noise: Optional[NoiseSpec] = None
    name: str = "scenario"

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be > 0")
        if self.t_end < self.dt:
            raise ValueError("t_end must be >= dt")
        if self.reference_mode not in ("dynamic", "static"):
            raise ValueError("reference_mode must be 'dynamic' or 'static'")
        self.events = tuple(self.events)
        prev = 0.0
        for ev in self.events:
            if ev.t < prev:
                raise ValueError("events must be sorted by time")
            if ev.t > self.t_end:
                raise ValueError(f"event at t={ev.t} is past t_end={self.t_end}")
            prev = ev.t


class TraceRecord(NamedTuple):
    t: float
    i1: float
    vc: float
    i2: float
    xc: float
    mu: float
    mu_saturated_flag: float
    d1: float
    d2: float
    d3: float
    d1_hat: float
    d2_hat: float
    d3_hat: float
    Hd: float
    condition12_ratio: float


class Trace:
    """Column-oriented simulation trace; one row per integration step."""

    COLUMNS = TraceRecord._fields

    def __init__(self, data: np.ndarray):
        data = np.asarray(data, dtype=float)
        if data.ndim != 2 or data.shape[1] != len(self.COLUMNS):
            raise ValueError(f"trace data must be (n, {len(self.COLUMNS)})")
        self.data = data

    def __len__(self):
        return self.data.shape[0]

    def col(self, name: str) -> np.ndarray:
        return self.data[:, self.COLUMNS.index(name)]

    @property
    def t(self) -> np.ndarray:
        return self.data[:, 0]

    @property
    def i1(self) -> np.ndarray:
        return self.data[:, 1]

    @property
    def vc(self) -> np.ndarray:
        return self.data[:, 2]

    @property
    def i2(self) -> np.ndarray:
        return self.data[:, 3]

    @property
    def xc(self) -> np.ndarray:
        return self.data[:, 4]

    @property
    def mu(self) -> np.ndarray:
        return self.data[:, 5]

    @property
    def hd(self) -> np.ndarray:
        return self.data[:, 13]

    def records(self) -> list:
        return [TraceRecord(*row) for row in self.data]

    def final(self) -> TraceRecord:
        return TraceRecord(*self.data[-1])

    def to_csv(self, path, decimate: int = 1) -> None:
        """Write the trace as full-precision decimal CSV.

        decimate > 1 keeps every decimate-th row; the final row is always
        included so end-state checks survive decimation.
        """
        if decimate < 1:
            raise ValueError("decimate must be >= 1")
        idx = list(range(0, self.data.shape[0], decimate))
        if idx[-1] != self.data.shape[0] - 1:
            idx.append(self.data.shape[0] - 1)
        lines = [",".join(self.COLUMNS)]
        for k in idx:
            row = self.data[k]
            lines.append(",".join(repr(float(v)) for v in row))
        with open(path, "w", newline="\n") as fh:
            fh.write("\n".join(lines))
            fh.write("\n")

    @classmethod
    def from_csv(cls, path) -> "Trace":
        with open(path, "r") as fh:
            header = fh.readline().strip()
        if header.split(",") != list(cls.COLUMNS):
            raise ValueError(f"unexpected trace header in {path}")
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(data)


@dataclass
class Metrics:
    overshoot_V: float
    overshoot_pct: float
    settling_time_s: Optional[float]
    steady_state_error_V: float
    peak_deviation_V: float

    def as_dict(self) -> dict:
        return {
            "overshoot_V": self.overshoot_V,
            "overshoot_pct": self.overshoot_pct,
            "settling_time_s": self.settling_time_s,
            "steady_state_error_V": self.steady_state_error_V,
            "peak_deviation_V": self.peak_deviation_V,
        }


def rk4_step(y, t: float, dt: float,
             f: Callable[[float, np.ndarray], np.ndarray]) -> np.ndarray:
    """One classical 4th-order Runge-Kutta step of y' = f(t, y)."""
    if dt <= 0.0:
        raise ValueError("dt must be > 0")
    y = np.asarray(y, dtype=float)
    k1 = np.asarray(f(t, y), dtype=float)
    k2 = np.asarray(f(t + 0.5 * dt, y + 0.5 * dt * k1), dtype=float)
    k3 = np.asarray(f(t + 0.5 * dt, y + 0.5 * dt * k2), dtype=float)
    k4 = np.asarray(f(t + dt, y + dt * k3), dtype=float)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def inject_noise(true_value: float, spec: NoiseSpec, channel: str,
                 step_index: int) -> float:
    """Measured value for one channel at one step, from the seeded stream.

    The stream convention is fixed: three standard-normal draws per step,
    ordered (i1, vc, i2), drawn for every step regardless of which channels
    are targeted.  Sample (step, channel) therefore sits at flat index
    3 * step + channel_index.
    """
    if channel not in NOISE_CHANNELS:
        raise ValueError(f"unknown channel {channel!r}")
    if channel not in spec.targets:
        raise ValueError(f"channel {channel!r} is not a noise target")
    if spec.power == 0.0:
        return float(true_value)
    idx = 3 * int(step_index) + NOISE_CHANNELS.index(channel)
    draws = np.random.default_rng(spec.seed).standard_normal(idx + 1)
    return float(true_value + math.sqrt(spec.power) * draws[-1])


def _noise_array(spec: Optional[NoiseSpec], n_steps: int) -> np.ndarray:
    if spec is None or spec.power == 0.0:
        return np.zeros((0, 3))
    flat = np.random.default_rng(spec.seed).standard_normal((n_steps + 1) * 3)
    arr = flat.reshape(n_steps + 1, 3) * math.sqrt(spec.power)
    for c, name in enumerate(NOISE_CHANNELS):
        if name not in spec.targets:
            arr[:, c] = 0.0
    return arr


def _event_step(t: float, dt: float) -> int:
    return max(0, int(math.ceil(t / dt - 1e-9)))


def _build_phys(nominal: CircuitParams, actual: CircuitParams,
                v_star: float) -> np.ndarray:
    return np.array([
        nominal.L1, nominal.C, nominal.L2, nominal.r, nominal.R2,
        nominal.E, nominal.R, nominal.P, nominal.i,
        actual.L1, actual.C, actual.L2, actual.r, actual.R2,
        actual.E, actual.R, actual.P, actual.i,
        v_star, VC_FLOOR,
    ])


def _validate_scenario(s: Scenario) -> None:
    kind = s.controller.kind
    if kind == "AESC" and s.gains is None:
        raise ValueError("AESC requires observer gains")
    if kind == "SimplifiedAESC" and s.gains is not None:
        raise ValueError("SimplifiedAESC uses its own scalar observer; "
                         "remove the observer gains section")
    if s.gains is not None:
        rates = gain_stability_check(s.gains, (s.exo1, s.exo2, s.exo3))
        bad = [i + 1 for i, rr in enumerate(rates) if rr >= 0.0]
        if bad:
            raise ValueError(
                f"observer gains do not stabilize channel(s) {bad}: "
                f"max eigenvalue real parts {tuple(round(r, 6) for r in rates)}")
    if s.initial.vc <= VC_FLOOR:
        raise CplSingularityError(s.initial.vc, t=0.0)
    # every voltage target that will ever be requested must be reachable
    solve_equilibrium(s.v_star, s.nominal)
    actual = s.actual if s.actual is not None else s.nominal
    for ev in s.events:
        if ev.target == "v_star":
            solve_equilibrium(ev.value, s.nominal)
        elif ev.target.endswith("_actual"):
            # CircuitParams validation rejects non-physical values up front
            actual = replace(actual, **{ev.target[:-len("_actual")]: ev.value})


def _initial_state(s: Scenario, n_state: int, offsets: dict) -> np.ndarray:
    cfg = s.controller
    nom = s.nominal
    y = np.zeros(n_state)
    y[0] = s.initial.i1
    y[1] = s.initial.vc
    y[2] = s.initial.i2
    y[3] = s.xc0

    ref0 = solve_equilibrium(s.v_star, nom)
    if cfg.kind == "RPBC":
        e_div = cfg.rpbc_E if cfg.rpbc_E is not None else nom.E
        if cfg.rpbc_mu0 is not None:
            y[4] = cfg.rpbc_mu0
        else:
            y[4] = (nom.r * ref0.x1_star + s.v_star) / e_div

    for ch, exo in enumerate((s.exo1, s.exo2, s.exo3)):
        off = offsets["zeta"][ch]
        y[off:off + exo.order] = exo.zeta0

    kappas = (nom.L1, nom.C, nom.L2)
    meas0 = (s.initial.i1, s.initial.vc, s.initial.i2)
    if s.gains is not None:
        gvecs = (s.gains.G1, s.gains.G2, s.gains.G3)
        for ch, exo in enumerate((s.exo1, s.exo2, s.exo3)):
            off = offsets["z"][ch]
            zh0 = np.zeros(exo.order)
            if s.zeta_hat0 is not None:
                zh0 = np.asarray(s.zeta_hat0[ch], dtype=float)
                if zh0.shape != (exo.order,):
                    raise ValueError(
                        f"zeta_hat0[{ch}] must have length {exo.order}")
            y[off:off + exo.order] = zh0 - kappas[ch] * gvecs[ch] * meas0[ch]
    elif cfg.kind == "SimplifiedAESC":
        e_hat0 = cfg.E_hat0 if cfg.E_hat0 is not None else nom.E
        y[offsets["z"][0]] = e_hat0 - nom.L1 * cfg.eta * s.initial.i1

    y[offsets["x1s"]] = (s.x1_star_hat0 if s.x1_star_hat0 is not None
                         else ref0.x1_star)
    return y


def run_scenario(s: Scenario) -> Trace:
    """Integrate the full closed loop and return the step-by-step Trace."""
    _validate_scenario(s)

    cfg = s.controller
    kind_code = _KIND_CODES[cfg.kind]
    nom = s.nominal
    actual = s.actual if s.actual is not None else s.nominal

    m = (s.exo1.order, s.exo2.order, s.exo3.order)
    mz = sum(m)
    offsets = {
        "zeta": (5, 5 + m[0], 5 + m[0] + m[1]),
        "z": (5 + mz, 5 + mz + m[0], 5 + mz + m[0] + m[1]),
        "x1s": 5 + 2 * mz,
        "pi": 5 + 2 * mz + 1,
    }
    n_state = 7 + 2 * mz

    n_steps = int(round(s.t_end / s.dt))
    if n_steps < 1:
        raise ValueError("t_end must cover at least one step")

    has_obs = 1 if s.gains is not None else 0
    if s.gains is not None:
        g1 = np.asarray(s.gains.G1, dtype=float)
        g2 = np.asarray(s.gains.G2, dtype=float)
        g3 = np.asarray(s.gains.G3, dtype=float)
    else:
        g1 = np.zeros(m[0]); g2 = np.zeros(m[1]); g3 = np.zeros(m[2])

    e_div = cfg.rpbc_E if cfg.rpbc_E is not None else nom.E
    hold_steps = int(round(cfg.hold_dt / s.dt)) if cfg.hold_dt > 0.0 else 0
    ctrl = np.array([
        float(kind_code), cfg.alpha, cfg.k, cfg.kp, cfg.ki, cfg.Kc, cfg.Tc,
        cfg.lam, cfg.eta, e_div,
        1.0 if s.reference_mode == "dynamic" else 0.0,
        float(hold_steps),
        1.0 if cfg.rpbc_deriv == "measured" else 0.0,
    ])

    y = _initial_state(s, n_state, offsets)
    noise = _noise_array(s.noise, n_steps)
    trace = np.empty((n_steps + 1, _kernel.N_TRACE_COLS))
    fd_state = np.zeros(2)
    act = np.zeros(3)
    v_star_cur = s.v_star

    # bucket events by the step before which they apply
    buckets: dict = {}
    for ev in s.events:
        k = _event_step(ev.t, s.dt)
        if k >= n_steps:
            continue  # nothing left to affect
        buckets.setdefault(k, []).append(ev)
    boundaries = sorted(set([0, n_steps]) | set(buckets.keys()))

    a1 = np.ascontiguousarray(s.exo1.A); m1 = np.ascontiguousarray(s.exo1.M)
    a2 = np.ascontiguousarray(s.exo2.A); m2 = np.ascontiguousarray(s.exo2.M)
    a3 = np.ascontiguousarray(s.exo3.A); m3 = np.ascontiguousarray(s.exo3.M)

    first = True
    for g0, g1b in zip(boundaries[:-1], boundaries[1:]):
        for ev in buckets.get(g0, ()):
            if ev.target == "v_star":
                v_star_cur = ev.value
            elif ev.target == "enable_d1":
                act[0] = 1.0
            elif ev.target == "enable_d2":
                act[1] = 1.0
            elif ev.target == "enable_d3":
                act[2] = 1.0
            else:
                actual = replace(actual,
                                 **{ev.target[:-len("_actual")]: ev.value})
        phys = _build_phys(nom, actual, v_star_cur)
        status, done, bad_vc = _kernel.integrate_chunk(
            y, s.dt, g1b - g0, g0, phys, ctrl,
            a1, m1, g1, a2, m2, g2, a3, m3, g3, act, has_obs,
            noise, trace, 0 if first else 1, fd_state)
        if status != 0:
            t_fail = (g0 + done) * s.dt
            raise CplSingularityError(bad_vc, t=t_fail)
        first = False

    return Trace(trace)


def compute_metrics(trace: Trace, v_star: float,
                    t_from: float = 0.0) -> Metrics:
    """Standard step-response metrics of the bus voltage on [t_from, end]."""
    t = trace.t
    vc = trace.vc
    mask = t >= t_from
    if not mask.any():
        raise ValueError("t_from is past the end of the trace")
    t = t[mask]
    vc = vc[mask]

    err = vc - v_star
    overshoot = max(0.0, float(err.max()))
    band = 0.02 * abs(v_star)
    outside = np.abs(err) > band
    if outside[-1]:
        settling = None
    elif not outside.any():
        settling = 0.0
    else:
        last_out = int(np.nonzero(outside)[0][-1])
        settling = float(t[last_out + 1] - t[0])
    n_tail = max(1, int(math.ceil(0.1 * len(vc))))
    sse = float(err[-n_tail:].mean())
    peak = float(np.abs(err).max())
    return Metrics(
        overshoot_V=overshoot,
        overshoot_pct=100.0 * overshoot / abs(v_star),
        settling_time_s=settling,
        steady_state_error_V=sse,
        peak_deviation_V=peak,
    )


@dataclass
class BatchResult:
    name: str
    ok: bool
    metrics: Optional[Metrics] = None
    final: Optional[TraceRecord] = None
    error: Optional[str] = None


def _batch_worker(args) -> BatchResult:
    scenario, t_from = args
    try:
        trace = run_scenario(scenario)
    except Exception as exc:  # per-run failures are data, not crashes
        return BatchResult(name=scenario.name, ok=False,
                           error=f"{type(exc).__name__}: {exc}")
    metrics = compute_metrics(trace, _final_v_star(scenario), t_from=t_from)
    return BatchResult(name=scenario.name, ok=True, metrics=metrics,
                       final=trace.final())


def _final_v_star(s: Scenario) -> float:
    v = s.v_star
    for ev in s.events:
        if ev.target == "v_star":
            v = ev.value
    return v


def max_batch_workers() -> int:
    env = os.environ.get("ZIPSHAPE_THREADS")
    if env:
        return max(1, int(env))
    return max(1, os.cpu_count() or 1)


def run_batch(scenarios: Sequence[Scenario], t_from: float = 0.0,
              max_workers: Optional[int] = None) -> list:
    """Run independent scenarios concurrently; results in input order.

    Each result carries the run's metrics and final record on success, or
    the error message on failure -- one bad run never aborts the batch.
    ZIPSHAPE_THREADS caps the worker count.
    """
    if not scenarios:
        return []
    workers = max_workers if max_workers is not None else max_batch_workers()
    workers = max(1, min(workers, len(scenarios)))
    jobs = [(sc, t_from) for sc in scenarios]
    if workers == 1:
        return [_batch_worker(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_batch_worker, jobs))
