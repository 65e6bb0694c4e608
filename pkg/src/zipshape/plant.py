"""Averaged model of a DC-DC buck converter feeding a ZIP load through an LR line.

State (i1, vc, i2): converter-side inductor current, DC-bus capacitor voltage
and line inductor current.  The converter is driven through its duty ratio
``mu`` (0..1, multiplying the source voltage E).  The bus feeds a parallel ZIP
load -- constant-impedance R, constant-current i, constant-power P -- plus an
LR line branch (L2, R2).

The model is written in "nominal + lumped disturbance" form: the right-hand
side always uses the *nominal* parameter set, and any mismatch between the
actual circuit and the nominal one is folded exactly (not linearised) into
three additive channel disturbances (d1, d2, d3).  External disturbance
injections enter through the same three slots.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

# Bus voltages at or below this level put the constant-power branch P/vc too
# close to its singularity for the averaged model to mean anything.
VC_FLOOR = 0.1  # V


class CplSingularityError(RuntimeError):
    """Bus voltage reached the constant-power-load singularity guard."""

    def __init__(self, vc: float, t: float | None = None):
        self.vc = vc
        self.t = t
        at = f" at t={t:.6g} s" if t is not None else ""
        super().__init__(
            f"bus voltage {vc:.6g} V is at or below the {VC_FLOOR} V floor{at}; "
            "the constant-power branch P/vc is singular there"
        )


@dataclass
class CircuitParams:
    """One parameter set for the converter/line/load circuit.

    A scenario carries two of these: the nominal set the controller and
    observers know, and the actual set the simulated circuit uses.
    """

    L1: float  # converter inductance, H
    C: float   # bus capacitance, F
    L2: float  # line inductance, H
    r: float   # converter parasitic resistance, ohm
    R2: float  # line resistance, ohm
    E: float   # source voltage, V
    R: float   # constant-impedance load, ohm
    P: float   # constant-power load, W
    i: float   # constant-current load, A

    def __post_init__(self):
        for name in ("L1", "C", "L2", "r", "R2", "E", "R"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"CircuitParams.{name} must be strictly positive")
        if self.P < 0.0:
            raise ValueError("CircuitParams.P must be >= 0")
        if self.i < 0.0:
            raise ValueError("CircuitParams.i must be >= 0")


@dataclass
class PlantState:
    i1: float  # converter inductor current, A
    vc: float  # bus voltage, V
    i2: float  # line inductor current, A


@dataclass
class DisturbanceVector:
    d1: float = 0.0  # converter-loop channel, V
    d2: float = 0.0  # bus-node channel, A
    d3: float = 0.0  # line-loop channel, V


@dataclass
class ExoSystem:
    """Autonomous generator zeta' = A zeta, d = M zeta for one disturbance channel.

    A is m-by-m, M is a length-m row, zeta0 the initial generator state.
    Constants use A = [[0]], M = [1]; a sinusoid at w rad/s uses
    A = [[0, w], [-w, 0]].
    """

    A: np.ndarray
    M: np.ndarray
    zeta0: np.ndarray

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.M = np.asarray(self.M, dtype=float).reshape(-1)
        self.zeta0 = np.asarray(self.zeta0, dtype=float).reshape(-1)
        m = self.M.shape[0]
        if m < 1:
            raise ValueError("ExoSystem needs at least one generator state")
        if self.A.shape != (m, m):
            raise ValueError(f"ExoSystem.A must be {m}x{m} to match M")
        if self.zeta0.shape != (m,):
            raise ValueError(f"ExoSystem.zeta0 must have length {m}")

    @property
    def order(self) -> int:
        return self.M.shape[0]


# ----- numeric cores (shared with the simulation kernel) -----

@njit(cache=True)
def _plant_rhs(i1, vc, i2, mu, L1, C, L2, r, R2, E, R, P, il, d1, d2, d3):
    di1 = (-r * i1 + mu * E - vc + d1) / L1
    dvc = (i1 - vc / R - P / vc - il - i2 + d2) / C
    di2 = (vc - R2 * i2 + d3) / L2
    return di1, dvc, di2


@njit(cache=True)
def _lumped_d(i1, vc, i2, mu,
              L1n, Cn, L2n, rn, R2n, En, Rn, Pn, iln,
              L1a, Ca, L2a, ra, R2a, Ea, Ra, Pa, ila):
    d1 = rn * i1 + vc - mu * En + (L1n / L1a) * (-ra * i1 - vc + mu * Ea)
    d2 = (-i1 + vc / Rn + Pn / vc + iln + i2
          + (Cn / Ca) * (i1 - vc / Ra - Pa / vc - ila - i2))
    d3 = -vc + R2n * i2 + (L2n / L2a) * (vc - R2a * i2)
    return d1, d2, d3


@njit(cache=True)
def _storage(i1, vc, i2, L1, C, L2):
    return 0.5 * (L1 * i1 * i1 + C * vc * vc + L2 * i2 * i2)


# ----- public API -----

def plant_derivative(state: PlantState, mu: float, nominal: CircuitParams,
                     d: DisturbanceVector) -> tuple[float, float, float]:
    """Time derivative (di1, dvc, di2) of the nominal-form model."""
    if state.vc <= VC_FLOOR:
        raise CplSingularityError(state.vc)
    p = nominal
    return _plant_rhs(state.i1, state.vc, state.i2, mu,
                      p.L1, p.C, p.L2, p.r, p.R2, p.E, p.R, p.P, p.i,
                      d.d1, d.d2, d.d3)


def lumped_disturbances(state: PlantState, mu: float, nominal: CircuitParams,
                        actual: CircuitParams) -> DisturbanceVector:
    """Exact disturbances that make the nominal model reproduce the actual one.

    Folding is exact: integrating the nominal model with these disturbances
    gives the same trajectory as integrating the actual-parameter model.
    With actual == nominal all three channels are identically zero.
    """
    if state.vc <= VC_FLOOR:
        raise CplSingularityError(state.vc)
    n, a = nominal, actual
    d1, d2, d3 = _lumped_d(state.i1, state.vc, state.i2, mu,
                           n.L1, n.C, n.L2, n.r, n.R2, n.E, n.R, n.P, n.i,
                           a.L1, a.C, a.L2, a.r, a.R2, a.E, a.R, a.P, a.i)
    return DisturbanceVector(d1, d2, d3)


def storage_energy(state: PlantState, nominal: CircuitParams) -> float:
    """Stored electromagnetic energy 1/2(L1 i1^2 + C vc^2 + L2 i2^2), J."""
    return _storage(state.i1, state.vc, state.i2,
                    nominal.L1, nominal.C, nominal.L2)


def ph_consistency_check(state: PlantState, mu: float, nominal: CircuitParams,
                         d: DisturbanceVector) -> float:
    """Max abs difference between the port-Hamiltonian form and the direct RHS.

    The model can be written as xdot = W(vc) * grad(H) + g_d + g_u with the
    storage gradient grad(H) = (L1 i1, C vc, L2 i2); this evaluates that form
    independently and returns the worst channel residual against
    plant_derivative.  Zero (to rounding) for every valid state.
    """
    p = nominal
    i1, vc, i2 = state.i1, state.vc, state.i2
    grad_h = np.array([p.L1 * i1, p.C * vc, p.L2 * i2])
    w = np.array([
        [-p.r / p.L1 ** 2, -1.0 / (p.C * p.L1), 0.0],
        [1.0 / (p.C * p.L1),
         -1.0 / (p.R * p.C ** 2) - p.P / (vc ** 2 * p.C ** 2),
         -1.0 / (p.C * p.L2)],
        [0.0, 1.0 / (p.C * p.L2), -p.R2 / p.L2 ** 2],
    ])
    g_d = np.array([d.d1 / p.L1, (d.d2 - p.i) / p.C, d.d3 / p.L2])
    g_u = np.array([mu * p.E / p.L1, 0.0, 0.0])
    form = w @ grad_h + g_d + g_u
    direct = np.array(plant_derivative(state, mu, nominal, d))
    return float(np.max(np.abs(form - direct)))


def exo_advance(exo: ExoSystem, zeta: np.ndarray, dt: float) -> tuple[np.ndarray, float]:
    """Advance one generator step with the engine integrator; returns (zeta, d)."""
    from .engine import rk4_step  # local import: engine depends on this module

    zeta_new = rk4_step(np.asarray(zeta, dtype=float), 0.0, dt,
                        lambda t, z: exo.A @ z)
    return zeta_new, float(exo.M @ zeta_new)
