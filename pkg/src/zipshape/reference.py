"""Steady-state targets for bus-voltage regulation.

Given a commanded bus voltage and the current disturbance values, the other
equilibrium quantities follow from the nominal circuit: the line current from
the line branch, the converter current from the bus power balance, and the
steady duty ratio from the converter loop.  Two forms are provided:

* a closed-form solve that treats the disturbances as frozen (the practical
  form used on hardware), and
* a dynamic form in which the converter-current target is integrated as a
  filter state, with its duty companion recomputed algebraically each step.
Both coincide at constant disturbances (the filter pole sits at -R2/L2).
"""

from dataclasses import dataclass

from numba import njit

from .plant import CircuitParams, DisturbanceVector


class UnreachableReferenceError(ValueError):
    """Commanded operating point needs a steady duty ratio outside [0, 1]."""


@dataclass
class ReferenceState:
    x1_star: float   # converter current target, A
    x2_star: float   # bus voltage target, V
    x3_star: float   # line current target, A
    mu_star: float   # steady duty ratio


# ----- numeric cores (shared with the simulation kernel) -----

@njit(cache=True)
def _static_reference(v_star, r, R2, E, R, P, il, d1, d2, d3):
    x3s = (v_star + d3) / R2
    x1s = v_star / R + P / v_star + il + x3s - d2
    mus = (r * x1s + v_star - d1) / E
    return x1s, x3s, mus


@njit(cache=True)
def _x3_from_balance(x1s, v_star, R, P, il, d2):
    return x1s - v_star / R - P / v_star - il + d2


@njit(cache=True)
def _mu_star_dynamic(x1s, v_star, x3s, L1, L2, r, R2, E, d1, d3, d2_rate):
    return (L1 / E) * (r * x1s / L1 + v_star / L1 + v_star / L2
                       - R2 * x3s / L2 - d1 / L1 + d3 / L2 - d2_rate)


@njit(cache=True)
def _x1s_rate(x1s, v_star, mu_star, L1, r, E, d1):
    return (-r * x1s + mu_star * E - v_star + d1) / L1


# ----- public API -----

def solve_equilibrium(v_star: float, nominal: CircuitParams,
                      d: DisturbanceVector = None) -> ReferenceState:
    """Closed-form operating point for a commanded bus voltage.

    d defaults to zero disturbance on all three channels.  Raises
    UnreachableReferenceError when the required steady duty ratio falls
    outside [0, 1]; the point is never silently clamped.
    """
    if not v_star > 0.0:
        raise ValueError("commanded bus voltage must be positive")
    if d is None:
        d = DisturbanceVector()
    p = nominal
    x1s, x3s, mus = _static_reference(v_star, p.r, p.R2, p.E, p.R, p.P, p.i,
                                      d.d1, d.d2, d.d3)
    if not 0.0 <= mus <= 1.0:
        raise UnreachableReferenceError(
            f"target bus voltage {v_star:.6g} V needs steady duty {mus:.6g}, "
            "outside [0, 1]")
    return ReferenceState(x1s, v_star, x3s, mus)


def x3_star_from_balance(x1_star: float, v_star: float, nominal: CircuitParams,
                         d2: float) -> float:
    """Line-current target implied by the bus power balance (dynamic form)."""
    return _x3_from_balance(x1_star, v_star, nominal.R, nominal.P, nominal.i, d2)


def mu_star_dynamic(ref: ReferenceState, nominal: CircuitParams,
                    d1: float, d3: float, d2_rate: float) -> float:
    """Duty companion of the dynamic reference.

    d2_rate is the time derivative of the bus-node disturbance (zero for
    constant channels; supplied by the generator model otherwise).
    """
    p = nominal
    return _mu_star_dynamic(ref.x1_star, ref.x2_star, ref.x3_star,
                            p.L1, p.L2, p.r, p.R2, p.E, d1, d3, d2_rate)


def reference_derivative(ref: ReferenceState, nominal: CircuitParams,
                         d1: float, mu_star_input: float) -> float:
    """Rate of the integrated converter-current target (dynamic form)."""
    return _x1s_rate(ref.x1_star, ref.x2_star, mu_star_input,
                     nominal.L1, nominal.r, nominal.E, d1)
