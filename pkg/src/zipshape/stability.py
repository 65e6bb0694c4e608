"""Shaped storage, load condition and attraction-domain estimate.

The closed loop is analysed through the shaped storage

    Hd = 1/2 L1 e1^2 + 1/2 C e2^2 + 1/2 L2 e3^2 + k/2 (alpha L1 e1 - xc)^2

over the error state e = x - x*, xc.  Hd decays along trajectories while the
momentary load condition R*P / (vc * v*) < 1 holds, and the sub-level set

    sqrt(2 Hd(e0) / C) < v* - R*P/v*

is an inner estimate of the attraction domain: trajectories started inside it
keep the load condition true for all time.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .plant import CircuitParams
from .reference import solve_equilibrium
from .plant import DisturbanceVector


class UnreachableDomainError(ValueError):
    """Load condition fails at the target itself (v*^2 <= R*P)."""


@dataclass
class ErrorState:
    e1: float  # converter current error, A
    e2: float  # bus voltage error, V
    e3: float  # line current error, A
    xc: float  # controller integral state


# ----- numeric cores (shared with the simulation kernel) -----

@njit(cache=True)
def _hd(e1, e2, e3, xc, L1, C, L2, alpha, k):
    s = alpha * L1 * e1 - xc
    return 0.5 * (L1 * e1 * e1 + C * e2 * e2 + L2 * e3 * e3) + 0.5 * k * s * s


# ----- public API -----

def hd_energy(err: ErrorState, nominal: CircuitParams, alpha: float,
              k: float) -> float:
    """Shaped storage Hd at one error state, J."""
    return _hd(err.e1, err.e2, err.e3, err.xc,
               nominal.L1, nominal.C, nominal.L2, alpha, k)


def momentary_condition(vc: float, v_star: float, R: float, P: float
                        ) -> tuple[float, bool]:
    """Load condition ratio R*P/(vc*v*) and whether it is < 1."""
    ratio = R * P / (vc * v_star)
    return float(ratio), bool(ratio < 1.0)


def _domain_rhs(v_star: float, R: float, P: float) -> float:
    rhs = v_star - R * P / v_star
    if rhs <= 0.0:
        raise UnreachableDomainError(
            f"v*^2 = {v_star ** 2:.6g} must exceed R*P = {R * P:.6g} for a "
            "non-empty domain estimate")
    return rhs


def initial_membership(err0: ErrorState, nominal: CircuitParams, alpha: float,
                       k: float, v_star: float, R: float, P: float
                       ) -> tuple[float, float, bool]:
    """Domain test for one initial error state.

    Returns (lhs, rhs, inside) with lhs = sqrt(2 Hd(e0)/C) and
    rhs = v* - R*P/v*; inside means lhs < rhs strictly.
    """
    rhs = _domain_rhs(v_star, R, P)
    lhs = float(np.sqrt(2.0 * hd_energy(err0, nominal, alpha, k) / nominal.C))
    return lhs, rhs, lhs < rhs


def _hd_quadratic(nominal: CircuitParams, alpha: float, k: float) -> np.ndarray:
    """Hd = 1/2 q^T Q q over q = (e1, e2, e3, xc)."""
    p = nominal
    q = np.zeros((4, 4))
    q[0, 0] = p.L1 + k * (alpha * p.L1) ** 2
    q[1, 1] = p.C
    q[2, 2] = p.L2
    q[3, 3] = k
    q[0, 3] = q[3, 0] = -k * alpha * p.L1
    return q


def sample_domain(nominal: CircuitParams, alpha: float, k: float,
                  v_star: float, R: float, P: float, n: int, seed: int
                  ) -> tuple[np.ndarray, np.ndarray]:
    """Seeded samples of the domain estimate in absolute coordinates.

    Returns (boundary, interior), each of shape (n, 4) with columns
    (i1, vc, i2, xc).  Boundary points sit on the level set
    Hd = C*rhs^2/2 exactly (to rounding); interior points are drawn
    volume-uniformly inside it and satisfy the membership test strictly.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rhs = _domain_rhs(v_star, R, P)
    h_bound = 0.5 * nominal.C * rhs ** 2
    q = _hd_quadratic(nominal, alpha, k)
    chol = np.linalg.cholesky(q)  # Hd(e) = 1/2 |chol^T e|^2

    rng = np.random.default_rng(seed)
    star = solve_equilibrium(v_star, nominal, DisturbanceVector())
    center = np.array([star.x1_star, star.x2_star, star.x3_star, 0.0])

    def _sphere(count):
        u = rng.standard_normal((count, 4))
        return u / np.linalg.norm(u, axis=1, keepdims=True)

    radius = np.sqrt(2.0 * h_bound)
    boundary_e = np.linalg.solve(chol.T, (radius * _sphere(n)).T).T
    # random() < 1 strictly, so interior points stay strictly inside the set
    scale = rng.random(n) ** 0.25
    interior_e = np.linalg.solve(chol.T, (radius * scale[:, None] * _sphere(n)).T).T
    return boundary_e + center, interior_e + center
