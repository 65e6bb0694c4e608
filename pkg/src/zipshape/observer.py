"""Disturbance observers for the three lumped channels.

Each channel i carries its own generator model (A_i, M_i) and a linear
injection gain G_i.  The reconstructed generator state is

    zeta_hat_i = z_i + kappa_i * G_i * x_i,      kappa = (L1, C, L2),

with z_i the integrated internal state; its error obeys the autonomous linear
dynamics zetaerr' = (A_i - G_i M_i) zetaerr, so a channel is admissible
exactly when A_i - G_i M_i is Hurwitz.

A reduced single-state estimator for the source voltage is also provided for
the practical controller variant that neglects the parasitic resistance.
"""

from dataclasses import dataclass

import numpy as np
from numba import njit

from .plant import CircuitParams, DisturbanceVector, ExoSystem, PlantState


@dataclass
class ObserverGains:
    """Linear injection gains, one vector per disturbance channel."""

    G1: np.ndarray
    G2: np.ndarray
    G3: np.ndarray

    def __post_init__(self):
        self.G1 = np.asarray(self.G1, dtype=float).reshape(-1)
        self.G2 = np.asarray(self.G2, dtype=float).reshape(-1)
        self.G3 = np.asarray(self.G3, dtype=float).reshape(-1)


@dataclass
class ObserverState:
    """Internal states z_i plus the reconstructed generator states."""

    z1: np.ndarray
    z2: np.ndarray
    z3: np.ndarray
    zeta_hat1: np.ndarray
    zeta_hat2: np.ndarray
    zeta_hat3: np.ndarray

    @classmethod
    def from_internal(cls, z1, z2, z3, state: PlantState, gains: ObserverGains,
                      nominal: CircuitParams) -> "ObserverState":
        z1 = np.asarray(z1, dtype=float).reshape(-1)
        z2 = np.asarray(z2, dtype=float).reshape(-1)
        z3 = np.asarray(z3, dtype=float).reshape(-1)
        return cls(z1, z2, z3,
                   z1 + nominal.L1 * gains.G1 * state.i1,
                   z2 + nominal.C * gains.G2 * state.vc,
                   z3 + nominal.L2 * gains.G3 * state.i2)


# ----- numeric cores (shared with the simulation kernel) -----

@njit(cache=True)
def _channel_rhs(z, A, M, G, kappa, x, phi):
    """dz for one channel; phi is the nominal drift of the matching plant row."""
    m = z.shape[0]
    zh = np.empty(m)
    for a in range(m):
        zh[a] = z[a] + kappa * G[a] * x
    s = phi
    for a in range(m):
        s += M[a] * zh[a]
    dz = np.empty(m)
    for a in range(m):
        acc = 0.0
        for b in range(m):
            acc += A[a, b] * zh[b]
        dz[a] = acc - G[a] * s
    return dz


@njit(cache=True)
def _simple_E_rhs(z1, i1, vc, mu, L1, eta):
    """Reduced source-voltage estimator (parasitic resistance neglected)."""
    e_hat = z1 + L1 * eta * i1
    dz1 = eta * vc - eta * mu * e_hat
    return dz1, e_hat


# ----- public API -----

def observer_derivative(obs: ObserverState, state: PlantState, mu: float,
                        nominal: CircuitParams, gains: ObserverGains,
                        exos: tuple[ExoSystem, ExoSystem, ExoSystem]
                        ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Rates (dz1, dz2, dz3) given the measured plant state and applied duty."""
    p = nominal
    i1, vc, i2 = state.i1, state.vc, state.i2
    phi1 = -p.r * i1 - vc + mu * p.E
    phi2 = i1 - vc / p.R - p.P / vc - p.i - i2
    phi3 = vc - p.R2 * i2
    dz1 = _channel_rhs(obs.z1, exos[0].A, exos[0].M, gains.G1, p.L1, i1, phi1)
    dz2 = _channel_rhs(obs.z2, exos[1].A, exos[1].M, gains.G2, p.C, vc, phi2)
    dz3 = _channel_rhs(obs.z3, exos[2].A, exos[2].M, gains.G3, p.L2, i2, phi3)
    return dz1, dz2, dz3


def disturbance_estimate(obs: ObserverState,
                         exos: tuple[ExoSystem, ExoSystem, ExoSystem]
                         ) -> DisturbanceVector:
    """Channel estimates d_hat_i = M_i zeta_hat_i."""
    return DisturbanceVector(float(exos[0].M @ obs.zeta_hat1),
                             float(exos[1].M @ obs.zeta_hat2),
                             float(exos[2].M @ obs.zeta_hat3))


def gain_stability_check(gains: ObserverGains,
                         exos: tuple[ExoSystem, ExoSystem, ExoSystem]
                         ) -> tuple[float, float, float]:
    """Largest real part of eig(A_i - G_i M_i) per channel (< 0 = admissible)."""
    out = []
    for G, exo in zip((gains.G1, gains.G2, gains.G3), exos):
        m = exo.order
        if G.shape != (m,):
            raise ValueError(f"gain vector length {G.shape[0]} does not match "
                             f"generator order {m}")
        f = exo.A - np.outer(G, exo.M)
        out.append(float(np.max(np.linalg.eigvals(f).real)))
    return tuple(out)


def simplified_E_observer(z1: float, state: PlantState, mu: float,
                          nominal: CircuitParams, eta: float
                          ) -> tuple[float, float]:
    """Rate and estimate (dz1, E_hat) of the reduced source-voltage estimator.

    E_hat = z1 + L1*eta*i1; for a constant source the estimation error decays
    at rate eta*mu.
    """
    return _simple_E_rhs(z1, state.i1, state.vc, mu, nominal.L1, eta)
