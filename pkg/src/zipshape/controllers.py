"""Duty-ratio control laws for the converter.

The main law shapes the closed-loop storage around the operating point and
adds integral action on the bus-voltage error through the controller state
xc (xc' = -alpha * (vc - v*)):

    mu = (alpha*r*k/E) * (xc - alpha*L1*(i1 - i1*)) + mu*

Full-information and adaptive variants share this shape; the adaptive one
evaluates it on targets rebuilt from observer estimates, so with perfect
estimates the two outputs are identical by construction.  PI and a
passivity-based rate law are included as comparison baselines, plus a reduced
practical variant that divides by an estimated source voltage instead of
using the parasitic-resistance path.
"""

from dataclasses import dataclass

from numba import njit

from .plant import CircuitParams, DisturbanceVector, PlantState
from .reference import (ReferenceState, mu_star_dynamic, solve_equilibrium,
                        x3_star_from_balance)

CONTROLLER_KINDS = ("ESC", "AESC", "PI", "RPBC", "SimplifiedAESC")


@dataclass
class EscState:
    xc: float = 0.0  # integral of -alpha*(vc - v*)


@dataclass
class ControllerConfig:
    kind: str
    alpha: float = 0.0   # integral-action gain (ESC/AESC/SimplifiedAESC)
    k: float = 0.0       # shaping gain
    kp: float = 0.0      # PI proportional gain
    ki: float = 0.0      # PI integral gain
    Kc: float = 0.0      # RPBC proportional rate gain
    Tc: float = 1.0      # RPBC time constant
    lam: float = 0.0     # practical-variant damping gain
    eta: float = 0.0     # source-voltage estimator gain
    rpbc_E: float | None = None      # divisor in the RPBC target (default: nominal E)
    rpbc_mu0: float | None = None    # initial RPBC duty state (default: target duty)
    rpbc_deriv: str = "model"        # i1 derivative source: "model" | "measured"
    hold_dt: float = 0.0             # >0: sample-and-hold duty update period, s
    E_hat0: float | None = None      # initial source-voltage estimate (default: nominal E)

    def __post_init__(self):
        if self.kind not in CONTROLLER_KINDS:
            raise ValueError(f"unknown controller kind {self.kind!r}; "
                             f"expected one of {CONTROLLER_KINDS}")
        if self.kind in ("ESC", "AESC", "SimplifiedAESC"):
            if not (self.alpha > 0.0 and self.k > 0.0):
                raise ValueError(f"{self.kind} needs alpha > 0 and k > 0")
        if self.kind == "SimplifiedAESC":
            if not (self.lam > 0.0 and self.eta > 0.0):
                raise ValueError("SimplifiedAESC needs lambda > 0 and eta > 0")
        if self.kind == "RPBC" and not (self.Kc > 0.0 and self.Tc > 0.0):
            raise ValueError("RPBC needs Kc > 0 and Tc > 0")
        if self.rpbc_deriv not in ("model", "measured"):
            raise ValueError("rpbc_deriv must be 'model' or 'measured'")
        if self.hold_dt < 0.0:
            raise ValueError("hold_dt must be >= 0")


# ----- numeric cores (shared with the simulation kernel) -----

@njit(cache=True)
def _esc_mu(i1, xc, x1s, mu_star, alpha, k, r, L1, E):
    return (alpha * r * k / E) * (xc - alpha * L1 * (i1 - x1s)) + mu_star


@njit(cache=True)
def _pi_mu(vc, v_star, integral, kp, ki):
    err = v_star - vc
    mu_raw = kp * err + ki * integral
    rate = err
    if (mu_raw > 1.0 and err > 0.0) or (mu_raw < 0.0 and err < 0.0):
        rate = 0.0  # conditional anti-windup: stop charging outward
    return mu_raw, rate


@njit(cache=True)
def _rpbc_rate(mu, x1s, x2s, i1_dot, Kc, Tc, r, E_nom, E_div):
    return (-Kc * (mu - (r * x1s + x2s) / E_div) - E_nom * i1_dot) / Tc


@njit(cache=True)
def _simplified_mu(i1, xc, v_star, e_hat, alpha, k, lam, L1):
    u = -alpha * lam * k * (alpha * i1 - xc / L1) - lam * i1 / L1
    return (L1 * u + v_star) / e_hat


@njit(cache=True)
def _saturate(mu_raw):
    if mu_raw < 0.0:
        return 0.0, True
    if mu_raw > 1.0:
        return 1.0, True
    return mu_raw, False


# ----- public API -----

def saturate_duty(mu_raw: float) -> tuple[float, bool]:
    """Clamp the commanded duty to [0, 1]; the flag reports active clamping."""
    mu, flag = _saturate(mu_raw)
    return float(mu), bool(flag)


def esc_integrator_rate(state: PlantState, v_star: float, alpha: float) -> float:
    """xc' = -alpha * (vc - v*)."""
    return -alpha * (state.vc - v_star)


def esc_duty(state: PlantState, esc: EscState, ref: ReferenceState,
             cfg: ControllerConfig, nominal: CircuitParams) -> float:
    """Full-information shaping law (duty before saturation)."""
    return _esc_mu(state.i1, esc.xc, ref.x1_star, ref.mu_star,
                   cfg.alpha, cfg.k, nominal.r, nominal.L1, nominal.E)


def aesc_duty(state: PlantState, esc: EscState, ref_hat: ReferenceState,
              d_hat: DisturbanceVector, d2_rate_hat: float,
              cfg: ControllerConfig, nominal: CircuitParams,
              mode: str = "dynamic") -> float:
    """Adaptive shaping law: the target set is rebuilt from estimates.

    In "dynamic" mode ref_hat carries the integrated converter-current target
    (its x3_star/mu_star fields are recomputed here from d_hat); in "static"
    mode ref_hat is the closed-form solve at d_hat and is used as given.
    With estimates equal to the true disturbances the output matches
    esc_duty exactly.
    """
    if mode == "dynamic":
        x3s = x3_star_from_balance(ref_hat.x1_star, ref_hat.x2_star, nominal,
                                   d_hat.d2)
        ref_hat = ReferenceState(ref_hat.x1_star, ref_hat.x2_star, x3s, 0.0)
        ref_hat.mu_star = mu_star_dynamic(ref_hat, nominal, d_hat.d1, d_hat.d3,
                                          d2_rate_hat)
    elif mode == "static":
        pass
    else:
        raise ValueError("mode must be 'dynamic' or 'static'")
    return esc_duty(state, esc, ref_hat, cfg, nominal)


def static_reference_from_estimates(v_star: float, nominal: CircuitParams,
                                    d_hat: DisturbanceVector) -> ReferenceState:
    """Closed-form target set at the current estimates (practical form).

    Unlike solve_equilibrium this never raises on an out-of-range duty: a
    transient estimate may momentarily imply an infeasible target, and the
    duty saturation downstream is the right place to handle it.
    """
    from .reference import _static_reference

    p = nominal
    x1s, x3s, mus = _static_reference(v_star, p.r, p.R2, p.E, p.R, p.P, p.i,
                                      d_hat.d1, d_hat.d2, d_hat.d3)
    return ReferenceState(x1s, v_star, x3s, mus)


def pi_duty(state: PlantState, v_star: float, pi_integral: float,
            cfg: ControllerConfig) -> tuple[float, float]:
    """PI baseline on the bus-voltage error.

    Returns (duty before saturation, integral rate).  The integral rate is
    the voltage error, zeroed while the raw output is pushing further into
    saturation (conditional anti-windup).
    """
    mu_raw, rate = _pi_mu(state.vc, v_star, pi_integral, cfg.kp, cfg.ki)
    return float(mu_raw), float(rate)


def rpbc_duty_rate(mu: float, ref: ReferenceState, i1_dot: float,
                   cfg: ControllerConfig, nominal: CircuitParams) -> float:
    """Passivity-based baseline: rate of the integrated duty state.

    mu' = (-Kc*(mu - (r*x1* + x2*)/E) - E*i1') / Tc.  The divisor in the
    target term defaults to the nominal source voltage but may be overridden
    (rpbc_E) to study a mis-set target.
    """
    e_div = nominal.E if cfg.rpbc_E is None else cfg.rpbc_E
    return _rpbc_rate(mu, ref.x1_star, ref.x2_star, i1_dot,
                      cfg.Kc, cfg.Tc, nominal.r, nominal.E, e_div)


def simplified_aesc_duty(state: PlantState, esc: EscState, e_hat: float,
                         v_star: float, cfg: ControllerConfig,
                         nominal: CircuitParams) -> float:
    """Practical variant: shaping with estimated source voltage, r neglected."""
    return _simplified_mu(state.i1, esc.xc, v_star, e_hat,
                          cfg.alpha, cfg.k, cfg.lam, nominal.L1)


__all__ = [
    "CONTROLLER_KINDS", "ControllerConfig", "EscState",
    "aesc_duty", "esc_duty", "esc_integrator_rate", "pi_duty",
    "rpbc_duty_rate", "saturate_duty", "simplified_aesc_duty",
    "static_reference_from_estimates",
]
