"""Compiled fixed-step integration kernel for closed-loop runs.

One chunk integrates between two event times with frozen parameters; the
engine stitches chunks together.  The full integration state vector is
(layout fixed, generator orders m1/m2/m3 set the block sizes):

    [i1, vc, i2, xc, mu_rpbc,
     zeta1 (m1), zeta2 (m2), zeta3 (m3),
     z1 (m1), z2 (m2), z3 (m3),
     x1_star_hat, pi_integral]

Every controller variant is evaluated inside the stage function so the duty
is refreshed at each integrator stage (continuous-time idealisation); an
optional sample-and-hold period freezes it between controller updates.
Measurement noise is an additive per-step offset on the measured channels
only -- the true state integrates noise-free dynamics.
"""

import numpy as np
from numba import njit

from .controllers import _esc_mu, _pi_mu, _rpbc_rate, _saturate, _simplified_mu
from .plant import _plant_rhs
from .reference import (_mu_star_dynamic, _static_reference, _x1s_rate,
                        _x3_from_balance)
from .stability import _hd

# controller kind codes (must match engine._KIND_CODES)
KIND_ESC = 0
KIND_AESC = 1
KIND_PI = 2
KIND_RPBC = 3
KIND_SIMPLIFIED = 4

N_TRACE_COLS = 15  # t,i1,vc,i2,xc,mu,sat,d1,d2,d3,dh1,dh2,dh3,Hd,cond12


@njit(cache=True)
def integrate_chunk(y, dt, n_steps, g0, phys, ctrl,
                    A1, M1, G1, A2, M2, G2, A3, M3, G3, act, has_obs,
                    noise, trace, record_from, fd_state):
    """Advance y in place over n_steps; returns (status, steps_done, bad_vc).

    status 0: ok; 1: bus voltage hit the constant-power singularity floor,
    with bad_vc the offending voltage (0.0 when status is 0).
    trace rows g0+s (s >= record_from) .. g0+n_steps are filled.
    noise holds per-global-step measurement offsets, shape (N+1, 3) or (0, 3).
    """
    L1n = phys[0]; Cn = phys[1]; L2n = phys[2]; rn = phys[3]; R2n = phys[4]
    En = phys[5]; Rn = phys[6]; Pn = phys[7]; iln = phys[8]
    L1a = phys[9]; Ca = phys[10]; L2a = phys[11]; ra = phys[12]; R2a = phys[13]
    Ea = phys[14]; Ra = phys[15]; Pa = phys[16]; ila = phys[17]
    v_star = phys[18]; floor = phys[19]

    kind = int(ctrl[0]); alpha = ctrl[1]; kk = ctrl[2]
    kp = ctrl[3]; ki = ctrl[4]; Kc = ctrl[5]; Tc = ctrl[6]
    lam = ctrl[7]; eta = ctrl[8]; e_div = ctrl[9]
    ref_dyn = ctrl[10] > 0.5
    hold_steps = int(ctrl[11])
    rpbc_fd = ctrl[12] > 0.5

    m1 = M1.shape[0]; m2 = M2.shape[0]; m3 = M3.shape[0]
    mz = m1 + m2 + m3
    oz1 = 5; oz2 = 5 + m1; oz3 = 5 + m1 + m2
    ob1 = 5 + mz; ob2 = ob1 + m1; ob3 = ob2 + m2
    ox1s = 5 + 2 * mz
    opi = ox1s + 1
    n = y.shape[0]

    have_noise = noise.shape[0] > 0

    # fixed nominal operating point (RPBC target; also the PI/RPBC Hd anchor)
    x1s0, x3s0, mus0 = _static_reference(v_star, rn, R2n, En, Rn, Pn, iln,
                                         0.0, 0.0, 0.0)

    k1 = np.empty(n); k2 = np.empty(n); k3 = np.empty(n); k4 = np.empty(n)
    yt = np.empty(n)
    aux = np.empty(10)

    def stage(yv, w0, w1, w2, dy, out, mu_override, fd_val):
        i1 = yv[0]; vc = yv[1]; i2 = yv[2]; xc = yv[3]
        if vc <= floor:
            out[0] = vc  # report the voltage that tripped the guard
            return 1
        mi1 = i1 + w0; mvc = vc + w1; mi2 = i2 + w2
        if mvc <= floor:
            out[0] = mvc
            return 1

        # true generator outputs (frozen channels contribute nothing)
        d1x = 0.0; d2x = 0.0; d3x = 0.0
        if act[0] > 0.5:
            for a in range(m1):
                d1x += M1[a] * yv[oz1 + a]
        if act[1] > 0.5:
            for a in range(m2):
                d2x += M2[a] * yv[oz2 + a]
        if act[2] > 0.5:
            for a in range(m3):
                d3x += M3[a] * yv[oz3 + a]

        # exact parameter-mismatch folding; channel 1 is affine in the duty,
        # so keep it split until the duty is known
        d1p_a = rn * i1 + vc + (L1n / L1a) * (-ra * i1 - vc)
        d1p_b = -En + (L1n / L1a) * Ea
        d2t = (-i1 + vc / Rn + Pn / vc + iln + i2
               + (Cn / Ca) * (i1 - vc / Ra - Pa / vc - ila - i2)) + d2x
        d3t = -vc + R2n * i2 + (L2n / L2a) * (vc - R2a * i2) + d3x

        # channel estimates from the internal observer states (algebraic part)
        dh1 = 0.0; dh2 = 0.0; dh3 = 0.0
        if has_obs == 1:
            for a in range(m1):
                dh1 += M1[a] * (yv[ob1 + a] + L1n * G1[a] * mi1)
            for a in range(m2):
                dh2 += M2[a] * (yv[ob2 + a] + Cn * G2[a] * mvc)
            for a in range(m3):
                dh3 += M3[a] * (yv[ob3 + a] + L2n * G3[a] * mi2)

        # ---- controller ----
        x1s_u = x1s0; x3s_u = x3s0
        mus_u = mus0
        hd_ok = False
        e_hat = 0.0
        pi_rate = 0.0
        mu_raw = 0.0
        if kind == KIND_ESC:
            hd_ok = True
            if ref_dyn:
                x1s_u = yv[ox1s]
                x3s_u = _x3_from_balance(x1s_u, v_star, Rn, Pn, iln, d2t)
                d2r = 0.0
                if act[1] > 0.5:
                    for a in range(m2):
                        for b in range(m2):
                            d2r += M2[a] * A2[a, b] * yv[oz2 + b]
                mus_nod1 = _mu_star_dynamic(x1s_u, v_star, x3s_u, L1n, L2n,
                                            rn, R2n, En, 0.0, d3t, d2r)
            else:
                x1s_u, x3s_u, mus_nod1 = _static_reference(
                    v_star, rn, R2n, En, Rn, Pn, iln, 0.0, d2t, d3t)
            # the full-information duty and the channel-1 disturbance depend
            # on each other affinely; resolve the pair exactly
            base = _esc_mu(mi1, xc, x1s_u, mus_nod1, alpha, kk, rn, L1n, En)
            mu_raw = (base - (d1p_a + d1x) / En) / (1.0 + d1p_b / En)
            mus_u = mus_nod1 - (d1p_a + d1p_b * mu_raw + d1x) / En
        elif kind == KIND_AESC:
            hd_ok = True
            if ref_dyn:
                x1s_u = yv[ox1s]
                x3s_u = _x3_from_balance(x1s_u, v_star, Rn, Pn, iln, dh2)
                d2r = 0.0
                for a in range(m2):
                    for b in range(m2):
                        d2r += (M2[a] * A2[a, b]
                                * (yv[ob2 + b] + Cn * G2[b] * mvc))
                mus_u = _mu_star_dynamic(x1s_u, v_star, x3s_u, L1n, L2n,
                                         rn, R2n, En, dh1, dh3, d2r)
            else:
                x1s_u, x3s_u, mus_u = _static_reference(
                    v_star, rn, R2n, En, Rn, Pn, iln, dh1, dh2, dh3)
            mu_raw = _esc_mu(mi1, xc, x1s_u, mus_u, alpha, kk, rn, L1n, En)
        elif kind == KIND_PI:
            mu_raw, pi_rate = _pi_mu(mvc, v_star, yv[opi], kp, ki)
        elif kind == KIND_RPBC:
            mu_raw = yv[4]
        else:  # KIND_SIMPLIFIED
            e_hat = yv[ob1] + L1n * eta * mi1
            if -1e-12 < e_hat < 1e-12:
                e_hat = 1e-12
            mu_raw = _simplified_mu(mi1, xc, v_star, e_hat, alpha, kk, lam, L1n)

        if mu_override >= -0.5 and kind != KIND_RPBC:
            mu_raw = mu_override
        mu_app, sat = _saturate(mu_raw)

        d1t = d1p_a + d1p_b * mu_app + d1x
        di1, dvc, di2 = _plant_rhs(i1, vc, i2, mu_app,
                                   L1n, Cn, L2n, rn, R2n, En, Rn, Pn, iln,
                                   d1t, d2t, d3t)
        dy[0] = di1; dy[1] = dvc; dy[2] = di2
        dy[3] = -alpha * (mvc - v_star) if (kind == KIND_ESC or kind == KIND_AESC
                                            or kind == KIND_SIMPLIFIED) else 0.0
        if kind == KIND_RPBC:
            i1dot = fd_val if rpbc_fd else di1
            dy[4] = _rpbc_rate(yv[4], x1s0, v_star, i1dot, Kc, Tc, rn, En, e_div)
        else:
            dy[4] = 0.0

        # generator states (frozen until their enable event)
        for a in range(m1):
            acc = 0.0
            if act[0] > 0.5:
                for b in range(m1):
                    acc += A1[a, b] * yv[oz1 + b]
            dy[oz1 + a] = acc
        for a in range(m2):
            acc = 0.0
            if act[1] > 0.5:
                for b in range(m2):
                    acc += A2[a, b] * yv[oz2 + b]
            dy[oz2 + a] = acc
        for a in range(m3):
            acc = 0.0
            if act[2] > 0.5:
                for b in range(m3):
                    acc += A3[a, b] * yv[oz3 + b]
            dy[oz3 + a] = acc

        # observer internal states, driven by measured quantities
        if has_obs == 1:
            phi1 = -rn * mi1 - mvc + mu_app * En
            phi2 = mi1 - mvc / Rn - Pn / mvc - iln - mi2
            phi3 = mvc - R2n * mi2
            # channel 1
            s1 = phi1
            for a in range(m1):
                s1 += M1[a] * (yv[ob1 + a] + L1n * G1[a] * mi1)
            for a in range(m1):
                acc = 0.0
                for b in range(m1):
                    acc += A1[a, b] * (yv[ob1 + b] + L1n * G1[b] * mi1)
                dy[ob1 + a] = acc - G1[a] * s1
            # channel 2
            s2 = phi2
            for a in range(m2):
                s2 += M2[a] * (yv[ob2 + a] + Cn * G2[a] * mvc)
            for a in range(m2):
                acc = 0.0
                for b in range(m2):
                    acc += A2[a, b] * (yv[ob2 + b] + Cn * G2[b] * mvc)
                dy[ob2 + a] = acc - G2[a] * s2
            # channel 3
            s3 = phi3
            for a in range(m3):
                s3 += M3[a] * (yv[ob3 + a] + L2n * G3[a] * mi2)
            for a in range(m3):
                acc = 0.0
                for b in range(m3):
                    acc += A3[a, b] * (yv[ob3 + b] + L2n * G3[b] * mi2)
                dy[ob3 + a] = acc - G3[a] * s3
        else:
            for a in range(mz):
                dy[ob1 + a] = 0.0
            if kind == KIND_SIMPLIFIED:
                dy[ob1] = eta * mvc - eta * mu_app * e_hat

        # integrated converter-current target (dynamic reference modes)
        if (kind == KIND_ESC or kind == KIND_AESC) and ref_dyn:
            if kind == KIND_ESC:
                dy[ox1s] = _x1s_rate(x1s_u, v_star, mus_u, L1n, rn, En, d1t)
            else:
                dy[ox1s] = _x1s_rate(x1s_u, v_star, mus_u, L1n, rn, En, dh1)
        else:
            dy[ox1s] = 0.0
        dy[opi] = pi_rate if kind == KIND_PI else 0.0

        out[0] = mu_app
        out[1] = 1.0 if sat else 0.0
        out[2] = d1t; out[3] = d2t; out[4] = d3t
        out[5] = e_hat if kind == KIND_SIMPLIFIED else dh1
        out[6] = dh2; out[7] = dh3
        if hd_ok:
            out[8] = _hd(i1 - x1s_u, vc - v_star, i2 - x3s_u, xc,
                         L1n, Cn, L2n, alpha, kk)
        else:
            out[8] = np.nan
        out[9] = Rn * Pn / (vc * v_star)
        return 0

    mu_hold = -1.0
    for s in range(n_steps):
        g = g0 + s
        w0 = 0.0; w1 = 0.0; w2 = 0.0
        if have_noise:
            w0 = noise[g, 0]; w1 = noise[g, 1]; w2 = noise[g, 2]

        fd_val = 0.0
        if rpbc_fd:
            mi1_now = y[0] + w0
            if fd_state[1] > 0.5:
                fd_val = (mi1_now - fd_state[0]) / dt
            fd_state[0] = mi1_now
            fd_state[1] = 1.0

        use_hold = hold_steps > 0 and kind != KIND_RPBC
        if use_hold and g % hold_steps == 0:
            mu_hold = -1.0  # force a fresh controller evaluation below
        ov = mu_hold if use_hold else -1.0

        st = stage(y, w0, w1, w2, k1, aux, ov, fd_val)
        if st != 0:
            return st, s, aux[0]
        if use_hold and ov < -0.5:
            mu_hold = aux[0]
            ov = mu_hold
        if s >= record_from:
            row = g
            trace[row, 0] = g * dt
            trace[row, 1] = y[0]; trace[row, 2] = y[1]; trace[row, 3] = y[2]
            trace[row, 4] = y[3]
            for c in range(10):
                trace[row, 5 + c] = aux[c]

        for j in range(n):
            yt[j] = y[j] + 0.5 * dt * k1[j]
        st = stage(yt, w0, w1, w2, k2, aux, ov, fd_val)
        if st != 0:
            return st, s, aux[0]
        for j in range(n):
            yt[j] = y[j] + 0.5 * dt * k2[j]
        st = stage(yt, w0, w1, w2, k3, aux, ov, fd_val)
        if st != 0:
            return st, s, aux[0]
        for j in range(n):
            yt[j] = y[j] + dt * k3[j]
        st = stage(yt, w0, w1, w2, k4, aux, ov, fd_val)
        if st != 0:
            return st, s, aux[0]
        for j in range(n):
            y[j] += (dt / 6.0) * (k1[j] + 2.0 * k2[j] + 2.0 * k3[j] + k4[j])

    # record the chunk-final boundary row
    g = g0 + n_steps
    w0 = 0.0; w1 = 0.0; w2 = 0.0
    if have_noise:
        w0 = noise[g, 0]; w1 = noise[g, 1]; w2 = noise[g, 2]
    ov = mu_hold if (hold_steps > 0 and kind != KIND_RPBC) else -1.0
    st = stage(y, w0, w1, w2, k1, aux, ov, 0.0)
    if st != 0:
        return st, n_steps, aux[0]
    trace[g, 0] = g * dt
    trace[g, 1] = y[0]; trace[g, 2] = y[1]; trace[g, 3] = y[2]
    trace[g, 4] = y[3]
    for c in range(10):
        trace[g, 5 + c] = aux[c]
    return 0, n_steps, 0.0
