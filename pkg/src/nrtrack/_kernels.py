"""Numba-compiled numeric kernels.

Everything in here operates on plain floats so the hot loops (predictor
rollouts, finite-difference Jacobians, controller substeps, barrier filters)
run at native speed.  The public modules wrap these in dataclass-based APIs;
tests that need to drive millions of steps may call the kernels directly.

Flag bits returned by the kernels (combined with |):
"""
import math

import numpy as np
from numba import njit

# flag bits
FLAG_SAT_ACCEL = 1        # accel command clamped to [a_min, a_max]
FLAG_SAT_STEER = 2        # steering command clamped to +/- steer limit
FLAG_SINGULAR = 4         # predictor Jacobian condition number above ceiling
FLAG_VMIN_CLAMP = 8       # longitudinal speed clamped at the v_min floor
FLAG_INFEAS_LONG = 16     # no admissible accel satisfies the barrier condition
FLAG_INFEAS_LAT = 32      # no admissible steering satisfies the barrier condition
FLAG_EXITED = 64          # vehicle has left the merging zone; state held


@njit(cache=True)
def deriv(z1, z2, vl, vn, psi, pd, a_l, delta_f, m, iz, lf, lr, caf, car):
    """Right-hand side of the bicycle model. Returns the six derivatives.

    Caller must guarantee vl > 0 (slip angles divide by vl).
    """
    slip_f = math.atan((vn + lf * pd) / vl)
    slip_r = math.atan((vn - lr * pd) / vl)
    fcf = caf * (delta_f - slip_f)
    fcr = -car * slip_r
    cd = math.cos(delta_f)
    cp = math.cos(psi)
    sp = math.sin(psi)
    d1 = vl * cp - vn * sp
    d2 = vl * sp + vn * cp
    d3 = pd * vn + a_l
    d4 = -pd * vl + 2.0 * (fcf * cd + fcr) / m
    d5 = pd
    d6 = 2.0 * (lf * fcf * cd - lr * fcr) / iz
    return d1, d2, d3, d4, d5, d6


@njit(cache=True)
def rollout(z1, z2, vl, vn, psi, pd, a_l, delta_f,
            m, iz, lf, lr, caf, car, dt, n, v_min):
    """n forward-Euler steps with the input held constant.

    Clamps vl at v_min (the tire model is singular at vl = 0).
    Returns the terminal state plus a flag telling whether the clamp fired.
    """
    clamped = False
    for _ in range(n):
        d1, d2, d3, d4, d5, d6 = deriv(z1, z2, vl, vn, psi, pd,
                                       a_l, delta_f, m, iz, lf, lr, caf, car)
        z1 += dt * d1
        z2 += dt * d2
        vl += dt * d3
        vn += dt * d4
        psi += dt * d5
        pd += dt * d6
        if vl < v_min:
            vl = v_min
            clamped = True
    return z1, z2, vl, vn, psi, pd, clamped


@njit(cache=True)
def predict_xy(z1, z2, vl, vn, psi, pd, a_l, delta_f,
               m, iz, lf, lr, caf, car, dt, n, v_min):
    """Predicted position after a constant-input rollout of n steps."""
    o1, o2, _, _, _, _, _ = rollout(z1, z2, vl, vn, psi, pd, a_l, delta_f,
                                    m, iz, lf, lr, caf, car, dt, n, v_min)
    return o1, o2


@njit(cache=True)
def predictor_jacobian(z1, z2, vl, vn, psi, pd, ua, ud,
                       m, iz, lf, lr, caf, car, dt, n, v_min,
                       eps_a, eps_d, a_lo, a_hi, d_lim):
    """Finite-difference d(predicted position)/d(input), column per channel.

    Central differences; degrades to one-sided at an input bound.  Returns
    the four matrix entries and the 2-norm condition number.
    """
    a_p = min(ua + eps_a, a_hi)
    a_m = max(ua - eps_a, a_lo)
    p1, p2 = predict_xy(z1, z2, vl, vn, psi, pd, a_p, ud,
                        m, iz, lf, lr, caf, car, dt, n, v_min)
    q1, q2 = predict_xy(z1, z2, vl, vn, psi, pd, a_m, ud,
                        m, iz, lf, lr, caf, car, dt, n, v_min)
    j11 = (p1 - q1) / (a_p - a_m)
    j21 = (p2 - q2) / (a_p - a_m)

    d_p = min(ud + eps_d, d_lim)
    d_m = max(ud - eps_d, -d_lim)
    p1, p2 = predict_xy(z1, z2, vl, vn, psi, pd, ua, d_p,
                        m, iz, lf, lr, caf, car, dt, n, v_min)
    q1, q2 = predict_xy(z1, z2, vl, vn, psi, pd, ua, d_m,
                        m, iz, lf, lr, caf, car, dt, n, v_min)
    j12 = (p1 - q1) / (d_p - d_m)
    j22 = (p2 - q2) / (d_p - d_m)

    # singular values of a 2x2 from the Gram matrix eigenvalues
    g11 = j11 * j11 + j21 * j21
    g22 = j12 * j12 + j22 * j22
    g12 = j11 * j12 + j21 * j22
    tr = g11 + g22
    det = g11 * g22 - g12 * g12
    disc = math.sqrt(max(tr * tr - 4.0 * det, 0.0))
    lmax = 0.5 * (tr + disc)
    lmin = 0.5 * (tr - disc)
    if lmin <= 0.0:
        cond = math.inf
    else:
        cond = math.sqrt(lmax / lmin)
    return j11, j12, j21, j22, cond


@njit(cache=True)
def controller_substeps(z1, z2, vl, vn, psi, pd, ua, ud, r_sub,
                        alpha, dt_ctrl, m, iz, lf, lr, caf, car,
                        dt_pred, n_pred, v_min, eps_a, eps_d, cond_max,
                        a_lo, a_hi, d_lim):
    """Euler-integrate the tracking-flow input ODE over one plant step.

    The plant state is frozen; r_sub[j] is the future reference for substep j.
    The input is clamped into its box after every substep.  On a singular
    Jacobian the input from the step start is returned unchanged (caller
    holds the previous command) with FLAG_SINGULAR set.
    """
    flags = 0
    ua0 = ua
    ud0 = ud
    n_sub = r_sub.shape[0]
    for j in range(n_sub):
        j11, j12, j21, j22, cond = predictor_jacobian(
            z1, z2, vl, vn, psi, pd, ua, ud,
            m, iz, lf, lr, caf, car, dt_pred, n_pred, v_min,
            eps_a, eps_d, a_lo, a_hi, d_lim)
        if not (cond <= cond_max):
            return ua0, ud0, flags | FLAG_SINGULAR
        g1, g2 = predict_xy(z1, z2, vl, vn, psi, pd, ua, ud,
                            m, iz, lf, lr, caf, car, dt_pred, n_pred, v_min)
        e1 = r_sub[j, 0] - g1
        e2 = r_sub[j, 1] - g2
        det = j11 * j22 - j12 * j21
        da = alpha * (j22 * e1 - j12 * e2) / det
        dd = alpha * (-j21 * e1 + j11 * e2) / det
        ua += dt_ctrl * da
        ud += dt_ctrl * dd
        if ua < a_lo:
            ua = a_lo
            flags |= FLAG_SAT_ACCEL
        elif ua > a_hi:
            ua = a_hi
            flags |= FLAG_SAT_ACCEL
        if ud < -d_lim:
            ud = -d_lim
            flags |= FLAG_SAT_STEER
        elif ud > d_lim:
            ud = d_lim
            flags |= FLAG_SAT_STEER
    return ua, ud, flags


@njit(cache=True)
def world_velocity(vl, vn, psi):
    cp = math.cos(psi)
    sp = math.sin(psi)
    return vl * cp - vn * sp, vl * sp + vn * cp


@njit(cache=True)
def lateral_force_term(vl, vn, pd, delta_f, m, lf, lr, caf, car):
    """2*(F_cf*cos(delta) + F_cr)/m, the steering-dependent part of the
    world-frame acceleration normal to the body axis."""
    slip_f = math.atan((vn + lf * pd) / vl)
    slip_r = math.atan((vn - lr * pd) / vl)
    fcf = caf * (delta_f - slip_f)
    fcr = -car * slip_r
    return 2.0 * (fcf * math.cos(delta_f) + fcr) / m


@njit(cache=True)
def longitudinal_filter_kernel(u_star, z1, z2, vl, vn, psi, pd, delta_f,
                               lead_px, lead_py, lead_vx, lead_vy,
                               lead_ax, lead_ay, d0, k, kappa_h,
                               m, lf, lr, caf, car, a_lo, a_hi, a_bar):
    """Closest admissible accel to u_star under the headway barrier condition.

    The condition hdot(a) + kappa(h) >= 0 is affine in a, so the projection
    is either u_star itself or the single constraint-boundary point.  kappa_h
    is kappa evaluated at the current barrier value (computed by the caller).
    Returns (a_safe, flags).
    """
    dx = lead_px - z1
    dy = lead_py - z2
    dist = math.sqrt(dx * dx + dy * dy)
    ex = dx / dist
    ey = dy / dist
    evx, evy = world_velocity(vl, vn, psi)
    dvx = lead_vx - evx
    dvy = lead_vy - evy
    vhat = ex * dvx + ey * dvy

    ft = lateral_force_term(vl, vn, pd, delta_f, m, lf, lr, caf, car)
    cp = math.cos(psi)
    sp = math.sin(psi)
    # ego world accel = (a*cp - ft*sp, a*sp + ft*cp); relative accel projected
    # on the displacement direction is affine in a: vhat_dot = a0 - b*a
    a0 = ex * (lead_ax + ft * sp) + ey * (lead_ay - ft * cp)
    b = ex * cp + ey * sp
    # condition c(a) = vhat - 2k*vhat*(a0 - b*a) + kappa_h
    c0 = vhat - 2.0 * k * vhat * a0 + kappa_h
    c1 = 2.0 * k * vhat * b
    if c0 + c1 * u_star >= 0.0:
        return u_star, 0
    if abs(c1) < 1e-14:
        a = -a_bar
        if a < a_lo:
            a = a_lo
        return a, FLAG_INFEAS_LONG
    a_b = -c0 / c1
    if c1 > 0.0:
        if a_b > a_hi:
            a = -a_bar
            if a < a_lo:
                a = a_lo
            return a, FLAG_INFEAS_LONG
        return a_b, 0
    else:
        if a_b < a_lo:
            a = -a_bar
            if a < a_lo:
                a = a_lo
            return a, FLAG_INFEAS_LONG
        return a_b, 0


@njit(cache=True)
def lateral_barrier_value(y, ydot, y_max, k):
    """y_max - |y + k*sign(y)*ydot^2| with sign(0) := sign(ydot)."""
    s = 1.0 if y > 0.0 else (-1.0 if y < 0.0 else
                             (1.0 if ydot > 0.0 else (-1.0 if ydot < 0.0 else 0.0)))
    return y_max - abs(y + k * s * ydot * ydot)


@njit(cache=True)
def lateral_condition(delta, y, vl, vn, psi, pd, a_l,
                      y_max, k, gamma, m, lf, lr, caf, car):
    """Barrier condition value hdot + gamma*h^3 for the lane-keeping barrier.

    Lateral deviation y and rate ydot are taken along a straight road on the
    first axis; ydot and its derivative follow from the state equation.
    """
    ydot = vl * math.sin(psi) + vn * math.cos(psi)
    ft = lateral_force_term(vl, vn, pd, delta, m, lf, lr, caf, car)
    yddot = a_l * math.sin(psi) + ft * math.cos(psi)
    s = 1.0 if y > 0.0 else (-1.0 if y < 0.0 else
                             (1.0 if ydot > 0.0 else (-1.0 if ydot < 0.0 else 0.0)))
    phi = y + k * s * ydot * ydot
    h = y_max - abs(phi)
    sphi = 1.0 if phi > 0.0 else (-1.0 if phi < 0.0 else 0.0)
    hdot = -sphi * (ydot + 2.0 * k * s * ydot * yddot)
    return hdot + gamma * h * h * h


@njit(cache=True)
def lateral_filter_kernel(u_star, y, vl, vn, psi, pd, a_l,
                          y_max, k, gamma, m, lf, lr, caf, car,
                          d_lim, tol, max_iter):
    """Nearest admissible steering to u_star under the lane-keeping barrier.

    Bisects separately towards each end of [-d_lim, d_lim] for the closest
    feasible angle; falls back to the argmax of the condition value over a
    101-point grid when neither side is feasible.  Returns (delta, flags).
    """
    if lateral_condition(u_star, y, vl, vn, psi, pd, a_l,
                         y_max, k, gamma, m, lf, lr, caf, car) >= 0.0:
        return u_star, 0

    cand_r = math.nan
    if lateral_condition(d_lim, y, vl, vn, psi, pd, a_l,
                         y_max, k, gamma, m, lf, lr, caf, car) >= 0.0:
        lo = u_star
        hi = d_lim
        it = 0
        while hi - lo > tol and it < max_iter:
            mid = 0.5 * (lo + hi)
            if lateral_condition(mid, y, vl, vn, psi, pd, a_l,
                                 y_max, k, gamma, m, lf, lr, caf, car) >= 0.0:
                hi = mid
            else:
                lo = mid
            it += 1
        cand_r = hi

    cand_l = math.nan
    if lateral_condition(-d_lim, y, vl, vn, psi, pd, a_l,
                         y_max, k, gamma, m, lf, lr, caf, car) >= 0.0:
        lo = u_star
        hi = -d_lim
        it = 0
        while lo - hi > tol and it < max_iter:
            mid = 0.5 * (lo + hi)
            if lateral_condition(mid, y, vl, vn, psi, pd, a_l,
                                 y_max, k, gamma, m, lf, lr, caf, car) >= 0.0:
                hi = mid
            else:
                lo = mid
            it += 1
        cand_l = hi

    has_r = not math.isnan(cand_r)
    has_l = not math.isnan(cand_l)
    if has_r and has_l:
        if abs(cand_r - u_star) <= abs(cand_l - u_star):
            return cand_r, 0
        return cand_l, 0
    if has_r:
        return cand_r, 0
    if has_l:
        return cand_l, 0

    best = -d_lim
    best_val = -math.inf
    for i in range(101):
        d = -d_lim + (2.0 * d_lim) * i / 100.0
        val = lateral_condition(d, y, vl, vn, psi, pd, a_l,
                                y_max, k, gamma, m, lf, lr, caf, car)
        if val > best_val:
            best_val = val
            best = d
    return best, FLAG_INFEAS_LAT


def warm_up():
    """Trigger compilation of all kernels with tiny inputs."""
    r = np.zeros((1, 2))
    controller_substeps(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, r,
                        1.0, 1e-3, 2050.0, 3344.0, 1.105, 1.738, 57500.0,
                        92500.0, 1e-3, 2, 0.1, 0.01, 0.001, 1e6,
                        -7.0, 7.0, math.pi / 4)
    longitudinal_filter_kernel(0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0,
                               10.0, 0.0, 1.0, 0.0, 0.0, 0.0, 5.0, 1.0 / 14,
                               5.0, 2050.0, 1.105, 1.738, 57500.0, 92500.0,
                               -7.0, 7.0, 7.0)
    lateral_filter_kernel(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0,
                          0.5, 0.1, 15.0, 2050.0, 1.105, 1.738, 57500.0,
                          92500.0, math.pi / 4, 1e-4, 60)
