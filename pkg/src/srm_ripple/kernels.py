"""Hot numeric kernels: machine derivatives, RK4 step, fuzzy evaluation and the
closed drive loop.

Everything here is written against scalars and flat float64 arrays so the same
source runs under numba or as plain Python (see ``_jit``).
"""

import math

import numpy as np

from ._jit import njit

# Packed machine vector layout.
M_LU = 0
M_LA = 1
M_R = 2
M_J = 3
M_B = 4
M_VDC = 5
M_A0 = 6
M_A1 = 7
M_A2 = 8
M_A3 = 9
M_PITCH = 10
M_STROKE = 11
M_NPH = 12
M_FRINGE = 13
M_SIZE = 14

# Membership-function kinds understood by ``mf_value``.
MF_TRIANGULAR = 0
MF_BELL = 1
MF_GAUSSIAN = 2

# Simulation status codes.
SIM_OK = 0
SIM_NONFINITE = 1


@njit(cache=True)
def fold(x, period):
    r = x - period * math.floor(x / period)
    if r >= period:
        r -= period
    if r < 0.0:
        r = 0.0
    return r


@njit(cache=True)
def _ramp_mean(x, a, b, w):
    """Box average of clamp(. - a, 0, b - a) over [x - w/2, x + w/2]."""
    span = b - a
    if w <= 0.0:
        return min(max(x - a, 0.0), span)
    h = 0.5 * w
    lo = x - h - a
    hi = x + h - a
    if hi <= 0.0:
        return 0.0
    if lo >= span:
        return span
    # sloped part and saturated part, each summed without cancellation
    p = max(lo, 0.0)
    q = min(hi, span)
    acc = 0.5 * (q - p) * (q + p)
    if hi > span:
        acc += span * (hi - max(lo, span))
    # rounding in x +- h is amplified by 1/w for narrow windows
    return min(max(acc / w, 0.0), span)


@njit(cache=True)
def _overlap_frac(x, a, b, w):
    """Fraction of [x - w/2, x + w/2] inside [a, b); indicator when w == 0."""
    if w <= 0.0:
        return 1.0 if a <= x < b else 0.0
    h = 0.5 * w
    lo = max(x - h, a)
    hi = min(x + h, b)
    return max(hi - lo, 0.0) / w


@njit(cache=True)
def inductance(mp, th):
    """L(theta) for a folded phase angle.

    Trapezoid between the four breakpoints, with corners rounded by a moving
    average of width ``mp[M_FRINGE]`` (zero gives the sharp trapezoid).
    """
    lu = mp[M_LU]
    dl = mp[M_LA] - lu
    a0 = mp[M_A0]
    a1 = mp[M_A1]
    a2 = mp[M_A2]
    a3 = mp[M_A3]
    w = mp[M_FRINGE]
    if w <= 0.0:
        if th < a0 or th >= a3:
            return lu
        if th < a1:
            return lu + dl * (th - a0) / (a1 - a0)
        if th < a2:
            return lu + dl
        return lu + dl - dl * (th - a2) / (a3 - a2)
    pitch = mp[M_PITCH]
    s_up = dl / (a1 - a0)
    s_dn = dl / (a3 - a2)
    acc = 0.0
    for shift in (-pitch, 0.0, pitch):
        x = th + shift
        acc += s_up * _ramp_mean(x, a0, a1, w) - s_dn * _ramp_mean(x, a2, a3, w)
    return lu + acc


@njit(cache=True)
def dinductance(mp, th):
    """dL/dtheta for a folded phase angle (right-continuous at breakpoints)."""
    dl = mp[M_LA] - mp[M_LU]
    a0 = mp[M_A0]
    a1 = mp[M_A1]
    a2 = mp[M_A2]
    a3 = mp[M_A3]
    w = mp[M_FRINGE]
    pitch = mp[M_PITCH]
    s_up = dl / (a1 - a0)
    s_dn = dl / (a3 - a2)
    if w <= 0.0:
        return s_up * _overlap_frac(th, a0, a1, 0.0) - s_dn * _overlap_frac(th, a2, a3, 0.0)
    acc = 0.0
    for shift in (-pitch, 0.0, pitch):
        x = th + shift
        acc += s_up * _overlap_frac(x, a0, a1, w) - s_dn * _overlap_frac(x, a2, a3, w)
    return acc


@njit(cache=True)
def phase_angle(mp, theta, k):
    return fold(theta - k * mp[M_STROKE], mp[M_PITCH])


@njit(cache=True)
def electromagnetic_torque(mp, theta, currents):
    te = 0.0
    for k in range(currents.shape[0]):
        i = currents[k]
        if i != 0.0:
            te += 0.5 * i * i * dinductance(mp, phase_angle(mp, theta, k))
    return te


@njit(cache=True)
def _derivs(mp, th, om, lam, v, t_load, locked, dlam):
    """Fill ``dlam`` and return (dtheta, domega, torque)."""
    r = mp[M_R]
    te = 0.0
    for k in range(lam.shape[0]):
        thk = phase_angle(mp, th, k)
        lk = lam[k]
        i = lk / inductance(mp, thk) if lk > 0.0 else 0.0
        d = v[k] - r * i
        # the diode blocks reverse current
        if lk <= 0.0 and d < 0.0:
            d = 0.0
        dlam[k] = d
        te += 0.5 * i * i * dinductance(mp, thk)
    if locked:
        return 0.0, 0.0, te
    dom = (te - t_load - mp[M_B] * om) / mp[M_J]
    return om, dom, te


@njit(cache=True)
def rk4_step(mp, th, om, lam, v, t_load, dt, locked):
    """One fixed RK4 step of the flux/mechanical state. Returns (th, om, lam)."""
    n = lam.shape[0]
    k1 = np.empty(n)
    k2 = np.empty(n)
    k3 = np.empty(n)
    k4 = np.empty(n)
    tmp = np.empty(n)

    dth1, dom1, _ = _derivs(mp, th, om, lam, v, t_load, locked, k1)
    for k in range(n):
        tmp[k] = lam[k] + 0.5 * dt * k1[k]
    dth2, dom2, _ = _derivs(mp, th + 0.5 * dt * dth1, om + 0.5 * dt * dom1, tmp, v, t_load, locked, k2)
    for k in range(n):
        tmp[k] = lam[k] + 0.5 * dt * k2[k]
    dth3, dom3, _ = _derivs(mp, th + 0.5 * dt * dth2, om + 0.5 * dt * dom2, tmp, v, t_load, locked, k3)
    for k in range(n):
        tmp[k] = lam[k] + dt * k3[k]
    dth4, dom4, _ = _derivs(mp, th + dt * dth3, om + dt * dom3, tmp, v, t_load, locked, k4)

    out = np.empty(n)
    for k in range(n):
        x = lam[k] + dt / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k])
        out[k] = x if x > 0.0 else 0.0
    th_new = th + dt / 6.0 * (dth1 + 2.0 * dth2 + 2.0 * dth3 + dth4)
    om_new = om + dt / 6.0 * (dom1 + 2.0 * dom2 + 2.0 * dom3 + dom4)
    return th_new, om_new, out


@njit(cache=True)
def mf_value(kind, x, p0, p1, p2):
    if kind == MF_TRIANGULAR:
        # (left, peak, right)
        if x == p1:
            return 1.0
        if x < p1:
            if x <= p0:
                return 0.0
            return (x - p0) / (p1 - p0)
        if x >= p2:
            return 0.0
        return (p2 - x) / (p2 - p1)
    if kind == MF_BELL:
        # (width a, slope b, center c)
        return 1.0 / (1.0 + abs((x - p2) / p0) ** (2.0 * p1))
    # gaussian (center c, spread sigma, unused)
    d = (x - p0) / p1
    return math.exp(-0.5 * d * d)


@njit(cache=True)
def fuzzy_eval(kind, th_mf, i_mf, cons, th_lo, th_hi, i_lo, i_hi, th, i):
    """Zero-order Sugeno output; NaN when the rule strengths vanish."""
    x = min(max(th, th_lo), th_hi)
    y = min(max(i, i_lo), i_hi)
    n_t = th_mf.shape[0]
    n_i = i_mf.shape[0]
    mu_i = np.empty(n_i)
    for m in range(n_i):
        mu_i[m] = mf_value(kind, y, i_mf[m, 0], i_mf[m, 1], i_mf[m, 2])
    num = 0.0
    den = 0.0
    for j in range(n_t):
        mt = mf_value(kind, x, th_mf[j, 0], th_mf[j, 1], th_mf[j, 2])
        if mt == 0.0:
            continue
        for m in range(n_i):
            w = mt * mu_i[m]
            num += w * cons[j, m]
            den += w
    if den < 1e-12:
        return math.nan
    return num / den


@njit(cache=True)
def hysteresis_state(band, i_ref, i, active, prev):
    """Switch state in {+1, 0, -1} of one asymmetric half-bridge leg pair."""
    if active:
        if i < i_ref - band:
            return 1
        if i > i_ref + band:
            return -1
        return prev
    if i > 0.0:
        return -1
    return 0


@njit(cache=True)
def pi_update(kp, ki, lo, hi, integ, err, dt):
    """Conditional-integration PI step. Returns (output, new integrator)."""
    cand = integ + ki * err * dt
    u = kp * err + cand
    if u > hi:
        return hi, integ
    if u < lo:
        return lo, integ
    return u, cand


@njit(cache=True)
def simulate_loop(
    mp,
    on_angle,
    off_angle,
    kp,
    ki,
    i_lo,
    i_hi,
    integ0,
    band,
    t_load,
    omega_ref,
    theta0,
    omega0,
    dt,
    n_steps,
    decim,
    use_fc,
    fc_kind,
    th_mf,
    i_mf,
    cons,
    th_lo,
    th_hi,
    fi_lo,
    fi_hi,
    out,
):
    """Closed drive loop: PI -> (+ compensator) -> hysteresis -> machine.

    ``out`` has shape (n_steps // decim + 1, 9) with the trace columns
    time, theta, omega, i_ref, d_comp, i1, i2, i3, torque. Returns
    (status, failing step).
    """
    n = int(mp[M_NPH])
    pitch = mp[M_PITCH]
    stroke = mp[M_STROKE]
    vdc = mp[M_VDC]
    lam = np.zeros(n)
    cur = np.zeros(n)
    v = np.zeros(n)
    sw = np.zeros(n, dtype=np.int64)
    th = theta0
    om = omega0
    integ = integ0
    # stroke-mean of the PI output, held as the compensator's current input
    hold = integ0
    acc = 0.0
    cnt = 0
    stroke_idx = math.floor(th / stroke)
    row = 0
    for step in range(n_steps + 1):
        for k in range(n):
            thk = phase_angle(mp, th, k)
            cur[k] = lam[k] / inductance(mp, thk) if lam[k] > 0.0 else 0.0

        iref, integ = pi_update(kp, ki, i_lo, i_hi, integ, omega_ref - om, dt)

        s_idx = math.floor(th / stroke)
        if s_idx != stroke_idx:
            if cnt > 0:
                hold = acc / cnt
            acc = 0.0
            cnt = 0
            stroke_idx = s_idx
        acc += iref
        cnt += 1

        dcomp = 0.0
        if use_fc:
            dcomp = fuzzy_eval(fc_kind, th_mf, i_mf, cons, th_lo, th_hi, fi_lo, fi_hi, fold(th, stroke), hold)
        icomp = iref + dcomp
        if icomp < 0.0:
            icomp = 0.0

        te = 0.0
        for k in range(n):
            thk = phase_angle(mp, th, k)
            active = thk >= on_angle and thk < off_angle
            sw[k] = hysteresis_state(band, icomp, cur[k], active, sw[k])
            v[k] = sw[k] * vdc
            te += 0.5 * cur[k] * cur[k] * dinductance(mp, thk)

        if step % decim == 0:
            out[row, 0] = step * dt
            out[row, 1] = th
            out[row, 2] = om
            out[row, 3] = iref
            out[row, 4] = dcomp
            for k in range(n):
                out[row, 5 + k] = cur[k]
            out[row, 8] = te
            row += 1

        if not (math.isfinite(th) and math.isfinite(om) and math.isfinite(te) and math.isfinite(dcomp)):
            return SIM_NONFINITE, step
        if step == n_steps:
            break
        th, om, lam = rk4_step(mp, th, om, lam, v, t_load, dt, False)
    return SIM_OK, n_steps
