"""Compiled adaptive Dormand-Prince 8(5,3) stepper.

The Butcher tableau is taken from scipy; stepping, PI step-size control,
event location and sample hitting live here so that the long, tightly
wound runs execute at compiled speed.  The right-hand side and event
functions are numba-compiled callables with signatures::

    rhs(t, y, params, out) -> None
    events(t, y, params, g) -> None
"""
import math

import numpy as np
from numba import njit
from scipy.integrate._ivp import dop853_coefficients as _dop

N_STAGES = _dop.N_STAGES
A = np.ascontiguousarray(_dop.A[:N_STAGES, :N_STAGES])
B = np.ascontiguousarray(_dop.B)
C = np.ascontiguousarray(_dop.C[:N_STAGES])
E3 = np.ascontiguousarray(_dop.E3)
E5 = np.ascontiguousarray(_dop.E5)

ORDER = 8

# status codes returned by advance()
OK = 0
TERMINAL = 1
STEP_UNDERFLOW = 2
NON_FINITE = 3
MAX_STEPS = 4
BUFFER_FULL = 5

SAFETY = 0.8
FAC_MIN = 0.333
FAC_MAX = 6.0
BETA = 0.04
EXPO = 1.0 / ORDER - 0.2 * BETA
UNDERFLOW_REL = 1e-14


@njit
def rk_step(rhs, p, t, y, f0, h, K, ytmp, ynew):
    """One DOP853 step; fills ``K[0..12]`` and ``ynew``; ``K[12]`` is f(t+h, ynew)."""
    n = y.size
    for i in range(n):
        K[0, i] = f0[i]
    for s in range(1, N_STAGES):
        for i in range(n):
            acc = 0.0
            for j in range(s):
                acc += A[s, j] * K[j, i]
            ytmp[i] = y[i] + h * acc
        rhs(t + C[s] * h, ytmp, p, K[s])
    for i in range(n):
        acc = 0.0
        for j in range(N_STAGES):
            acc += B[j] * K[j, i]
        ynew[i] = y[i] + h * acc
    rhs(t + h, ynew, p, K[N_STAGES])


@njit(cache=True)
def error_norm(K, h, y, ynew, rtol, atol):
    n = y.size
    e5 = 0.0
    e3 = 0.0
    for i in range(n):
        sc = atol + rtol * max(abs(y[i]), abs(ynew[i]))
        a5 = 0.0
        a3 = 0.0
        for j in range(N_STAGES + 1):
            a5 += E5[j] * K[j, i]
            a3 += E3[j] * K[j, i]
        a5 /= sc
        a3 /= sc
        e5 += a5 * a5
        e3 += a3 * a3
    if e5 == 0.0 and e3 == 0.0:
        return 0.0
    return abs(h) * e5 / math.sqrt((e5 + 0.01 * e3) * n)


@njit
def initial_step(rhs, p, t, y, f0, rtol, atol, hmax):
    """Starting step heuristic of Hairer, Norsett and Wanner (II.4)."""
    n = y.size
    d0 = 0.0
    d1 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y[i])
        d0 += (y[i] / sc) ** 2
        d1 += (f0[i] / sc) ** 2
    d0 = math.sqrt(d0 / n)
    d1 = math.sqrt(d1 / n)
    if d0 < 1e-5 or d1 < 1e-5:
        h0 = 1e-6
    else:
        h0 = 0.01 * d0 / d1
    h0 = min(h0, hmax)
    y1 = np.empty(n)
    for i in range(n):
        y1[i] = y[i] + h0 * f0[i]
    f1 = np.empty(n)
    rhs(t + h0, y1, p, f1)
    d2 = 0.0
    for i in range(n):
        sc = atol + rtol * abs(y[i])
        d2 += ((f1[i] - f0[i]) / sc) ** 2
    d2 = math.sqrt(d2 / n) / h0
    if d1 <= 1e-15 and d2 <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1.0 / ORDER)
    h = min(100.0 * h0, h1, hmax)
    if not math.isfinite(h):
        # scales overflowed (tolerances near zero); let the step controller decide
        h = min(1e-6, hmax)
    return h


@njit(cache=True)
def hermite(t0, y0, f0, t1, y1, f1, s, out):
    """Cubic Hermite interpolant of the state at ``t0 + s * (t1 - t0)``."""
    h = t1 - t0
    s2 = s * s
    s3 = s2 * s
    h00 = 2 * s3 - 3 * s2 + 1
    h10 = s3 - 2 * s2 + s
    h01 = -2 * s3 + 3 * s2
    h11 = s3 - s2
    for i in range(y0.size):
        out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i]


@njit
def _locate(rhs, events, p, t, y, f, h, k, g0k, g1k, K, ytmp, yev, gbuf, tol):
    """Illinois regula falsi for event ``k`` inside ``[t, t + h]``.

    Each trial point is an actual RK substep from ``(t, y)``, so the located
    state carries the integrator's accuracy rather than the interpolant's.
    """
    lo = 0.0
    hi = h
    glo = g0k
    ghi = g1k
    side = 0
    tau = h
    for _ in range(100):
        tau = (lo * ghi - hi * glo) / (ghi - glo)
        if not (lo < tau < hi):
            tau = 0.5 * (lo + hi)
        rk_step(rhs, p, t, y, f, tau, K, ytmp, yev)
        events(t + tau, yev, p, gbuf)
        gm = gbuf[k]
        if gm == 0.0 or (hi - lo) < tol:
            break
        if (gm > 0) == (ghi > 0):
            hi = tau
            ghi = gm
            if side == 1:
                glo *= 0.5
            side = 1
        else:
            lo = tau
            glo = gm
            if side == -1:
                ghi *= 0.5
            side = -1
    return tau


@njit
def advance(rhs, events, p, t, y, f, h, t_target, rtol, atol, hmax, err_old,
            max_steps, terminal, precise, arc_idx, arc_ds, arc_next,
            ev_t, ev_kind, ev_sign, ev_y, ev_count):
    """Integrate from ``t`` to exactly ``t_target`` (or stop on a terminal event).

    ``y`` and ``f`` are updated in place.  Events whose function changes sign
    across an accepted step are recorded into the ``ev_*`` buffers.  Kind -1
    marks arc-length checkpoints (every ``arc_ds`` of ``y[arc_idx]``), which
    are placed by Hermite interpolation.

    Returns ``(status, t, h, err_old, nsteps, nreject, arc_next, ev_count)``.
    """
    n = y.size
    n_ev = terminal.size
    K = np.empty((N_STAGES + 1, n))
    ytmp = np.empty(n)
    ynew = np.empty(n)
    yev = np.empty(n)
    g0 = np.empty(n_ev)
    g1 = np.empty(n_ev)
    gbuf = np.empty(n_ev)
    cap = ev_t.size
    nsteps = 0
    nreject = 0
    if n_ev > 0:
        events(t, y, p, g0)
    nonfinite = False
    for i in range(n):
        if not math.isfinite(y[i]):
            return NON_FINITE, t, h, err_old, nsteps, nreject, arc_next, ev_count
    while t < t_target:
        if nsteps >= max_steps:
            return MAX_STEPS, t, h, err_old, nsteps, nreject, arc_next, ev_count
        if ev_count + 4 > cap:
            return BUFFER_FULL, t, h, err_old, nsteps, nreject, arc_next, ev_count
        h = min(h, hmax)
        hmin = UNDERFLOW_REL * max(abs(t), 1e-300)
        if not h >= hmin:
            code = NON_FINITE if nonfinite else STEP_UNDERFLOW
            return code, t, h, err_old, nsteps, nreject, arc_next, ev_count
        clipped = False
        h_try = h
        if t + h >= t_target:
            h_try = t_target - t
            clipped = True
        rk_step(rhs, p, t, y, f, h_try, K, ytmp, ynew)
        err = error_norm(K, h_try, y, ynew, rtol, atol)
        if not math.isfinite(err):
            finite = True
            for i in range(n):
                if not math.isfinite(ynew[i]):
                    finite = False
            nonfinite = not finite
            h = 0.25 * h_try
            nreject += 1
            continue
        nonfinite = False
        if err > 1.0:
            fac = max(FAC_MIN, SAFETY * err ** (-EXPO))
            h = h_try * fac
            nreject += 1
            continue
        nsteps += 1
        e = max(err, 1e-4)
        fac = SAFETY * e ** (-EXPO) * err_old ** BETA
        fac = min(FAC_MAX, max(FAC_MIN, fac))
        err_old = e
        h_next = h_try * fac
        if clipped:
            h_next = max(h_next, h)
        t_new = t + h_try
        if t_new >= t_target or clipped:
            t_new = t_target
        fnew = K[N_STAGES]
        # arc-length checkpoints
        if arc_idx >= 0:
            while ynew[arc_idx] >= arc_next and ev_count < cap:
                lo = 0.0
                hi = 1.0
                for _ in range(50):
                    mid = 0.5 * (lo + hi)
                    hermite(t, y, f, t_new, ynew, fnew, mid, yev)
                    if yev[arc_idx] < arc_next:
                        lo = mid
                    else:
                        hi = mid
                s = hi
                hermite(t, y, f, t_new, ynew, fnew, s, yev)
                ev_t[ev_count] = t + s * h_try
                ev_kind[ev_count] = -1
                ev_sign[ev_count] = 1
                for i in range(n):
                    ev_y[ev_count, i] = yev[i]
                ev_count += 1
                arc_next += arc_ds
        stop = False
        if n_ev > 0:
            events(t_new, ynew, p, g1)
            t_stop = math.inf
            k_stop = -1
            for k in range(n_ev):
                if g0[k] == g1[k]:
                    continue
                if (g0[k] < 0 and g1[k] >= 0) or (g0[k] > 0 and g1[k] <= 0):
                    if g1[k] == 0.0:
                        tau = h_try
                        for i in range(n):
                            yev[i] = ynew[i]
                    elif precise[k]:
                        tol = 4e-16 * max(abs(t), abs(t_new)) + 1e-300
                        tau = _locate(rhs, events, p, t, y, f, h_try, k, g0[k], g1[k],
                                      K.copy(), ytmp, yev, gbuf, tol)
                    else:
                        s = g0[k] / (g0[k] - g1[k])
                        tau = s * h_try
                        hermite(t, y, f, t_new, ynew, fnew, s, yev)
                    if ev_count < cap:
                        ev_t[ev_count] = t + tau
                        ev_kind[ev_count] = k
                        ev_sign[ev_count] = 1 if g1[k] > g0[k] else -1
                        for i in range(n):
                            ev_y[ev_count, i] = yev[i]
                        ev_count += 1
                    if terminal[k] and t + tau < t_stop:
                        t_stop = t + tau
                        k_stop = k
            if k_stop >= 0:
                tau = t_stop - t
                if tau > 0:
                    rk_step(rhs, p, t, y, f, tau, K, ytmp, ynew)
                    fnew = K[N_STAGES]
                t_new = t_stop
                stop = True
                events(t_new, ynew, p, g1)
            for k in range(n_ev):
                g0[k] = g1[k]
        for i in range(n):
            y[i] = ynew[i]
            f[i] = fnew[i]
        t = t_new
        h = h_next
        finite = True
        for i in range(n):
            if not math.isfinite(y[i]):
                finite = False
        if not finite:
            return NON_FINITE, t, h, err_old, nsteps, nreject, arc_next, ev_count
        if stop:
            return TERMINAL, t, h, err_old, nsteps, nreject, arc_next, ev_count
    return OK, t, h, err_old, nsteps, nreject, arc_next, ev_count
