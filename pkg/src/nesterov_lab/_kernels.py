"""Compiled right-hand sides and event functions for the flow integrators.

Parameter vector layout shared by the Cartesian kernels::

    p[0] kind (0 pathological, 1 quadratic, 2 pure radial)
    p[1] dimension d
    p[2] a
    p[3] eps
    p[4:4 + d*d] Q, row-major (quadratic only)

Cartesian Nesterov state: ``[X(d), V(d), arclength, torque, wf, wv]``.
Gradient-flow state: ``[X(d), arclength, torque, wf, wv]``.
Polar state: ``[r, rdot, theta, arclength, torque, wf, wv]`` with
``p = [kappa, a, stop_radius]``.
Radial eps=0 state: ``[rho, rhodot, torque_functional]`` with ``p = [a]``.
"""
import math

import numpy as np
from numba import njit

from .potential import SEAM, _radial_slope, _radial_value

KIND_CODES = {"pathological": 0, "quadratic": 1, "pure_radial": 2}


@njit(cache=True)
def grad_into(x, p, g):
    kind = int(p[0])
    d = int(p[1])
    if kind == 1:
        for i in range(d):
            acc = 0.0
            for j in range(d):
                acc += p[4 + i * d + j] * x[j]
            g[i] = acc
        return
    r = math.hypot(x[0], x[1])
    if r > 0.0:
        s = _radial_slope(r) / r
        g[0] = s * x[0]
        g[1] = s * x[1]
    else:
        g[0] = 0.0
        g[1] = 0.0
    if kind == 0:
        excess = x[0] - p[2]
        if excess > 0.0:
            g[0] += p[3] * excess


@njit(cache=True)
def value_at(x, p):
    kind = int(p[0])
    d = int(p[1])
    if kind == 1:
        acc = 0.0
        for i in range(d):
            row = 0.0
            for j in range(d):
                row += p[4 + i * d + j] * x[j]
            acc += x[i] * row
        return 0.5 * acc
    v = _radial_value(math.hypot(x[0], x[1]))
    if kind == 0:
        excess = x[0] - p[2]
        if excess > 0.0:
            v += p[3] * 0.5 * excess * excess
    return v


@njit(cache=True)
def _torque_density(t, x, p):
    if int(p[0]) != 0:
        return 0.0
    excess = x[0] - p[2]
    if excess <= 0.0:
        return 0.0
    return p[3] * t * t * t * x[1] * excess


@njit(cache=True)
def nesterov_rhs(t, y, p, out):
    """Planar pathological / pure-radial potentials; no allocation."""
    x0 = y[0]
    x1 = y[1]
    v0 = y[2]
    v1 = y[3]
    r = math.hypot(x0, x1)
    g0 = 0.0
    g1 = 0.0
    f = 0.0
    if r > 0.0:
        s = _radial_slope(r) / r
        g0 = s * x0
        g1 = s * x1
        f = _radial_value(r)
    torque = 0.0
    if p[0] == 0.0:
        excess = x0 - p[2]
        if excess > 0.0:
            g0 += p[3] * excess
            f += p[3] * 0.5 * excess * excess
            torque = p[3] * t * t * t * x1 * excess
    speed2 = v0 * v0 + v1 * v1
    out[0] = v0
    out[1] = v1
    out[2] = -3.0 / t * v0 - g0
    out[3] = -3.0 / t * v1 - g1
    out[4] = math.sqrt(speed2)
    out[5] = torque
    out[6] = t * f
    out[7] = t * speed2


@njit(cache=True)
def nesterov_quadratic_rhs(t, y, p, out):
    d = int(p[1])
    speed2 = 0.0
    fval = 0.0
    for i in range(d):
        acc = 0.0
        for j in range(d):
            acc += p[4 + i * d + j] * y[j]
        fval += 0.5 * y[i] * acc
        vi = y[d + i]
        out[i] = vi
        out[d + i] = -3.0 / t * vi - acc
        speed2 += vi * vi
    out[2 * d] = math.sqrt(speed2)
    out[2 * d + 1] = 0.0
    out[2 * d + 2] = t * fval
    out[2 * d + 3] = t * speed2


@njit(cache=True)
def gradient_flow_rhs(t, y, p, out):
    d = int(p[1])
    g = np.empty(d)
    grad_into(y[:d], p, g)
    speed2 = 0.0
    for i in range(d):
        out[i] = -g[i]
        speed2 += g[i] * g[i]
    out[d] = math.sqrt(speed2)
    out[d + 1] = _torque_density(t, y, p)
    out[d + 2] = t * value_at(y[:d], p)
    out[d + 3] = t * speed2


# event slots for Cartesian runs: radial disk, r seam, psi kink, stop radius
N_CART_EVENTS = 4


@njit(cache=True)
def cartesian_events(t, y, p, g):
    if int(p[0]) == 1:
        acc = 0.0
        for i in range(int(p[1])):
            acc += y[i] * y[i]
        r = math.sqrt(acc)
    else:
        r = math.hypot(y[0], y[1])
    g[0] = r - p[2]
    g[1] = r - SEAM
    g[2] = y[0] - p[2]
    g[3] = r - p[p.size - 1]


@njit(cache=True)
def polar_rhs(t, y, p, out):
    kappa = p[0]
    r = y[0]
    rdot = y[1]
    t3 = t * t * t
    j = kappa / t3
    vt2 = j * j / (r * r)
    out[0] = rdot
    out[1] = -3.0 / t * rdot - _radial_slope(r) + j * j / (r * r * r)
    out[2] = j / (r * r)
    out[3] = math.sqrt(rdot * rdot + vt2)
    out[4] = 0.0
    out[5] = t * _radial_value(r)
    out[6] = t * (rdot * rdot + vt2)


N_POLAR_EVENTS = 3


@njit(cache=True)
def polar_events(t, y, p, g):
    g[0] = y[0] - p[1]
    g[1] = y[0] - SEAM
    g[2] = y[0] - p[2]


@njit(cache=True)
def radial_eps0_rhs(t, y, p, out):
    rho = y[0]
    s5 = math.sqrt(5.0)
    r = s5 * abs(rho)
    force = _radial_slope(r) / s5
    if rho < 0:
        force = -force
    elif rho == 0:
        force = 0.0
    out[0] = y[1]
    out[1] = -3.0 / t * y[1] - force
    excess = 2.0 * rho - p[0]
    out[2] = t * t * t * rho * excess if excess > 0.0 else 0.0


@njit(cache=True)
def radial_eps0_events(t, y, p, g):
    g[0] = y[0]
    g[1] = 2.0 * y[0] - p[0]


@njit(cache=True)
def no_events(t, y, p, g):
    pass
