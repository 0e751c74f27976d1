"""Orbit-averaged continuation of the flow deep inside the radial disk.

Once the trajectory is trapped in the disk, ``t**3 det(X, V) = kappa`` and
the motion is a radial oscillation in the effective potential
``U(r) = F(r) + j**2 / (2 r**2)`` with ``j = kappa / t**3``.  The orbit
period shrinks much faster than ``t`` grows (tens of millions of turns per
decade beyond ``t = 1e3``), so stepping through every turn is hopeless.
Here the slow quantities are advanced by their averages over one frozen
radial period instead::

    d(E)/dt      = -(3/t) <|V|^2>       (exact: dE/dt = -(3/t)|V|^2)
    d(arc)/dt    = <|V|>
    d(W_f)/dt    = t <F>
    d(W_v)/dt    = t <|V|^2>

with ``E = |V|^2 / 2 + F(r)``.  A turn counter and the mean polar angle are
carried along so that samples can be placed on the frozen orbit at a
definite phase.  Those samples are statistically faithful, not pointwise:
after ~1e9 turns no integrator can resolve the phase.

The averages are quadratures in ``u`` with ``r = c - h cos u``, which
removes the inverse square-root singularities at the turning points.
Panels are graded geometrically toward pericenter, where very eccentric
orbits spend a short but important time.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .flow import IntegrationError, Trajectory, _sample_grid
from .potential import DomainError, _radial_slope, _radial_value

__all__ = ["FrozenOrbit", "frozen_orbit", "integrate_averaged_nesterov"]

_GL_X, _GL_W = np.polynomial.legendre.leggauss(24)

# moment slots filled by _moments
M_TIME, M_V2, M_SPEED, M_F, M_THETA, M_ACTION = range(6)
N_MOMENTS = 6

# averaging is only trusted while one radial period is this small relative to t
MAX_PERIOD_RATIO = 1e-2


@njit(cache=True)
def _p2(u, E_resid_lo, E_resid_hi, j, rm, rp):
    """Squared radial speed at ``r = c - h cos u``, pivoted at the nearer turning point."""
    h = 0.5 * (rp - rm)
    if u < 0.5 * math.pi:
        d = 2.0 * h * math.sin(0.5 * u) ** 2
        r = rm + d
        val = 2.0 * E_resid_lo + j * j * d * (r + rm) / (rm * rm * r * r) \
            - 2.0 * (_radial_value(r) - _radial_value(rm))
    else:
        d = 2.0 * h * math.cos(0.5 * u) ** 2
        r = rp - d
        val = 2.0 * E_resid_hi + 2.0 * (_radial_value(rp) - _radial_value(r)) \
            - j * j * d * (rp + r) / (rp * rp * r * r)
    return r, val


@njit(cache=True)
def _moments(E, E_resid_lo, E_resid_hi, j, rm, rp, u_hi, xg, wg, out):
    """Integrals over ``u in [0, u_hi]`` (pericenter outward) of ``g dt``.

    Slots: time, |V|^2, |V|, F, theta-dot, p_r^2.
    """
    for k in range(N_MOMENTS):
        out[k] = 0.0
    h = 0.5 * (rp - rm)
    # width in u over which pericenter passage happens
    up = min(math.sqrt(2.0 * rm / h), 0.25 * math.pi)
    lo = 0.0
    hi = up
    while lo < u_hi:
        b = min(hi, u_hi)
        half = 0.5 * (b - lo)
        mid = 0.5 * (b + lo)
        for i in range(xg.size):
            u = mid + half * xg[i]
            r, p2 = _p2(u, E_resid_lo, E_resid_hi, j, rm, rp)
            if p2 <= 0.0:
                continue
            w = wg[i] * half * h * math.sin(u) / math.sqrt(p2)
            v2 = 2.0 * (E - _radial_value(r))
            out[M_TIME] += w
            out[M_V2] += w * v2
            out[M_SPEED] += w * math.sqrt(max(v2, 0.0))
            out[M_F] += w * _radial_value(r)
            out[M_THETA] += w * j / (r * r)
            out[M_ACTION] += w * p2
        lo = b
        hi = min(2.0 * hi, math.pi)


@njit(cache=True)
def _effective_gap(s, E, j):
    r = math.exp(s)
    return E - _radial_value(r) - 0.5 * j * j / (r * r)


@njit(cache=True)
def _torque_gap(s, j):
    r = math.exp(s)
    return _radial_slope(r) * r * r * r - j * j


class FrozenOrbit:
    """Radial oscillation at fixed energy ``E`` and angular momentum ``j``.

    ``period`` is the radial period, ``mean_*`` are time averages over it,
    ``theta_per_period`` is the polar angle swept per radial period and
    ``action`` is the radial action ``oint p_r dr``.
    """

    def __init__(self, E, j):
        if not (E > 0 and j > 0):
            raise DomainError("frozen orbit needs E > 0 and j > 0")
        self.E = float(E)
        self.j = float(j)
        s_star = brentq(_torque_gap, -690.0, 5.0, args=(self.j,), xtol=1e-15)
        if _effective_gap(s_star, self.E, self.j) <= 0.0:
            raise DomainError("energy is at or below the circular-orbit minimum")
        s_lo = math.log(self.j / math.sqrt(2.0 * self.E))
        rm = math.exp(brentq(_effective_gap, s_lo, s_star, args=(self.E, self.j), xtol=1e-15))
        s_hi = s_star + 1.0
        while _effective_gap(s_hi, self.E, self.j) > 0.0:
            s_hi += 1.0
        rp = math.exp(brentq(_effective_gap, s_star, s_hi, args=(self.E, self.j), xtol=1e-15))
        self.r_min = rm
        self.r_max = rp
        jj = self.j * self.j
        self._resid_lo = self.E - float(_radial_value(rm)) - 0.5 * jj / (rm * rm)
        self._resid_hi = self.E - float(_radial_value(rp)) - 0.5 * jj / (rp * rp)
        m = self._integrals(math.pi)
        half_t = m[M_TIME]
        self.period = 2.0 * half_t
        self.mean_v2 = m[M_V2] / half_t
        self.mean_speed = m[M_SPEED] / half_t
        self.mean_f = m[M_F] / half_t
        self.theta_per_period = 2.0 * m[M_THETA]
        self.action = 2.0 * m[M_ACTION]

    def _integrals(self, u_hi):
        out = np.empty(N_MOMENTS)
        _moments(self.E, self._resid_lo, self._resid_hi, self.j, self.r_min, self.r_max,
                 float(u_hi), _GL_X, _GL_W, out)
        return out

    def radial_speed(self, u):
        """``|r'|`` at anomaly ``u``."""
        _, p2 = _p2(float(u), self._resid_lo, self._resid_hi, self.j, self.r_min, self.r_max)
        return math.sqrt(max(p2, 0.0))

    def radius(self, u):
        return 0.5 * (self.r_max + self.r_min) - 0.5 * (self.r_max - self.r_min) * math.cos(u)

    def anomaly_of_radius(self, r):
        c = 0.5 * (self.r_max + self.r_min)
        h = 0.5 * (self.r_max - self.r_min)
        return math.acos(min(1.0, max(-1.0, (c - r) / h)))

    def time_and_angle(self, u):
        """Time and polar angle elapsed from pericenter to anomaly ``u``."""
        m = self._integrals(u)
        return m[M_TIME], m[M_THETA]

    def anomaly_at_time(self, tau):
        """Anomaly reached ``tau`` after pericenter, ``0 <= tau <= period / 2``."""
        half = 0.5 * self.period
        if tau <= 0.0:
            return 0.0
        if tau >= half:
            return math.pi
        return brentq(lambda u: self._integrals(u)[M_TIME] - tau, 0.0, math.pi, xtol=1e-14)

    def state_at_phase(self, phase, pericenter_angle):
        """``(r, rdot, theta)`` at a phase in ``[0, 1)`` measured from pericenter."""
        if phase <= 0.5:
            u = self.anomaly_at_time(phase * self.period)
            _, dtheta = self.time_and_angle(u)
            return self.radius(u), self.radial_speed(u), pericenter_angle + dtheta
        u = self.anomaly_at_time((1.0 - phase) * self.period)
        _, dtheta = self.time_and_angle(u)
        theta = pericenter_angle + self.theta_per_period - dtheta
        return self.radius(u), -self.radial_speed(u), theta

    def phase_of_state(self, r, rdot):
        """Inverse of :meth:`state_at_phase` for the radial part."""
        u = self.anomaly_of_radius(r)
        tau, dtheta = self.time_and_angle(u)
        if rdot >= 0:
            return tau / self.period, dtheta
        return 1.0 - tau / self.period, self.theta_per_period - dtheta


def frozen_orbit(E, j):
    return FrozenOrbit(E, j)


def _polar_of(state):
    X = np.asarray(state.X, dtype=float)
    V = np.asarray(state.V, dtype=float)
    r = float(np.hypot(X[0], X[1]))
    return r, float(X @ V) / r, math.atan2(X[1], X[0])


def integrate_averaged_nesterov(kappa, handoff, cfg, a=math.inf):
    """Continue a trapped flow by orbit averaging from ``handoff.t`` to ``cfg.t_end``.

    ``handoff`` must lie inside the disk of radius ``a`` with the flow
    already conserving ``t**3 det(X, V) = kappa``.  Samples are placed on
    the frozen orbit at the tracked phase; their accumulators carry the
    averaged integrals.  ``cfg.rtol`` controls the secular ODE solve.

    Raises
    ------
    IntegrationError
        If an orbit leaves the disk or its period is no longer small
        compared with ``t``.
    """
    if not kappa > 0:
        raise DomainError("orbit averaging needs kappa > 0")
    kappa = float(kappa)
    t_start = float(handoff.t)
    r0, rdot0, theta0 = _polar_of(handoff)
    j0 = kappa / t_start ** 3
    E0 = 0.5 * (rdot0 * rdot0 + (j0 / r0) ** 2) + float(_radial_value(r0))
    orbit0 = FrozenOrbit(E0, j0)
    phase0, dtheta0 = orbit0.phase_of_state(r0, rdot0)
    # mean angle is the pericenter angle advanced linearly over the period
    mean_angle0 = theta0 - dtheta0 + phase0 * orbit0.theta_per_period
    worst_ratio = [orbit0.period / t_start]

    def orbit_at(tau, logE):
        t = math.exp(tau)
        orbit = FrozenOrbit(math.exp(logE), kappa / t ** 3)
        if orbit.r_max > a:
            raise IntegrationError(f"orbit leaves the radial disk at t={t:.6g}")
        ratio = orbit.period / t
        if ratio > MAX_PERIOD_RATIO:
            raise IntegrationError(f"radial period {orbit.period:.3g} too long at t={t:.6g}")
        worst_ratio[0] = max(worst_ratio[0], ratio)
        return t, orbit

    def rhs(tau, y):
        t, o = orbit_at(tau, y[0])
        return [
            -3.0 * o.mean_v2 / o.E,
            t * o.mean_speed,
            t * t * o.mean_f,
            t * t * o.mean_v2,
            t * o.theta_per_period / o.period,
            t / o.period,
        ]

    times = _sample_grid(cfg.with_(t0=t_start))
    y0 = [math.log(E0), handoff.arclength, handoff.weighted_f, handoff.weighted_v2,
          mean_angle0, phase0]
    sol = solve_ivp(rhs, (math.log(t_start), math.log(times[-1])), y0, method="DOP853",
                    rtol=cfg.rtol, atol=1e-300, dense_output=True)
    if not sol.success:
        raise IntegrationError(f"secular solve failed: {sol.message}")

    def states(ts):
        ts = np.asarray(ts, dtype=float)
        Y = sol.sol(np.log(ts))
        Y[:, ts == t_start] = np.array(y0)[:, None]
        X = np.empty((ts.size, 2))
        V = np.empty((ts.size, 2))
        for i, t in enumerate(ts):
            _, o = orbit_at(math.log(t), Y[0, i])
            turns = Y[5, i]
            phase = turns - math.floor(turns)
            peri = Y[4, i] - phase * o.theta_per_period
            r, rdot, theta = o.state_at_phase(phase, peri)
            vt = o.j / r
            c, s = math.cos(theta), math.sin(theta)
            X[i] = (r * c, r * s)
            V[i] = (rdot * c - vt * s, rdot * s + vt * c)
        return X, V, Y

    X, V, Y = states(times)
    traj = Trajectory(times, X, V, Y[1], np.full(times.size, handoff.torque_integral), Y[2], Y[3],
                      segment=np.full(times.size, "averaged", dtype=object))
    if cfg.orbit_ds:
        dense = np.exp(np.linspace(math.log(t_start), math.log(times[-1]), 4001))
        arc = sol.sol(np.log(dense))[1]
        levels = np.arange(math.floor(arc[0] / cfg.orbit_ds) + 1, math.floor(arc[-1] / cfg.orbit_ds) + 1)
        if levels.size:
            t_arc = np.interp(levels * cfg.orbit_ds, arc, dense)
            traj.orbit_t = t_arc
            traj.orbit_X = states(t_arc)[0]
    traj.info.update(kappa=kappa, status="ok", nsteps=int(sol.t.size), nreject=0,
                     rhs_evaluations=int(sol.nfev), max_period_ratio=worst_ratio[0],
                     turns=float(Y[5, -1] - phase0),
                     radial_action_t3=(float(t_start ** 3 * orbit0.action),
                                       float(times[-1] ** 3 * orbit_at(math.log(times[-1]), Y[0, -1])[1].action)))
    return traj
