"""Closed-form and reduced solutions used as ground truth for the integrators.

* Quadratic potentials ``q(x) = x^T Q x / 2``: after diagonalising
  ``Q = U^T diag(lam) U`` each mode solves a Bessel equation, and from rest
  ``y_i(t) = 2 a_i J1(sqrt(lam_i) t) / (sqrt(lam_i) t)`` with
  ``y_i'(t) = -(2 a_i / t) J2(sqrt(lam_i) t)``.
* The unperturbed pathological flow (``eps = 0``) stays on the ray through
  ``(2, 1)``; its scalar coordinate obeys a one-dimensional Nesterov ODE.
* Radial gradient flow inside ``r <= e**-2`` obeys ``r' = -1/(-log r)``, so
  the origin is hit at ``T = r0 (1 - log r0)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit, vectorize
from scipy import special
from scipy.integrate import quad, solve_ivp

from . import _kernels as kn
from .flow import IntegratorConfig, Marker, _drive, _sample_grid
from .potential import SEAM, DomainError, radial_slope

__all__ = [
    "bessel_j",
    "jacobi_eigh",
    "QuadraticSpec",
    "quadratic_nesterov_closed_form",
    "quadratic_arclength",
    "quadratic_arclength_profile",
    "ArclengthResult",
    "RadialRay",
    "radial_eps0_reduction",
    "gradient_flow_hit_time",
    "gradient_flow_hit_time_numeric",
]

_SERIES_MAX = 1.0
_MILLER_MAX = 25.0
_SQRT_HALF = math.sqrt(0.5)


@njit(cache=True)
def _series(n, x):
    # J_n(x) = sum (-1)^k (x/2)^(2k+n) / (k! (k+n)!)
    q = 0.25 * x * x
    term = 1.0
    for k in range(1, n + 1):
        term *= 0.5 * x / k
    total = term
    for k in range(1, 60):
        term *= -q / (k * (k + n))
        total += term
        if abs(term) < 1e-17 * abs(total):
            break
    return total


@njit(cache=True)
def _miller01(x):
    # backward recurrence normalised by J0 + 2 (J2 + J4 + ...) = 1
    start = 2 * (int(x + 20.0 + 2.0 * math.sqrt(x)) // 2 + 8)
    jp1 = 0.0
    jk = 1e-30
    norm = 0.0
    j0 = 0.0
    j1 = 0.0
    for k in range(start, 0, -1):
        jm1 = 2.0 * k / x * jk - jp1
        jp1 = jk
        jk = jm1
        if (k - 1) % 2 == 0 and k - 1 > 0:
            norm += 2.0 * jk
        if k - 1 == 1:
            j1 = jk
        if abs(jk) > 1e250:
            jk *= 1e-250
            jp1 *= 1e-250
            norm *= 1e-250
            j1 *= 1e-250
    j0 = jk
    norm += j0
    return j0 / norm, j1 / norm


@njit(cache=True)
def _hankel(nu, x):
    # J_nu(x) ~ sqrt(2/(pi x)) (P cos chi - Q sin chi), chi = x - (nu/2 + 1/4) pi
    mu = 4.0 * nu * nu
    p = 1.0
    q = 0.0
    term = 1.0
    last = math.inf
    for k in range(1, 120):
        term *= (mu - (2 * k - 1) ** 2) / (k * 8.0 * x)
        if abs(term) > last:
            break
        last = abs(term)
        if k % 2 == 1:
            q += term if (k // 2) % 2 == 0 else -term
        else:
            p += -term if (k // 2) % 2 == 1 else term
        if abs(term) < 1e-17:
            break
    c = math.cos(x)
    s = math.sin(x)
    if nu == 0:
        cchi = _SQRT_HALF * (c + s)
        schi = _SQRT_HALF * (s - c)
    else:
        cchi = _SQRT_HALF * (s - c)
        schi = -_SQRT_HALF * (c + s)
    return math.sqrt(2.0 / (math.pi * x)) * (p * cchi - q * schi)


@njit(cache=True)
def _j01(x):
    if x <= _SERIES_MAX:
        return _series(0, x), _series(1, x)
    if x <= _MILLER_MAX:
        return _miller01(x)
    return _hankel(0, x), _hankel(1, x)


@njit(cache=True)
def _bessel(n, x):
    if n == 2 and x < 1e-4:
        return _series(2, x)
    j0, j1 = _j01(x)
    if n == 0:
        return j0
    if n == 1:
        return j1
    return 2.0 * j1 / x - j0


@vectorize(["float64(int64, float64)"], cache=True)
def _bessel_ufunc(n, x):
    return _bessel(n, x)


@njit(cache=True)
def _j1_over_x(x):
    if x < 1e-4:
        return 0.5 - x * x / 16.0 + x ** 4 / 384.0
    return _bessel(1, x) / x


@njit(cache=True)
def _j2_over_x(x):
    if x < 1e-4:
        return x / 8.0 - x ** 3 / 96.0
    return _bessel(2, x) / x


def bessel_j(n, x):
    """Bessel function of the first kind ``J_n(x)`` for ``n in {0, 1, 2}`` and ``x >= 0``.

    Ascending series for ``x <= 1``, Miller backward recurrence up to 25 and
    the Hankel asymptotic expansion beyond; absolute error below 1e-12 for
    ``x <= 1e3``.
    """
    if n not in (0, 1, 2):
        raise DomainError("bessel_j supports orders 0, 1 and 2 only")
    x = np.asarray(x, dtype=float)
    if np.any(~(x >= 0)):
        raise DomainError("bessel_j needs x >= 0")
    out = _bessel_ufunc(n, x)
    return float(out) if out.ndim == 0 else out


def jacobi_eigh(Q, tol=1e-12, max_sweeps=100):
    """Eigen-decomposition of a small symmetric matrix by cyclic Jacobi rotations.

    Returns ``(lam, U)`` with ascending ``lam`` and orthogonal ``U`` whose
    rows are eigenvectors, so ``Q = U.T @ diag(lam) @ U``.  Sweeps stop once
    the off-diagonal Frobenius norm is below ``tol`` times that of ``Q``.
    """
    A = np.array(Q, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DomainError("Q must be square")
    d = A.shape[0]
    V = np.eye(d)
    scale = max(np.linalg.norm(A), 1e-300)
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off <= tol * scale:
            break
        for p in range(d - 1):
            for q in range(p + 1, d):
                if abs(A[p, q]) <= 1e-300 + 1e-18 * scale:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * A[p, q])
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c
                rot = np.eye(d)
                rot[p, p] = c
                rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                A = rot.T @ A @ rot
                A[p, q] = A[q, p] = 0.0
                V = V @ rot
    lam = np.diag(A).copy()
    order = np.argsort(lam)
    return lam[order], V[:, order].T.copy()


@dataclass(frozen=True, eq=False)
class QuadraticSpec:
    """Quadratic potential with its modal decomposition and a starting point.

    ``lam`` below 1e-12 in magnitude is set to zero; ``modal`` is ``U @ x0``.
    """

    Q: np.ndarray
    x0: np.ndarray
    lam: np.ndarray = field(init=False)
    U: np.ndarray = field(init=False)
    modal: np.ndarray = field(init=False)

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        x0 = np.array(self.x0, dtype=float).ravel()
        if Q.ndim != 2 or Q.shape != (x0.size, x0.size):
            raise DomainError("Q must be d x d with d = len(x0)")
        if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
            raise DomainError("Q must be symmetric")
        lam, U = jacobi_eigh(0.5 * (Q + Q.T))
        if np.any(lam < -1e-12):
            raise DomainError("Q must be positive semidefinite")
        lam = np.where(lam < 1e-12, 0.0, lam)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "U", U)
        object.__setattr__(self, "modal", U @ x0)

    @classmethod
    def diagonal(cls, lambdas, x0):
        return cls(np.diag(np.atleast_1d(np.asarray(lambdas, dtype=float))), x0)


def _modal(spec, t):
    t = np.asarray(t, dtype=float)
    root = np.sqrt(spec.lam)
    s = np.multiply.outer(t, root)
    pos = 2.0 * spec.modal * _j1_over_x_vec(s)
    vel = -2.0 * spec.modal * root * _j2_over_x_vec(s)
    return pos, vel


_j1_over_x_vec = vectorize(["float64(float64)"], cache=True)(_j1_over_x)
_j2_over_x_vec = vectorize(["float64(float64)"], cache=True)(_j2_over_x)


def quadratic_nesterov_closed_form(spec, t):
    """Exact ``(X(t), V(t))`` of the Nesterov flow from rest at ``spec.x0``.

    ``t`` may be a scalar or an array; outputs have a trailing axis of size d.
    """
    if np.any(np.asarray(t) < 0):
        raise DomainError("t must be nonnegative")
    pos, vel = _modal(spec, t)
    return pos @ spec.U, vel @ spec.U


@dataclass(frozen=True)
class ArclengthResult:
    value: float
    tail_bound: float
    horizon: float


def _speed(spec, t):
    return float(np.linalg.norm(_modal(spec, t)[1]))


def quadratic_arclength_profile(spec, times):
    """Cumulative path length of the closed-form flow at each of ``times`` (nonnegative)."""
    times = np.asarray(times, dtype=float)
    if np.any(~(times >= 0)):
        raise DomainError("times must be nonnegative")
    lam_max = float(spec.lam.max()) if spec.lam.size else 0.0
    if times.size == 0 or lam_max == 0.0 or not np.any(spec.modal):
        return np.zeros(times.shape)
    panel = math.pi / math.sqrt(lam_max)
    top = float(times.max())
    edges = np.union1d(np.arange(0.0, top, panel), np.append(times.ravel(), [0.0, top]))
    pieces = [quad(lambda t: _speed(spec, t), lo, hi, epsabs=1e-15, epsrel=1e-13, limit=200)[0]
              for lo, hi in zip(edges[:-1], edges[1:])]
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    return cum[np.searchsorted(edges, times)]


def quadratic_arclength(spec, horizon):
    """Path length ``int_0^horizon |X'(t)| dt`` of the closed-form flow, with a tail bound.

    The integral is split at the zero spacing ``pi / sqrt(max lam)`` so each
    panel is smooth.  The tail beyond the horizon is bounded mode by mode
    using ``int_S^inf |J2(s)| / s ds <= 2 M2(S)``, where
    ``M2 = sqrt(J2**2 + Y2**2)`` and ``s M2(s)**2`` is nonincreasing.
    """
    if not horizon > 0:
        raise DomainError("horizon must be positive")
    lam_max = float(spec.lam.max()) if spec.lam.size else 0.0
    if lam_max == 0.0 or not np.any(spec.modal):
        return ArclengthResult(0.0, 0.0, float(horizon))
    total = float(quadratic_arclength_profile(spec, [horizon])[0])
    tail = 0.0
    for lam_i, a_i in zip(spec.lam, spec.modal):
        if lam_i > 0 and a_i != 0:
            S = math.sqrt(lam_i) * horizon
            tail += 4.0 * abs(a_i) * math.hypot(special.jv(2, S), special.yv(2, S))
    return ArclengthResult(total, float(tail), float(horizon))


@dataclass
class RadialRay:
    """Scalar coordinate of the ``eps = 0`` flow along the ray ``rho (2, 1)``.

    ``torque_functional`` accumulates ``int s**3 rho (2 rho - a)_+ ds``; its
    product with ``eps`` is the leading-order angular momentum created when
    the perturbation is switched on.  ``markers`` list sign changes of rho.
    """

    t: np.ndarray
    rho: np.ndarray
    rhodot: np.ndarray
    torque_functional: np.ndarray
    markers: list

    def positions(self):
        return np.outer(self.rho, [2.0, 1.0])


def radial_eps0_reduction(a, cfg=IntegratorConfig()):
    """Integrate ``rho'' + (3/t) rho' + F'(sqrt5 |rho|) sign(rho) / sqrt5 = 0`` from ``rho(0) = a``.

    Starts at ``cfg.t0`` from the series ``rho = a - t0**2 g / 8`` with the
    scalar force ``g``, using the same compiled stepper as the planar flow.
    """
    if not a > 0:
        raise DomainError("a must be positive")
    if not cfg.t0 > 0:
        raise DomainError("need t0 > 0")
    s5 = math.sqrt(5.0)
    g = float(radial_slope(s5 * a)) / s5
    t0 = cfg.t0
    y0 = np.array([a - t0 * t0 * g / 8.0, -t0 * g / 4.0, t0 ** 4 * a * a / 4.0])
    p = np.array([float(a)])
    times = _sample_grid(cfg)
    terminal = np.array([False, False])
    precise = np.array([True, True])
    raw = _drive(kn.radial_eps0_rhs, kn.radial_eps0_events, p, y0, times, cfg, terminal, precise)
    markers = [Marker(float(te), "SignChange") for te, k, _, _ in raw["events"] if k == 0]
    y = raw["y"]
    return RadialRay(raw["t"], y[:, 0], y[:, 1], y[:, 2], markers)


def gradient_flow_hit_time(r0):
    """Time for radial gradient flow from ``r0 <= e**-2`` to reach the origin: ``r0 (1 - log r0)``."""
    if not 0 < r0 <= SEAM * (1 + 1e-15):
        raise DomainError("r0 must lie in (0, e**-2]")
    return r0 * (1.0 - math.log(r0))


def gradient_flow_hit_time_numeric(r0, stop_radius=1e-12, rtol=1e-12):
    """Cross-check: integrate ``r' = -F'(r)`` with scipy until ``r = stop_radius``."""
    if not 0 < r0 <= SEAM * (1 + 1e-15):
        raise DomainError("r0 must lie in (0, e**-2]")

    def hit(t, r):
        return r[0] - stop_radius

    hit.terminal = True
    sol = solve_ivp(lambda t, r: [-1.0 / -math.log(max(r[0], 1e-300))], (0.0, 10.0), [r0],
                    method="DOP853", rtol=rtol, atol=1e-20, events=hit)
    if not sol.t_events[0].size:
        raise DomainError("stop radius not reached")
    return float(sol.t_events[0][0])
