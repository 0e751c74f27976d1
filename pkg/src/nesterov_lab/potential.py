"""Convex potentials for the critical Nesterov flow.

The radial profile ``F`` is linear with slope 1/2 for ``r >= e**-2`` and
behaves like ``r / (-log r)`` near the origin, so its gradient vanishes only
logarithmically.  On ``(0, e**-2]`` it equals the exponential integral
``E1(-log r)``.  The pathological potential adds a one-sided quadratic in
``x1`` that is switched off inside the disk ``|x| <= a``::

    f(x1, x2) = F(|x|) + eps * 0.5 * max(x1 - a, 0)**2

Scalar cores are compiled with numba so the integrator kernels can call them
directly; the public functions accept scalars or arrays.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numba import njit, vectorize

__all__ = [
    "DomainError",
    "SEAM",
    "F_SEAM",
    "PotentialSpec",
    "exp_integral_e1",
    "radial_value",
    "radial_slope",
    "one_sided_quadratic",
    "value",
    "gradient",
    "parse_potential",
]

EULER_GAMMA = 0.57721566490153286061
SEAM = math.exp(-2.0)
_TINY_R = 1e-300
_FPMIN = 1e-300


class DomainError(ValueError):
    """Argument outside the domain of a potential building block."""


@njit(cache=True)
def _e1_series(x):
    # ascending series; terms alternate and shrink fast for x <= 1
    total = 0.0
    term = 1.0
    for k in range(1, 200):
        term *= -x / k
        contrib = -term / k
        total += contrib
        if abs(contrib) < 1e-17 * abs(total):
            break
    return -EULER_GAMMA - math.log(x) + total


@njit(cache=True)
def _e1_lentz_scaled(x):
    # exp(x) * E1(x) by modified Lentz on the even continued fraction, x > 1
    b = x + 1.0
    c = 1.0 / _FPMIN
    d = 1.0 / b
    h = d
    for i in range(1, 10000):
        an = -float(i * i)
        b += 2.0
        d = 1.0 / (an * d + b)
        c = b + an / c
        delta = c * d
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            break
    return h


@njit(cache=True)
def _e1_lentz(x):
    return _e1_lentz_scaled(x) * math.exp(-x)


def _fit_scaled_e1(deg=32):
    # Chebyshev fit of x*exp(x)*E1(x) in u = 2/x on (0, 1], sampled from the Lentz branch
    n = deg + 1
    nodes = np.cos(np.pi * (np.arange(n) + 0.5) / n)
    x = 4.0 / (nodes + 1.0)
    vals = np.array([xi * _e1_lentz_scaled(xi) for xi in x])
    return np.polynomial.chebyshev.chebfit(nodes, vals, deg)


_CHEB = _fit_scaled_e1()


@njit(cache=True)
def _e1_cheb(x):
    z = 4.0 / x - 1.0
    z2 = 2.0 * z
    b1 = 0.0
    b2 = 0.0
    for k in range(_CHEB.size - 1, 0, -1):
        b0 = _CHEB[k] + z2 * b1 - b2
        b2 = b1
        b1 = b0
    return (_CHEB[0] + z * b1 - b2) * math.exp(-x) / x


@njit(cache=True)
def _e1(x):
    if x <= 1.0:
        return _e1_series(x)
    if x < 2.0:
        return _e1_lentz(x)
    return _e1_cheb(x)


F_SEAM = _e1(2.0)


@njit(cache=True)
def _radial_value(r):
    if r < _TINY_R:
        return 0.0
    if r <= SEAM:
        return _e1(-math.log(r))
    return F_SEAM + 0.5 * (r - SEAM)


@njit(cache=True)
def _radial_slope(r):
    if r <= 0.0:
        return 0.0
    if r >= SEAM:
        return 0.5
    lr = -math.log(r)
    if lr == math.inf:
        return 0.0
    return 1.0 / lr


_e1_ufunc = vectorize(["float64(float64)"], cache=True)(_e1)
_radial_value_ufunc = vectorize(["float64(float64)"], cache=True)(_radial_value)
_radial_slope_ufunc = vectorize(["float64(float64)"], cache=True)(_radial_slope)


def _unwrap(out):
    if np.ndim(out) == 0:
        return float(out)
    return out


def exp_integral_e1(R):
    """Exponential integral ``E1(R) = int_R^inf exp(-v) / v dv``.

    Series for ``R <= 1``, continued fraction (modified Lentz) above.  For
    ``R >= 2`` a Chebyshev expansion of ``R exp(R) E1(R)`` in ``2/R``, fitted
    to the continued fraction at import, replaces the iteration for speed.

    Raises
    ------
    DomainError
        If any ``R <= 0``.
    """
    R = np.asarray(R, dtype=float)
    if np.any(~(R > 0)):
        raise DomainError("E1 is defined for R > 0 only")
    return _unwrap(_e1_ufunc(R))


def radial_value(r):
    """Radial profile ``F(r)`` for ``r >= 0``."""
    r = np.asarray(r, dtype=float)
    if np.any(~(r >= 0)):
        raise DomainError("radial profile needs r >= 0")
    return _unwrap(_radial_value_ufunc(r))


def radial_slope(r):
    """Derivative ``F'(r)``: ``1/(-log r)`` below ``e**-2``, ``1/2`` above, 0 at 0."""
    r = np.asarray(r, dtype=float)
    if np.any(~(r >= 0)):
        raise DomainError("radial profile needs r >= 0")
    return _unwrap(_radial_slope_ufunc(r))


def one_sided_quadratic(u, a):
    """Return ``(0.5 * max(u - a, 0)**2, max(u - a, 0))``."""
    if not a > 0:
        raise DomainError("a must be positive")
    p = np.maximum(np.asarray(u, dtype=float) - a, 0.0)
    return _unwrap(0.5 * p * p), _unwrap(p)


PATHOLOGICAL = "pathological"
QUADRATIC = "quadratic"
PURE_RADIAL = "pure_radial"
_KINDS = (PATHOLOGICAL, QUADRATIC, PURE_RADIAL)


@dataclass(frozen=True, eq=False)
class PotentialSpec:
    """Tagged description of a potential.

    Use the constructors :meth:`pathological`, :meth:`quadratic` and
    :meth:`pure_radial` rather than building instances by hand.
    """

    kind: str
    a: float = 0.0
    eps: float = 0.0
    Q: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise DomainError(f"unknown potential kind {self.kind!r}")
        if self.kind == PATHOLOGICAL:
            if not self.a > 0:
                raise DomainError("a must be positive")
            if not self.eps >= 0:
                raise DomainError("eps must be nonnegative")
        if self.kind == QUADRATIC:
            Q = np.array(self.Q, dtype=float)
            if Q.ndim != 2 or Q.shape[0] != Q.shape[1]:
                raise DomainError("Q must be a square matrix")
            if not np.allclose(Q, Q.T, rtol=0, atol=1e-12 * max(1.0, np.abs(Q).max())):
                raise DomainError("Q must be symmetric")
            Q = 0.5 * (Q + Q.T)
            Q.setflags(write=False)
            object.__setattr__(self, "Q", Q)

    @classmethod
    def pathological(cls, a=0.02, eps=50.0):
        return cls(PATHOLOGICAL, a=float(a), eps=float(eps))

    @classmethod
    def quadratic(cls, Q=None, lambdas=None):
        """Quadratic ``0.5 x^T Q x``; pass a matrix or diagonal ``lambdas``."""
        if (Q is None) == (lambdas is None):
            raise DomainError("give exactly one of Q or lambdas")
        if lambdas is not None:
            Q = np.diag(np.atleast_1d(np.asarray(lambdas, dtype=float)))
        return cls(QUADRATIC, Q=Q)

    @classmethod
    def pure_radial(cls):
        return cls(PURE_RADIAL)

    @property
    def dim(self):
        return self.Q.shape[0] if self.kind == QUADRATIC else 2

    def __repr__(self):
        if self.kind == PATHOLOGICAL:
            return f"PotentialSpec.pathological(a={self.a!r}, eps={self.eps!r})"
        if self.kind == QUADRATIC:
            return f"PotentialSpec.quadratic(Q={self.Q.tolist()!r})"
        return "PotentialSpec.pure_radial()"

    def describe(self):
        """Key=value form accepted by :func:`parse_potential`."""
        if self.kind == PATHOLOGICAL:
            return f"potential=pathological a={self.a!r} eps={self.eps!r}"
        if self.kind == QUADRATIC:
            Q = self.Q
            if np.array_equal(Q, np.diag(np.diag(Q))):
                lam = ",".join(repr(float(v)) for v in np.diag(Q))
                return f"potential=quadratic lambda={lam}"
            flat = ",".join(repr(float(v)) for v in Q.ravel())
            return f"potential=quadratic Q={flat}"
        return "potential=pure_radial"


def _check_dim(spec, x):
    x = np.asarray(x, dtype=float)
    if x.ndim == 0 or x.shape[-1] != spec.dim:
        raise DomainError(f"expected points of dimension {spec.dim}, got shape {x.shape}")
    return x


def value(spec, x):
    """Potential value at ``x`` (shape ``(d,)`` or a batch ``(..., d)``)."""
    x = _check_dim(spec, x)
    if spec.kind == QUADRATIC:
        return _unwrap(0.5 * np.einsum("...i,ij,...j->...", x, spec.Q, x))
    r = np.hypot(x[..., 0], x[..., 1])
    out = _radial_value_ufunc(r)
    if spec.kind == PATHOLOGICAL and spec.eps > 0:
        p = np.maximum(x[..., 0] - spec.a, 0.0)
        out = out + spec.eps * 0.5 * p * p
    return _unwrap(out)


def gradient(spec, x):
    """Gradient at ``x``; ``gradient(0) = 0`` for the radial potentials."""
    x = _check_dim(spec, x)
    if spec.kind == QUADRATIC:
        return x @ spec.Q.T
    r = np.hypot(x[..., 0], x[..., 1])
    slope = _radial_slope_ufunc(r)
    with np.errstate(invalid="ignore", divide="ignore"):
        scale = np.where(r > 0, slope / np.where(r > 0, r, 1.0), 0.0)
    g = x * scale[..., None]
    if spec.kind == PATHOLOGICAL and spec.eps > 0:
        g = g.copy()
        g[..., 0] += spec.eps * np.maximum(x[..., 0] - spec.a, 0.0)
    return g


def _floats(text):
    return [float(v) for v in re.split(r"[,\s]+", text.strip()) if v]


def parse_potential(text=None, **keys):
    """Build a :class:`PotentialSpec` from ``key=value`` text or keywords.

    Accepted forms::

        potential=pathological a=0.02 eps=50
        potential=quadratic lambda=1,4
        potential=quadratic Q=2,1,1,3          (row-major, square)
        potential=quadratic matrix=path/to/Q.txt
        potential=pure_radial
    """
    fields = {}
    if text:
        for tok in text.split():
            if "=" not in tok:
                raise DomainError(f"expected key=value, got {tok!r}")
            k, v = tok.split("=", 1)
            fields[k.strip().lower()] = v.strip()
    fields.update({k.lower(): v for k, v in keys.items() if v is not None})
    kind = str(fields.pop("potential", PATHOLOGICAL)).lower().replace("-", "_")
    if kind in ("radial", "pureradial"):
        kind = PURE_RADIAL
    try:
        if kind == PATHOLOGICAL:
            return PotentialSpec.pathological(
                a=float(fields.get("a", 0.02)), eps=float(fields.get("eps", 50.0))
            )
        if kind == QUADRATIC:
            if "lambda" in fields:
                lam = fields["lambda"]
                lam = _floats(lam) if isinstance(lam, str) else list(np.atleast_1d(lam))
                return PotentialSpec.quadratic(lambdas=lam)
            if "q" in fields or "matrix" in fields:
                if "matrix" in fields:
                    vals = _floats(Path(fields["matrix"]).read_text())
                else:
                    vals = _floats(fields["q"])
                n = int(round(math.sqrt(len(vals))))
                if n * n != len(vals):
                    raise DomainError("matrix entries do not form a square")
                return PotentialSpec.quadratic(Q=np.reshape(vals, (n, n)))
            raise DomainError("quadratic potential needs lambda=, Q= or matrix=")
        if kind == PURE_RADIAL:
            return PotentialSpec.pure_radial()
    except (TypeError, ValueError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(str(exc)) from exc
    raise DomainError(f"unknown potential kind {kind!r}")
