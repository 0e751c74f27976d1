"""Conservation laws, monotone quantities and rate envelopes along a trajectory.

Everything here is a pure function of sampled trajectories, so the same
checks run on in-memory results and on tables read back from disk.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .flow import RADIAL_ENTRY, RADIAL_EXIT, FlowState, Trajectory
from .potential import PATHOLOGICAL, DomainError, value

__all__ = [
    "InsufficientSpan",
    "RateConstants",
    "DecadeRow",
    "WeightedRow",
    "DiagnosticsReport",
    "angular_momentum",
    "torque_balance",
    "momentum_flatness",
    "tangential_speed_residual",
    "lyapunov_energy",
    "lyapunov_series",
    "energy_violation",
    "kinetic_energy",
    "kinetic_identity_residual",
    "kinetic_identity_integral_residual",
    "rate_fit",
    "rate_fit_values",
    "decade_minima",
    "decade_arclength_table",
    "weighted_divergence_table",
    "t_rad_empirical",
    "diagnose",
]


class InsufficientSpan(DomainError):
    """The sampled window is too short for a rate fit."""


def angular_momentum(state):
    """``det(X, V) = X1 V2 - X2 V1`` for a :class:`FlowState` or an ``(X, V)`` pair."""
    X, V = (state.X, state.V) if isinstance(state, FlowState) else state
    X = np.asarray(X, dtype=float)
    V = np.asarray(V, dtype=float)
    if X.shape[-1] != 2 or V.shape[-1] != 2:
        raise DomainError("angular momentum needs planar states")
    return X[..., 0] * V[..., 1] - X[..., 1] * V[..., 0]


def _scaled_momentum(traj):
    return traj.t ** 3 * angular_momentum((traj.X, traj.V))


def t_rad_empirical(traj, a):
    """Entry time into ``|x| <= a`` with no later exit, from markers or, failing that, samples."""
    r = traj.radius
    if r[-1] > a:
        return None
    entries = traj.markers_of(RADIAL_ENTRY)
    exits = traj.markers_of(RADIAL_EXIT)
    last_exit = max(exits, default=-math.inf)
    later = [t for t in entries if t >= last_exit]
    if later:
        return float(max(later))
    outside = np.nonzero(r > a)[0]
    if outside.size == 0:
        return float(traj.t[0])
    return float(traj.t[outside[-1] + 1])


def torque_balance(traj, eps, a, t_max=math.inf):
    """Largest gap between ``t**3 J`` and the accumulated torque, and the created ``kappa``.

    The gap is normalised by ``max(1, |t**3 J|)``.  ``kappa`` is the torque
    integral at the first sample after radial entry (it is frozen from then
    on), or at the last sample if the orbit never settles in the disk.
    """
    if traj.torque_integral is None:
        raise DomainError("trajectory has no torque accumulator")
    w = traj.t <= t_max
    tj = _scaled_momentum(traj)[w]
    gap = np.abs(tj - traj.torque_integral[w]) / np.maximum(1.0, np.abs(tj))
    t_rad = t_rad_empirical(traj, a) if eps > 0 else None
    if t_rad is None:
        kappa = float(traj.torque_integral[-1])
    else:
        kappa = float(traj.torque_integral[np.searchsorted(traj.t, t_rad)])
    return float(gap.max()), kappa


def momentum_flatness(traj, t_from, t_to=math.inf):
    """Relative variation ``(max - min) / |mean|`` of ``t**3 J`` on ``[t_from, t_to]``."""
    w = (traj.t >= t_from) & (traj.t <= t_to)
    tj = _scaled_momentum(traj)[w]
    if tj.size == 0:
        raise DomainError("no samples in the flatness window")
    mean = abs(float(np.mean(tj)))
    if mean == 0.0:
        return 0.0 if np.ptp(tj) == 0 else math.inf
    return float(np.ptp(tj) / mean)


def tangential_speed_residual(traj, kappa, t_from=-math.inf, t_to=math.inf):
    """Max relative gap between the tangential speed and ``kappa / (t**3 r)``."""
    if not kappa > 0:
        raise DomainError("kappa must be positive")
    w = (traj.t >= t_from) & (traj.t <= t_to)
    X, V, t = traj.X[w], traj.V[w], traj.t[w]
    r = np.linalg.norm(X, axis=1)
    er = X / r[:, None]
    radial = np.sum(V * er, axis=1)
    tangential = np.linalg.norm(V - radial[:, None] * er, axis=1)
    expected = kappa / (t ** 3 * r)
    return float(np.max(np.abs(tangential - expected) / expected))


def lyapunov_energy(state, spec):
    """``t**2 f(X) + |2 X + t V|**2 / 2``."""
    t, X, V = state.t, np.asarray(state.X, dtype=float), np.asarray(state.V, dtype=float)
    w = 2.0 * X + t * V
    return float(t * t * value(spec, X) + 0.5 * np.dot(w, w))


def lyapunov_series(traj, spec):
    w = 2.0 * traj.X + traj.t[:, None] * traj.V
    return traj.t ** 2 * value(spec, traj.X) + 0.5 * np.sum(w * w, axis=1)


def energy_violation(traj, spec, X0=None):
    """``(max sample-to-sample increase / E(t_first), max E / E(0))`` with ``E(0) = 2 |X0|**2``."""
    E = lyapunov_series(traj, spec)
    X0 = traj.info.get("X0") if X0 is None else X0
    E0 = 2.0 * float(np.dot(X0, X0)) if X0 is not None else float(E[0])
    rise = np.maximum(np.diff(E), 0.0)
    worst = float(rise.max() / E[0]) if rise.size and E[0] > 0 else 0.0
    ratio = float(E.max() / E0) if E0 > 0 else (0.0 if E.max() == 0 else math.inf)
    return worst, ratio


def kinetic_energy(traj, spec):
    """``t**2 f(X) + t**2 |V|**2 / 2``."""
    return traj.t ** 2 * (value(spec, traj.X) + 0.5 * np.sum(traj.V ** 2, axis=1))


def kinetic_identity_residual(traj, spec):
    """Centered-difference check of ``K' = 2 t (f - |V|**2)``.

    Max over interior samples of ``|dK/dt - 2 t (f - |V|^2)| / max(1, |2 t (f - |V|^2)|)``.
    """
    if len(traj) < 3:
        raise DomainError("need at least 3 samples")
    K = kinetic_energy(traj, spec)
    t = traj.t
    slope = (K[2:] - K[:-2]) / (t[2:] - t[:-2])
    tm = t[1:-1]
    rhs = 2.0 * tm * (value(spec, traj.X[1:-1]) - np.sum(traj.V[1:-1] ** 2, axis=1))
    return float(np.max(np.abs(slope - rhs) / np.maximum(1.0, np.abs(rhs))))


def kinetic_identity_integral_residual(traj, spec):
    """Integrated form: ``int t |V|^2 - int t f = (K(t_first) - K(t)) / 2``.

    Returns the max gap relative to ``max(K(t_first), max K)``; uses the
    weighted accumulators, so it holds between samples however far apart.
    """
    K = kinetic_energy(traj, spec)
    lhs = (traj.weighted_v2 - traj.weighted_v2[0]) - (traj.weighted_f - traj.weighted_f[0])
    rhs = 0.5 * (K[0] - K)
    scale = max(float(K[0]), float(K.max()), 1e-300)
    return float(np.max(np.abs(lhs - rhs)) / scale)


@dataclass(frozen=True)
class RateConstants:
    C_f_upper: float
    c_f_lower: float
    C_r_fit: float
    window: tuple


def rate_fit(traj, spec, t_min=10.0, t_max=math.inf):
    """Empirical envelopes ``max t^2 f``, ``min t^2 log(t) f`` and ``max t^2 r / log t``.

    The window is ``[max(t_min, 10), t_max]`` and must span two decades.
    """
    return rate_fit_values(traj.t, value(spec, traj.X), np.linalg.norm(traj.X, axis=1), t_min, t_max)


def rate_fit_values(t, f, r=None, t_min=10.0, t_max=math.inf):
    """:func:`rate_fit` on bare columns; ``C_r_fit`` is ``nan`` without radii."""
    t = np.asarray(t, dtype=float)
    lo = max(t_min, 10.0)
    w = (t >= lo) & (t <= t_max)
    if not w.any() or t[w][-1] < 100.0 * t[w][0] * (1 - 1e-12):
        raise InsufficientSpan("insufficient span: rate fit needs two decades with t >= 10")
    tw = t[w]
    fw = np.asarray(f, dtype=float)[w]
    C_r = math.nan if r is None else float(np.max(tw * tw * np.asarray(r)[w] / np.log(tw)))
    return RateConstants(
        C_f_upper=float(np.max(tw * tw * fw)),
        c_f_lower=float(np.min(tw * tw * np.log(tw) * fw)),
        C_r_fit=C_r,
        window=(float(tw[0]), float(tw[-1])),
    )


def decade_minima(traj, spec, k_from, k_to):
    """``min t^2 log(t) f`` within each decade ``[10^k, 10^(k+1)]``."""
    f = value(spec, traj.X)
    g = traj.t ** 2 * np.log(traj.t) * f
    out = []
    for k in range(k_from, k_to + 1):
        w = (traj.t >= 10.0 ** k) & (traj.t <= 10.0 ** (k + 1))
        if w.any():
            out.append((k, float(g[w].min())))
    return out


def _at(traj, column, t):
    pos = traj.t > 0
    return float(np.interp(math.log(t), np.log(traj.t[pos]), column[pos]))


def _decades(traj, k_min):
    pos = traj.t[traj.t > 0]
    if pos.size == 0:
        return range(0)
    k_lo = max(k_min, math.ceil(math.log10(pos[0]) - 1e-12))
    k_hi = math.floor(math.log10(traj.t[-1]) + 1e-12)
    return range(k_lo, k_hi)


@dataclass(frozen=True)
class DecadeRow:
    k: int
    increment: float
    scaled_log: float
    scaled_k: float


def decade_arclength_table(traj, k_min=0):
    """Path length gained over each full decade ``[10^k, 10^(k+1)]`` in the sample range."""
    rows = []
    for k in _decades(traj, k_min):
        inc = _at(traj, traj.arclength, 10.0 ** (k + 1)) - _at(traj, traj.arclength, 10.0 ** k)
        rows.append(DecadeRow(k, inc, inc * k * math.log(10.0), inc * k))
    return rows


@dataclass(frozen=True)
class WeightedRow:
    k: int
    weighted_f: float
    weighted_v2: float


def weighted_divergence_table(traj, k_min=0):
    """Both weighted partial integrals at every power of ten in range."""
    rows = []
    ks = list(_decades(traj, k_min))
    if ks:
        ks.append(ks[-1] + 1)
    for k in ks:
        t = 10.0 ** k
        rows.append(WeightedRow(k, _at(traj, traj.weighted_f, t), _at(traj, traj.weighted_v2, t)))
    return rows


def _strictly_increasing(values):
    return bool(np.all(np.diff(values) > 0))


@dataclass
class DiagnosticsReport:
    """Residuals, fitted envelopes and per-decade tables for one trajectory.

    Fields that cannot be computed (wrong potential, window too short) are
    ``nan``; ``notes`` says why.
    """

    kappa: float = math.nan
    kappa_std: float = math.nan
    torque_residual_max: float = math.nan
    momentum_flatness: float = math.nan
    tangential_residual_max: float = math.nan
    energy_violation_max: float = math.nan
    energy_bound_ratio: float = math.nan
    kinetic_identity_residual: float = math.nan
    kinetic_identity_integral_residual: float = math.nan
    C_f_upper: float = math.nan
    c_f_lower: float = math.nan
    C_r_fit: float = math.nan
    rate_window: tuple = (math.nan, math.nan)
    t_rad_empirical: float = math.nan
    arclength_final: float = math.nan
    weighted_increasing: bool = False
    decade_arclength: list = field(default_factory=list)
    weighted_partials: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    _SCALARS = (
        "kappa", "kappa_std", "torque_residual_max", "momentum_flatness", "tangential_residual_max",
        "energy_violation_max", "energy_bound_ratio", "kinetic_identity_residual",
        "kinetic_identity_integral_residual", "C_f_upper", "c_f_lower", "C_r_fit",
        "t_rad_empirical", "arclength_final",
    )

    def to_keyvalue(self):
        """Flat ``key=value`` block, one entry per line."""
        lines = [f"{k}={_fmt(getattr(self, k))}" for k in self._SCALARS]
        lines.append(f"rate_window={_fmt(self.rate_window[0])},{_fmt(self.rate_window[1])}")
        lines.append(f"weighted_increasing={str(self.weighted_increasing).lower()}")
        for note in self.notes:
            lines.append(f"note={note}")
        return "\n".join(lines) + "\n"

    def tables(self):
        """Tab-separated tables for the list-valued fields, keyed by name."""
        arc = ["k\tincrement\tincrement_x_log10k\tincrement_x_k"]
        arc += [f"{r.k}\t{_fmt(r.increment)}\t{_fmt(r.scaled_log)}\t{_fmt(r.scaled_k)}"
                for r in self.decade_arclength]
        wt = ["k\tweighted_f\tweighted_v2"]
        wt += [f"{r.k}\t{_fmt(r.weighted_f)}\t{_fmt(r.weighted_v2)}" for r in self.weighted_partials]
        return {"decade_arclength": "\n".join(arc) + "\n", "weighted_partials": "\n".join(wt) + "\n"}

    def as_dict(self):
        return asdict(self)


def _fmt(x):
    if isinstance(x, (int, np.integer)) and not isinstance(x, bool):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return "nan"
    return f"{x:.11e}"


def diagnose(traj, spec, X0=None, rate_window=(1e2, math.inf)):
    """Run every applicable check on ``traj`` and collect a :class:`DiagnosticsReport`."""
    rep = DiagnosticsReport()
    planar = traj.X.shape[1] == 2
    rep.arclength_final = float(traj.arclength[-1])
    if traj.segment is not None and np.all(traj.segment == "gradient"):
        rep.decade_arclength = decade_arclength_table(traj)
        rep.notes.append("gradient flow: momentum, energy and rate checks apply to the Nesterov flow only")
        return rep
    viol, ratio = energy_violation(traj, spec, X0=X0)
    rep.energy_violation_max = viol
    rep.energy_bound_ratio = ratio
    if len(traj) >= 3:
        rep.kinetic_identity_residual = kinetic_identity_residual(traj, spec)
    rep.kinetic_identity_integral_residual = kinetic_identity_integral_residual(traj, spec)
    try:
        rates = rate_fit(traj, spec, *rate_window)
        rep.C_f_upper, rep.c_f_lower, rep.C_r_fit = rates.C_f_upper, rates.c_f_lower, rates.C_r_fit
        rep.rate_window = rates.window
    except InsufficientSpan as exc:
        rep.notes.append(str(exc))
    rep.decade_arclength = decade_arclength_table(traj)
    rep.weighted_partials = weighted_divergence_table(traj)
    rep.weighted_increasing = _strictly_increasing([r.weighted_f for r in rep.weighted_partials]) and \
        _strictly_increasing([r.weighted_v2 for r in rep.weighted_partials])
    if not planar or spec.kind != PATHOLOGICAL:
        rep.notes.append("angular-momentum checks apply to the pathological potential only")
        return rep
    rep.torque_residual_max, rep.kappa = torque_balance(traj, spec.eps, spec.a)
    t_rad = t_rad_empirical(traj, spec.a)
    if t_rad is None:
        rep.notes.append("orbit not inside the radial disk at the final sample")
        return rep
    rep.t_rad_empirical = t_rad
    post = traj.t >= t_rad
    tj = _scaled_momentum(traj)[post]
    rep.kappa_std = float(np.std(tj))
    rep.momentum_flatness = momentum_flatness(traj, t_rad)
    if rep.kappa > 0:
        rep.tangential_residual_max = tangential_speed_residual(traj, rep.kappa, t_from=t_rad)
    return rep
