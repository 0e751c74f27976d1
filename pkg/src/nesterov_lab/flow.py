"""Integrators for the critical Nesterov flow and the gradient flow.

The Nesterov flow ``x'' + (3/t) x' + grad f(x) = 0`` starts from rest, so the
friction term is singular at ``t = 0``.  Integration therefore begins at a
small handoff time ``t0`` seeded by the series solution
``X(t) = X0 - t**2 grad f(X0) / 8``.  Path length, the torque integral and
the two weighted integrals ``int t f dt`` and ``int t |V|^2 dt`` ride along
inside the RK state so they share its error control.

Inside the radial disk the angular momentum ``t**3 det(X, V)`` is constant,
and :func:`integrate_polar_nesterov` continues the flow in polar form with
that constant built in.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels as kn
from . import _rk
from .potential import PATHOLOGICAL, PURE_RADIAL, QUADRATIC, DomainError, gradient, value

__all__ = [
    "FlowState",
    "IntegratorConfig",
    "Marker",
    "Trajectory",
    "IntegrationError",
    "StepUnderflow",
    "NonFinite",
    "HorizonNotReached",
    "RadiusCollapse",
    "log_schedule",
    "small_time_expansion",
    "integrate_nesterov",
    "integrate_gradient_flow",
    "integrate_polar_nesterov",
    "estimate_kappa",
    "empirical_t_rad",
]

RADIAL_ENTRY = "RadialEntry"
RADIAL_EXIT = "RadialExit"
SEAM_R = "SeamCross_r"
SEAM_PSI = "SeamCross_psi"
MINIMIZER_REACHED = "MinimizerReached"
SIGN_CHANGE = "SignChange"


class IntegrationError(RuntimeError):
    """Integration aborted; ``trajectory`` holds the samples computed so far."""

    tag = "IntegrationError"

    def __init__(self, message, trajectory=None):
        super().__init__(f"{self.tag}: {message}")
        self.trajectory = trajectory


class StepUnderflow(IntegrationError):
    tag = "StepUnderflow"


class NonFinite(IntegrationError):
    tag = "NonFinite"


class HorizonNotReached(IntegrationError):
    tag = "HorizonNotReached"


class RadiusCollapse(IntegrationError):
    tag = "RadiusCollapse"


@dataclass(frozen=True)
class FlowState:
    t: float
    X: np.ndarray
    V: np.ndarray
    arclength: float = 0.0
    torque_integral: float = 0.0
    weighted_f: float = 0.0
    weighted_v2: float = 0.0


@dataclass(frozen=True)
class Marker:
    time: float
    kind: str


@dataclass(frozen=True)
class IntegratorConfig:
    """Tolerances, horizon and output grid for one integration.

    ``samples_per_decade`` builds a log-uniform grid on ``[t0, t_end]`` that
    contains every power of ten in range; ``sample_times`` overrides it.
    ``orbit_ds`` adds checkpoints every ``orbit_ds`` of path length.
    """

    t0: float = 1e-6
    t_end: float = 1e3
    rtol: float = 1e-10
    abs_tol: float = 1e-12
    max_step: float = math.inf
    initial_step: float | None = None
    samples_per_decade: int = 400
    sample_times: tuple | None = None
    max_steps: int = 2_000_000_000
    orbit_ds: float | None = None
    stop_radius: float = 1e-12

    def __post_init__(self):
        if not (self.t0 >= 0 and self.t_end > self.t0):
            raise DomainError("need 0 <= t0 < t_end")
        if not (self.rtol > 0 and self.abs_tol > 0):
            raise DomainError("tolerances must be positive")
        if not self.max_step > 0:
            raise DomainError("max_step must be positive")
        if self.samples_per_decade < 1:
            raise DomainError("samples_per_decade must be >= 1")

    def with_(self, **changes):
        return replace(self, **changes)


def log_schedule(t0, t_end, per_decade):
    """Log-uniform times in ``[t0, t_end]`` including every power of ten in range."""
    lo = math.log10(t0) if t0 > 0 else math.log10(t_end) - 8
    k0 = math.ceil(lo * per_decade - 1e-9)
    k1 = math.floor(math.log10(t_end) * per_decade + 1e-9)
    ks = np.arange(k0, k1 + 1)
    # powers of ten are parsed from text so they equal the decimal literal exactly
    times = np.array([10.0 ** (k / per_decade) if k % per_decade else float(f"1e{k // per_decade}")
                      for k in ks])
    times = times[(times > t0) & (times < t_end)]
    return np.concatenate([[t0], times, [t_end]])


def _sample_grid(cfg):
    if cfg.sample_times is not None:
        times = np.unique(np.asarray(cfg.sample_times, dtype=float))
        times = times[(times >= cfg.t0) & (times <= cfg.t_end)]
        if times.size == 0 or times[0] > cfg.t0:
            times = np.concatenate([[cfg.t0], times])
        if times[-1] < cfg.t_end:
            times = np.concatenate([times, [cfg.t_end]])
        return times
    return log_schedule(cfg.t0, cfg.t_end, cfg.samples_per_decade)


@dataclass
class Trajectory:
    """Time-ordered samples of a flow plus event markers.

    Arrays are indexed by sample.  ``segment`` labels the method that
    produced each sample (``cartesian``, ``polar``, ``averaged``,
    ``gradient`` or ``closed_form``).  ``orbit_t``/``orbit_X`` hold optional
    path-length checkpoints used for smooth orbit plots.
    """

    t: np.ndarray
    X: np.ndarray
    V: np.ndarray
    arclength: np.ndarray
    torque_integral: np.ndarray
    weighted_f: np.ndarray
    weighted_v2: np.ndarray
    markers: list = field(default_factory=list)
    segment: np.ndarray | None = None
    orbit_t: np.ndarray | None = None
    orbit_X: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.segment is None:
            self.segment = np.full(self.t.size, "cartesian", dtype=object)
        if self.orbit_t is None:
            self.orbit_t = np.empty(0)
            self.orbit_X = np.empty((0, self.X.shape[1] if self.X.ndim == 2 else 2))

    def __len__(self):
        return self.t.size

    def __getitem__(self, i):
        return FlowState(
            float(self.t[i]), self.X[i].copy(), self.V[i].copy(), float(self.arclength[i]),
            float(self.torque_integral[i]), float(self.weighted_f[i]), float(self.weighted_v2[i]),
        )

    @property
    def final(self):
        return self[len(self) - 1]

    @property
    def radius(self):
        return np.linalg.norm(self.X, axis=1)

    @property
    def angular_momentum(self):
        return self.X[:, 0] * self.V[:, 1] - self.X[:, 1] * self.V[:, 0]

    def markers_of(self, kind):
        return [m.time for m in self.markers if m.kind == kind]

    def select(self, mask):
        mask = np.asarray(mask)
        return Trajectory(
            self.t[mask], self.X[mask], self.V[mask], self.arclength[mask],
            self.torque_integral[mask], self.weighted_f[mask], self.weighted_v2[mask],
            markers=list(self.markers), segment=self.segment[mask],
            orbit_t=self.orbit_t, orbit_X=self.orbit_X, info=dict(self.info),
        )

    def window(self, t_lo=-math.inf, t_hi=math.inf):
        return self.select((self.t >= t_lo) & (self.t <= t_hi))

    def concat(self, other):
        """Append ``other``, dropping its first sample if it repeats our last time."""
        start = 1 if other.t.size and self.t.size and other.t[0] <= self.t[-1] else 0
        cat = lambda a, b: np.concatenate([a, b[start:]])
        info = dict(self.info)
        info.update(other.info)
        return Trajectory(
            cat(self.t, other.t), cat(self.X, other.X), cat(self.V, other.V),
            cat(self.arclength, other.arclength), cat(self.torque_integral, other.torque_integral),
            cat(self.weighted_f, other.weighted_f), cat(self.weighted_v2, other.weighted_v2),
            markers=sorted(self.markers + other.markers, key=lambda m: m.time),
            segment=cat(self.segment, other.segment),
            orbit_t=np.concatenate([self.orbit_t, other.orbit_t]),
            orbit_X=np.concatenate([self.orbit_X, other.orbit_X]),
            info=info,
        )


def _params(spec, stop_radius=-1.0):
    d = spec.dim
    p = np.zeros(4 + d * d + 1)
    p[0] = kn.KIND_CODES[spec.kind]
    p[1] = d
    if spec.kind == PATHOLOGICAL:
        p[2] = spec.a
        p[3] = spec.eps
    if spec.kind == QUADRATIC:
        p[4:4 + d * d] = spec.Q.ravel()
    p[-1] = stop_radius
    return p


def _as_point(spec, X0):
    X0 = np.array(X0, dtype=float).ravel()
    if X0.size != spec.dim:
        raise DomainError(f"X0 must have dimension {spec.dim}")
    return X0


_EVENT_BUFFER = 65536


def _drive(rhs, events, p, y0, times, cfg, terminal, precise, arc_idx=-1, t_start=None):
    """Run the compiled stepper across ``times``; returns raw sample arrays.

    The first entry of ``times`` is the initial time of ``y0``.
    """
    y = np.array(y0, dtype=float)
    n = y.size
    t = float(times[0]) if t_start is None else t_start
    f = np.empty(n)
    rhs(t, y, p, f)
    if cfg.initial_step is not None:
        h = float(cfg.initial_step)
    else:
        h = _rk.initial_step(rhs, p, t, y, f, cfg.rtol, cfg.abs_tol, min(cfg.max_step, 1e300))
    hmax = min(cfg.max_step, 1e300)
    err_old = 1e-4
    arc_ds = cfg.orbit_ds if (cfg.orbit_ds and arc_idx >= 0) else 0.0
    arc_on = arc_idx if arc_ds > 0 else -1
    arc_next = (y[arc_idx] + arc_ds) if arc_ds > 0 else math.inf
    ev_t = np.empty(_EVENT_BUFFER)
    ev_kind = np.empty(_EVENT_BUFFER, dtype=np.int64)
    ev_sign = np.empty(_EVENT_BUFFER, dtype=np.int64)
    ev_y = np.empty((_EVENT_BUFFER, n))
    out_t = [t]
    out_y = [y.copy()]
    events_out = []
    arcs_t = []
    arcs_y = []
    nsteps = 0
    nreject = 0
    status = _rk.OK
    for target in times[1:]:
        while True:
            steps_left = max(cfg.max_steps - nsteps, 0)
            (status, t, h, err_old, ns, nr, arc_next, count) = _rk.advance(
                rhs, events, p, t, y, f, h, float(target), cfg.rtol, cfg.abs_tol, hmax,
                err_old, steps_left, terminal, precise, arc_on, arc_ds, arc_next,
                ev_t, ev_kind, ev_sign, ev_y, 0,
            )
            nsteps += ns
            nreject += nr
            for i in range(count):
                if ev_kind[i] < 0:
                    arcs_t.append(ev_t[i])
                    arcs_y.append(ev_y[i].copy())
                else:
                    events_out.append((ev_t[i], int(ev_kind[i]), int(ev_sign[i]), ev_y[i].copy()))
            if status != _rk.BUFFER_FULL:
                break
        if status == _rk.OK:
            out_t.append(t)
            out_y.append(y.copy())
            continue
        if status == _rk.TERMINAL:
            out_t.append(t)
            out_y.append(y.copy())
        break
    if status == _rk.MAX_STEPS:
        status_tag = "HorizonNotReached"
    else:
        status_tag = {_rk.OK: "ok", _rk.TERMINAL: "terminal", _rk.STEP_UNDERFLOW: "StepUnderflow",
                      _rk.NON_FINITE: "NonFinite"}[status]
    t_final = out_t[-1]
    events_out = [e for e in events_out if e[0] <= t_final]
    arcs = [(a, b) for a, b in zip(arcs_t, arcs_y) if a <= t_final]
    return {
        "t": np.array(out_t),
        "y": np.array(out_y),
        "events": events_out,
        "arc_t": np.array([a for a, _ in arcs]),
        "arc_y": np.array([b for _, b in arcs]).reshape(len(arcs), n),
        "status": status_tag,
        "t_reached": t,
        "nsteps": nsteps,
        "nreject": nreject,
    }


_ERRORS = {
    "StepUnderflow": StepUnderflow,
    "NonFinite": NonFinite,
    "HorizonNotReached": HorizonNotReached,
}


def _raise_on_failure(raw, traj):
    cls = _ERRORS.get(raw["status"])
    if cls is not None:
        raise cls(f"stopped at t={raw['t_reached']:.6g} after {raw['nsteps']} steps", traj)


def _cartesian_markers(raw):
    names = {0: (RADIAL_ENTRY, RADIAL_EXIT), 1: (SEAM_R, SEAM_R), 2: (SEAM_PSI, SEAM_PSI),
             3: (MINIMIZER_REACHED, MINIMIZER_REACHED)}
    markers = []
    for t, k, sign, _ in raw["events"]:
        inward, outward = names[k]
        markers.append(Marker(float(t), inward if sign < 0 else outward))
    return markers


def small_time_expansion(spec, X0, t0):
    """Series start for the flow from rest: state at ``t0`` to second order.

    ``X(t0) = X0 - t0**2 g / 8`` and ``V(t0) = -t0 g / 4`` with
    ``g = grad f(X0)``.  The accumulators are the integrals of the same
    quadratic model from 0 to ``t0``.
    """
    X0 = _as_point(spec, X0)
    if not t0 > 0:
        raise DomainError("t0 must be positive")
    g = gradient(spec, X0)
    gn = float(np.linalg.norm(g))
    X = X0 - t0 * t0 * g / 8.0
    V = -t0 * g / 4.0
    torque = 0.0
    if spec.kind == PATHOLOGICAL and spec.eps > 0:
        torque = spec.eps * X0[1] * max(X0[0] - spec.a, 0.0) * t0 ** 4 / 4.0
    return FlowState(
        t=float(t0), X=X, V=V,
        arclength=t0 * t0 * gn / 8.0,
        torque_integral=torque,
        weighted_f=float(value(spec, X0)) * t0 * t0 / 2.0,
        weighted_v2=t0 ** 4 * gn * gn / 64.0,
    )


def _state_vector(s):
    return np.concatenate([s.X, s.V, [s.arclength, s.torque_integral, s.weighted_f, s.weighted_v2]])


def _unpack_nesterov(y, d):
    return y[:, :d], y[:, d:2 * d], y[:, 2 * d], y[:, 2 * d + 1], y[:, 2 * d + 2], y[:, 2 * d + 3]


def _event_setup(spec):
    if spec.kind == QUADRATIC:
        return kn.no_events, np.zeros(0, dtype=np.bool_), np.zeros(0, dtype=np.bool_)
    terminal = np.array([False, False, False, False])
    precise = np.array([True, True, True, True])
    return kn.cartesian_events, terminal, precise


def integrate_nesterov(spec, X0, cfg=IntegratorConfig(), start=None):
    """Integrate the critical Nesterov flow from rest at ``X0``.

    Starts from :func:`small_time_expansion` at ``cfg.t0`` unless a
    ``start`` state is given.  Returns a :class:`Trajectory` sampled on the
    configured grid; on failure raises an :class:`IntegrationError` whose
    ``trajectory`` attribute holds the partial result.
    """
    X0 = _as_point(spec, X0)
    if not cfg.t0 > 0:
        raise DomainError("the Nesterov flow needs t0 > 0")
    d = spec.dim
    s0 = start if start is not None else small_time_expansion(spec, X0, cfg.t0)
    times = _sample_grid(cfg.with_(t0=s0.t))
    p = _params(spec)
    events, terminal, precise = _event_setup(spec)
    rhs = kn.nesterov_quadratic_rhs if spec.kind == QUADRATIC else kn.nesterov_rhs
    raw = _drive(rhs, events, p, _state_vector(s0), times, cfg, terminal, precise, arc_idx=2 * d)
    X, V, arc, tq, wf, wv = _unpack_nesterov(raw["y"], d)
    traj = Trajectory(raw["t"], X, V, arc, tq, wf, wv, markers=_cartesian_markers(raw),
                      orbit_t=raw["arc_t"], orbit_X=raw["arc_y"][:, :d].copy())
    traj.info.update(nsteps=raw["nsteps"], nreject=raw["nreject"], status=raw["status"],
                     flow="nesterov", X0=X0)
    _raise_on_failure(raw, traj)
    return traj


def integrate_gradient_flow(spec, X0, cfg=IntegratorConfig(t0=0.0, t_end=10.0)):
    """Integrate ``X' = -grad f(X)``; stops with ``MinimizerReached`` at ``cfg.stop_radius``.

    The ``V`` samples hold ``-grad f(X)``.
    """
    X0 = _as_point(spec, X0)
    d = spec.dim
    times = _sample_grid(cfg)
    p = _params(spec, stop_radius=cfg.stop_radius)
    events, terminal, precise = _event_setup(spec)
    if terminal.size:
        terminal = terminal.copy()
        terminal[3] = True
    y0 = np.concatenate([X0, [0.0, 0.0, 0.0, 0.0]])
    raw = _drive(kn.gradient_flow_rhs, events, p, y0, times, cfg, terminal, precise, arc_idx=d)
    y = raw["y"]
    X = y[:, :d]
    V = -gradient(spec, X)
    traj = Trajectory(raw["t"], X, V, y[:, d], y[:, d + 1], y[:, d + 2], y[:, d + 3],
                      markers=_cartesian_markers(raw), segment=np.full(len(raw["t"]), "gradient", dtype=object),
                      orbit_t=raw["arc_t"], orbit_X=raw["arc_y"][:, :d].copy())
    traj.info.update(nsteps=raw["nsteps"], nreject=raw["nreject"], status=raw["status"],
                     flow="gradient", X0=X0)
    if raw["status"] == "terminal":
        traj.info["hit_time"] = float(raw["t"][-1])
    _raise_on_failure(raw, traj)
    return traj


def integrate_polar_nesterov(kappa, handoff, cfg, a=math.inf):
    """Continue a flow inside the radial disk in polar coordinates.

    Integrates ``r'' + (3/t) r' + F'(r) = kappa**2 / (t**6 r**3)`` with
    ``theta' = kappa / (t**3 r**2)``, so ``t**3 det(X, V) = kappa`` holds by
    construction.  ``handoff`` supplies the starting state; ``cfg.t_end`` the
    horizon.  Cartesian samples are rebuilt from ``(r, theta)``.

    Raises
    ------
    RadiusCollapse
        If ``r`` drops below ``1e-14``.
    """
    X = np.asarray(handoff.X, dtype=float)
    V = np.asarray(handoff.V, dtype=float)
    r0 = float(np.hypot(*X))
    if not r0 > 0:
        raise DomainError("polar handoff needs X != 0")
    t_start = float(handoff.t)
    rdot0 = float(X @ V) / r0
    theta0 = math.atan2(X[1], X[0])
    y0 = np.array([r0, rdot0, theta0, handoff.arclength, handoff.torque_integral,
                   handoff.weighted_f, handoff.weighted_v2])
    times = _sample_grid(cfg.with_(t0=t_start))
    p = np.array([float(kappa), float(a), 1e-14])
    terminal = np.array([False, False, True])
    precise = np.array([True, True, True])
    raw = _drive(kn.polar_rhs, kn.polar_events, p, y0, times, cfg, terminal, precise, arc_idx=3)
    y = raw["y"]
    t = raw["t"]
    traj = _polar_to_trajectory(t, y, kappa)
    markers = []
    for te, k, sign, _ in raw["events"]:
        if k == 0:
            markers.append(Marker(float(te), RADIAL_ENTRY if sign < 0 else RADIAL_EXIT))
        elif k == 1:
            markers.append(Marker(float(te), SEAM_R))
    traj.markers = markers
    if raw["arc_t"].size:
        ya = raw["arc_y"]
        traj.orbit_t = raw["arc_t"]
        traj.orbit_X = np.column_stack([ya[:, 0] * np.cos(ya[:, 2]), ya[:, 0] * np.sin(ya[:, 2])])
    traj.info.update(nsteps=raw["nsteps"], nreject=raw["nreject"], status=raw["status"],
                     kappa=float(kappa))
    if raw["status"] == "terminal":
        raise RadiusCollapse(f"r < 1e-14 at t={t[-1]:.6g}", traj)
    _raise_on_failure(raw, traj)
    return traj


def _polar_to_trajectory(t, y, kappa):
    r, rdot, theta = y[:, 0], y[:, 1], y[:, 2]
    c, s = np.cos(theta), np.sin(theta)
    vt = kappa / (t ** 3 * r)
    X = np.column_stack([r * c, r * s])
    V = np.column_stack([rdot * c - vt * s, rdot * s + vt * c])
    traj = Trajectory(t, X, V, y[:, 3], y[:, 4], y[:, 5], y[:, 6],
                      segment=np.full(t.size, "polar", dtype=object))
    traj.info["theta"] = theta.copy()
    return traj


def empirical_t_rad(traj, a):
    """Last entry time into the disk ``|x| <= a`` with no later exit.

    Uses the located ``RadialEntry``/``RadialExit`` markers; falls back to
    sample radii when the run started inside the disk.  Returns ``None`` if
    the trajectory is outside the disk at its end.
    """
    if traj.radius[-1] > a:
        return None
    entries = traj.markers_of(RADIAL_ENTRY)
    exits = traj.markers_of(RADIAL_EXIT)
    last_exit = max(exits) if exits else -math.inf
    later = [t for t in entries if t >= last_exit]
    if later:
        return float(max(later))
    outside = np.nonzero(traj.radius > a)[0]
    if outside.size == 0:
        return float(traj.t[0])
    return float(traj.t[min(outside[-1] + 1, len(traj) - 1)])


def estimate_kappa(traj, t_handoff=None, decades=1.0):
    """Mean and standard deviation of ``t**3 det(X, V)`` over the last decade before handoff."""
    t_handoff = traj.t[-1] if t_handoff is None else t_handoff
    w = (traj.t <= t_handoff) & (traj.t >= t_handoff / 10 ** decades)
    vals = traj.t[w] ** 3 * traj.angular_momentum[w]
    if vals.size == 0:
        raise DomainError("no samples in the estimation window")
    return float(np.mean(vals)), float(np.std(vals))
