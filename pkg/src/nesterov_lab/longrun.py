"""Composite long-horizon runs: Cartesian, then polar, then orbit-averaged.

The Cartesian leg carries the flow through the phase where the one-sided
quadratic is active.  Once the orbit is trapped in the radial disk the
angular momentum constant ``kappa`` is estimated, the polar leg takes over
(exact conservation by construction), and from ``averaged_from`` on the
orbit-averaged leg advances the slow quantities.
"""
from __future__ import annotations

import math
import time

from .averaged import integrate_averaged_nesterov
from .flow import (
    IntegratorConfig,
    empirical_t_rad,
    estimate_kappa,
    integrate_nesterov,
    integrate_polar_nesterov,
)
from .potential import PATHOLOGICAL, PURE_RADIAL, DomainError

__all__ = ["integrate_long_horizon"]

# kappa must exceed its scatter by this factor before the reduced legs are used
KAPPA_SIGNIFICANCE = 10.0


def integrate_long_horizon(spec, X0, cfg=IntegratorConfig(), polar_handoff=1e2, averaged_from=1e3):
    """Integrate the Nesterov flow to ``cfg.t_end`` using the cheapest faithful method per leg.

    Falls back to a single Cartesian run when the potential is not radial
    near the origin, the horizon ends before ``polar_handoff``, or the orbit
    is not yet trapped (or carries no measurable angular momentum) at the
    handoff.  ``info`` records the legs, their wall times, ``kappa`` with its
    scatter and the empirical ``T_rad``.
    """
    if not (polar_handoff > cfg.t0 and averaged_from >= polar_handoff):
        raise DomainError("need t0 < polar_handoff <= averaged_from")
    if spec.kind not in (PATHOLOGICAL, PURE_RADIAL) or cfg.t_end <= polar_handoff:
        clock = time.perf_counter()
        traj = integrate_nesterov(spec, X0, cfg)
        traj.info["legs"] = [("cartesian", cfg.t0, cfg.t_end, time.perf_counter() - clock)]
        return traj

    a = spec.a if spec.kind == PATHOLOGICAL else math.inf
    clock = time.perf_counter()
    cart = integrate_nesterov(spec, X0, cfg.with_(t_end=polar_handoff))
    legs = [("cartesian", cfg.t0, polar_handoff, time.perf_counter() - clock)]
    t_rad = empirical_t_rad(cart, a)
    kappa, kappa_std = estimate_kappa(cart)
    trapped = t_rad is not None and t_rad <= polar_handoff / 10
    if not trapped or not abs(kappa) > KAPPA_SIGNIFICANCE * kappa_std or kappa <= 0:
        clock = time.perf_counter()
        rest = integrate_nesterov(spec, X0, cfg.with_(t0=polar_handoff), start=cart.final)
        traj = cart.concat(rest)
        legs.append(("cartesian", polar_handoff, cfg.t_end, time.perf_counter() - clock))
        traj.info.update(legs=legs, kappa=kappa, kappa_std=kappa_std, t_rad=t_rad,
                         reduced_legs="not used: orbit not trapped or kappa not significant")
        return traj

    traj = cart
    t_polar_end = min(averaged_from, cfg.t_end)
    if t_polar_end > polar_handoff:
        clock = time.perf_counter()
        polar = integrate_polar_nesterov(kappa, traj.final, cfg.with_(t0=polar_handoff, t_end=t_polar_end), a=a)
        legs.append(("polar", polar_handoff, t_polar_end, time.perf_counter() - clock))
        traj = traj.concat(polar)
    if cfg.t_end > t_polar_end:
        clock = time.perf_counter()
        averaged = integrate_averaged_nesterov(kappa, traj.final, cfg.with_(t0=t_polar_end), a=a)
        legs.append(("averaged", t_polar_end, cfg.t_end, time.perf_counter() - clock))
        traj = traj.concat(averaged)
    traj.info = dict(flow="nesterov", X0=cart.info["X0"], status="ok", legs=legs,
                     kappa=kappa, kappa_std=kappa_std, t_rad=t_rad,
                     nsteps=cart.info["nsteps"], nreject=cart.info["nreject"])
    return traj
