"""Critical-damping Nesterov flow on a convex potential whose trajectory spirals with infinite length.

Modules:

* ``potential``    radial profile, one-sided quadratic and composite potentials
* ``flow``         compiled adaptive Runge-Kutta integration of the flows
* ``averaged``     orbit-averaged continuation for very long horizons
* ``longrun``      composite Cartesian / polar / averaged runs
* ``diagnostics``  conservation, monotonicity and rate checks on trajectories
* ``oracles``      closed forms and reduced problems used as ground truth
* ``tables``, ``cli``  TSV output and the command-line front end
"""
from .diagnostics import DiagnosticsReport, diagnose
from .flow import (
    FlowState,
    IntegrationError,
    IntegratorConfig,
    Marker,
    Trajectory,
    integrate_gradient_flow,
    integrate_nesterov,
    integrate_polar_nesterov,
)
from .longrun import integrate_long_horizon
from .potential import DomainError, PotentialSpec, gradient, parse_potential, value

__all__ = [
    "DiagnosticsReport",
    "DomainError",
    "FlowState",
    "IntegrationError",
    "IntegratorConfig",
    "Marker",
    "PotentialSpec",
    "Trajectory",
    "diagnose",
    "gradient",
    "integrate_gradient_flow",
    "integrate_long_horizon",
    "integrate_nesterov",
    "integrate_polar_nesterov",
    "parse_potential",
    "value",
]

__version__ = "0.1.0"
