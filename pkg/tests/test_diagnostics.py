import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nesterov_lab.diagnostics import (
    DiagnosticsReport,
    InsufficientSpan,
    angular_momentum,
    decade_arclength_table,
    decade_minima,
    diagnose,
    energy_violation,
    kinetic_identity_integral_residual,
    kinetic_identity_residual,
    lyapunov_energy,
    lyapunov_series,
    momentum_flatness,
    rate_fit,
    rate_fit_values,
    tangential_speed_residual,
    torque_balance,
    weighted_divergence_table,
)
from nesterov_lab.flow import FlowState, IntegratorConfig, Trajectory, integrate_nesterov
from nesterov_lab.potential import DomainError, PotentialSpec

FIG2 = PotentialSpec.pathological()
QUAD = PotentialSpec.quadratic(lambdas=[1.0])


def synthetic(t, X, V, arc=None):
    n = t.size
    z = np.zeros(n)
    return Trajectory(t, X, V, z if arc is None else arc, z, z, z)


@pytest.fixture(scope="module")
def fig2_short():
    return integrate_nesterov(FIG2, (0.04, 0.02), IntegratorConfig(t_end=20.0, abs_tol=1e-16))


@pytest.fixture(scope="module")
def quad_long():
    return integrate_nesterov(QUAD, [1.0], IntegratorConfig(t_end=1e3, abs_tol=1e-16))


@settings(max_examples=100, deadline=None)
@given(st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10), st.floats(-10, 10), st.floats(-math.pi, math.pi))
def test_angular_momentum_rotation_invariant(x1, x2, v1, v2, phi):
    c, s = math.cos(phi), math.sin(phi)
    R = np.array([[c, -s], [s, c]])
    X, V = np.array([x1, x2]), np.array([v1, v2])
    assert angular_momentum((R @ X, R @ V)) == pytest.approx(angular_momentum((X, V)), abs=1e-10)


def test_angular_momentum_state_and_errors():
    s = FlowState(1.0, np.array([1.0, 0.0]), np.array([0.0, 2.0]))
    assert angular_momentum(s) == 2.0
    with pytest.raises(DomainError):
        angular_momentum((np.ones(3), np.ones(3)))


def test_circular_orbit_flatness_and_tangential_speed():
    # X = r(t) (cos w, sin w) with t^3 r^2 w' = kappa exactly
    t = np.geomspace(1.0, 10.0, 200)
    kappa = 2.0
    r = 1.0 / t
    w = kappa * np.log(t)  # w' = kappa / t = kappa / (t^3 r^2)
    X = np.column_stack([r * np.cos(w), r * np.sin(w)])
    rdot = -1.0 / t ** 2
    V = np.column_stack([rdot * np.cos(w) - r * kappa / t * np.sin(w),
                         rdot * np.sin(w) + r * kappa / t * np.cos(w)])
    tr = synthetic(t, X, V)
    assert momentum_flatness(tr, 1.0) < 1e-13
    assert tangential_speed_residual(tr, kappa) < 1e-13
    with pytest.raises(DomainError):
        tangential_speed_residual(tr, 0.0)
    with pytest.raises(DomainError):
        momentum_flatness(tr, 100.0)


def test_torque_balance_on_run(fig2_short):
    gap, kappa = torque_balance(fig2_short, 50.0, 0.02)
    assert gap < 1e-9
    assert kappa == pytest.approx(4.2051e-05, rel=1e-4)


def test_lyapunov_energy_at_start(fig2_short):
    E = lyapunov_series(fig2_short, FIG2)
    assert E[0] == pytest.approx(0.004, rel=1e-9)
    assert lyapunov_energy(fig2_short[0], FIG2) == pytest.approx(E[0], rel=1e-15)
    viol, ratio = energy_violation(fig2_short, FIG2, X0=(0.04, 0.02))
    assert viol <= 1e-9 and ratio <= 1.0 + 1e-9


def test_energy_violation_detects_a_rise():
    t = np.array([1.0, 2.0, 3.0])
    X = np.array([[1.0, 0.0], [0.5, 0.0], [1.0, 0.0]])
    V = np.zeros((3, 2))
    viol, ratio = energy_violation(synthetic(t, X, V), PotentialSpec.pure_radial(), X0=(1.0, 0.0))
    assert viol > 0.1 and ratio > 1.0


def test_kinetic_identity_on_quadratic(quad_long):
    assert kinetic_identity_residual(quad_long, QUAD) < 1e-4
    assert kinetic_identity_integral_residual(quad_long, QUAD) < 1e-9


def test_kinetic_identity_on_pathological(fig2_short):
    assert kinetic_identity_integral_residual(fig2_short, FIG2) < 1e-8


def test_rate_fit_on_known_envelope():
    t = np.geomspace(10.0, 1e4, 500)
    f = 3.0 / (t * t * np.log(t))
    rates = rate_fit_values(t, f, r=np.log(t) / t ** 2)
    assert rates.c_f_lower == pytest.approx(3.0, rel=1e-12)
    assert rates.C_f_upper == pytest.approx(3.0 / math.log(10.0), rel=1e-12)
    assert rates.C_r_fit == pytest.approx(1.0, rel=1e-12)
    assert rates.window == (10.0, 1e4)


def test_rate_fit_needs_two_decades(fig2_short):
    with pytest.raises(InsufficientSpan, match="insufficient span"):
        rate_fit(fig2_short, FIG2)
    with pytest.raises(InsufficientSpan):
        rate_fit_values(np.geomspace(1.0, 9.0, 10), np.ones(10))


def test_decade_tables_on_linear_arclength():
    t = np.geomspace(1.0, 1e3, 301)
    arc = np.log10(t)
    z = np.zeros((t.size, 2))
    tr = Trajectory(t, z, z, arc, arc * 0, arc * 2, arc * 3)
    rows = decade_arclength_table(tr)
    assert [r.k for r in rows] == [0, 1, 2]
    for r in rows:
        assert r.increment == pytest.approx(1.0, rel=1e-12)
        assert r.scaled_k == pytest.approx(r.k, rel=1e-12)
    wt = weighted_divergence_table(tr)
    assert [w.k for w in wt] == [0, 1, 2, 3]
    assert wt[-1].weighted_v2 == pytest.approx(9.0, rel=1e-12)


def test_quadratic_arclength_increments_decay(quad_long):
    rows = decade_arclength_table(quad_long)
    inc = [r.increment for r in rows]
    assert all(b <= 0.5 * a for a, b in zip(inc, inc[1:]))


def test_decade_minima(quad_long):
    mins = decade_minima(quad_long, QUAD, 1, 2)
    assert [k for k, _ in mins] == [1, 2]


def test_diagnose_quadratic(quad_long):
    rep = diagnose(quad_long, QUAD)
    assert math.isnan(rep.kappa)
    assert any("pathological" in n for n in rep.notes)
    assert rep.energy_bound_ratio <= 1 + 1e-9


def test_diagnose_zero_eps_reports_zero_kappa():
    spec = PotentialSpec.pathological(0.02, 0.0)
    tr = integrate_nesterov(spec, (0.04, 0.02), IntegratorConfig(t_end=20.0))
    rep = diagnose(tr, spec)
    assert abs(rep.kappa) <= 1e-10
    assert abs(rep.kappa_std) <= 1e-10 or math.isnan(rep.kappa_std)


def test_report_formats(fig2_short):
    rep = diagnose(fig2_short, FIG2, X0=(0.04, 0.02))
    text = rep.to_keyvalue()
    keys = [line.split("=", 1)[0] for line in text.splitlines()]
    assert keys[: len(DiagnosticsReport._SCALARS)] == list(DiagnosticsReport._SCALARS)
    for line in text.splitlines():
        k, v = line.split("=", 1)
        if k in DiagnosticsReport._SCALARS and v != "nan":
            assert len(v.split("e")[0].replace("-", "").replace(".", "")) == 12
    tabs = rep.tables()
    assert tabs["decade_arclength"].startswith("k\tincrement\t")
    assert rep.as_dict()["kappa"] == rep.kappa


def test_torque_integral_nondecreasing_on_canonical_start(fig2_short):
    # recorded empirically: x2 stays positive while the one-sided term is active
    assert np.all(np.diff(fig2_short.torque_integral) >= 0)
    assert fig2_short.torque_integral[-1] > 0
