import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nesterov_lab.flow import (
    MINIMIZER_REACHED,
    RADIAL_ENTRY,
    RADIAL_EXIT,
    FlowState,
    HorizonNotReached,
    IntegratorConfig,
    NonFinite,
    StepUnderflow,
    Trajectory,
    empirical_t_rad,
    estimate_kappa,
    integrate_gradient_flow,
    integrate_nesterov,
    integrate_polar_nesterov,
    log_schedule,
    small_time_expansion,
)
from nesterov_lab.longrun import integrate_long_horizon
from nesterov_lab.oracles import QuadraticSpec, quadratic_nesterov_closed_form, radial_eps0_reduction
from nesterov_lab.potential import SEAM, DomainError, PotentialSpec, gradient

FIG2 = PotentialSpec.pathological(a=0.02, eps=50.0)
X0 = np.array([0.04, 0.02])
REF = IntegratorConfig(t_end=100.0, rtol=1e-10, abs_tol=1e-16)


@pytest.fixture(scope="module")
def fig2_to_100():
    return integrate_nesterov(FIG2, X0, REF)


@settings(max_examples=100, deadline=None)
@given(st.floats(1e-8, 1e2), st.floats(1.5, 1e4), st.integers(1, 50))
def test_log_schedule_properties(t0, ratio, per_decade):
    t_end = t0 * ratio
    ts = log_schedule(t0, t_end, per_decade)
    assert ts[0] == t0 and ts[-1] == t_end
    assert np.all(np.diff(ts) > 0)
    for k in range(math.ceil(math.log10(t0)), math.floor(math.log10(t_end)) + 1):
        if t0 < 10.0 ** k < t_end:
            assert 10.0 ** k in ts


def test_config_validation():
    with pytest.raises(DomainError):
        IntegratorConfig(t0=1.0, t_end=1.0)
    with pytest.raises(DomainError):
        IntegratorConfig(rtol=0.0)
    with pytest.raises(DomainError):
        IntegratorConfig(max_step=0.0)
    assert IntegratorConfig().with_(t_end=5.0).t_end == 5.0


def test_small_time_expansion_matches_quadratic_closed_form():
    spec = PotentialSpec.quadratic(lambdas=[1.0, 4.0])
    qs = QuadraticSpec.diagonal([1.0, 4.0], [1.0, 1.0])
    for t0 in (1e-6, 1e-3):
        s = small_time_expansion(spec, [1.0, 1.0], t0)
        X, V = quadratic_nesterov_closed_form(qs, t0)
        # the expansion drops terms of order lam**2 t**4 in X and lam**2 t**3 in V
        np.testing.assert_allclose(s.X, X, rtol=0, atol=16 * t0 ** 4 + 1e-16)
        np.testing.assert_allclose(s.V, V, rtol=0, atol=16 * t0 ** 3)


def test_small_time_expansion_pathological():
    s = small_time_expansion(FIG2, X0, 1e-6)
    g = gradient(FIG2, X0)
    np.testing.assert_allclose(s.X, X0 - 1e-12 * g / 8, rtol=1e-15)
    np.testing.assert_allclose(s.V, -1e-6 * g / 4, rtol=1e-9)


@pytest.mark.parametrize("lambdas,x0", [((1.0, 1.0), (1.0, 0.0)), ((1.0, 4.0), (1.0, 1.0)), ((0.0, 9.0), (0.3, -2.0))])
def test_quadratic_matches_closed_form(lambdas, x0):
    spec = PotentialSpec.quadratic(lambdas=lambdas)
    tr = integrate_nesterov(spec, x0, IntegratorConfig(t_end=50.0, abs_tol=1e-16))
    X, V = quadratic_nesterov_closed_form(QuadraticSpec.diagonal(lambdas, x0), tr.t)
    assert np.max(np.abs(X - tr.X)) <= 1e-6
    assert np.max(np.abs(V - tr.V)) <= 1e-6


def test_non_diagonal_quadratic_matches_closed_form():
    Q = np.array([[2.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 1.0]])
    spec = PotentialSpec.quadratic(Q=Q)
    tr = integrate_nesterov(spec, [1.0, -1.0, 0.5], IntegratorConfig(t_end=30.0))
    X, _ = quadratic_nesterov_closed_form(QuadraticSpec(Q, [1.0, -1.0, 0.5]), tr.t)
    assert np.max(np.abs(X - tr.X)) <= 1e-8


def test_trajectory_structure(fig2_to_100):
    tr = fig2_to_100
    assert np.all(np.diff(tr.t) > 0)
    assert tr.t[0] == REF.t0 and tr.t[-1] == REF.t_end
    assert all(REF.t0 <= m.time <= REF.t_end for m in tr.markers)
    assert np.all(np.diff(tr.arclength) >= 0)
    assert np.all(np.diff(tr.weighted_f) >= 0)
    assert np.all(np.diff(tr.weighted_v2) >= 0)
    for k in range(-5, 3):
        assert 10.0 ** k in tr.t
    kinds = {m.kind for m in tr.markers}
    assert {RADIAL_ENTRY, "SeamCross_psi"} <= kinds
    s = tr[5]
    assert isinstance(s, FlowState) and s.t == tr.t[5]


def test_deterministic_runs():
    cfg = IntegratorConfig(t_end=5.0)
    a = integrate_nesterov(FIG2, X0, cfg)
    b = integrate_nesterov(FIG2, X0, cfg)
    np.testing.assert_array_equal(a.X, b.X)
    np.testing.assert_array_equal(a.arclength, b.arclength)
    assert a.markers == b.markers


def test_orbit_checkpoints_are_spaced_in_arclength():
    tr = integrate_nesterov(FIG2, X0, IntegratorConfig(t_end=3.0, orbit_ds=1e-3))
    assert tr.orbit_t.size == int(tr.arclength[-1] / 1e-3)
    chords = np.linalg.norm(np.diff(tr.orbit_X, axis=0), axis=1)
    assert np.all(chords <= 1e-3 * (1 + 1e-6))
    assert np.mean(chords) == pytest.approx(1e-3, rel=5e-2)


def test_radial_entry_and_kappa(fig2_to_100):
    t_rad = empirical_t_rad(fig2_to_100, 0.02)
    assert t_rad == pytest.approx(0.5533955, abs=1e-6)
    kappa, std = estimate_kappa(fig2_to_100)
    assert kappa == pytest.approx(4.2051051e-05, rel=1e-6)
    assert kappa > 1e3 * std


def test_small_eps_kappa_matches_first_order_prediction():
    # two routes: planar integration at eps=1e-3 vs eps times the torque functional of the eps=0 ray
    eps = 1e-3
    tr = integrate_nesterov(PotentialSpec.pathological(0.02, eps), X0, REF)
    kappa, std = estimate_kappa(tr)
    ray = radial_eps0_reduction(0.02, IntegratorConfig(t_end=100.0))
    assert kappa == pytest.approx(eps * ray.torque_functional[-1], rel=1e-3)
    assert kappa > 0 and kappa > 1e3 * std


def test_zero_eps_has_no_angular_momentum():
    tr = integrate_nesterov(PotentialSpec.pathological(0.02, 0.0), X0, IntegratorConfig(t_end=10.0))
    assert np.max(np.abs(tr.t ** 3 * tr.angular_momentum)) < 1e-10
    np.testing.assert_allclose(tr.X[:, 0], 2 * tr.X[:, 1], atol=1e-15)


def test_polar_continuation_agrees_with_cartesian(fig2_to_100):
    h = fig2_to_100.final
    kappa = h.t ** 3 * (h.X[0] * h.V[1] - h.X[1] * h.V[0])
    cfg = REF.with_(t0=100.0, t_end=110.0, rtol=1e-12)
    cart = integrate_nesterov(FIG2, X0, cfg, start=fig2_to_100.final)
    pol = integrate_polar_nesterov(kappa, fig2_to_100.final, cfg, a=0.02)
    np.testing.assert_array_equal(cart.t, pol.t)
    rel = np.linalg.norm(cart.X - pol.X, axis=1) / np.linalg.norm(cart.X, axis=1)
    assert rel.max() < 1e-5
    np.testing.assert_allclose(pol.t ** 3 * pol.angular_momentum, kappa, rtol=1e-12)
    assert np.all(pol.segment == "polar")


def test_polar_rejects_bad_input(fig2_to_100):
    with pytest.raises(DomainError):
        integrate_polar_nesterov(1e-5, FlowState(100.0, np.zeros(2), np.ones(2)), REF.with_(t0=100.0, t_end=200.0))


def test_gradient_flow_finite_hit_time_and_length():
    spec = PotentialSpec.pure_radial()
    cfg = IntegratorConfig(t0=0.0, t_end=10.0, rtol=1e-12, abs_tol=1e-16)
    tr = integrate_gradient_flow(spec, [SEAM * 0.6, SEAM * 0.8], cfg)
    assert tr.markers[-1].kind == MINIMIZER_REACHED
    assert tr.info["hit_time"] == pytest.approx(3 * SEAM, abs=1e-9)
    assert tr.arclength[-1] == pytest.approx(SEAM, abs=1e-10)


def test_gradient_flow_pathological_stops_before_t_end():
    tr = integrate_gradient_flow(FIG2, X0, IntegratorConfig(t0=0.0, t_end=100.0))
    assert tr.markers_of(MINIMIZER_REACHED) and tr.t[-1] < 1.0
    assert np.all(tr.segment == "gradient")


def test_error_tags():
    with pytest.raises(HorizonNotReached) as err:
        integrate_nesterov(FIG2, X0, IntegratorConfig(t_end=100.0, max_steps=100))
    assert err.value.trajectory is not None and len(err.value.trajectory) > 1
    assert str(err.value).startswith("HorizonNotReached")
    with pytest.raises(StepUnderflow):
        integrate_nesterov(FIG2, X0, IntegratorConfig(t_end=100.0, rtol=1e-300, abs_tol=1e-300))
    with np.errstate(all="ignore"):
        with pytest.raises(NonFinite):
            integrate_nesterov(PotentialSpec.quadratic(lambdas=[1e308]), [1.0], IntegratorConfig(t_end=1.0))


def test_domain_errors():
    with pytest.raises(DomainError):
        integrate_nesterov(FIG2, [1.0, 2.0, 3.0])
    with pytest.raises(DomainError):
        integrate_nesterov(FIG2, X0, IntegratorConfig(t0=0.0, t_end=1.0))
    with pytest.raises(DomainError):
        integrate_long_horizon(FIG2, X0, IntegratorConfig(t_end=1e3), polar_handoff=1e2, averaged_from=10.0)


def test_long_horizon_falls_back_to_cartesian_for_quadratics():
    spec = PotentialSpec.quadratic(lambdas=[1.0])
    tr = integrate_long_horizon(spec, [1.0], IntegratorConfig(t_end=200.0))
    assert [leg[0] for leg in tr.info["legs"]] == ["cartesian"]


def test_trajectory_concat_and_window():
    t = np.array([1.0, 2.0, 3.0])
    z = np.zeros((3, 2))
    one = np.zeros(3)
    a = Trajectory(t, z, z, one, one, one, one)
    b = Trajectory(t + 2.0, z + 1, z, one + 1, one, one, one)
    c = a.concat(b)
    np.testing.assert_array_equal(c.t, [1, 2, 3, 4, 5])
    assert len(c.window(2.0, 4.0)) == 3
