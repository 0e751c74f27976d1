import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp

from nesterov_lab.averaged import FrozenOrbit, integrate_averaged_nesterov
from nesterov_lab.flow import FlowState, IntegrationError, IntegratorConfig, integrate_nesterov
from nesterov_lab.potential import DomainError, PotentialSpec, radial_slope, radial_value

ORBITS = [(1e-6, 1e-9), (1e-9, 4.2e-14), (1e-9, 1e-15), (1e-12, 1e-19), (1e-3, 1e-5)]


def mp_orbit(E, j, r_min_guess, r_max_guess):
    # high-precision quadrature in r, split geometrically to follow the r/(-log r) scale
    mp.mp.dps = 30
    E_, j_ = mp.mpf(E), mp.mpf(j)

    def gap(r):
        return E_ - mp.e1(-mp.log(r)) - j_ ** 2 / (2 * r ** 2)

    rm = mp.findroot(gap, mp.mpf(r_min_guess))
    rp = mp.findroot(gap, mp.mpf(r_max_guess))
    pts = [rm] + [rm * mp.mpf(2) ** k for k in range(1, 60) if rm * 2 ** k < rp] + [rp]

    def p(r):
        return mp.sqrt(2 * gap(r))

    T = 2 * mp.quad(lambda r: 1 / p(r), pts)
    v2 = 2 * mp.quad(lambda r: 2 * (E_ - mp.e1(-mp.log(r))) / p(r), pts) / T
    th = 2 * mp.quad(lambda r: j_ / r ** 2 / p(r), pts)
    action = 2 * mp.quad(p, pts)
    return float(rm), float(rp), float(T), float(v2), float(th), float(action)


@pytest.mark.parametrize("E,j", ORBITS)
def test_frozen_orbit_against_mpmath(E, j):
    o = FrozenOrbit(E, j)
    rm, rp, T, v2, th, action = mp_orbit(E, j, o.r_min, o.r_max)
    assert o.r_min == pytest.approx(rm, rel=1e-13)
    assert o.r_max == pytest.approx(rp, rel=1e-13)
    assert o.period == pytest.approx(T, rel=1e-10)
    assert o.mean_v2 == pytest.approx(v2, rel=1e-10)
    assert o.theta_per_period == pytest.approx(th, rel=1e-10)
    assert o.action == pytest.approx(action, rel=1e-10)


def test_frozen_orbit_against_direct_integration():
    # second route: integrate the radial equation over one period with scipy
    E, j = 1e-6, 1e-9
    o = FrozenOrbit(E, j)

    def rhs(t, y):
        r = y[0]
        return [y[1], -radial_slope(r) + j * j / r ** 3, j / r ** 2]

    def peri(t, y):
        return y[1]

    peri.direction = 1.0
    sol = solve_ivp(rhs, (0.0, 1.5 * o.period), [o.r_min, 0.0, 0.0], events=peri,
                    rtol=1e-12, atol=1e-20, method="DOP853", dense_output=True)
    t_back = sol.t_events[0][-1]
    assert t_back == pytest.approx(o.period, rel=1e-8)
    assert sol.sol(t_back)[2] == pytest.approx(o.theta_per_period, rel=1e-8)
    assert np.max(sol.y[0]) == pytest.approx(o.r_max, rel=1e-8)


def test_frozen_orbit_virial_mean_energy():
    o = FrozenOrbit(1e-6, 1e-9)
    # E = <|v|^2>/2 + <F> holds for the time averages as well
    assert 0.5 * o.mean_v2 + o.mean_f == pytest.approx(o.E, rel=1e-12)
    assert o.mean_speed ** 2 <= o.mean_v2 * (1 + 1e-12)


@settings(max_examples=60, deadline=None)
@given(st.floats(0.0, 0.999), st.floats(-3.0, 3.0))
def test_phase_round_trip(phase, peri):
    o = FrozenOrbit(1e-6, 1e-9)
    r, rdot, theta = o.state_at_phase(phase, peri)
    assert o.r_min * (1 - 1e-12) <= r <= o.r_max * (1 + 1e-12)
    E = 0.5 * (rdot ** 2 + (o.j / r) ** 2) + radial_value(r)
    assert E == pytest.approx(o.E, rel=1e-9)
    back, dtheta = o.phase_of_state(r, rdot)
    assert back == pytest.approx(phase, abs=1e-7)
    assert peri + dtheta == pytest.approx(theta, abs=1e-7)


def test_frozen_orbit_domain():
    with pytest.raises(DomainError):
        FrozenOrbit(0.0, 1e-9)
    # below the circular-orbit energy there is no orbit
    with pytest.raises(DomainError):
        FrozenOrbit(1e-12, 1e-9)


@pytest.fixture(scope="module")
def handoff():
    cfg = IntegratorConfig(t_end=100.0, abs_tol=1e-16)
    tr = integrate_nesterov(PotentialSpec.pathological(), (0.04, 0.02), cfg)
    h = tr.final
    kappa = h.t ** 3 * (h.X[0] * h.V[1] - h.X[1] * h.V[0])
    return cfg, h, kappa


def test_averaged_matches_direct_run(handoff):
    cfg, h, kappa = handoff
    win = cfg.with_(t0=100.0, t_end=200.0)
    direct = integrate_nesterov(PotentialSpec.pathological(), (0.04, 0.02), win, start=h)
    av = integrate_averaged_nesterov(kappa, h, win, a=0.02)
    np.testing.assert_array_equal(av.t, direct.t)
    for name in ("arclength", "weighted_f", "weighted_v2"):
        a, b = getattr(direct, name), getattr(av, name)
        assert (b[-1] - b[0]) == pytest.approx(a[-1] - a[0], rel=1e-4)

    def energy(tr):
        return 0.5 * np.sum(tr.V ** 2, axis=1) + radial_value(tr.radius)

    np.testing.assert_allclose(energy(av), energy(direct), rtol=1e-4)
    np.testing.assert_allclose(av.t ** 3 * av.angular_momentum, kappa, rtol=1e-12)
    assert np.all(av.segment == "averaged")


def test_averaged_radial_action_adiabatic_invariant(handoff):
    cfg, h, kappa = handoff
    av = integrate_averaged_nesterov(kappa, h, cfg.with_(t0=100.0, t_end=1e5), a=0.02)
    start, end = av.info["radial_action_t3"]
    assert end == pytest.approx(start, rel=1e-9)
    assert av.info["max_period_ratio"] < 1e-2
    assert av.info["turns"] > 1e9
    assert np.all(av.radius <= 0.02)
    assert np.all(np.diff(av.arclength) > 0)


def test_averaged_orbit_checkpoints(handoff):
    cfg, h, kappa = handoff
    av = integrate_averaged_nesterov(kappa, h, cfg.with_(t0=100.0, t_end=1e3, orbit_ds=1e-3), a=0.02)
    assert av.orbit_t.size == pytest.approx((av.arclength[-1] - av.arclength[0]) / 1e-3, abs=1)
    assert np.all(np.diff(av.orbit_t) > 0)


def test_averaged_rejects_bad_handoff(handoff):
    cfg, h, kappa = handoff
    with pytest.raises(DomainError):
        integrate_averaged_nesterov(-kappa, h, cfg.with_(t0=100.0, t_end=200.0))
    # an early state whose orbit period is not short against t
    early = FlowState(1.0, np.array([0.01, 0.0]), np.array([0.0, 0.01]))
    with pytest.raises((IntegrationError, DomainError)):
        integrate_averaged_nesterov(1e-2, early, cfg.with_(t0=1.0, t_end=10.0), a=0.02)
