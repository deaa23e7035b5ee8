import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from gaussmi import (Gaussian, GaussianMap, SystemConfig, Viewpoint, action_space,
                     min_snap_primitive, primitive_cost, primitive_sample, propagate, safety_check)
from gaussmi.planner import (Action, PlannerDeadlock, choose_best, evaluate_candidates,
                             min_snap_coefficients, path_length, primitive_between, reward_argmax)
from gaussmi.sim import DEFAULT_INTRINSICS


def poly_oracle(x0, xf, T):
    """Degree-7 polynomial meeting (p, v, a, j) at both ends, by direct solve."""
    A = np.zeros((8, 8))
    rhs = np.concatenate([x0, xf])
    for row, (t, k) in enumerate([(0.0, k) for k in range(4)] + [(T, k) for k in range(4)]):
        for n in range(k, 8):
            A[row, n] = math.factorial(n) / math.factorial(n - k) * t ** (n - k)
    return np.polynomial.Polynomial(np.linalg.solve(A, rhs))


def rest(p):
    return np.array([[p[0], 0, 0, 0], [p[1], 0, 0, 0], [p[2], 0, 0, 0]], float)


# --- action space and propagation -----------------------------------------------

def test_action_space_sizes():
    assert action_space(SystemConfig(V_xy=(0.0,), V_z=(0.0,), Omega_z=(0.0,))) == [Action(0, 0, 0)]
    assert len(action_space(SystemConfig())) == 75
    assert Action(0.0, 0.0, 0.0) in action_space(SystemConfig())
    with pytest.raises(ValueError):
        action_space(SystemConfig(V_z=()))


def test_zero_action_is_identity():
    s0 = Viewpoint([1, 2, 3], 0.4, velocity=[1, 0, 0], jerk=[0, 0, 2])
    sf = propagate(s0, Action(0, 0, 0), 1.6)
    np.testing.assert_array_equal(sf.position, s0.position)
    assert sf.yaw == s0.yaw
    assert not sf.velocity.any() and not sf.acceleration.any() and not sf.jerk.any()


def test_lateral_move():
    sf = propagate(Viewpoint([0, 0, 0], 0.0), Action(0.5, 0, 0), 1.6)
    np.testing.assert_allclose([*sf.position, sf.yaw], [0, 0.8, 0, 0], atol=1e-15)


def test_turning_move():
    T = 1.6
    sf = propagate(Viewpoint([0, 0, 0], 0.0), Action(1.0, 0, math.pi / (2 * T)), T)
    np.testing.assert_allclose([*sf.position, sf.yaw], [-T, 0, 0, math.pi / 2], atol=1e-12)


# --- minimum-snap primitive -----------------------------------------------------

def test_rest_to_rest_unit_coefficients():
    coef = min_snap_coefficients([0, 0, 0, 0], [1, 0, 0, 0], 1.0)
    np.testing.assert_allclose(coef, [-33600, 16800, -3360, 280], rtol=1e-14)
    prim = min_snap_primitive(rest([0, 0, 0]), rest([1, 0, 0]), 1.0)
    np.testing.assert_allclose(prim.monomials()[0], [0, 0, 0, 0, 35, -84, 70, -20], atol=1e-12)
    assert prim.state(1.0, 0)[0] == pytest.approx(1.0, abs=1e-12)
    for k in (1, 2, 3):
        assert abs(prim.state(1.0, k)[0]) < 1e-9


def test_rest_to_rest_cost_and_midpoint():
    prim = min_snap_primitive(rest([0, 0, 0]), rest([1, 0, 0]), 1.0)
    assert primitive_cost(prim) == pytest.approx(100800, rel=1e-12)
    # independent: integrate snap^2 of the explicit polynomial
    snap = np.polynomial.Polynomial([0, 0, 0, 0, 35, -84, 70, -20]).deriv(4)
    assert quad(lambda t: snap(t) ** 2, 0, 1, epsabs=0, epsrel=1e-12)[0] == pytest.approx(100800, rel=1e-9)
    assert 840**2 / 7 == 100800
    assert primitive_sample(prim, 0.5).position[0] == pytest.approx(0.5, abs=1e-12)
    assert -20 / 128 + 70 / 64 - 84 / 32 + 35 / 16 == pytest.approx(0.5)


def test_null_correction_gives_zero_snap():
    x0 = np.array([[1, 0.5, 0.2, 0.1], [0, -1, 0, 0], [2, 0, 0.3, 0]], float)
    T = 1.3
    # ballistic endpoint of the jerk-constant motion
    xf = np.stack([[p + v * T + a * T**2 / 2 + j * T**3 / 6, v + a * T + j * T**2 / 2, a + j * T, j]
                   for p, v, a, j in x0])
    prim = min_snap_primitive(x0, xf, T)
    np.testing.assert_allclose(prim.coefficients[:3], 0, atol=1e-9)
    assert primitive_cost(prim) == pytest.approx(0, abs=1e-12)


@given(st.floats(-5, 5), st.floats(0.2, 3))
def test_coefficients_linear_in_displacement(dp, T):
    base = min_snap_coefficients([0, 0, 0, 0], [1, 0, 0, 0], T)
    np.testing.assert_allclose(min_snap_coefficients([0, 0, 0, 0], [dp, 0, 0, 0], T),
                               dp * base, rtol=1e-9, atol=1e-9 * np.abs(base).max())


def test_cost_normalisation_flag():
    a = min_snap_primitive(rest([0, 0, 0]), rest([1, 1, 0]), 1.6)
    b = min_snap_primitive(rest([0, 0, 0]), rest([1, 1, 0]), 1.6, normalized=True)
    assert a.snap_cost == pytest.approx(1.6 * b.snap_cost, rel=1e-12)


def _random_endpoints(rng):
    x0 = rng.uniform(-2, 2, (3, 4))
    xf = rng.uniform(-2, 2, (3, 4))
    return x0, xf, float(rng.uniform(0.3, 3.0))


@pytest.mark.parametrize("seed", range(100))
def test_closed_form_cost_matches_quadrature(seed):
    x0, xf, T = _random_endpoints(np.random.default_rng(seed))
    prim = min_snap_primitive(x0, xf, T)
    ref = 0.0
    for k in range(3):
        snap = poly_oracle(x0[k], xf[k], T).deriv(4)
        ref += quad(lambda t: snap(t) ** 2, 0, T, epsabs=0, epsrel=1e-12, limit=200)[0]
    assert primitive_cost(prim) == pytest.approx(ref, rel=1e-6)
    assert primitive_cost(prim) >= 0


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_boundary_conditions_and_oracle_polynomial(seed):
    x0, xf, T = _random_endpoints(np.random.default_rng(seed))
    prim = min_snap_primitive(x0, xf, T)
    for k in range(4):
        np.testing.assert_allclose(prim.state(0.0, k)[:3], x0[:, k], atol=1e-9)
        np.testing.assert_allclose(prim.state(T, k)[:3], xf[:, k], atol=1e-9)
    ts = np.linspace(0, T, 7)
    for axis in range(3):
        np.testing.assert_allclose(prim.states(ts)[:, axis], poly_oracle(x0[axis], xf[axis], T)(ts),
                                   atol=1e-8)


def test_snap_is_zero_iff_cost_is_zero():
    rng = np.random.default_rng(2)
    for _ in range(20):
        x0, xf, T = _random_endpoints(rng)
        prim = min_snap_primitive(x0, xf, T)
        assert primitive_cost(prim) > 0
        assert np.abs(prim.snap(np.linspace(0, T, 50))).max() > 0


def test_primitive_errors():
    with pytest.raises(ValueError):
        min_snap_primitive(rest([0, 0, np.nan]), rest([1, 0, 0]), 1.0)
    with pytest.raises(ValueError):
        min_snap_primitive(rest([0, 0, 0]), rest([1, 0, 0]), 0.0)
    prim = min_snap_primitive(rest([0, 0, 0]), rest([1, 0, 0]), 1.0)
    with pytest.raises(ValueError):
        primitive_sample(prim, 1.5)
    with pytest.raises(ValueError):
        primitive_sample(prim, -0.1)


def test_sample_endpoints():
    s0 = Viewpoint([0.2, -0.3, 1.0], 0.5)
    sf = propagate(s0, Action(0.5, 0.3, math.pi / 8), 1.6)
    prim = primitive_between(s0, sf, 1.6)
    a = primitive_sample(prim, 0.0)
    np.testing.assert_array_equal(a.position, s0.position)
    assert a.yaw == s0.yaw
    b = primitive_sample(prim, 1.6)
    np.testing.assert_allclose(b.position, sf.position, atol=1e-9)
    assert b.yaw == pytest.approx(sf.yaw, abs=1e-9)
    assert np.abs(b.velocity).max() < 1e-9 and abs(b.yaw_rate) < 1e-9


def test_yaw_takes_the_short_way_round():
    s0 = Viewpoint([0, 0, 1], 3.0)
    sf = propagate(s0, Action(0, 0, math.pi / 4), 1.6)
    prim = primitive_between(s0, sf, 1.6)
    yaws = prim.states(np.linspace(0, 1.6, 50))[:, 3]
    assert np.all(np.diff(yaws) >= -1e-12)
    assert yaws[-1] - yaws[0] == pytest.approx(math.pi / 4 * 1.6)


def test_path_length_against_dense_quadrature():
    rng = np.random.default_rng(5)
    for _ in range(10):
        s0 = Viewpoint(rng.uniform(-1, 1, 3), rng.uniform(-3, 3))
        a = Action(rng.choice([-0.5, 0.5]), rng.choice([-0.3, 0.3]), rng.choice([-0.7, 0.7]))
        prim = primitive_between(s0, propagate(s0, a, 1.6), 1.6)
        speed = lambda t: np.linalg.norm(prim.state(t, 1)[:3])
        exact = quad(speed, 0, 1.6, epsrel=1e-10)[0]
        assert path_length(prim) == pytest.approx(exact, rel=0.01)


# --- safety ---------------------------------------------------------------------

def opaque(pos, opacity=0.9):
    return Gaussian(pos, [1, 0, 0, 0], [0.05] * 3, [1, 1, 1], opacity)


def test_safety_cases():
    cfg = SystemConfig()
    hover = min_snap_primitive(rest([0, 0, 1]), rest([0, 0, 1]), 1.6)
    far = GaussianMap.from_gaussians([opaque([2.5, 2.5, 1.0])])
    assert safety_check(hover, far, cfg)
    through = min_snap_primitive(rest([0, 0, 1]), rest([1, 0, 1]), 1.6)
    on_path = GaussianMap.from_gaussians([opaque([0.5, 0, 1.0])])
    assert not safety_check(through, on_path, cfg)
    # translucent Gaussians are not obstacles
    assert safety_check(through, GaussianMap.from_gaussians([opaque([0.5, 0, 1.0], 0.3)]), cfg)
    leave = min_snap_primitive(rest([2.5, 0, 1]), rest([3.5, 0, 1]), 1.6)
    assert not safety_check(leave, GaussianMap.empty(), cfg)


def test_start_inside_clearance_may_not_get_closer():
    cfg = SystemConfig()
    gm = GaussianMap.from_gaussians([opaque([0.2, 0, 1.0])])
    away = min_snap_primitive(rest([0, 0, 1]), rest([-0.5, 0, 1]), 1.6)
    toward = min_snap_primitive(rest([0, 0, 1]), rest([0.15, 0, 1]), 1.6)
    assert safety_check(away, gm, cfg)
    assert not safety_check(toward, gm, cfg)


# --- selection ------------------------------------------------------------------

def test_reward_worked_example():
    idx, R = reward_argmax([10, 12], [10, 20], 0.03, 0.01)
    np.testing.assert_allclose(R, [0.2, 0.16], atol=1e-15)
    assert idx == 0


def test_single_and_equal_cost_candidates():
    assert reward_argmax([1.0], [1e6], 0.03, 0.01)[0] == 0
    assert reward_argmax([5.0, 3.0], [2.0, 2.0], 0.03, 0.01)[0] == 0
    assert reward_argmax([3.0, 5.0], [2.0, 2.0], 0.03, 0.01)[0] == 1


def test_unsafe_candidates_skipped_and_deadlock():
    assert reward_argmax([10, 1], [0, 0], 1, 1, safe=[False, True])[0] == 1
    with pytest.raises(PlannerDeadlock):
        reward_argmax([1, 2], [0, 0], 1, 1, safe=[False, False])


@given(st.lists(st.tuples(st.floats(0, 1e3), st.floats(0, 1e5)), min_size=1, max_size=30),
       st.floats(1e-3, 1e3))
def test_argmax_invariant_to_common_weight_scaling(cands, c):
    I, J = zip(*cands)
    i0, R0 = reward_argmax(I, J, 0.03, 0.01)
    i1, R1 = reward_argmax(I, J, 0.03 * c, 0.01 * c)
    # rounding can only matter between candidates whose rewards already tie
    assert i0 == i1 or math.isclose(R0[i0], R0[i1], rel_tol=1e-12, abs_tol=1e-12)


def _toy_map():
    rng = np.random.default_rng(0)
    n = 60
    ang = rng.uniform(0, 2 * np.pi, n)
    pos = np.stack([0.4 * np.cos(ang), 0.4 * np.sin(ang), rng.uniform(0.2, 1.2, n)], 1)
    return GaussianMap(pos, None, np.full((n, 3), 0.08), rng.uniform(0, 1, (n, 3)),
                       np.full(n, 0.9), rng.uniform(-3, 3, (n, 4)))


def test_selection_is_deterministic_and_order_invariant():
    gm = _toy_map()
    state = Viewpoint([1.3, 0, 0.6], math.pi)
    cfg = SystemConfig(workspace_min=(-1.8, -1.8, 0.1), workspace_max=(1.8, 1.8, 1.5))
    cands = evaluate_candidates(gm, state, cfg, DEFAULT_INTRINSICS)
    best = choose_best(cands)
    rev = SystemConfig(**{**cfg.__dict__, "V_xy": cfg.V_xy[::-1], "V_z": cfg.V_z[::-1],
                          "Omega_z": cfg.Omega_z[::-1]})
    best_rev = choose_best(evaluate_candidates(gm, state, rev, DEFAULT_INTRINSICS))
    assert best.action == best_rev.action
    safe = [c for c in cands if c.safe]
    assert best.reward == max(c.reward for c in safe)
    assert best.reward == pytest.approx(cfg.w_I * best.mi.total_mi - cfg.w_J * best.primitive.snap_cost)
