import numpy as np
import pytest

from conftest import random_theta
from umarm.arm import N_JOINTS, JointLimits, position_and_jacobian, position_jacobian, tip_position
from umarm.errors import InputError
from umarm.ik import (
    IkParams,
    damped_weighted_step,
    ik_step,
    limit_avoidance_gradient,
    limit_objective,
    null_space_projector,
    solve_position_ik,
    wln_weights,
)


def test_params_validation():
    with pytest.raises(InputError):
        IkParams(max_iters=0)
    with pytest.raises(InputError):
        IkParams(step_scale=0.0)
    with pytest.raises(InputError):
        IkParams(damping=-1.0)
    with pytest.raises(InputError):
        IkParams(position_tolerance=0.0)


def test_gradient_matches_finite_differences(arm, rng):
    lim = arm.limits
    h = 1e-6
    for th in random_theta(rng, arm, 20):
        g = limit_avoidance_gradient(th, lim)
        for i in range(N_JOINTS):
            e = np.zeros(N_JOINTS)
            e[i] = h
            fd = (limit_objective(th + e, lim) - limit_objective(th - e, lim)) / (2 * h)
            assert g[i] == pytest.approx(fd, rel=1e-6, abs=1e-9)


def test_gradient_zero_at_midpoint(arm):
    np.testing.assert_array_equal(limit_avoidance_gradient(arm.limits.mid, arm.limits), 0.0)
    assert limit_objective(arm.limits.mid, arm.limits) == 0.0


def test_weights_examples():
    lim = JointLimits(np.full(N_JOINTS, -0.5), np.full(N_JOINTS, 0.5))
    th = np.zeros(N_JOINTS)
    th[0] = 0.25
    # range 1, so dH/dq = 2 * 0.25 = 0.5
    w = wln_weights(th, lim)
    assert w[0] == pytest.approx(1.5)
    np.testing.assert_array_equal(w[1:], 1.0)
    # moving back toward the middle: unpenalized
    prev = th.copy()
    prev[0] = 0.3
    assert wln_weights(th, lim, prev)[0] == 1.0
    prev[0] = 0.2
    assert wln_weights(th, lim, prev)[0] == pytest.approx(1.5)


def test_weighted_step_reduces_to_damped_pinv(arm, rng):
    th = random_theta(rng, arm)
    J = position_jacobian(arm, th)
    e = rng.normal(size=3) * 1e-2
    lam = 1e-3
    expected = J.T @ np.linalg.solve(J @ J.T + lam**2 * np.eye(3), e)
    np.testing.assert_allclose(damped_weighted_step(J, e, np.ones(N_JOINTS), lam), expected, atol=1e-14)


def test_weighted_step_favors_light_joints(arm, rng):
    th = random_theta(rng, arm)
    J = position_jacobian(arm, th)
    e = rng.normal(size=3) * 1e-2
    w = np.ones(N_JOINTS)
    w[0] = 100.0
    a = damped_weighted_step(J, e, np.ones(N_JOINTS), 1e-3)
    b = damped_weighted_step(J, e, w, 1e-3)
    assert abs(b[0]) < abs(a[0])


def test_null_projector_properties(arm, rng):
    for th in random_theta(rng, arm, 50):
        J = position_jacobian(arm, th)
        N = null_space_projector(J)
        assert np.abs(J @ N).max() <= 1e-12
        np.testing.assert_allclose(N @ N, N, atol=1e-12)
        np.testing.assert_allclose(N, N.T, atol=1e-12)
        assert np.trace(N) == pytest.approx(N_JOINTS - 3, abs=1e-9)


def test_zero_error_step_only_moves_in_null_space(arm, rng):
    th = random_theta(rng, arm, scale=0.5)
    target = tip_position(arm, th)
    new = ik_step(arm, th, target)
    J = position_jacobian(arm, th)
    np.testing.assert_allclose(J @ (new - th), 0.0, atol=1e-12)
    # no secondary objective: a solved pose stays put
    np.testing.assert_array_equal(ik_step(arm, th, target, IkParams(null_gain=0.0)), th)


def test_damped_step_bounded_by_damping(arm, rng):
    # at rest the Jacobian is rank deficient along z; the damped step stays finite
    th = np.zeros(N_JOINTS)
    _, J = position_and_jacobian(arm, th)
    lam = 1e-3
    for _ in range(20):
        e = rng.normal(size=3) * 0.05
        dq = damped_weighted_step(J, e, np.ones(N_JOINTS), lam)
        assert np.linalg.norm(dq) <= np.linalg.norm(e) / (2 * lam) + 1e-12


def test_steps_descend_from_interior(arm, rng):
    params = IkParams(null_gain=0.0, wln_enabled=False)
    for _ in range(20):
        th = random_theta(rng, arm, scale=0.4)
        target = tip_position(arm, random_theta(rng, arm, scale=0.4))
        e0 = np.linalg.norm(target - tip_position(arm, th))
        e1 = np.linalg.norm(target - tip_position(arm, ik_step(arm, th, target, params)))
        assert e1 < e0


def test_solution_stays_within_limits(arm, rng):
    for _ in range(10):
        target = tip_position(arm, random_theta(rng, arm))
        res = solve_position_ik(arm, np.zeros(N_JOINTS), target)
        assert arm.limits.contains(res.theta)
        assert res.converged


def test_already_solved_returns_immediately(arm, rng):
    th = random_theta(rng, arm)
    res = solve_position_ik(arm, th, tip_position(arm, th))
    assert res.converged and res.iterations == 0
    np.testing.assert_array_equal(res.theta, th)


def test_unreachable_target_reports_best_residual(arm):
    far = np.array([0.0, 0.0, -1.0])
    res = solve_position_ik(arm, np.zeros(N_JOINTS), far)
    assert not res.converged
    assert res.iterations == IkParams().max_iters
    assert res.residual == pytest.approx(np.linalg.norm(far - tip_position(arm, res.theta)))
    assert res.residual >= 1.0 - arm.kinematic_length - 1e-9


@pytest.mark.parametrize("bad", [[np.nan, 0, 0], [0, np.inf, 0], [0, 0]])
def test_bad_target_rejected(arm, bad):
    with pytest.raises(InputError):
        solve_position_ik(arm, np.zeros(N_JOINTS), bad)


def test_solver_is_deterministic(arm, rng):
    target = tip_position(arm, random_theta(rng, arm))
    a = solve_position_ik(arm, np.zeros(N_JOINTS), target)
    b = solve_position_ik(arm, np.zeros(N_JOINTS), target)
    assert a.theta.tobytes() == b.theta.tobytes() and a.iterations == b.iterations


def test_null_space_term_centers_joints_on_average(arm):
    rng = np.random.default_rng(7)
    targets = [tip_position(arm, th) for th in random_theta(rng, arm, 100)]

    def mean_abs(k0):
        sols = [solve_position_ik(arm, np.zeros(N_JOINTS), p, IkParams(null_gain=k0)) for p in targets]
        return np.mean([np.abs(r.theta).mean() for r in sols if r.converged])

    assert mean_abs(0.02) <= mean_abs(0.0)
