import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bloch_threads.dynamics import split_velocity
from bloch_threads.errors import FIsZeroOnThread
from bloch_threads.planner import angle_between, hamiltonian_for, plan_trajectory, replay_plan
from bloch_threads.system import BlochState, figure_system

from conftest import cached_main

comp = st.floats(-1, 1, allow_nan=False)
unit = st.tuples(comp, comp, comp).filter(lambda v: np.linalg.norm(v) > 0.1).map(lambda v: np.array(v) / np.linalg.norm(v))


@settings(max_examples=200, deadline=None)
@given(st.sampled_from([1, 2, 3, 4]), unit, st.floats(0.02, 1.0), st.tuples(comp, comp, comp), st.floats(-5, 5))
def test_hamiltonian_realises_the_requested_motion(k, n_hat, r, m_raw, c):
    system = figure_system(k)
    m = np.array(m_raw) - (np.array(m_raw) @ n_hat) * n_hat
    h = hamiltonian_for(system, r, n_hat, m, c)
    split = split_velocity(system, h, BlochState(r, n_hat))
    f = system.radial(n_hat, r)
    # d n_hat / dt = (d n_hat / dr) (dr / dt)
    np.testing.assert_allclose(split.transverse, m * f, atol=1e-9 * system.scale)
    assert h @ n_hat == pytest.approx(c, abs=1e-9 * max(1, abs(c)))


def test_hamiltonian_needs_positive_radius():
    system = figure_system(1)
    with pytest.raises(ValueError):
        hamiltonian_for(system, 0.0, [1, 0, 0], [0, 1, 0])


@pytest.fixture(scope="module")
def fig1_plan():
    return plan_trajectory(figure_system(1), cached_main(1)[0])


def test_outward_plan_is_cut_at_the_crossing(fig1_plan):
    plan = fig1_plan
    assert plan.direction == 1
    # independent oracle: SLSQP maximisation of |n| on f = 0
    assert plan.crossing == pytest.approx(0.701856, abs=1e-5)
    assert plan.r[-1] < plan.crossing
    assert np.all(np.diff(plan.t) > 0)
    assert plan.t[0] == 0
    with pytest.raises(FIsZeroOnThread):
        plan_trajectory(figure_system(1), cached_main(1)[0], strict=True)


def test_plan_time_matches_quadrature(fig1_plan):
    system = figure_system(1)
    plan = fig1_plan
    i = np.searchsorted(plan.r, 0.5)
    f = system.radial(plan.n_hat[: i + 1], plan.r[: i + 1])
    trapezoid = np.sum(np.diff(plan.r[: i + 1]) * (1 / f[1:] + 1 / f[:-1]) / 2)
    assert plan.t[i] == pytest.approx(trapezoid, rel=1e-5)


def test_minimizing_thread_plans_inward():
    system = figure_system(1)
    plan = plan_trajectory(system, cached_main(1)[1])
    assert plan.direction == -1
    assert np.all(np.diff(plan.r) < 0)
    assert np.all(np.diff(plan.t) > 0)


@pytest.mark.parametrize("mode, c, tol", [("schedule", 0.0, 1e-9), ("feedback", 0.0, 1e-9), ("feedback", 7.5, 1e-9)])
def test_replay_follows_the_thread(fig1_plan, mode, c, tol):
    system = figure_system(1)
    replay = replay_plan(system, fig1_plan, 0.05, fig1_plan.crossing - 0.05, mode=mode, c=c)
    assert replay.r[-1] >= fig1_plan.crossing - 0.05
    assert np.nanmax(replay.angular_error) <= tol


def test_replay_time_matches_the_schedule(fig1_plan):
    system = figure_system(1)
    r0, r1 = 0.1, 0.4
    replay = replay_plan(system, fig1_plan, r0, r1, record_every=1)
    t_of_r = np.interp([r0, r1], fig1_plan.r, fig1_plan.t)
    assert replay.t[-1] == pytest.approx(t_of_r[1] - t_of_r[0], abs=2e-4 * (t_of_r[1] - t_of_r[0]) + 1e-5)


def test_replay_rejects_unknown_mode(fig1_plan):
    with pytest.raises(ValueError):
        replay_plan(figure_system(1), fig1_plan, 0.1, 0.2, mode="open-loop")


def test_angle_between_small_angles():
    a = np.array([1.0, 0, 0])
    b = np.array([np.cos(1e-9), np.sin(1e-9), 0])
    assert angle_between(a, b) == pytest.approx(1e-9, rel=1e-6)
    assert angle_between(a, -a) == pytest.approx(np.pi)
