"""Dynamics, constraint projection, neighborhoods, and local views."""

import numpy as np
import pytest

from vflock.flock import (
    DynamicsParameters,
    FlockState,
    JointAction,
    LocalView,
    clamp_action,
    local_view,
    neighborhood,
    sample_initial_state,
    step_dynamics,
)


def rand_state(rng, n=7, pos=(0.0, 5.0), vel=(0.25, 0.75)):
    return sample_initial_state(n, pos, vel, rng)


class TestStepDynamics:
    def test_fixed_point(self):
        state = FlockState([[0.0, 0.0]], [[0.0, 0.0]])
        nxt = step_dynamics(state, JointAction([[0.0, 0.0]]), DynamicsParameters(dt=1.0))
        assert np.array_equal(nxt.positions, [[0.0, 0.0]])
        assert np.array_equal(nxt.velocities, [[0.0, 0.0]])

    def test_direct_substitution(self):
        state = FlockState([[0.0, 0.0]], [[1.0, 0.0]])
        nxt = step_dynamics(state, JointAction([[0.0, 1.0]]), DynamicsParameters(dt=1.0))
        assert np.array_equal(nxt.positions, [[1.0, 0.0]])
        assert np.array_equal(nxt.velocities, [[1.0, 1.0]])

    def test_three_steps_match_closed_form(self):
        # x + 3*dt*v + dt^2*(0+1+2)*a from expanding the recurrence by hand
        rng = np.random.default_rng(1)
        params = DynamicsParameters(dt=0.5)
        state = rand_state(rng, n=4)
        a = rng.normal(size=(4, 2)) * 0.1
        expected_x = state.positions + 3 * params.dt * state.velocities + params.dt**2 * 3 * a
        expected_v = state.velocities + 3 * params.dt * a
        cur = state
        for _ in range(3):
            cur = step_dynamics(cur, JointAction(a), params)
        np.testing.assert_allclose(cur.positions, expected_x, rtol=1e-12)
        np.testing.assert_allclose(cur.velocities, expected_v, rtol=1e-12)

    def test_position_update_ignores_action(self):
        rng = np.random.default_rng(2)
        params = DynamicsParameters()
        state = rand_state(rng)
        a1 = JointAction(rng.normal(size=(7, 2)))
        a2 = JointAction(rng.normal(size=(7, 2)))
        assert np.array_equal(
            step_dynamics(state, a1, params).positions,
            step_dynamics(state, a2, params).positions,
        )

    def test_dimension_mismatch_rejected(self):
        state = FlockState([[0.0, 0.0]], [[0.0, 0.0]])
        with pytest.raises(ValueError):
            step_dynamics(state, JointAction.zero(2), DynamicsParameters())


class TestClampAction:
    def test_zero_action_unchanged(self):
        rng = np.random.default_rng(3)
        state = rand_state(rng)
        out = clamp_action(state, JointAction.zero(7), DynamicsParameters())
        assert np.array_equal(out.accelerations, np.zeros((7, 2)))

    def test_magnitude_rescaled_preserving_direction(self):
        state = FlockState([[0.0, 0.0]], [[1.0, 0.0]])
        params = DynamicsParameters(rho=0.5, v_max=10.0)
        out = clamp_action(state, JointAction([[2.0, 0.0]]), params)
        np.testing.assert_allclose(out.accelerations, [[0.5, 0.0]], atol=1e-15)

    def test_zero_velocity_forces_zero_action(self):
        state = FlockState([[0.0, 0.0]], [[0.0, 0.0]])
        out = clamp_action(state, JointAction([[1.0, 2.0]]), DynamicsParameters())
        assert np.array_equal(out.accelerations, [[0.0, 0.0]])

    def test_speed_bound_lands_exactly_on_vmax(self):
        params = DynamicsParameters(dt=1.0, v_max=2.0, rho=0.9)
        state = FlockState([[0.0, 0.0]], [[1.9, 0.0]])
        out = clamp_action(state, JointAction([[1.0, 0.0]]), params)
        v_next = state.velocities + params.dt * out.accelerations
        np.testing.assert_allclose(np.linalg.norm(v_next), params.v_max, rtol=1e-12)

    def test_idempotent(self):
        rng = np.random.default_rng(4)
        params = DynamicsParameters()
        for _ in range(50):
            state = rand_state(rng)
            action = JointAction(rng.normal(size=(7, 2)) * 3.0)
            once = clamp_action(state, action, params)
            twice = clamp_action(state, once, params)
            np.testing.assert_allclose(once.accelerations, twice.accelerations, atol=1e-12)

    def test_direction_preserved(self):
        rng = np.random.default_rng(5)
        params = DynamicsParameters()
        for _ in range(50):
            state = rand_state(rng)
            a = rng.normal(size=(7, 2)) * 3.0
            out = clamp_action(state, JointAction(a), params).accelerations
            cross = a[:, 0] * out[:, 1] - a[:, 1] * out[:, 0]
            np.testing.assert_allclose(cross, 0.0, atol=1e-9)
            assert np.all(np.sum(a * out, axis=1) >= -1e-12)

    def test_constraints_hold(self):
        rng = np.random.default_rng(6)
        params = DynamicsParameters()
        for _ in range(50):
            state = rand_state(rng)
            out = clamp_action(state, JointAction(rng.normal(size=(7, 2)) * 5), params)
            amag = np.linalg.norm(out.accelerations, axis=1)
            speed = np.linalg.norm(state.velocities, axis=1)
            assert np.all(amag <= params.rho * speed + 1e-12)

    def test_speeds_bounded_in_closed_loop(self):
        # any controller composed with the clamp keeps speeds <= v_max
        rng = np.random.default_rng(7)
        params = DynamicsParameters()
        state = rand_state(rng)
        for _ in range(100):
            wild = JointAction(rng.normal(size=(7, 2)) * 10.0)
            action = clamp_action(state, wild, params)
            state = step_dynamics(state, action, params)
            speeds = np.linalg.norm(state.velocities, axis=1)
            assert np.all(speeds <= params.v_max + 1e-9)


class TestNeighborhood:
    def test_self_only(self):
        rng = np.random.default_rng(8)
        state = rand_state(rng)
        assert neighborhood(state, 3, 1) == [3]

    def test_collinear_sort(self):
        state = FlockState([[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]], np.zeros((3, 2)))
        assert neighborhood(state, 0, 2) == [0, 1]
        assert neighborhood(state, 0, 3) == [0, 1, 2]
        assert neighborhood(state, 2, 2) == [2, 1]

    def test_tie_broken_by_lower_index(self):
        pos = np.zeros((6, 2))
        pos[2] = [1.0, 0.0]
        pos[5] = [0.0, 1.0]  # same distance from agent 0 as agent 2
        pos[1] = [3.0, 0.0]
        pos[3] = [4.0, 0.0]
        pos[4] = [5.0, 0.0]
        state = FlockState(pos, np.zeros((6, 2)))
        assert neighborhood(state, 0, 3) == [0, 2, 5]

    def test_full_neighborhood_is_permutation(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            state = rand_state(rng, n=9)
            members = neighborhood(state, 4, 9)
            assert members[0] == 4
            assert sorted(members) == list(range(9))

    def test_out_of_range_rejected(self):
        rng = np.random.default_rng(10)
        state = rand_state(rng)
        with pytest.raises(ValueError):
            neighborhood(state, 0, 0)
        with pytest.raises(ValueError):
            neighborhood(state, 0, 8)


class TestLocalView:
    def test_self_entries_zero(self):
        rng = np.random.default_rng(11)
        view = local_view(rand_state(rng), 2, 0.5)
        assert view.features[0] == 0.0
        assert view.features[1] == 0.0
        assert view.features[-1] == 0.5

    def test_translation_invariant(self):
        rng = np.random.default_rng(12)
        state = rand_state(rng)
        shifted = state.translated([17.5, -42.0])
        a = local_view(state, 3, 1.0).features
        b = local_view(shifted, 3, 1.0).features
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_distances_nondecreasing(self):
        rng = np.random.default_rng(13)
        for _ in range(20):
            state = rand_state(rng)
            f = local_view(state, 0, 0.0).features
            d = np.hypot(f[0:28:4], f[1:28:4])
            assert np.all(np.diff(d) >= -1e-12)

    def test_velocities_absolute(self):
        rng = np.random.default_rng(14)
        state = rand_state(rng)
        members = neighborhood(state, 1, 7)
        f = local_view(state, 1, 0.0).features
        np.testing.assert_array_equal(f[2:28:4], state.velocities[members, 0])
        np.testing.assert_array_equal(f[3:28:4], state.velocities[members, 1])

    def test_small_flock_rejected(self):
        rng = np.random.default_rng(15)
        with pytest.raises(ValueError):
            local_view(rand_state(rng, n=6), 0, 0.0)

    def test_invalid_feature_vector_rejected(self):
        bad = np.zeros(29)
        bad[0] = 1.0
        with pytest.raises(ValueError):
            LocalView(bad)


class TestSampleInitialState:
    def test_degenerate_interval(self):
        rng = np.random.default_rng(16)
        state = sample_initial_state(4, (5.0, 5.0), (0.5, 0.5), rng)
        assert np.all(state.positions == 5.0)
        assert np.all(state.velocities == 0.5)

    def test_default_ranges_respected(self):
        rng = np.random.default_rng(17)
        state = sample_initial_state(100, (0.0, 5.0), (0.25, 0.75), rng)
        assert np.all((state.positions >= 0.0) & (state.positions <= 5.0))
        assert np.all((state.velocities >= 0.25) & (state.velocities <= 0.75))

    def test_mean_near_midpoint(self):
        # mean of 10^4 uniform draws within 3 standard errors of the midpoint
        rng = np.random.default_rng(18)
        n = 10_000
        state = sample_initial_state(n, (0.0, 5.0), (0.25, 0.75), rng)
        se_pos = 5.0 / np.sqrt(12.0) / np.sqrt(n)
        se_vel = 0.5 / np.sqrt(12.0) / np.sqrt(n)
        assert np.all(np.abs(state.positions.mean(axis=0) - 2.5) < 3 * se_pos)
        assert np.all(np.abs(state.velocities.mean(axis=0) - 0.5) < 3 * se_vel)

    def test_deterministic_under_seed(self):
        a = sample_initial_state(7, (0, 5), (0.25, 0.75), np.random.default_rng(42))
        b = sample_initial_state(7, (0, 5), (0.25, 0.75), np.random.default_rng(42))
        assert np.array_equal(a.positions, b.positions)
        assert np.array_equal(a.velocities, b.velocities)

    def test_empty_range_rejected(self):
        with pytest.raises(ValueError):
            sample_initial_state(3, (5.0, 0.0), (0.25, 0.75), np.random.default_rng(0))

    def test_immutability(self):
        rng = np.random.default_rng(19)
        state = rand_state(rng)
        with pytest.raises(ValueError):
            state.positions[0, 0] = 99.0
