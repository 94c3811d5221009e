"""Network forward/backward, optimizer, training loop, and the distributed
controller wrapper."""

import numpy as np
import pytest

from vflock.cost import CostParameters, global_cost, local_cost, make_v_formation
from vflock.flock import DynamicsParameters, FlockState, sample_initial_state
from vflock.nn import (
    DEFAULT_SIZES,
    AdamState,
    Gradients,
    MlpModel,
    TrainConfig,
    TrainingSample,
    adam_step,
    dnc_step,
    extract_samples,
    init_adam,
    init_model,
    mlp_forward,
    mlp_gradient,
    train,
)

PARAMS = CostParameters()
DYN = DynamicsParameters()


def forward_oracle(model, x):
    """Straightforward per-layer reimplementation of the forward pass."""
    a = np.asarray(x, float)
    if model.feature_offset is not None:
        a = (a - model.feature_offset) / model.feature_scale
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = w @ a + b
        if k < len(model.weights) - 1:
            a = 1.0 / (1.0 + np.exp(-z))
        else:
            a = z
    return a


def loss_of(model, X, Y):
    pred = mlp_forward(model, X)
    return float(np.mean((pred - Y) ** 2))


class TestForward:
    def test_zero_model_outputs_zero(self):
        sizes = (29, 84, 84, 84, 84, 84, 2)
        weights = tuple(np.zeros((o, i)) for i, o in zip(sizes[:-1], sizes[1:]))
        biases = tuple(np.zeros(o) for o in sizes[1:])
        model = MlpModel(sizes=sizes, weights=weights, biases=biases)
        out = mlp_forward(model, np.zeros(29))
        assert np.array_equal(out, [0.0, 0.0])

    def test_parameter_count(self):
        model = init_model(np.random.default_rng(0))
        expected = sum(
            i * o + o for i, o in zip(DEFAULT_SIZES[:-1], DEFAULT_SIZES[1:])
        )
        assert model.parameter_count == expected == 31_250

    def test_matches_independent_reimplementation(self):
        rng = np.random.default_rng(1)
        model = init_model(rng)
        for _ in range(10):
            x = rng.normal(size=29)
            np.testing.assert_allclose(mlp_forward(model, x), forward_oracle(model, x), atol=1e-12)

    def test_batch_matches_single(self):
        rng = np.random.default_rng(2)
        model = init_model(rng)
        X = rng.normal(size=(5, 29))
        batch = mlp_forward(model, X)
        for k in range(5):
            np.testing.assert_allclose(batch[k], mlp_forward(model, X[k]), atol=1e-14)

    def test_nonfinite_input_rejected(self):
        model = init_model(np.random.default_rng(3))
        bad = np.zeros(29)
        bad[5] = np.nan
        with pytest.raises(ValueError):
            mlp_forward(model, bad)

    def test_lipschitz_sanity(self):
        rng = np.random.default_rng(4)
        model = init_model(rng)
        x = rng.normal(size=29)
        y0 = mlp_forward(model, x)
        y1 = mlp_forward(model, x + 1e-9)
        assert np.linalg.norm(y1 - y0) < 1e-3


class TestGradient:
    def test_perfect_fit_zero_gradient(self):
        rng = np.random.default_rng(5)
        model = init_model(rng)
        X = rng.normal(size=(4, 29))
        Y = mlp_forward(model, X)
        grads = mlp_gradient(model, X, Y)
        assert grads.loss == 0.0
        for g in grads.weights + grads.biases:
            assert np.all(g == 0.0)

    def test_matches_central_finite_differences(self):
        # small network keeps the sweep cheap; same code path as the default
        rng = np.random.default_rng(6)
        sizes = (29, 10, 8, 2)
        model = init_model(rng, sizes)
        X = rng.normal(size=(10, 29))
        Y = rng.normal(size=(10, 2))
        grads = mlp_gradient(model, X, Y)
        eps = 1e-5
        checked = 0
        for layer in range(len(model.weights)):
            w = model.weights[layer]
            flat = [(i, j) for i in range(w.shape[0]) for j in range(w.shape[1])]
            picks = rng.choice(len(flat), size=min(20, len(flat)), replace=False)
            for p in picks:
                i, j = flat[p]
                wp = [a.copy() for a in model.weights]
                wm = [a.copy() for a in model.weights]
                wp[layer][i, j] += eps
                wm[layer][i, j] -= eps
                lp = loss_of(MlpModel(sizes, tuple(wp), model.biases), X, Y)
                lm = loss_of(MlpModel(sizes, tuple(wm), model.biases), X, Y)
                numeric = (lp - lm) / (2 * eps)
                analytic = grads.weights[layer][i, j]
                # the floor absorbs finite-difference noise on near-zero entries
                denom = max(abs(numeric), abs(analytic), 1e-3)
                assert abs(numeric - analytic) / denom < 1e-5
                checked += 1
        assert checked >= 50

    def test_duplicated_batch_same_gradient(self):
        rng = np.random.default_rng(7)
        model = init_model(rng)
        X = rng.normal(size=(6, 29))
        Y = rng.normal(size=(6, 2))
        g1 = mlp_gradient(model, X, Y)
        g2 = mlp_gradient(model, np.vstack([X, X]), np.vstack([Y, Y]))
        assert abs(g1.loss - g2.loss) < 1e-12
        for a, b in zip(g1.weights, g2.weights):
            np.testing.assert_allclose(a, b, atol=1e-12)

    def test_empty_batch_rejected(self):
        model = init_model(np.random.default_rng(8))
        with pytest.raises(ValueError):
            mlp_gradient(model, np.zeros((0, 29)), np.zeros((0, 2)))


class TestAdam:
    def test_first_step_is_signed_learning_rate(self):
        rng = np.random.default_rng(9)
        sizes = (29, 4, 2)
        model = init_model(rng, sizes)
        opt = init_adam(model, lr=0.01)
        grads = Gradients(
            weights=[np.full_like(w, 3.0) * np.sign(rng.normal(size=w.shape)) for w in model.weights],
            biases=[np.full_like(b, -2.0) for b in model.biases],
            loss=0.0,
        )
        new_model, new_opt = adam_step(model, grads, opt)
        for w_old, w_new, g in zip(model.weights, new_model.weights, grads.weights):
            np.testing.assert_allclose(w_new - w_old, -0.01 * np.sign(g), rtol=1e-6)
        assert new_opt.step == 1

    def test_zero_gradient_keeps_parameters(self):
        rng = np.random.default_rng(10)
        model = init_model(rng, (29, 4, 2))
        opt = init_adam(model)
        grads = Gradients(
            weights=[np.zeros_like(w) for w in model.weights],
            biases=[np.zeros_like(b) for b in model.biases],
            loss=0.0,
        )
        new_model, new_opt = adam_step(model, grads, opt)
        for a, b in zip(model.weights, new_model.weights):
            np.testing.assert_array_equal(a, b)
        assert new_opt.step == 1

    def test_converges_on_scalar_quadratic(self):
        # minimize (z - 3)^2 with the same update rule, scalar simulation
        lr, b1, b2, eps = 0.01, 0.9, 0.999, 1e-8
        z, m, v = 0.0, 0.0, 0.0
        for t in range(1, 1001):
            g = 2 * (z - 3.0)
            m = b1 * m + (1 - b1) * g
            v = b2 * v + (1 - b2) * g * g
            z -= lr * (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + eps)
        assert abs(z - 3.0) <= 0.05


class TestTrain:
    def test_loss_decreases(self):
        rng = np.random.default_rng(11)
        X = rng.normal(size=(400, 29))
        Y = np.stack([X[:, 0] * 0.5 + 0.1, X[:, 1] - 0.2], axis=1)
        cfg = TrainConfig(batch_size=50, epochs=30, lr=1e-3, validation_fraction=0.0)
        model, log = train((X, Y), cfg, np.random.default_rng(0))
        assert log["train_loss"][-1] < log["train_loss"][0]

    def test_single_sample_memorized(self):
        rng = np.random.default_rng(12)
        x = rng.normal(size=(1, 29))
        y = np.array([[0.3, -0.4]])
        cfg = TrainConfig(batch_size=1, epochs=800, lr=1e-2, validation_fraction=0.0)
        model, _ = train((x, y), cfg, np.random.default_rng(0))
        np.testing.assert_allclose(mlp_forward(model, x[0]), y[0], atol=0.02)

    def test_deterministic_under_seed(self):
        rng = np.random.default_rng(13)
        X = rng.normal(size=(100, 29))
        Y = rng.normal(size=(100, 2))
        cfg = TrainConfig(batch_size=20, epochs=3, validation_fraction=0.0)
        m1, _ = train((X, Y), cfg, np.random.default_rng(99))
        m2, _ = train((X, Y), cfg, np.random.default_rng(99))
        for a, b in zip(m1.weights, m2.weights):
            np.testing.assert_array_equal(a, b)


class TestExtractSamples:
    def _tiny_trajectory(self, steps=5, n=7):
        from vflock.trajectory import run_closed_loop
        from vflock.flock import JointAction

        rng = np.random.default_rng(14)
        initial = sample_initial_state(n, (0, 5), (0.25, 0.75), rng)

        def controller(state, r):
            return JointAction(rng.normal(size=(state.n, 2)) * 0.1)

        return run_closed_loop(initial, controller, steps, DYN, PARAMS)

    def test_sample_count(self):
        traj = self._tiny_trajectory(steps=5)
        samples = extract_samples(traj, PARAMS)
        assert len(samples) == 5 * 7

    def test_self_features_zero(self):
        samples = extract_samples(self._tiny_trajectory(), PARAMS)
        for s in samples:
            assert s.features[0] == 0.0 and s.features[1] == 0.0

    def test_labels_are_recorded_actions(self):
        traj = self._tiny_trajectory(steps=3)
        samples = extract_samples(traj, PARAMS)
        for t, (state, action) in enumerate(zip(traj.states, traj.actions)):
            for j in range(7):
                np.testing.assert_array_equal(
                    samples[t * 7 + j].label, action.accelerations[j]
                )

    def test_cost_feature_is_local_cost(self):
        traj = self._tiny_trajectory(steps=2)
        samples = extract_samples(traj, PARAMS)
        for t, state in enumerate(traj.states):
            for j in range(7):
                expected = local_cost(state, j, PARAMS, 7)
                assert abs(samples[t * 7 + j].features[-1] - expected) < 1e-12


class TestDncStep:
    def test_translation_invariance(self):
        rng = np.random.default_rng(15)
        model = init_model(rng)
        state = sample_initial_state(7, (0, 5), (0.25, 0.75), rng)
        a1 = dnc_step(state, model, PARAMS, DYN)
        a2 = dnc_step(state.translated([55.0, -3.0]), model, PARAMS, DYN)
        np.testing.assert_allclose(a1.accelerations, a2.accelerations, atol=1e-9)

    def test_permutation_equivariance(self):
        rng = np.random.default_rng(16)
        model = init_model(rng)
        state = sample_initial_state(7, (0, 5), (0.25, 0.75), rng)
        perm = rng.permutation(7)
        permuted = FlockState(state.positions[perm], state.velocities[perm])
        a = dnc_step(state, model, PARAMS, DYN).accelerations
        b = dnc_step(permuted, model, PARAMS, DYN).accelerations
        np.testing.assert_allclose(b, a[perm], atol=1e-12)

    def test_respects_constraints(self):
        rng = np.random.default_rng(17)
        model = init_model(rng)
        state = sample_initial_state(7, (0, 5), (0.25, 0.75), rng)
        out = dnc_step(state, model, PARAMS, DYN)
        amag = np.linalg.norm(out.accelerations, axis=1)
        speeds = np.linalg.norm(state.velocities, axis=1)
        assert np.all(amag <= DYN.rho * speeds + 1e-12)

    def test_small_flock_rejected(self):
        rng = np.random.default_rng(18)
        model = init_model(rng)
        state = sample_initial_state(6, (0, 5), (0.25, 0.75), rng)
        with pytest.raises(ValueError):
            dnc_step(state, model, PARAMS, DYN)


class TestTrainingSample:
    def test_validation(self):
        with pytest.raises(ValueError):
            TrainingSample(np.zeros(28), np.zeros(2))
        with pytest.raises(ValueError):
            TrainingSample(np.zeros(29), np.array([np.inf, 0.0]))
