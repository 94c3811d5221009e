"""Distributed neural controller: a from-scratch fully connected network
trained by supervised learning on teacher trajectories.

The network maps an agent's 29-feature local view to its 2D acceleration.
Architecture: 5 hidden layers of 84 sigmoid units and a linear output layer
(accelerations can be negative, so the output is unsquashed). Training uses
mini-batch Adam on mean-squared error. One shared model serves every agent,
which makes the controller symmetric and fully distributed.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .cost import CostParameters, local_cost
from .flock import (
    DynamicsParameters,
    FlockState,
    JointAction,
    VIEW_FEATURES,
    VIEW_SIZE,
    clamp_accelerations,
    local_view,
    neighborhood,
)
from .trajectory import Trajectory

DEFAULT_SIZES = (VIEW_FEATURES, 84, 84, 84, 84, 84, 2)


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


@dataclass(frozen=True)
class MlpModel:
    """Layer weights/biases plus optional per-feature input normalization."""

    sizes: tuple
    weights: tuple  # weights[k] has shape (sizes[k+1], sizes[k])
    biases: tuple  # biases[k] has shape (sizes[k+1],)
    feature_offset: np.ndarray | None = None
    feature_scale: np.ndarray | None = None

    @property
    def parameter_count(self) -> int:
        return int(sum(w.size + b.size for w, b in zip(self.weights, self.biases)))

    def normalize(self, x):
        if self.feature_offset is None:
            return x
        return (x - self.feature_offset) / self.feature_scale


def init_model(rng: np.random.Generator, sizes=DEFAULT_SIZES) -> MlpModel:
    """Uniform Xavier initialization in +-sqrt(6 / (fan_in + fan_out))."""
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        limit = np.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-limit, limit, size=(fan_out, fan_in)))
        biases.append(np.zeros(fan_out))
    return MlpModel(sizes=tuple(sizes), weights=tuple(weights), biases=tuple(biases))


def mlp_forward(model: MlpModel, inputs) -> np.ndarray:
    """Evaluate the network on one input vector or a (B, in) batch."""
    x = np.asarray(inputs, float)
    if not np.all(np.isfinite(x)):
        raise ValueError("network input contains non-finite values")
    single = x.ndim == 1
    a = np.atleast_2d(model.normalize(x))
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = a @ w.T + b
        a = z if k == last else _sigmoid(z)
    return a[0] if single else a


@dataclass
class Gradients:
    """Per-parameter gradients of the batch MSE, plus the loss itself."""

    weights: list
    biases: list
    loss: float


def mlp_gradient(model: MlpModel, inputs, labels) -> Gradients:
    """Exact reverse-mode gradient of the mean-squared error.

    Loss convention: the squared error is averaged over the batch and over
    the output coordinates, L = mean((prediction - label)^2).
    """
    x = np.atleast_2d(np.asarray(inputs, float))
    y = np.atleast_2d(np.asarray(labels, float))
    if len(x) == 0:
        raise ValueError("gradient requires a nonempty batch")
    a = model.normalize(x)
    activations = [a]
    last = len(model.weights) - 1
    for k, (w, b) in enumerate(zip(model.weights, model.biases)):
        z = activations[-1] @ w.T + b
        activations.append(z if k == last else _sigmoid(z))
    pred = activations[-1]
    batch, out_dim = pred.shape
    loss = float(np.mean((pred - y) ** 2))

    grad_w = [None] * len(model.weights)
    grad_b = [None] * len(model.biases)
    delta = 2.0 * (pred - y) / (batch * out_dim)
    for k in range(last, -1, -1):
        grad_w[k] = delta.T @ activations[k]
        grad_b[k] = delta.sum(axis=0)
        if k > 0:
            sig = activations[k]
            delta = (delta @ model.weights[k]) * sig * (1.0 - sig)
    return Gradients(weights=grad_w, biases=grad_b, loss=loss)


@dataclass(frozen=True)
class AdamState:
    """Adam optimizer settings and moment accumulators."""

    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    m_w: tuple = ()
    v_w: tuple = ()
    m_b: tuple = ()
    v_b: tuple = ()
    step: int = 0


def init_adam(model: MlpModel, lr: float = 1e-4, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> AdamState:
    return AdamState(
        lr=lr, beta1=beta1, beta2=beta2, eps=eps,
        m_w=tuple(np.zeros_like(w) for w in model.weights),
        v_w=tuple(np.zeros_like(w) for w in model.weights),
        m_b=tuple(np.zeros_like(b) for b in model.biases),
        v_b=tuple(np.zeros_like(b) for b in model.biases),
        step=0,
    )


def adam_step(model: MlpModel, grads: Gradients, opt: AdamState) -> tuple[MlpModel, AdamState]:
    """Standard bias-corrected Adam update; returns new model and state."""
    t = opt.step + 1
    c1 = 1.0 - opt.beta1**t
    c2 = 1.0 - opt.beta2**t
    new_w, new_b = [], []
    m_w, v_w, m_b, v_b = [], [], [], []
    for w, g, m, v in zip(model.weights, grads.weights, opt.m_w, opt.v_w):
        m = opt.beta1 * m + (1.0 - opt.beta1) * g
        v = opt.beta2 * v + (1.0 - opt.beta2) * g**2
        new_w.append(w - opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps))
        m_w.append(m)
        v_w.append(v)
    for b, g, m, v in zip(model.biases, grads.biases, opt.m_b, opt.v_b):
        m = opt.beta1 * m + (1.0 - opt.beta1) * g
        v = opt.beta2 * v + (1.0 - opt.beta2) * g**2
        new_b.append(b - opt.lr * (m / c1) / (np.sqrt(v / c2) + opt.eps))
        m_b.append(m)
        v_b.append(v)
    model = replace(model, weights=tuple(new_w), biases=tuple(new_b))
    opt = replace(opt, m_w=tuple(m_w), v_w=tuple(v_w), m_b=tuple(m_b), v_b=tuple(v_b), step=t)
    return model, opt


@dataclass(frozen=True)
class TrainingSample:
    """One agent's local view paired with its teacher acceleration."""

    features: np.ndarray  # 29 floats
    label: np.ndarray  # 2 floats

    def __post_init__(self):
        f = np.asarray(self.features, float)
        y = np.asarray(self.label, float)
        if f.shape != (VIEW_FEATURES,) or y.shape != (2,):
            raise ValueError("sample must pair 29 features with a 2D label")
        if not (np.all(np.isfinite(f)) and np.all(np.isfinite(y))):
            raise ValueError("sample contains non-finite values")
        object.__setattr__(self, "features", f)
        object.__setattr__(self, "label", y)


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 500
    epochs: int = 1000
    lr: float = 1e-4
    normalize: bool = False  # per-feature affine input normalization
    validation_fraction: float = 0.05  # monitoring only, no early stopping

    def __post_init__(self):
        if self.batch_size < 1 or self.epochs < 1:
            raise ValueError("batch_size and epochs must be positive")


def samples_to_arrays(samples) -> tuple[np.ndarray, np.ndarray]:
    X = np.array([s.features for s in samples])
    Y = np.array([s.label for s in samples])
    return X, Y


def train(
    samples,
    cfg: TrainConfig,
    rng: np.random.Generator,
    sizes=DEFAULT_SIZES,
) -> tuple[MlpModel, dict]:
    """Mini-batch Adam over shuffled samples for the configured epochs.

    Returns the final model and a log with per-epoch mean train loss and
    validation loss. Deterministic for a fixed generator state.
    """
    X, Y = samples_to_arrays(samples) if not isinstance(samples, tuple) else samples
    if len(X) == 0:
        raise ValueError("training requires at least one sample")
    model = init_model(rng, sizes)
    if cfg.normalize:
        offset = X.mean(axis=0)
        scale = np.maximum(X.std(axis=0), 1e-8)
        model = replace(model, feature_offset=offset, feature_scale=scale)
    opt = init_adam(model, lr=cfg.lr)

    n_val = int(len(X) * cfg.validation_fraction) if len(X) >= 20 else 0
    perm = rng.permutation(len(X))
    val_idx, train_idx = perm[:n_val], perm[n_val:]
    Xt, Yt = X[train_idx], Y[train_idx]
    Xv, Yv = X[val_idx], Y[val_idx]

    log = {"train_loss": [], "val_loss": []}
    for _ in range(cfg.epochs):
        order = rng.permutation(len(Xt))
        epoch_losses = []
        for start in range(0, len(Xt), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            grads = mlp_gradient(model, Xt[idx], Yt[idx])
            model, opt = adam_step(model, grads, opt)
            epoch_losses.append(grads.loss)
        log["train_loss"].append(float(np.mean(epoch_losses)))
        if n_val:
            pred = mlp_forward(model, Xv)
            log["val_loss"].append(float(np.mean((pred - Yv) ** 2)))
    return model, log


def extract_samples(traj: Trajectory, cost_params: CostParameters) -> list:
    """Turn a teacher trajectory into per-agent training samples.

    Each of the n agents contributes one sample per recorded step: its local
    view (with its local cost) labeled with the acceleration the teacher
    assigned to it, so a 50-step 7-agent trajectory yields 350 samples.
    """
    if traj.n < VIEW_SIZE:
        raise ValueError(f"sample extraction needs at least {VIEW_SIZE} agents")
    samples = []
    for state, action in zip(traj.states, traj.actions):
        for j in range(state.n):
            jcost = local_cost(state, j, cost_params, VIEW_SIZE)
            view = local_view(state, j, jcost)
            samples.append(TrainingSample(view.features, action.accelerations[j]))
    return samples


def dnc_step(
    state: FlockState,
    model: MlpModel,
    cost_params: CostParameters,
    dyn: DynamicsParameters,
) -> JointAction:
    """Evaluate the shared network once per agent on its local view.

    No inter-agent communication: each agent senses its 7-agent
    neighborhood, computes its local cost, and runs the same network. The
    assembled accelerations are clamped to the motion constraints.
    """
    n = state.n
    if n < VIEW_SIZE:
        raise ValueError(f"the neural controller needs at least {VIEW_SIZE} agents")
    views = np.empty((n, VIEW_FEATURES))
    for i in range(n):
        jcost = local_cost(state, i, cost_params, VIEW_SIZE)
        views[i] = local_view(state, i, jcost).features
    accel = mlp_forward(model, views)
    accel = clamp_accelerations(state.velocities, accel, dyn)
    return JointAction(accel)


def dnc_controller(model: MlpModel, cost_params: CostParameters, dyn: DynamicsParameters):
    """Adapt dnc_step to the controller(state, rng) -> JointAction protocol."""

    def controller(state, rng=None):
        return dnc_step(state, model, cost_params, dyn)

    return controller
