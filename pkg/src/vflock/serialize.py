"""Artifact file formats: trajectories, sample datasets, models, tables.

All floats are written with 17 significant digits so that reading a file
back reproduces the exact float64 values. Every artifact embeds the
configuration hash of the run that produced it, and loaders can verify that
hash against the current configuration.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .flock import FlockState, JointAction
from .nn import MlpModel, TrainingSample
from .trajectory import Trajectory

_FMT = "%.17g"


def _fmt(x: float) -> str:
    return _FMT % x


class ArtifactMismatchError(RuntimeError):
    """An artifact was produced under a different configuration."""


def _check_hash(found: str, expected: str | None, path):
    if expected is not None and found != expected:
        raise ArtifactMismatchError(
            f"{path}: artifact config hash {found} != expected {expected} "
            f"(pass force=True to override)"
        )


# ---------------------------------------------------------------------------
# trajectories: header, then one line per step with
# step index, 4n state floats (x y vx vy per agent), 2n action floats, cost J
# ---------------------------------------------------------------------------

def write_trajectory(traj: Trajectory, path, dt: float, config_hash: str = "") -> None:
    path = Path(path)
    n = traj.n
    lines = [f"# vflock-trajectory n={n} dt={_fmt(dt)} config={config_hash}"]
    for t, (state, action, cost) in enumerate(zip(traj.states, traj.actions, traj.costs)):
        parts = [str(t)]
        for i in range(n):
            parts.extend(
                _fmt(v)
                for v in (
                    state.positions[i, 0],
                    state.positions[i, 1],
                    state.velocities[i, 0],
                    state.velocities[i, 1],
                )
            )
        for i in range(n):
            parts.extend(_fmt(v) for v in action.accelerations[i])
        parts.append(_fmt(cost))
        lines.append(" ".join(parts))
    path.write_text("\n".join(lines) + "\n")


def read_trajectory(path, expected_hash: str | None = None) -> Trajectory:
    path = Path(path)
    lines = path.read_text().splitlines()
    header = lines[0].split()
    if len(header) < 4 or header[0] != "#" or header[1] != "vflock-trajectory":
        raise ValueError(f"{path} is not a trajectory file")
    fields = dict(item.split("=", 1) for item in header[2:])
    n = int(fields["n"])
    dt = float(fields["dt"])
    _check_hash(fields.get("config", ""), expected_hash, path)
    states, actions, costs = [], [], []
    for line in lines[1:]:
        vals = line.split()
        expected = 1 + 4 * n + 2 * n + 1
        if len(vals) != expected:
            raise ValueError(f"{path}: record has {len(vals)} fields, expected {expected}")
        floats = np.array([float(v) for v in vals[1:]])
        state_part = floats[: 4 * n].reshape(n, 4)
        action_part = floats[4 * n : 6 * n].reshape(n, 2)
        states.append(FlockState(state_part[:, 0:2], state_part[:, 2:4]))
        actions.append(JointAction(action_part))
        costs.append(float(floats[-1]))
    return Trajectory(states=states, actions=actions, costs=costs, meta={"dt": dt})


# ---------------------------------------------------------------------------
# datasets: one sample per line, 29 features then 2 labels
# ---------------------------------------------------------------------------

def write_dataset(samples, path, config_hash: str = "") -> None:
    path = Path(path)
    lines = [f"# vflock-dataset count={len(samples)} config={config_hash}"]
    for s in samples:
        vals = [_fmt(v) for v in s.features] + [_fmt(v) for v in s.label]
        lines.append(" ".join(vals))
    path.write_text("\n".join(lines) + "\n")


def read_dataset(path, expected_hash: str | None = None) -> list:
    path = Path(path)
    lines = path.read_text().splitlines()
    header = lines[0].split()
    if len(header) < 3 or header[1] != "vflock-dataset":
        raise ValueError(f"{path} is not a dataset file")
    fields = dict(item.split("=", 1) for item in header[2:])
    _check_hash(fields.get("config", ""), expected_hash, path)
    samples = []
    for line in lines[1:]:
        vals = [float(v) for v in line.split()]
        samples.append(TrainingSample(np.array(vals[:-2]), np.array(vals[-2:])))
    if len(samples) != int(fields["count"]):
        raise ValueError(f"{path}: header count {fields['count']} != {len(samples)} lines")
    return samples


# ---------------------------------------------------------------------------
# models: versioned text format with layer sizes and flat parameter lists
# ---------------------------------------------------------------------------

_MODEL_VERSION = 1


def write_model(model: MlpModel, path, config_hash: str = "") -> None:
    path = Path(path)
    lines = [
        f"# vflock-model version={_MODEL_VERSION} config={config_hash}",
        "sizes " + " ".join(str(s) for s in model.sizes),
    ]
    if model.feature_offset is not None:
        lines.append("offset " + " ".join(_fmt(v) for v in model.feature_offset))
        lines.append("scale " + " ".join(_fmt(v) for v in model.feature_scale))
    for w, b in zip(model.weights, model.biases):
        lines.append("w " + " ".join(_fmt(v) for v in w.ravel()))
        lines.append("b " + " ".join(_fmt(v) for v in b))
    path.write_text("\n".join(lines) + "\n")


def read_model(path, expected_hash: str | None = None) -> MlpModel:
    path = Path(path)
    lines = path.read_text().splitlines()
    header = lines[0].split()
    if len(header) < 3 or header[1] != "vflock-model":
        raise ValueError(f"{path} is not a model file")
    fields = dict(item.split("=", 1) for item in header[2:])
    if int(fields["version"]) != _MODEL_VERSION:
        raise ValueError(f"{path}: unsupported model version {fields['version']}")
    _check_hash(fields.get("config", ""), expected_hash, path)
    body = {"w": [], "b": []}
    sizes = None
    offset = scale = None
    for line in lines[1:]:
        tag, rest = line.split(" ", 1)
        if tag == "sizes":
            sizes = tuple(int(v) for v in rest.split())
        elif tag == "offset":
            offset = np.array([float(v) for v in rest.split()])
        elif tag == "scale":
            scale = np.array([float(v) for v in rest.split()])
        elif tag in body:
            body[tag].append(np.array([float(v) for v in rest.split()]))
        else:
            raise ValueError(f"{path}: unknown record tag {tag!r}")
    if sizes is None or len(body["w"]) != len(sizes) - 1:
        raise ValueError(f"{path}: malformed model file")
    weights = tuple(
        w.reshape(out_dim, in_dim)
        for w, in_dim, out_dim in zip(body["w"], sizes[:-1], sizes[1:])
    )
    biases = tuple(body["b"])
    return MlpModel(
        sizes=sizes,
        weights=weights,
        biases=biases,
        feature_offset=offset,
        feature_scale=scale,
    )


# ---------------------------------------------------------------------------
# results tables: tab-separated with provenance comments
# ---------------------------------------------------------------------------

@dataclass
class ResultsTable:
    """Typed rows with named columns and run provenance."""

    columns: tuple
    rows: list = field(default_factory=list)
    config_hash: str = ""
    seed: int = 0
    timestamp: str = ""

    def add(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"row has {len(values)} fields, table has {len(self.columns)} columns")
        self.rows.append(tuple(values))

    def column(self, name):
        idx = self.columns.index(name)
        return [row[idx] for row in self.rows]

    def write(self, path) -> None:
        path = Path(path)
        lines = [
            f"# config={self.config_hash} seed={self.seed}"
            + (f" timestamp={self.timestamp}" if self.timestamp else ""),
            "\t".join(self.columns),
        ]
        for row in self.rows:
            lines.append("\t".join(_fmt(v) if isinstance(v, float) else str(v) for v in row))
        path.write_text("\n".join(lines) + "\n")

    def format(self) -> str:
        widths = [
            max(len(str(c)), *(len(_cell(row[i])) for row in self.rows)) if self.rows else len(str(c))
            for i, c in enumerate(self.columns)
        ]
        out = ["  ".join(str(c).ljust(w) for c, w in zip(self.columns, widths))]
        for row in self.rows:
            out.append("  ".join(_cell(v).ljust(w) for v, w in zip(row, widths)))
        return "\n".join(out)


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)
