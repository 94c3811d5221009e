"""Experiment command line: teacher data generation, training, retraining,
controller comparison, statistical verification, scenarios, robustness.

Every command takes a configuration (from a file or a scale preset), embeds
its hash in all artifacts, and refuses mixed-provenance inputs unless
forced. Fixed master seed means bit-identical outputs across reruns.
"""

from __future__ import annotations

import argparse
import datetime
import json
import logging
import os
import sys
import time
from pathlib import Path

import numpy as np

from .cegkr import cegkr_run, evaluate_controller
from .config import ExperimentConfig, load_config, preset, save_config
from .cost import global_cost
from .flock import sample_initial_state
from .mpc import campc_trajectory, dampc_controller
from .nn import dnc_controller, extract_samples, samples_to_arrays, train
from .scenarios import AveragingController, default_registry, run_scenario
from .serialize import (
    ArtifactMismatchError,
    ResultsTable,
    read_dataset,
    read_model,
    write_dataset,
    write_model,
    write_trajectory,
)
from .smc import SmcConfig, smc_estimate
from .trajectory import first_passage_step, run_closed_loop

logger = logging.getLogger(__name__)

DATASET_FILE = "dataset_initial.txt"
MODEL_INITIAL = "model_initial.txt"
MODEL_CEGKR = "model_cegkr.txt"
MANIFEST_FILE = "manifest.json"


def _timestamp() -> str:
    return datetime.datetime.now().isoformat(timespec="seconds")


def _table(cfg: ExperimentConfig, columns) -> ResultsTable:
    return ResultsTable(
        columns=tuple(columns),
        config_hash=cfg.config_hash(),
        seed=cfg.master_seed,
        timestamp=_timestamp(),
    )


def _out(cfg: ExperimentConfig) -> Path:
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _require(path: Path, producer: str) -> Path:
    if not path.exists():
        raise FileNotFoundError(f"missing artifact {path}; run `vflock {producer}` first")
    return path


def _scaled(cfg: ExperimentConfig, n: int) -> tuple[int, float]:
    """Steps and threshold proportional to flock size."""
    steps = max(1, round(n / 7 * cfg.cegkr.steps))
    threshold = n / 7 * cfg.cegkr.threshold
    return steps, threshold


def cmd_generate(cfg: ExperimentConfig, count: int | None = None) -> Path:
    """Generate teacher trajectories and the extracted training dataset."""
    out = _out(cfg)
    count = cfg.teacher_trajectories if count is None else count
    chash = cfg.config_hash()
    traj_dir = out / "trajectories"
    traj_dir.mkdir(exist_ok=True)
    rng = np.random.default_rng([cfg.master_seed, 1])
    samples = []
    kept = 0
    for idx in range(count):
        initial = sample_initial_state(
            cfg.cegkr.n_agents, cfg.cegkr.position_range, cfg.cegkr.velocity_range, rng
        )
        traj = campc_trajectory(initial, cfg.cegkr.steps, cfg.campc, rng)
        write_trajectory(traj, traj_dir / f"traj_{idx:05d}.txt", cfg.dyn.dt, chash)
        if traj.final_cost <= cfg.cost.phi:
            samples.extend(extract_samples(traj, cfg.cost))
            kept += 1
        else:
            logger.info("teacher run %d did not converge; excluded from dataset", idx)
    write_dataset(samples, out / DATASET_FILE, chash)
    manifest = {
        "config_hash": chash,
        "master_seed": cfg.master_seed,
        "trajectories": count,
        "converged_trajectories": kept,
        "sample_count": len(samples),
    }
    (out / MANIFEST_FILE).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    print(f"generate: {count} teacher runs, {kept} converged, {len(samples)} samples -> {out / DATASET_FILE}")
    return out / DATASET_FILE


def cmd_train(cfg: ExperimentConfig, force: bool = False) -> Path:
    """Train the neural controller on the generated dataset."""
    out = _out(cfg)
    chash = cfg.config_hash()
    dataset_path = _require(out / DATASET_FILE, "generate")
    samples = read_dataset(dataset_path, None if force else chash)
    rng = np.random.default_rng([cfg.master_seed, 2])
    model, log = train(samples_to_arrays(samples), cfg.train, rng)
    write_model(model, out / MODEL_INITIAL, chash)
    losses = " ".join(f"{v:.6g}" for v in log["train_loss"][:: max(1, len(log["train_loss"]) // 10)])
    print(f"train: {len(samples)} samples, {cfg.train.epochs} epochs -> {out / MODEL_INITIAL}")
    print(f"train: loss trend {losses}")
    return out / MODEL_INITIAL


def cmd_cegkr(cfg: ExperimentConfig, force: bool = False) -> Path:
    """Run the counterexample-guided retraining loop."""
    out = _out(cfg)
    chash = cfg.config_hash()
    dataset_path = _require(out / DATASET_FILE, "generate")
    samples = read_dataset(dataset_path, None if force else chash)
    initial_model = None
    model_path = out / MODEL_INITIAL
    if model_path.exists():
        initial_model = read_model(model_path, None if force else chash)
    rng = np.random.default_rng([cfg.master_seed, 3])
    model, reports = cegkr_run(samples, cfg.cegkr, rng, initial_model=initial_model)
    write_model(model, out / MODEL_CEGKR, chash)
    table = _table(cfg, ("round", "guided_samples", "guided_points", "success_rate", "failed", "median_final_cost"))
    for r in reports:
        table.add(r.round_id, r.guided_samples, r.guided_points, r.success_rate, r.failed_count, r.median_final_cost)
    table.write(out / "cegkr_rounds.tsv")
    print(table.format())
    print(f"cegkr: best model -> {out / MODEL_CEGKR}")
    return out / MODEL_CEGKR


def _measure_controller(controller, initial, steps, cfg, rng):
    """Roll out a controller, returning (final costs trace, per-step seconds)."""
    times = []
    state = initial
    costs = []
    from .flock import step_dynamics

    for _ in range(steps):
        t0 = time.perf_counter()
        action = controller(state, rng)
        times.append(time.perf_counter() - t0)
        costs.append(global_cost(state, cfg.cost).j)
        state = step_dynamics(state, action, cfg.dyn)
    return costs, times


def cmd_compare(cfg: ExperimentConfig, force: bool = False) -> Path:
    """Compare the trained controllers over shared initial-state batches."""
    out = _out(cfg)
    chash = cfg.config_hash()
    pre = read_model(_require(out / MODEL_INITIAL, "train"), None if force else chash)
    post = read_model(_require(out / MODEL_CEGKR, "cegkr"), None if force else chash)
    controllers = {
        "dnc_pre": dnc_controller(pre, cfg.cost, cfg.dyn),
        "dnc_cegkr": dnc_controller(post, cfg.cost, cfg.dyn),
        "dampc": dampc_controller(cfg.dampc),
    }
    table = _table(
        cfg,
        ("controller", "agents", "success_rate", "avg_convergence_time", "per_agent_step_ms"),
    )
    plots = out / "plots"
    plots.mkdir(exist_ok=True)
    for n in cfg.compare_agents:
        steps, threshold = _scaled(cfg, n)
        for name, controller in controllers.items():
            successes = 0
            conv_times = []
            step_times = []
            for trial in range(cfg.compare_batch):
                rng = np.random.default_rng([cfg.master_seed, 4, n, trial])
                initial = sample_initial_state(
                    n, cfg.cegkr.position_range, cfg.cegkr.velocity_range, rng
                )
                costs, times = _measure_controller(controller, initial, steps, cfg, rng)
                step_times.extend(times)
                if costs[-1] <= threshold:
                    successes += 1
                    fp = first_passage_step(costs, threshold)
                    conv_times.append(fp if fp is not None else steps)
                if trial == 0:
                    series = "\n".join(f"{t} {c:.17g}" for t, c in enumerate(costs))
                    (plots / f"jtrace_{name}_{n}.txt").write_text(series + "\n")
            rate = successes / cfg.compare_batch
            avg_ct = float(np.mean(conv_times)) if conv_times else float("nan")
            per_agent_ms = float(np.median(step_times)) / n * 1e3
            table.add(name, n, rate, avg_ct, per_agent_ms)
            print(f"compare: {name} n={n} success={rate:.3f} conv={avg_ct:.2f} per-agent={per_agent_ms:.3f} ms")
    table.write(out / "compare.tsv")
    _write_snapshots(cfg, controllers["dnc_cegkr"], plots)
    return out / "compare.tsv"


def _write_snapshots(cfg, controller, plots: Path) -> None:
    """Coordinate dumps of one run for external plotting."""
    rng = np.random.default_rng([cfg.master_seed, 5])
    initial = sample_initial_state(
        cfg.cegkr.n_agents, cfg.cegkr.position_range, cfg.cegkr.velocity_range, rng
    )
    traj = run_closed_loop(initial, controller, cfg.cegkr.steps, cfg.dyn, cfg.cost, rng)
    lines = []
    for t, state in enumerate(traj.states):
        for i in range(state.n):
            lines.append(
                f"{t} {i} {state.positions[i,0]:.17g} {state.positions[i,1]:.17g} "
                f"{state.velocities[i,0]:.17g} {state.velocities[i,1]:.17g}"
            )
    (plots / "snapshot_dnc.txt").write_text("\n".join(lines) + "\n")


def cmd_smc(cfg: ExperimentConfig, force: bool = False) -> Path:
    """Statistical estimate of success rate and convergence time."""
    out = _out(cfg)
    chash = cfg.config_hash()
    model = read_model(_require(out / MODEL_CEGKR, "cegkr"), None if force else chash)
    controller = dnc_controller(model, cfg.cost, cfg.dyn)
    table = _table(cfg, ("agents", "epsilon", "delta", "trials", "success_rate", "mean_convergence_time"))
    for n in cfg.compare_agents:
        smc_cfg = SmcConfig(
            epsilon=cfg.smc_epsilon,
            delta=cfg.smc_delta,
            n_agents=n,
            base_steps=cfg.cegkr.steps,
            base_threshold=cfg.cegkr.threshold,
            position_range=cfg.cegkr.position_range,
            velocity_range=cfg.cegkr.velocity_range,
        )
        report = smc_estimate(controller, smc_cfg, cfg.master_seed, cfg.dyn, cfg.cost)
        table.add(n, cfg.smc_epsilon, cfg.smc_delta, report.trials, report.success_rate, report.mean_convergence_time)
        print(
            f"smc: n={n} trials={report.trials} success={report.success_rate:.4f} "
            f"conv={report.mean_convergence_time:.4f}"
        )
    table.write(out / "smc.tsv")
    return out / "smc.tsv"


def cmd_scenario(cfg: ExperimentConfig, names=None, steps: int = 200) -> Path:
    """Run the adversarial scenario registry with the reference controller."""
    out = _out(cfg)
    registry = default_registry(cfg.cost)
    names = list(registry) if not names else names
    table = _table(cfg, ("scenario", "controller", "steps", "failure_observed", "min_cost"))
    for name in names:
        if name not in registry:
            raise KeyError(f"unknown scenario {name!r}; available: {', '.join(registry)}")
        scenario = registry[name]
        controller = AveragingController(gain=0.1, neighborhood_size=scenario.neighborhood_size)
        verdict = run_scenario(scenario, controller, steps, cfg.dyn, cfg.cost, clamp=False)
        table.add(name, "averaging", steps, int(verdict.failure_observed), min(verdict.trajectory.costs))
        print(
            f"scenario: {name} failure_observed={verdict.failure_observed} "
            f"min_cost={min(verdict.trajectory.costs):.4g}"
        )
    table.write(out / "scenarios.tsv")
    return out / "scenarios.tsv"


ROBUSTNESS_SPACES = (
    ((0.0, 6.0), (0.4, 0.8)),
    ((0.0, 8.0), (0.35, 0.95)),
    ((0.0, 10.0), (0.1, 0.9)),
)


def cmd_robustness(cfg: ExperimentConfig, force: bool = False) -> Path:
    """Evaluate the trained model on widened initial-state ranges."""
    out = _out(cfg)
    chash = cfg.config_hash()
    model = read_model(_require(out / MODEL_CEGKR, "cegkr"), None if force else chash)
    controller = dnc_controller(model, cfg.cost, cfg.dyn)
    table = _table(
        cfg,
        ("position_range", "velocity_range", "agents", "success_rate", "avg_convergence_time"),
    )
    for pos_range, vel_range in ROBUSTNESS_SPACES:
        for n in (7, 15):
            steps, threshold = _scaled(cfg, n)
            successes = 0
            conv = []
            for trial in range(cfg.robustness_batch):
                rng = np.random.default_rng([cfg.master_seed, 6, n, trial])
                initial = sample_initial_state(n, pos_range, vel_range, rng)
                traj = run_closed_loop(initial, controller, steps, cfg.dyn, cfg.cost, rng)
                if traj.final_cost <= threshold:
                    successes += 1
                    fp = first_passage_step(traj.costs, threshold)
                    conv.append(fp if fp is not None else steps)
            rate = successes / cfg.robustness_batch
            avg_ct = float(np.mean(conv)) if conv else float("nan")
            table.add(str(pos_range), str(vel_range), n, rate, avg_ct)
            print(f"robustness: pos={pos_range} vel={vel_range} n={n} success={rate:.3f}")
    table.write(out / "robustness.tsv")
    return out / "robustness.tsv"


def _parse_agents(text: str) -> tuple:
    if "-" in text:
        lo, hi = text.split("-")
        return tuple(range(int(lo), int(hi) + 1))
    return tuple(int(v) for v in text.split(","))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="vflock", description=__doc__)
    parser.add_argument("--config", type=Path, help="experiment config file (INI)")
    parser.add_argument("--seed", type=int, help="override the master seed")
    parser.add_argument("--scale", choices=("desk", "paper"), default="desk")
    parser.add_argument("--out", type=str, default="results", help="output directory")
    parser.add_argument("--agents", type=str, help="agent counts, e.g. 7,10,13 or 7-16")
    parser.add_argument("--force", action="store_true", help="accept mixed-hash artifacts")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    gen = sub.add_parser("generate", help="teacher trajectories and dataset")
    gen.add_argument("--count", type=int, help="number of teacher trajectories")
    sub.add_parser("train", help="train the neural controller")
    sub.add_parser("cegkr", help="counterexample-guided retraining")
    sub.add_parser("compare", help="DNC vs DAMPC comparison tables")
    sub.add_parser("smc", help="statistical verification")
    scen = sub.add_parser("scenario", help="adversarial scenario registry")
    scen.add_argument("names", nargs="*", help="scenario names (default: all)")
    scen.add_argument("--steps", type=int, default=200)
    sub.add_parser("robustness", help="wider initial ranges")
    sub.add_parser("dump-config", help="write the resolved config file and exit")
    return parser


def resolve_config(args) -> ExperimentConfig:
    if args.config:
        cfg = load_config(args.config, out_dir=args.out)
    else:
        cfg = preset(args.scale, out_dir=args.out)
    if args.seed is not None:
        import dataclasses as _dc

        cfg = _dc.replace(cfg, master_seed=args.seed)
    if args.agents:
        import dataclasses as _dc

        cfg = _dc.replace(cfg, compare_agents=_parse_agents(args.agents))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    workers = os.environ.get("VFLOCK_WORKERS")
    if workers:
        logger.info("worker count override: %s", workers)
    try:
        cfg = resolve_config(args)
        if args.command == "generate":
            cmd_generate(cfg, args.count)
        elif args.command == "train":
            cmd_train(cfg, args.force)
        elif args.command == "cegkr":
            cmd_cegkr(cfg, args.force)
        elif args.command == "compare":
            cmd_compare(cfg, args.force)
        elif args.command == "smc":
            cmd_smc(cfg, args.force)
        elif args.command == "scenario":
            cmd_scenario(cfg, args.names, args.steps)
        elif args.command == "robustness":
            cmd_robustness(cfg, args.force)
        elif args.command == "dump-config":
            out = _out(cfg) / "experiment.ini"
            save_config(cfg, out)
            print(f"config ({cfg.config_hash()}) -> {out}")
    except (ArtifactMismatchError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
