"""Seeded training runs, experiment matrices and learning-curve CSVs."""

from __future__ import annotations

import csv
import dataclasses
import io
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import AgentConfig, DdpgAgent
from .env import make_env, project_goal
from .geometry import random_reflection
from .replay import (
    RelabelSpec,
    ReplayBuffer,
    Trajectory,
    ger_relabel,
    minibatch_ker,
    sample_minibatch,
    store_with_ker,
)

log = logging.getLogger(__name__)

CSV_HEADER = ["epoch", "real_episodes", "real_steps", "success_rate", "critic_loss", "actor_loss", "wall_seconds"]
SUCCESS_TARGET = 0.9


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class RunConfig:
    env: str = "reach2d"
    seed: int = 0
    epochs: int = 50
    episodes_per_epoch: int = 16
    episodes_per_cycle: int = 1
    updates_per_cycle: int = 40
    batch_size: int = 64
    ker_n: int = 0
    ker_mode: str = "store"
    ker_planes: str = "random"
    ger_k: int = 1
    ger_epsilons: tuple[float, ...] | None = None
    ger_combine: str = "concat"
    relabel_prob: float = 0.8
    buffer_capacity: int = 10_000
    n_eval: int = 50
    step_size: float = 0.05
    success_threshold: float = 0.05
    horizon: int = 50
    gamma: float = 0.98
    hidden: tuple[int, ...] = (64, 64)
    actor_lr: float = 1e-3
    critic_lr: float = 1e-3
    tau: float = 0.05
    noise_eps: float = 0.1
    random_eps: float = 0.2
    action_l2: float = 0.0
    record_wall_time: bool = True
    out: str | None = None
    checkpoint_dir: str | None = None
    label: str = ""

    def validate(self) -> None:
        make_env(self.env)
        for name in ("epochs", "episodes_per_epoch", "episodes_per_cycle", "batch_size", "buffer_capacity",
                     "n_eval", "ger_k", "horizon"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be at least 1")
        if self.updates_per_cycle < 0 or self.ker_n < 0:
            raise ValueError("updates_per_cycle and ker_n must be nonnegative")
        if self.episodes_per_epoch % self.episodes_per_cycle:
            raise ValueError("episodes_per_epoch must be a multiple of episodes_per_cycle")
        if self.ker_mode not in ("store", "minibatch"):
            raise ValueError(f"ker_mode must be store or minibatch, got {self.ker_mode!r}")
        if self.ker_planes not in ("random", "fixed"):
            raise ValueError(f"ker_planes must be random or fixed, got {self.ker_planes!r}")
        if self.ger_combine not in ("concat", "sequential"):
            raise ValueError(f"ger_combine must be concat or sequential, got {self.ger_combine!r}")
        if self.ger_epsilons is not None and len(self.ger_epsilons) != self.ger_k:
            raise ValueError(f"ger_k={self.ger_k} but {len(self.ger_epsilons)} thresholds given")
        self.relabel_spec()

    def relabel_spec(self) -> RelabelSpec:
        if self.ger_epsilons is None:
            return RelabelSpec.ladder(self.ger_k, self.success_threshold, self.relabel_prob)
        return RelabelSpec(tuple(self.ger_epsilons), self.success_threshold, self.relabel_prob)

    def agent_config(self) -> AgentConfig:
        return AgentConfig(tuple(self.hidden), self.actor_lr, self.critic_lr, self.tau, self.gamma,
                           self.noise_eps, self.random_eps, self.action_l2)


@dataclass
class EpochRecord:
    epoch: int
    real_episodes: int
    real_steps: int
    success_rate: float
    critic_loss: float
    actor_loss: float
    wall_seconds: float

    def row(self) -> list[str]:
        return [str(self.epoch), str(self.real_episodes), str(self.real_steps), repr(self.success_rate),
                repr(self.critic_loss), repr(self.actor_loss), repr(self.wall_seconds)]


# --- config parsing -------------------------------------------------------

_FIELD_TYPES = {f.name: f.type for f in dataclasses.fields(RunConfig)}


def _parse_value(key: str, text: str):
    kind = _FIELD_TYPES[key]
    text = text.strip()
    if "tuple" in kind:
        if text.lower() in ("", "none"):
            return None
        cast = int if key == "hidden" else float
        return tuple(cast(x) for x in text.replace(" ", "").split(",") if x)
    if kind == "bool":
        if text.lower() in ("1", "true", "yes", "on"):
            return True
        if text.lower() in ("0", "false", "no", "off"):
            return False
        raise ValueError(f"{key}: expected a boolean, got {text!r}")
    if kind == "int":
        return int(text)
    if kind == "float":
        return float(text)
    if "str | None" in kind:
        return None if text.lower() == "none" else text
    return text


def parse_config_text(text: str) -> dict[str, str]:
    """``key = value`` lines with ``#`` comments; returns raw string values."""
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        raw[key.replace("-", "_")] = value
    return raw


def config_from_mapping(raw: dict[str, str], base: RunConfig | None = None) -> RunConfig:
    values = dataclasses.asdict(base) if base else {}
    for key, text in raw.items():
        if key not in _FIELD_TYPES:
            raise ValueError(f"unknown config key {key!r}")
        values[key] = _parse_value(key, text)
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    return config_from_mapping(parse_config_text(Path(path).read_text()))


def expand_matrix(text: str) -> list[RunConfig]:
    """Expand a matrix file into one RunConfig per (cell, seed).

    Values containing ``|`` are grid axes; ``seeds`` lists the seeds for
    every cell.  Cells are labelled by their axis assignments.
    """
    raw = parse_config_text(text)
    seeds = [int(s) for s in raw.pop("seeds", raw.pop("seed", "0")).split(",")]
    axes = {k: [v.strip() for v in val.split("|")] for k, val in raw.items() if "|" in val}
    fixed = {k: v for k, v in raw.items() if k not in axes}
    configs = []
    for combo in itertools.product(*axes.values()):
        cell = dict(zip(axes, combo))
        label = ",".join(f"{k}={v}" for k, v in cell.items()) or fixed.get("label", "default")
        for seed in seeds:
            cfg = config_from_mapping({**fixed, **cell, "seed": str(seed)})
            cfg.label = label
            configs.append(cfg)
    return configs


# --- training loop --------------------------------------------------------

def _rollout(env, agent: DdpgAgent, starts: np.ndarray, goals: np.ndarray, explore: bool,
             rng: np.random.Generator | None) -> tuple[np.ndarray, np.ndarray]:
    """Run a batch of episodes; returns observations (B, T+1, d) and executed actions (B, T, d)."""
    horizon = env.spec.horizon
    obs = np.zeros((len(starts), horizon + 1, env.dim))
    actions = np.zeros((len(starts), horizon, env.dim))
    obs[:, 0] = starts
    for t in range(horizon):
        raw = agent.act(obs[:, t], goals, explore=explore, rng=rng)
        obs[:, t + 1], actions[:, t] = env.dynamics(obs[:, t], raw)
    return obs, actions


def evaluate(env, agent: DdpgAgent, rng: np.random.Generator, n_eval: int) -> float:
    """Fraction of fresh episodes whose final step earns reward 0 (no exploration)."""
    starts = env.sample_positions(rng, n_eval)
    goals = env.sample_positions(rng, n_eval)
    obs, _ = _rollout(env, agent, starts, goals, explore=False, rng=None)
    final = np.linalg.norm(project_goal(obs[:, -1]) - goals, axis=1)
    return float(np.mean(final <= env.spec.success_threshold))


def _check_writable(path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w"):
        pass


def write_csv(records: list[EpochRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for rec in records:
            writer.writerow(rec.row())


class Experiment:
    """One seeded training run: rollouts, augmented storage, relabeled updates.

    Randomness comes from three streams spawned from the run seed: training
    (rollouts, augmentation, sampling), evaluation goals, and network init.
    """

    def __init__(self, config: RunConfig):
        config.validate()
        self.config = config
        train_seq, eval_seq, init_seq = np.random.SeedSequence(config.seed).spawn(3)
        self.rng = np.random.default_rng(train_seq)
        self.eval_rng = np.random.default_rng(eval_seq)
        self.env = make_env(config.env, step_size=config.step_size, success_threshold=config.success_threshold,
                            horizon=config.horizon, gamma=config.gamma)
        spec = self.env.spec
        self.agent = DdpgAgent(spec.state_dim, spec.goal_dim, spec.action_dim, spec.action_bound,
                               config.agent_config(), np.random.default_rng(init_seq))
        self.buffer = ReplayBuffer(config.buffer_capacity, spec.horizon, spec.state_dim, spec.action_dim,
                                   spec.goal_dim, spec.success_threshold)
        self.relabel = config.relabel_spec()
        self.planes = None
        if config.ker_planes == "fixed":
            self.planes = [random_reflection(self.env.dim, self.rng) for _ in range(config.ker_n)]
        self.real_episodes = 0
        self.real_steps = 0
        self.epoch = 0

    def collect(self) -> list[Trajectory]:
        """Roll out one cycle of exploratory episodes and store them (plus mirrored copies)."""
        cfg, env, rng = self.config, self.env, self.rng
        m = cfg.episodes_per_cycle
        starts = env.sample_positions(rng, m)
        goals = env.sample_positions(rng, m)
        obs, actions = _rollout(env, self.agent, starts, goals, explore=True, rng=rng)
        self.real_episodes += m
        self.real_steps += m * env.spec.horizon
        trajectories = []
        for i in range(m):
            traj = Trajectory(obs[i], actions[i], project_goal(obs[i]), goals[i])
            # Normalizer statistics come from real rollouts only.
            self.agent.obs_norm.update(traj.observations)
            self.agent.goal_norm.update(np.vstack([traj.achieved_goals, traj.desired_goal[None, :]]))
            if cfg.ker_mode == "store":
                store_with_ker(self.buffer, traj, cfg.ker_n, rng, self.planes)
            else:
                self.buffer.store(traj)
            trajectories.append(traj)
        return trajectories

    def optimize(self) -> list[tuple[float, float]]:
        cfg = self.config
        losses = []
        for _ in range(cfg.updates_per_cycle):
            batch = sample_minibatch(self.buffer, cfg.batch_size, self.rng)
            if batch is None:
                break
            relabeled = ger_relabel(batch, self.relabel, self.buffer, self.rng,
                                    combine=cfg.ger_combine == "concat")
            for part in relabeled if isinstance(relabeled, list) else [relabeled]:
                if cfg.ker_mode == "minibatch":
                    part = minibatch_ker(part, self.rng)
                try:
                    losses.append(self.agent.update(part))
                except FloatingPointError as exc:
                    raise TrainingDiverged(f"epoch {self.epoch + 1}, seed {cfg.seed}: {exc}") from exc
        return losses

    def run_epoch(self, started: float) -> EpochRecord:
        cfg = self.config
        losses = []
        for _ in range(cfg.episodes_per_epoch // cfg.episodes_per_cycle):
            self.collect()
            losses += self.optimize()
        self.epoch += 1
        if not self.agent.all_finite():
            raise TrainingDiverged(f"non-finite network parameters after epoch {self.epoch} (seed {cfg.seed})")
        success = evaluate(self.env, self.agent, self.eval_rng, cfg.n_eval)
        elapsed = time.perf_counter() - started if cfg.record_wall_time else 0.0
        critic, actor = np.mean(losses, axis=0) if losses else (0.0, 0.0)
        rec = EpochRecord(self.epoch, self.real_episodes, self.real_steps, success, float(critic), float(actor),
                          round(elapsed, 3))
        if not (math.isfinite(rec.critic_loss) and math.isfinite(rec.actor_loss)):
            raise TrainingDiverged(f"non-finite loss at epoch {self.epoch}: {rec}")
        log.info("%s seed=%d epoch=%d success=%.2f critic=%.4f", cfg.label or cfg.env, cfg.seed,
                 self.epoch, success, rec.critic_loss)
        return rec


def run_experiment(config: RunConfig) -> list[EpochRecord]:
    """Train one agent and return per-epoch records; writes ``config.out`` if set."""
    config.validate()
    if config.out:
        _check_writable(config.out)
    exp = Experiment(config)
    started = time.perf_counter()
    records = [exp.run_epoch(started) for _ in range(config.epochs)]
    if config.out:
        write_csv(records, config.out)
    if config.checkpoint_dir:
        exp.agent.save(config.checkpoint_dir)
    return records


# --- matrices and summaries ------------------------------------------------

def auc(curve) -> float:
    """Mean success over epochs: area under the curve normalized to [0, 1]."""
    curve = np.asarray(curve, dtype=np.float64)
    return float(curve.mean()) if curve.size else float("nan")


def steps_to_threshold(success, real_steps, threshold: float = SUCCESS_TARGET) -> int | None:
    for s, steps in zip(success, real_steps):
        if s >= threshold:
            return int(steps)
    return None


@dataclass
class CellSummary:
    label: str
    seeds: list[int] = field(default_factory=list)
    failed: list[int] = field(default_factory=list)
    curves: list[list[float]] = field(default_factory=list)
    real_steps: list[int] = field(default_factory=list)

    @property
    def median_curve(self) -> np.ndarray:
        return np.median(np.array(self.curves), axis=0) if self.curves else np.array([])

    @property
    def aucs(self) -> list[float]:
        return [auc(c) for c in self.curves]

    @property
    def median_auc(self) -> float:
        return float(np.median(self.aucs)) if self.curves else float("nan")

    @property
    def steps_to_target(self) -> int | None:
        return steps_to_threshold(self.median_curve, self.real_steps)


SUMMARY_HEADER = ["config", "runs", "failed", "median_auc", "steps_to_0.9", "median_success_by_epoch"]


def summarize(results: dict[str, CellSummary]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(SUMMARY_HEADER)
    for cell in results.values():
        steps = cell.steps_to_target
        writer.writerow([cell.label, len(cell.curves), len(cell.failed), repr(cell.median_auc),
                         "" if steps is None else steps, ";".join(repr(float(x)) for x in cell.median_curve)])
    return buf.getvalue()


def auc_ordering_report(results: dict[str, CellSummary], tolerance: float = 0.05) -> list[str]:
    """One line per consecutive pair of cells, in matrix order, flagging AUC drops."""
    cells = list(results.values())
    lines = [f"{c.label}: median AUC {c.median_auc:.4f}" for c in cells]
    for prev, nxt in zip(cells, cells[1:]):
        delta = nxt.median_auc - prev.median_auc
        if delta >= 0:
            verdict = "nondecreasing"
        elif -delta <= tolerance * prev.median_auc:
            verdict = f"inversion within {tolerance:.0%}"
        else:
            verdict = "INVERSION"
        lines.append(f"{prev.label} -> {nxt.label}: {delta:+.4f} ({verdict})")
    return lines


def run_matrix(configs: list[RunConfig], out_dir) -> dict[str, CellSummary]:
    """Run every (cell, seed) in order; failures are logged and skipped."""
    if not configs:
        raise ValueError("matrix needs at least one config")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    results: dict[str, CellSummary] = {}
    for cfg in configs:
        label = cfg.label or "default"
        cell = results.setdefault(label, CellSummary(label))
        safe = label.replace("=", "-").replace(",", "_").replace("/", "_")
        cfg = dataclasses.replace(cfg, out=str(out_dir / f"{safe}__seed{cfg.seed}.csv"))
        try:
            records = run_experiment(cfg)
        except Exception as exc:  # a failed cell must not sink the matrix
            log.error("run %s seed %d failed: %s", label, cfg.seed, exc)
            cell.failed.append(cfg.seed)
            continue
        cell.seeds.append(cfg.seed)
        cell.curves.append([r.success_rate for r in records])
        cell.real_steps = [r.real_steps for r in records]
    (out_dir / "summary.csv").write_text(summarize(results))
    (out_dir / "report.txt").write_text("\n".join(auc_ordering_report(results)) + "\n")
    return results
