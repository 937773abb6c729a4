#!/usr/bin/env python3
import math
import time
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from typing import List, Optional

import numpy as np
import pandas as pd
from tabulate import tabulate

from agent import init_params, trajectory_grad
from search_space import InvalidInputError, NumericalError, ArtifactIOError, sample_uniform
from search_space.artifacts import reject_unknown_keys
from trainer.trajectory import (
    REWARD_MODES,
    TRAIN_STREAM,
    EVAL_STREAM,
    rollout,
    returns_and_advantages,
    stream_rng,
)

OPTIMIZERS = ("adam", "sgd")


@dataclass
class TrainConfig:
    episode_length: int = 50
    episodes_per_update: int = 16
    total_updates: int = 2000
    learning_rate: float = 5e-3
    gamma: float = 0.5
    reward_mode: str = "telescoping"
    baseline_decay: float = 0.9
    seed: int = 0
    entropy_weight: float = 0.01
    hidden_size: int = 32
    recurrent: bool = True
    grad_clip: float = 5.0
    optimizer: str = "adam"
    eval_every: int = 0
    eval_inits: int = 16
    log_every: int = 50

    def __post_init__(self):
        if self.episode_length < 1 or self.episodes_per_update < 1 or self.hidden_size < 1:
            raise InvalidInputError("episode_length, episodes_per_update and hidden_size must be >= 1")
        if self.total_updates < 0 or self.learning_rate < 0 or self.entropy_weight < 0:
            raise InvalidInputError("total_updates, learning_rate and entropy_weight must be >= 0")
        if not 0.0 < self.gamma <= 1.0:
            raise InvalidInputError(f"gamma must be in (0, 1], got {self.gamma}")
        if not 0.0 <= self.baseline_decay < 1.0:
            raise InvalidInputError(f"baseline_decay must be in [0, 1), got {self.baseline_decay}")
        if self.reward_mode not in REWARD_MODES:
            raise InvalidInputError(f"unknown reward mode {self.reward_mode!r}")
        if self.optimizer not in OPTIMIZERS:
            raise InvalidInputError(f"unknown optimizer {self.optimizer!r}")
        if self.grad_clip <= 0 or self.eval_every < 0 or self.eval_inits < 1:
            raise InvalidInputError("grad_clip must be > 0, eval_every >= 0 and eval_inits >= 1")

    @classmethod
    def from_dict(cls, data):
        reject_unknown_keys(data, cls.__dataclass_fields__, "train config")
        return cls(**{k: v for k, v in data.items() if k != "_note"})

    def to_dict(self):
        return asdict(self)


@dataclass
class CurveRecord:
    update: int
    mean_return: float
    mean_best_f: float
    seconds: float


@dataclass
class EvalRecord:
    update: int
    mean_best_f: float
    median_best_f: float


@dataclass
class LearningCurve:
    records: List[CurveRecord] = field(default_factory=list)
    evaluations: List[EvalRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def mean_best_f(self):
        return np.array([r.mean_best_f for r in self.records])

    def to_csv(self, path):
        frame = pd.DataFrame([asdict(r) for r in self.records],
                             columns=["update", "mean_return", "mean_best_f", "seconds"])
        _write_frame(frame, path)

    def evaluations_to_csv(self, path):
        frame = pd.DataFrame([asdict(r) for r in self.evaluations],
                             columns=["update", "mean_best_f", "median_best_f"])
        _write_frame(frame, path)

    @classmethod
    def from_csv(cls, path):
        frame = pd.read_csv(path)
        return cls([CurveRecord(int(r.update), float(r.mean_return), float(r.mean_best_f), float(r.seconds))
                    for r in frame.itertuples()])


def progress_table(curve: LearningCurve, window):
    """Grid of the window's first/last record plus the latest periodic evaluation"""
    recent = curve.records[-window:]
    rows = [[r.update, f"{r.mean_return:.4f}", f"{r.mean_best_f:.4f}", f"{r.seconds:.1f}"]
            for r in (recent[0], recent[-1])]
    headers = ["Update", "Mean return", "Mean best f", "Seconds"]
    if curve.evaluations:
        last = curve.evaluations[-1]
        headers.append("Eval median best f")
        rows[0].append("")
        rows[1].append(f"{last.median_best_f:.4f}")
    return tabulate(rows, headers=headers, tablefmt="grid")


def _write_frame(frame, path):
    try:
        frame.to_csv(path, index=False, float_format="%.17g")
    except OSError as e:
        raise ArtifactIOError(f"cannot write {path}: {e}")


def _clip_global_norm(grads, max_norm):
    norm = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
    if not math.isfinite(norm):
        logging.error("Non-finite policy gradient norm")
        raise NumericalError("non-finite policy gradient norm")
    if norm > max_norm:
        scale = max_norm / norm
        grads = {k: g * scale for k, g in grads.items()}
    return grads, norm


class PolicyAdam:
    """Adam moments for ascent on the policy parameters, kept across updates"""
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    def __init__(self, params):
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def direction(self, grads):
        self.t += 1
        steps = {}
        for key, g in grads.items():
            self.m[key] = self.beta1 * self.m[key] + (1 - self.beta1) * g
            self.v[key] = self.beta2 * self.v[key] + (1 - self.beta2) * g * g
            m_hat = self.m[key] / (1 - self.beta1 ** self.t)
            v_hat = self.v[key] / (1 - self.beta2 ** self.t)
            steps[key] = m_hat / (np.sqrt(v_hat) + self.eps)
        return steps


def reinforce_update(params, batch, config: TrainConfig, baseline=None, entropy_weight: Optional[float] = None,
                     optimizer: Optional[PolicyAdam] = None):
    """One REINFORCE ascent step on a batch of equal-length trajectories.

    The baseline holds one value per step index: the moving average of the
    batch-mean return-to-go at that step. With no history the current batch
    means are used. Adam keeps its moments in `optimizer`; pass the same
    object on every update. Returns the new params and a stats dict carrying
    the updated baseline.
    """
    if not batch:
        raise InvalidInputError("reinforce_update needs at least one trajectory")
    if len({len(t) for t in batch}) != 1:
        raise InvalidInputError("trajectories in one batch must have the same length")
    entropy_weight = config.entropy_weight if entropy_weight is None else entropy_weight
    returns = np.stack([returns_and_advantages(t, config.gamma, 0.0)[0] for t in batch])
    step_means = returns.mean(axis=0)
    if baseline is None:
        b = step_means
    else:
        b = np.asarray(baseline, dtype=float)
        if b.ndim and b.shape != step_means.shape:
            raise InvalidInputError(f"baseline has {b.shape[0]} steps, trajectories have {step_means.shape[0]}")

    total = params.zeros_like()
    for trajectory, trajectory_returns in zip(batch, returns):
        grads = trajectory_grad(params, trajectory, trajectory_returns - b, entropy_weight)
        for key in total:
            total[key] += grads[key]
    total = {k: g / len(batch) for k, g in total.items()}
    total, norm = _clip_global_norm(total, config.grad_clip)

    if config.optimizer == "adam":
        optimizer = optimizer if optimizer is not None else PolicyAdam(params)
        steps = optimizer.direction(total)
    else:
        steps = total
    new_params = params.replace_arrays({k: v + config.learning_rate * steps[k] for k, v in params.arrays.items()})
    stats = {
        "mean_return": float(returns[:, 0].mean()),
        "mean_best_f": float(np.mean([t.best_f for t in batch])),
        "baseline": config.baseline_decay * b + (1.0 - config.baseline_decay) * step_means,
        "grad_norm": norm,
        "clipped": norm > config.grad_clip,
    }
    return new_params, stats


def _run_episodes(params, obj, T, rngs, x0s, reward_mode, jobs, greedy=False):
    def one(index):
        return rollout(params, obj, T, x0s[index], rngs[index], reward_mode, greedy)

    if jobs <= 1:
        return [one(i) for i in range(len(rngs))]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(one, range(len(rngs))))


def evaluate_policy(params, obj, T, n_inits, seed, jobs=1, greedy=False, reward_mode="telescoping"):
    """Best f reached by the policy from n_inits fixed random starting points"""
    rngs = [stream_rng(seed, EVAL_STREAM, i) for i in range(n_inits)]
    x0s = [sample_uniform(obj.space, rng) for rng in rngs]
    return [t.best_f for t in _run_episodes(params, obj, T, rngs, x0s, reward_mode, jobs, greedy)]


def train(space, obj, config: TrainConfig, jobs=1):
    """Outer loop: B rollouts from fresh uniform starts, then one REINFORCE update.

    Returns the best-so-far params (by batch mean best-f) and the learning curve.
    """
    if obj.space.space_hash() != space.space_hash():
        raise InvalidInputError("objective and training space differ")
    params = init_params(space, config.hidden_size, np.random.default_rng(config.seed), config.recurrent)
    curve = LearningCurve()
    best_params, best_score = params.copy(), -math.inf
    baseline = None
    optimizer = PolicyAdam(params) if config.optimizer == "adam" else None
    started = time.perf_counter()
    logging.info(f"Training policy: {config.total_updates} updates x {config.episodes_per_update} episodes "
                 f"of {config.episode_length} steps (H={config.hidden_size}, recurrent={config.recurrent}, "
                 f"{config.optimizer} lr {config.learning_rate})")

    for update in range(config.total_updates):
        rngs = [stream_rng(config.seed, TRAIN_STREAM, update, e) for e in range(config.episodes_per_update)]
        x0s = [sample_uniform(space, rng) for rng in rngs]
        batch = _run_episodes(params, obj, config.episode_length, rngs, x0s, config.reward_mode, jobs)

        entropy_weight = config.entropy_weight * (1.0 - update / config.total_updates)
        new_params, stats = reinforce_update(params, batch, config, baseline, entropy_weight, optimizer)
        baseline = stats["baseline"]

        if stats["mean_best_f"] > best_score:
            best_score, best_params = stats["mean_best_f"], params.copy()

        for trajectory in batch:
            new_params.standardizer.update(trajectory.f_values())
        params = new_params

        curve.records.append(CurveRecord(update, stats["mean_return"], stats["mean_best_f"],
                                         time.perf_counter() - started))
        if config.eval_every and (update + 1) % config.eval_every == 0:
            values = evaluate_policy(params, obj, config.episode_length, config.eval_inits, config.seed, jobs)
            curve.evaluations.append(EvalRecord(update, float(np.mean(values)), float(np.median(values))))
        if config.log_every and (update + 1) % config.log_every == 0:
            logging.info(f"Update {update + 1}/{config.total_updates} (grad norm {stats['grad_norm']:.3f}):\n"
                         + progress_table(curve, config.log_every))

    if not best_params.is_finite():
        raise NumericalError("trained policy parameters are not finite")
    logging.info(f"Training finished in {time.perf_counter() - started:.1f}s; best batch mean best f {best_score:.4f}")
    return best_params, curve
