#!/usr/bin/env python3
import math
from dataclasses import dataclass
from typing import List

import numpy as np

from agent import (
    AgentState,
    Observation,
    policy_step,
    sample_action,
    greedy_action,
    greedy_raw,
    log_prob_of,
)
from search_space import InvalidInputError, NumericalError, TuningVector, ensure_valid

REWARD_MODES = ("telescoping", "best_improvement")

# Independent random streams derived from one master seed
TRAIN_STREAM = 0
EVAL_STREAM = 1
BENCH_STREAM = 2


def stream_rng(seed, *key):
    """Generator for a fixed (seed, key) pair, independent of scheduling order"""
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=tuple(int(k) for k in key)))


@dataclass
class TrajectoryStep:
    obs: Observation
    raw: np.ndarray
    x: TuningVector
    f: float
    log_prob: float
    reward: float


@dataclass
class Trajectory:
    steps: List[TrajectoryStep]
    x0: TuningVector
    f0: float

    def __len__(self):
        return len(self.steps)

    @property
    def rewards(self):
        return np.array([s.reward for s in self.steps], dtype=float)

    @property
    def episode_return(self):
        return float(self.rewards.sum())

    @property
    def best_f(self):
        return max([self.f0] + [s.f for s in self.steps])

    @property
    def best_x(self):
        best_x, best_f = self.x0, self.f0
        for step in self.steps:
            if step.f > best_f:
                best_x, best_f = step.x, step.f
        return best_x

    def f_values(self):
        return [self.f0] + [s.f for s in self.steps]


def reward(mode, f_t, f_prev, best_before):
    """Per-step feedback: improvement over the previous value or over the incumbent"""
    if mode == "telescoping":
        return f_t - f_prev
    if mode == "best_improvement":
        return max(0.0, f_t - best_before)
    raise InvalidInputError(f"unknown reward mode {mode!r}")


def rollout(params, obj, T, x0, rng, reward_mode="telescoping", greedy=False) -> Trajectory:
    """Run one episode of T policy steps; uses exactly T + 1 objective evaluations"""
    if T < 1:
        raise InvalidInputError(f"episode length must be >= 1, got {T}")
    space = obj.space
    ensure_valid(space, x0)
    standardizer = params.standardizer

    f0, y0 = obj.evaluate_with_point(x0)
    state = AgentState.zeros(params.hidden_size)
    obs = Observation(y0, standardizer.standardize(f0))
    prev_f, best = f0, f0
    steps = []
    for _ in range(T):
        dist, state = policy_step(params, state, obs)
        if greedy:
            raw = greedy_raw(dist)
            x, log_prob = greedy_action(dist, space), log_prob_of(dist, raw)
        else:
            x, log_prob, raw = sample_action(dist, space, rng)
        f_t, y_t = obj.evaluate_with_point(x)
        r_t = reward(reward_mode, f_t, prev_f, best)
        if not math.isfinite(r_t):
            raise NumericalError(f"non-finite reward {r_t}")
        steps.append(TrajectoryStep(obs, raw, x, f_t, log_prob, r_t))
        best = max(best, f_t)
        prev_f = f_t
        obs = Observation(y_t, standardizer.standardize(f_t))
    return Trajectory(steps, x0, f0)


def returns_and_advantages(trajectory, gamma, baseline):
    """Discounted return-to-go R_t and advantages R_t - b"""
    rewards = trajectory.rewards if isinstance(trajectory, Trajectory) else np.asarray(trajectory, dtype=float)
    if rewards.size == 0:
        raise InvalidInputError("cannot compute returns of an empty trajectory")
    returns = np.zeros_like(rewards)
    running = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        running = rewards[t] + gamma * running
        returns[t] = running
    return returns, returns - baseline
