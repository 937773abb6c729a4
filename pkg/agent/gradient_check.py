#!/usr/bin/env python3
"""Central-difference verification of the policy gradient"""
from types import SimpleNamespace

import numpy as np

from agent.lstm_policy import (
    AgentState,
    Observation,
    init_params,
    policy_step,
    sample_action,
    trajectory_grad,
    trajectory_objective,
)
from search_space import INTEGER, CONTINUOUS, KnobSpec, SearchSpace, normalize, sample_uniform


def numeric_grad(params, trajectory, advantages, entropy_weight=0.0, step=1e-5):
    """Central differences of trajectory_objective over every flattened parameter"""
    theta = params.flat()
    grad = np.zeros_like(theta)
    for i in range(theta.size):
        saved = theta[i]
        theta[i] = saved + step
        upper = trajectory_objective(params.from_flat(theta), trajectory, advantages, entropy_weight)
        theta[i] = saved - step
        lower = trajectory_objective(params.from_flat(theta), trajectory, advantages, entropy_weight)
        theta[i] = saved
        grad[i] = (upper - lower) / (2.0 * step)
    return grad


def flatten_grads(params, grads):
    return np.concatenate([grads[k].reshape(-1) for k in params.keys()])


def max_relative_error(analytic, numeric, floor=1e-5):
    analytic, numeric = np.asarray(analytic), np.asarray(numeric)
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / scale))


def random_case(rng, max_hidden=4, max_knobs=2, max_steps=3):
    """A small random space, policy and sampled trajectory with random advantages"""
    knobs = []
    for i in range(int(rng.integers(1, max_knobs + 1))):
        if rng.random() < 0.5:
            knobs.append(KnobSpec(f"k{i}", INTEGER, 0, int(rng.integers(1, 6))))
        else:
            knobs.append(KnobSpec(f"k{i}", CONTINUOUS, -2.0, 3.0))
    space = SearchSpace(tuple(knobs))
    params = init_params(space, int(rng.integers(1, max_hidden + 1)), rng, recurrent=bool(rng.random() < 0.8))

    state = AgentState.zeros(params.hidden_size)
    x = sample_uniform(space, rng)
    obs = Observation(normalize(space, x), float(rng.standard_normal()))
    steps = []
    for _ in range(int(rng.integers(1, max_steps + 1))):
        dist, state = policy_step(params, state, obs)
        x, _, raw = sample_action(dist, space, rng)
        steps.append(SimpleNamespace(obs=obs, raw=raw))
        obs = Observation(normalize(space, x), float(rng.standard_normal()))
    advantages = rng.standard_normal(len(steps))
    entropy_weight = float(rng.uniform(0.0, 0.1))
    return params, SimpleNamespace(steps=steps), advantages, entropy_weight


def check_case(params, trajectory, advantages, entropy_weight, step=1e-5):
    """Max relative component error between backprop and central differences"""
    analytic = flatten_grads(params, trajectory_grad(params, trajectory, advantages, entropy_weight))
    numeric = numeric_grad(params, trajectory, advantages, entropy_weight, step)
    return max_relative_error(analytic, numeric)
