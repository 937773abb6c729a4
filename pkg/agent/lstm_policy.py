#!/usr/bin/env python3
"""Two-layer LSTM tuning policy with exact reverse-mode gradients.

The policy reads the previous point (normalized) and the previous objective
value (standardized), carries (h, c) for both layers, and emits one head per
knob: categorical logits over the integer range, or the mean and log-std of a
Gaussian that is squashed by tanh into the knob bounds.

Gate order inside every 4H block is input, forget, output, candidate.
"""
import math
import logging
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional

import numpy as np
from scipy.special import expit, log_softmax, softmax

from search_space import (
    SearchSpace,
    TuningVector,
    SearchSpaceError,
    InvalidInputError,
    NumericalError,
)
from search_space.artifacts import read_json, write_json, check_space_hash

LOG_STD_MIN = -5.0
LOG_STD_MAX = 2.0
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)

GradDict = Dict[str, np.ndarray]


@dataclass
class RunningStandardizer:
    """Running mean/std of objective values fed to the policy"""
    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @property
    def std(self):
        if self.count < 2:
            return 1.0
        return max(math.sqrt(self.m2 / self.count), 1e-8)

    def standardize(self, value):
        return (value - self.mean) / self.std

    def update(self, values):
        """Merge a batch of values (parallel mean/variance update)"""
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            return
        batch_count = int(values.size)
        batch_mean = float(values.mean())
        batch_m2 = float(((values - batch_mean) ** 2).sum())
        total = self.count + batch_count
        delta = batch_mean - self.mean
        self.mean = self.mean + delta * batch_count / total
        self.m2 = self.m2 + batch_m2 + delta * delta * self.count * batch_count / total
        self.count = total

    def to_dict(self):
        return {"count": self.count, "mean": self.mean, "m2": self.m2}

    @classmethod
    def from_dict(cls, data):
        return cls(int(data["count"]), float(data["mean"]), float(data["m2"]))


@dataclass
class PolicyParams:
    hidden_size: int
    head_kinds: tuple
    head_sizes: tuple
    arrays: Dict[str, np.ndarray]
    recurrent: bool = True
    standardizer: RunningStandardizer = field(default_factory=RunningStandardizer)
    space_hash: str = ""

    @property
    def obs_dim(self):
        return len(self.head_sizes)

    def keys(self) -> List[str]:
        names = []
        for layer in ("lstm1", "lstm2"):
            names += [f"{layer}.W", f"{layer}.U", f"{layer}.b"]
        for index in range(len(self.head_sizes)):
            names += [f"head.{index}.W", f"head.{index}.b"]
        return names

    def zeros_like(self) -> GradDict:
        return {k: np.zeros_like(v) for k, v in self.arrays.items()}

    def replace_arrays(self, arrays):
        return PolicyParams(self.hidden_size, self.head_kinds, self.head_sizes, arrays, self.recurrent,
                            RunningStandardizer(**self.standardizer.to_dict()), self.space_hash)

    def copy(self):
        return self.replace_arrays({k: v.copy() for k, v in self.arrays.items()})

    def flat(self):
        return np.concatenate([self.arrays[k].reshape(-1) for k in self.keys()])

    def from_flat(self, vector):
        arrays, offset = {}, 0
        for key in self.keys():
            shape = self.arrays[key].shape
            size = int(np.prod(shape))
            arrays[key] = np.array(vector[offset:offset + size], dtype=float).reshape(shape)
            offset += size
        return self.replace_arrays(arrays)

    def is_finite(self):
        return all(np.all(np.isfinite(v)) for v in self.arrays.values())

    def to_dict(self):
        return {
            "hidden_size": self.hidden_size,
            "obs_dim": self.obs_dim,
            "head_kinds": list(self.head_kinds),
            "head_sizes": list(self.head_sizes),
            "recurrent": self.recurrent,
            "standardizer": self.standardizer.to_dict(),
            "space_hash": self.space_hash,
            "arrays": {k: {"shape": list(v.shape), "data": v.reshape(-1).tolist()} for k, v in self.arrays.items()},
        }

    @classmethod
    def from_dict(cls, data):
        arrays = {k: np.array(v["data"], dtype=float).reshape(v["shape"]) for k, v in data["arrays"].items()}
        params = cls(int(data["hidden_size"]), tuple(data["head_kinds"]), tuple(data["head_sizes"]), arrays,
                     bool(data.get("recurrent", True)), RunningStandardizer.from_dict(data["standardizer"]),
                     data.get("space_hash", ""))
        if set(arrays) != set(params.keys()):
            raise InvalidInputError("checkpoint arrays do not match the declared architecture")
        return params

    def save(self, path):
        write_json(path, self.to_dict())
        logging.info(f"Saved policy checkpoint to {path}")

    @classmethod
    def load(cls, path, space=None):
        params = cls.from_dict(read_json(path))
        if space is not None:
            check_space_hash(space.space_hash(), params.space_hash, "agent checkpoint")
            check_policy_matches_space(params, space)
        return params


@dataclass
class AgentState:
    h1: np.ndarray
    c1: np.ndarray
    h2: np.ndarray
    c2: np.ndarray

    @classmethod
    def zeros(cls, hidden_size):
        return cls(*(np.zeros(hidden_size) for _ in range(4)))


@dataclass
class Observation:
    prev_x: np.ndarray  # normalized point, [-1, 1]^D
    prev_f: float       # standardized objective value


@dataclass
class KnobDistribution:
    kind: str
    logits: Optional[np.ndarray] = None
    mean: float = 0.0
    log_std: float = 0.0

    def probabilities(self):
        return softmax(self.logits)


@dataclass
class ActionDistribution:
    knobs: List[KnobDistribution]

    def entropy(self):
        total = 0.0
        for knob in self.knobs:
            if knob.kind == "integer":
                log_p = log_softmax(knob.logits)
                total -= float(np.sum(np.exp(log_p) * log_p))
            else:
                total += 0.5 + HALF_LOG_2PI + knob.log_std
        return total


class SampledAction(NamedTuple):
    x: TuningVector
    log_prob: float
    raw: np.ndarray  # categorical index or pre-squash Gaussian draw per knob


def _head_sizes(space):
    return tuple(k.range_size if k.is_integer else 2 for k in space.knobs)


def check_policy_matches_space(params, space):
    if params.head_kinds != tuple(k.kind for k in space.knobs) or params.head_sizes != _head_sizes(space):
        raise SearchSpaceError("policy heads do not match the search space knobs")


def init_params(space: SearchSpace, hidden_size=32, rng=None, recurrent=True) -> PolicyParams:
    """Uniform(-1/sqrt(H), 1/sqrt(H)) init with forget-gate bias 1.0"""
    rng = rng if rng is not None else np.random.default_rng(0)
    H = int(hidden_size)
    D = space.dimension
    bound = 1.0 / math.sqrt(H)
    shapes = {
        "lstm1.W": (4 * H, D + 1), "lstm1.U": (4 * H, H), "lstm1.b": (4 * H,),
        "lstm2.W": (4 * H, H), "lstm2.U": (4 * H, H), "lstm2.b": (4 * H,),
    }
    sizes = _head_sizes(space)
    for index, size in enumerate(sizes):
        shapes[f"head.{index}.W"] = (size, H)
        shapes[f"head.{index}.b"] = (size,)
    arrays = {}
    for key, shape in shapes.items():
        arrays[key] = rng.uniform(-bound, bound, size=shape)
    for layer in ("lstm1", "lstm2"):
        arrays[f"{layer}.b"][H:2 * H] = 1.0
    return PolicyParams(H, tuple(k.kind for k in space.knobs), sizes, arrays, recurrent,
                        RunningStandardizer(), space.space_hash())


def _lstm_cell(W, U, b, x, h_prev, c_prev, H):
    z = W @ x + U @ h_prev + b
    i = expit(z[:H])
    f = expit(z[H:2 * H])
    o = expit(z[2 * H:3 * H])
    g = np.tanh(z[3 * H:])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (x, h_prev, c_prev, i, f, o, g, tc)


def _lstm_cell_backward(W, U, cache, dh, dc_next):
    x, h_prev, c_prev, i, f, o, g, tc = cache
    do = dh * tc
    dc = dh * o * (1.0 - tc * tc) + dc_next
    dz = np.concatenate([
        dc * g * i * (1.0 - i),
        dc * c_prev * f * (1.0 - f),
        do * o * (1.0 - o),
        dc * i * (1.0 - g * g),
    ])
    return np.outer(dz, x), np.outer(dz, h_prev), dz, W.T @ dz, U.T @ dz, dc * f


def _encode(obs: Observation, params):
    prev_x = np.asarray(obs.prev_x, dtype=float).reshape(-1)
    if prev_x.shape[0] != params.obs_dim:
        raise SearchSpaceError(f"observation has {prev_x.shape[0]} knobs, policy expects {params.obs_dim}")
    return np.append(prev_x, float(obs.prev_f))


def _forward(params: PolicyParams, state: AgentState, obs: Observation, keep_cache=True):
    H = params.hidden_size
    a = params.arrays
    if params.recurrent:
        h1, c1, h2, c2 = state.h1, state.c1, state.h2, state.c2
    else:
        h1 = c1 = h2 = c2 = np.zeros(H)
    x_in = _encode(obs, params)
    h1n, c1n, cache1 = _lstm_cell(a["lstm1.W"], a["lstm1.U"], a["lstm1.b"], x_in, h1, c1, H)
    h2n, c2n, cache2 = _lstm_cell(a["lstm2.W"], a["lstm2.U"], a["lstm2.b"], h1n, h2, c2, H)
    outputs = [a[f"head.{k}.W"] @ h2n + a[f"head.{k}.b"] for k in range(len(params.head_sizes))]
    # a NaN or inf anywhere makes the sum non-finite, so one scalar test covers every array
    checksum = float(c2n.sum()) + math.fsum(float(out.sum()) for out in outputs)
    if not math.isfinite(checksum):
        logging.error("Non-finite activation in policy forward pass")
        raise NumericalError("non-finite value in policy forward pass")
    knobs = []
    for kind, out in zip(params.head_kinds, outputs):
        if kind == "integer":
            knobs.append(KnobDistribution(kind, logits=out))
        else:
            knobs.append(KnobDistribution(kind, mean=float(out[0]),
                                          log_std=float(np.clip(out[1], LOG_STD_MIN, LOG_STD_MAX))))
    caches = (cache1, cache2, outputs) if keep_cache else None
    return ActionDistribution(knobs), AgentState(h1n, c1n, h2n, c2n), caches


def policy_step(params: PolicyParams, state: AgentState, obs: Observation):
    """One policy step: (distribution over x_t, next recurrent state)

    Inference only; the backward caches are dropped and the activations are
    checked for finiteness once.
    """
    dist, new_state, _ = _forward(params, state, obs, keep_cache=False)
    return dist, new_state


def _check_structure(dist, space):
    if len(dist.knobs) != space.dimension:
        raise SearchSpaceError("action distribution does not match the search space")


def _squash_to_knob(knob, u):
    value = knob.lower + (math.tanh(u) + 1.0) / 2.0 * knob.span
    return min(max(value, knob.lower), knob.upper)


def _gaussian_log_density(knob, value):
    z = (float(value) - knob.mean) / math.exp(knob.log_std)
    return -0.5 * z * z - knob.log_std - HALF_LOG_2PI


def log_prob_of(dist: ActionDistribution, raw) -> float:
    """Log mass/density of raw samples: categorical index or pre-squash Gaussian draw"""
    total = 0.0
    for knob, value in zip(dist.knobs, raw):
        if knob.kind == "integer":
            total += float(log_softmax(knob.logits)[int(value)])
        else:
            total += _gaussian_log_density(knob, value)
    return total


def _raw_to_vector(dist, space, raw):
    values = []
    for knob_dist, knob, value in zip(dist.knobs, space.knobs, raw):
        if knob_dist.kind == "integer":
            values.append(knob.lower + int(value))
        else:
            values.append(_squash_to_knob(knob, float(value)))
    return TuningVector(tuple(values))


def sample_action(dist: ActionDistribution, space: SearchSpace, rng: np.random.Generator) -> SampledAction:
    """Draw every knob independently; one uniform or normal draw per knob

    The log-softmax of each categorical head is computed once and serves both
    the draw and the returned log-probability.
    """
    _check_structure(dist, space)
    raw = np.zeros(space.dimension)
    log_prob = 0.0
    for index, knob_dist in enumerate(dist.knobs):
        if knob_dist.kind == "integer":
            log_p = log_softmax(knob_dist.logits)
            cumulative = np.cumsum(np.exp(log_p))
            choice = min(int(np.searchsorted(cumulative, rng.random(), side="right")), len(cumulative) - 1)
            raw[index] = choice
            log_prob += float(log_p[choice])
        else:
            raw[index] = knob_dist.mean + math.exp(knob_dist.log_std) * rng.standard_normal()
            log_prob += _gaussian_log_density(knob_dist, raw[index])
    return SampledAction(_raw_to_vector(dist, space, raw), log_prob, raw)


def greedy_raw(dist: ActionDistribution) -> np.ndarray:
    # np.argmax returns the first maximum, so ties go to the lower index
    return np.array([float(np.argmax(k.logits)) if k.kind == "integer" else k.mean for k in dist.knobs])


def greedy_action(dist: ActionDistribution, space: SearchSpace) -> TuningVector:
    """Mode of every categorical head, squashed mean of every Gaussian head"""
    _check_structure(dist, space)
    return _raw_to_vector(dist, space, greedy_raw(dist))


def _check_trajectory(params, trajectory):
    for step in trajectory.steps:
        raw = np.asarray(step.raw).reshape(-1)
        if raw.shape[0] != len(params.head_sizes) or np.asarray(step.obs.prev_x).reshape(-1).shape[0] != params.obs_dim:
            raise InvalidInputError("trajectory was not recorded with a policy of this shape")
        for kind, size, value in zip(params.head_kinds, params.head_sizes, raw):
            if kind == "integer" and not (0 <= int(value) < size):
                raise InvalidInputError(f"trajectory action index {value} outside head of size {size}")


def _replay(params, trajectory):
    state = AgentState.zeros(params.hidden_size)
    records = []
    for step in trajectory.steps:
        dist, state, caches = _forward(params, state, step.obs)
        records.append((dist, caches, np.asarray(step.raw, dtype=float).reshape(-1)))
    return records


def trajectory_objective(params: PolicyParams, trajectory, advantages, entropy_weight=0.0) -> float:
    """Replayed sum_t A_t * log pi(a_t|s_t) + entropy_weight * sum_t H_t"""
    _check_trajectory(params, trajectory)
    total = 0.0
    for (dist, _, raw), advantage in zip(_replay(params, trajectory), advantages):
        total += float(advantage) * log_prob_of(dist, raw) + entropy_weight * dist.entropy()
    return total


def trajectory_grad(params: PolicyParams, trajectory, advantages, entropy_weight=0.0) -> GradDict:
    """Exact gradient of trajectory_objective by backpropagation through time"""
    grads = params.zeros_like()
    if not trajectory.steps:
        return grads
    if len(advantages) != len(trajectory.steps):
        raise InvalidInputError(f"{len(advantages)} advantages for {len(trajectory.steps)} steps")
    _check_trajectory(params, trajectory)
    a = params.arrays
    H = params.hidden_size
    records = _replay(params, trajectory)

    dh1_next, dc1_next = np.zeros(H), np.zeros(H)
    dh2_next, dc2_next = np.zeros(H), np.zeros(H)
    for t in range(len(records) - 1, -1, -1):
        dist, (cache1, cache2, outputs), raw = records[t]
        advantage = float(advantages[t])
        h2 = cache2[7] * cache2[5]  # tanh(c2) * o
        dh2 = dh2_next.copy()
        for k, (knob, out, value) in enumerate(zip(dist.knobs, outputs, raw)):
            if knob.kind == "integer":
                log_p = log_softmax(knob.logits)
                p = np.exp(log_p)
                onehot = np.zeros_like(p)
                onehot[int(value)] = 1.0
                entropy = -float(np.sum(p * log_p))
                d_out = advantage * (onehot - p) - entropy_weight * p * (log_p + entropy)
            else:
                sigma = math.exp(knob.log_std)
                z = (float(value) - knob.mean) / sigma
                inside = LOG_STD_MIN <= out[1] <= LOG_STD_MAX
                d_out = np.array([
                    advantage * z / sigma,
                    (advantage * (z * z - 1.0) + entropy_weight) if inside else 0.0,
                ])
            grads[f"head.{k}.W"] += np.outer(d_out, h2)
            grads[f"head.{k}.b"] += d_out
            dh2 += a[f"head.{k}.W"].T @ d_out

        dW, dU, db, dh1_from_2, dh2_prev, dc2_prev = _lstm_cell_backward(a["lstm2.W"], a["lstm2.U"], cache2,
                                                                          dh2, dc2_next)
        grads["lstm2.W"] += dW
        grads["lstm2.U"] += dU
        grads["lstm2.b"] += db

        dW, dU, db, _, dh1_prev, dc1_prev = _lstm_cell_backward(a["lstm1.W"], a["lstm1.U"], cache1,
                                                                 dh1_from_2 + dh1_next, dc1_next)
        grads["lstm1.W"] += dW
        grads["lstm1.U"] += dU
        grads["lstm1.b"] += db

        if params.recurrent:
            dh1_next, dc1_next, dh2_next, dc2_next = dh1_prev, dc1_prev, dh2_prev, dc2_prev
        # memoryless steps start from a constant zero state, so nothing flows back

    for key, value in grads.items():
        if not np.all(np.isfinite(value)):
            logging.error(f"Non-finite policy gradient in {key}")
            raise NumericalError(f"non-finite policy gradient in {key}")
    return grads
