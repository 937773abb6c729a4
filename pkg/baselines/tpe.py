#!/usr/bin/env python3
import math
import logging
from dataclasses import dataclass, asdict

import numpy as np
from scipy.special import logsumexp, ndtr
from scipy.stats import truncnorm

from baselines.common import BaselineBudget, BudgetExhausted, EvaluationTracker, OptimizationResult
from search_space import InvalidInputError, TuningVector, round_half_away, sample_uniform
from search_space.artifacts import reject_unknown_keys

# Floor for cell masses so log-densities stay finite far from every center
MIN_MASS = 1e-300


@dataclass
class TpeConfig:
    gamma: float = 0.25
    n_startup: int = 10
    n_candidates: int = 24
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise InvalidInputError(f"TPE gamma must be in (0, 1), got {self.gamma}")
        if self.n_startup < 1 or self.n_candidates < 1:
            raise InvalidInputError("TPE n_startup and n_candidates must be >= 1")

    @classmethod
    def from_dict(cls, data):
        reject_unknown_keys(data, cls.__dataclass_fields__, "tpe config")
        return cls(**{k: v for k, v in data.items() if k != "_note"})

    def to_dict(self):
        return asdict(self)


class ParzenEstimator:
    """Equal-weight mixture of truncated Gaussians over one knob.

    Integer knobs are truncated to [lower - 0.5, upper + 0.5] and scored by
    the mass of the rounded cell; continuous knobs by density on [lower, upper].
    """

    def __init__(self, knob, centers):
        centers = np.asarray(centers, dtype=float)
        if centers.size == 0:
            raise InvalidInputError(f"knob {knob.name}: Parzen estimator needs at least one observation")
        self.knob = knob
        self.centers = centers
        if knob.is_integer:
            self.low, self.high = knob.lower - 0.5, knob.upper + 0.5
            self.bandwidth = max(knob.range_size / math.sqrt(centers.size), 1.0)
        else:
            self.low, self.high = knob.lower, knob.upper
            self.bandwidth = knob.span / math.sqrt(centers.size)
        self._a = (self.low - centers) / self.bandwidth
        self._b = (self.high - centers) / self.bandwidth
        self._log_norm = np.log(np.maximum(ndtr(self._b) - ndtr(self._a), MIN_MASS))

    def log_pdf(self, value):
        """Log density (continuous) or log cell mass (integer) at one value"""
        value = float(value)
        if self.knob.is_integer:
            lo = (value - 0.5 - self.centers) / self.bandwidth
            hi = (value + 0.5 - self.centers) / self.bandwidth
            per_component = np.log(np.maximum(ndtr(hi) - ndtr(lo), MIN_MASS))
        else:
            z = (value - self.centers) / self.bandwidth
            per_component = -0.5 * z * z - 0.5 * math.log(2.0 * math.pi) - math.log(self.bandwidth)
        return float(logsumexp(per_component - self._log_norm) - math.log(self.centers.size))

    def sample(self, rng, n):
        components = rng.integers(0, self.centers.size, size=n)
        draws = truncnorm.rvs(self._a[components], self._b[components], loc=self.centers[components],
                              scale=self.bandwidth, random_state=rng)
        draws = np.clip(np.atleast_1d(draws), self.low, self.high)
        if self.knob.is_integer:
            draws = np.clip(round_half_away(draws), self.knob.lower, self.knob.upper)
        return draws


def split_history(values, gamma):
    """Indices of the good (top gamma fraction, at least one) and bad observations.

    Ties in f keep evaluation order.
    """
    values = np.asarray(values, dtype=float)
    order = np.argsort(-values, kind="stable")
    n_good = max(1, int(math.ceil(gamma * values.size)))
    return order[:n_good], order[n_good:]


def build_estimators(space, history_x, history_f, gamma):
    """Per-knob (good, bad) Parzen estimators from the evaluation history"""
    points = np.array([x.array() for x in history_x], dtype=float)
    good, bad = split_history(history_f, gamma)
    if bad.size == 0:
        bad = good
    return [(ParzenEstimator(knob, points[good, i]), ParzenEstimator(knob, points[bad, i]))
            for i, knob in enumerate(space.knobs)]


def propose(estimators, rng, n_candidates):
    """Draw candidates from the good mixtures and keep the one maximizing l(x)/g(x)"""
    columns = [good.sample(rng, n_candidates) for good, _ in estimators]
    candidates = np.stack(columns, axis=1)
    scores = np.zeros(n_candidates)
    for i, (good, bad) in enumerate(estimators):
        scores += np.array([good.log_pdf(v) - bad.log_pdf(v) for v in candidates[:, i]])
    best = int(np.argmax(scores))
    return TuningVector(tuple(float(v) for v in candidates[best])), float(scores[best])


def tpe(obj, space, budget: BaselineBudget, config: TpeConfig = None, rng=None) -> OptimizationResult:
    """Tree-structured Parzen Estimator with independent per-knob mixtures (maximization).

    The startup trials draw from `rng` exactly as random_search does; without an
    explicit generator one is seeded from config.seed.
    """
    config = config or TpeConfig()
    if budget.max_evaluations < config.n_startup:
        raise InvalidInputError(f"TPE budget {budget.max_evaluations} is smaller than n_startup={config.n_startup}")
    rng = rng if rng is not None else np.random.default_rng(config.seed)
    tracker = EvaluationTracker(obj, budget)
    history_x, history_f = [], []
    try:
        for _ in range(config.n_startup):
            x = sample_uniform(space, rng)
            history_x.append(x)
            history_f.append(tracker.evaluate(x))
        while tracker.remaining > 0:
            estimators = build_estimators(space, history_x, history_f, config.gamma)
            x, score = propose(estimators, rng, config.n_candidates)
            history_x.append(x)
            history_f.append(tracker.evaluate(x))
            logging.debug(f"TPE trial {tracker.used}: log l/g={score:.3f}, f={history_f[-1]:.6f}")
    except BudgetExhausted:
        pass
    return tracker.result("tpe")
