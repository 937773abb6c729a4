#!/usr/bin/env python3
import copy
import math
import logging
import threading
from typing import Callable, List, Sequence

import numpy as np

from search_space import (
    SearchSpace,
    InvalidInputError,
    NumericalError,
    normalize,
)
from search_space.artifacts import read_json, write_json, check_space_hash
from surrogate.mlp import MlpModel, mlp_forward
from surrogate.device_data import DeviceProfile, ground_truth

AGGREGATIONS = ("mean", "min")


class EvaluationCounter:
    """Thread-safe tally of objective evaluations"""
    def __init__(self):
        self._lock = threading.Lock()
        self._count = 0

    def increment(self):
        with self._lock:
            self._count += 1
            return self._count

    @property
    def count(self):
        with self._lock:
            return self._count


def _aggregate(values, aggregation):
    if aggregation == "mean":
        # fsum is exact, so the mean does not depend on device order
        return math.fsum(values) / len(values)
    return min(values)


class Objective:
    """Metered black-box objective f(x) over a search space.

    Every optimizer observes f only through evaluate(), which validates the
    point, counts the call and dispatches on the normalized representation.
    """

    def __init__(self, space: SearchSpace, counter=None):
        self.space = space
        self.counter = counter or EvaluationCounter()

    def evaluate(self, x) -> float:
        return self.evaluate_with_point(x)[0]

    def evaluate_with_point(self, x):
        """f(x) together with the normalized point it was computed on"""
        y = normalize(self.space, x)
        self.counter.increment()
        value = self._evaluate_normalized(y)
        if not math.isfinite(value):
            logging.error(f"Objective returned non-finite value {value} at {list(x)}")
            raise NumericalError(f"objective returned non-finite value at {list(x)}")
        return value, y

    __call__ = evaluate

    @property
    def evaluations(self):
        return self.counter.count

    def with_counter(self):
        """Shallow copy sharing the models but metered by a fresh counter"""
        clone = copy.copy(self)
        clone.counter = EvaluationCounter()
        return clone

    def _evaluate_normalized(self, y) -> float:
        raise NotImplementedError


class SurrogateObjective(Objective):
    """Aggregate of per-device MLP surrogates"""

    def __init__(self, space, devices: Sequence[MlpModel], aggregation="mean", counter=None):
        super().__init__(space, counter)
        if not devices:
            raise InvalidInputError("a surrogate objective needs at least one device model")
        if aggregation not in AGGREGATIONS:
            raise InvalidInputError(f"unknown aggregation {aggregation!r}")
        for model in devices:
            if model.input_dim != space.dimension:
                raise InvalidInputError(
                    f"device {model.device_id} expects {model.input_dim} inputs, space has {space.dimension}")
        self.devices = list(devices)
        self.aggregation = aggregation

    def device_outputs(self, y) -> List[float]:
        return [mlp_forward(model, y) for model in self.devices]

    def _evaluate_normalized(self, y):
        return _aggregate(self.device_outputs(y), self.aggregation)

    def restrict(self, device_ids):
        """Objective over a subset of devices (device-specific tuning)"""
        chosen = [m for m in self.devices if m.device_id in set(device_ids)]
        missing = sorted(set(device_ids) - {m.device_id for m in chosen})
        if missing:
            raise InvalidInputError(f"unknown devices: {', '.join(missing)}")
        return SurrogateObjective(self.space, chosen, self.aggregation)

    def to_dict(self):
        return {
            "space": self.space.to_dict(),
            "space_hash": self.space.space_hash(),
            "aggregation": self.aggregation,
            "devices": [model.to_dict() for model in self.devices],
        }

    @classmethod
    def from_dict(cls, data, space=None):
        stored = SearchSpace.from_dict(data["space"])
        check_space_hash(stored.space_hash(), data.get("space_hash"), "surrogate objective")
        if space is not None:
            check_space_hash(space.space_hash(), stored.space_hash(), "surrogate objective")
        return cls(stored, [MlpModel.from_dict(d) for d in data["devices"]], data.get("aggregation", "mean"))

    def save(self, path):
        write_json(path, self.to_dict())
        logging.info(f"Saved surrogate objective with {len(self.devices)} devices to {path}")

    @classmethod
    def load(cls, path, space=None):
        objective = cls.from_dict(read_json(path), space)
        logging.info(f"Loaded surrogate objective ({len(objective.devices)} devices, "
                     f"{objective.aggregation}) from {path}")
        return objective


class GroundTruthObjective(Objective):
    """Noiseless aggregate of the synthetic devices' true responses"""

    def __init__(self, space, profiles: Sequence[DeviceProfile], aggregation="mean", counter=None):
        super().__init__(space, counter)
        if not profiles:
            raise InvalidInputError("a ground-truth objective needs at least one device profile")
        if aggregation not in AGGREGATIONS:
            raise InvalidInputError(f"unknown aggregation {aggregation!r}")
        for profile in profiles:
            profile.check(space)
        self.profiles = list(profiles)
        self.aggregation = aggregation
        self._centers = np.stack([normalize(space, p.optimum) for p in self.profiles])

    def _evaluate_normalized(self, y):
        values = []
        for profile, center in zip(self.profiles, self._centers):
            delta = y - center
            values.append(profile.amplitude * math.exp(-float(delta @ delta) / (2.0 * profile.width ** 2)))
        return _aggregate(values, self.aggregation)

    def device_truth(self, x):
        return [ground_truth(self.space, p, x) for p in self.profiles]

    def restrict(self, device_ids):
        chosen = [p for p in self.profiles if p.device_id in set(device_ids)]
        missing = sorted(set(device_ids) - {p.device_id for p in chosen})
        if missing:
            raise InvalidInputError(f"unknown devices: {', '.join(missing)}")
        return GroundTruthObjective(self.space, chosen, self.aggregation)


class CallableObjective(Objective):
    """Wraps a plain function of the normalized point"""

    def __init__(self, space, function: Callable[[np.ndarray], float], counter=None):
        super().__init__(space, counter)
        self.function = function

    def _evaluate_normalized(self, y):
        return float(self.function(y))


def aggregate_eval(obj: Objective, x) -> float:
    """f(x): the single metered path through which optimizers observe the objective"""
    return obj.evaluate(x)
