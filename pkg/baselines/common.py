#!/usr/bin/env python3
import math
import time
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

from search_space import InvalidInputError, TuningVector
from surrogate import aggregate_eval


@dataclass
class BaselineBudget:
    max_evaluations: int
    tolerance: float = 1e-8

    def __post_init__(self):
        if int(self.max_evaluations) < 1:
            raise InvalidInputError(f"max_evaluations must be >= 1, got {self.max_evaluations}")
        if not self.tolerance >= 0:
            raise InvalidInputError(f"tolerance must be >= 0, got {self.tolerance}")
        self.max_evaluations = int(self.max_evaluations)


@dataclass
class OptimizationResult:
    best_x: TuningVector
    best_f: float
    evaluations: int
    seconds: float
    trace: List[Tuple[int, float]] = field(default_factory=list)

    def to_dict(self, space=None):
        return {
            "best_x": self.best_x.to_list(space),
            "best_f": self.best_f,
            "evaluations": self.evaluations,
            "seconds": self.seconds,
            "trace": [[i, f] for i, f in self.trace],
        }

    @classmethod
    def from_dict(cls, data):
        return cls(TuningVector(tuple(float(v) for v in data["best_x"])), float(data["best_f"]),
                   int(data["evaluations"]), float(data["seconds"]),
                   [(int(i), float(f)) for i, f in data["trace"]])


class BudgetExhausted(Exception):
    """Raised inside an optimizer when its evaluation budget is spent"""


class EvaluationTracker:
    """Meters one optimizer run: enforces the budget and keeps the trace and incumbent"""

    def __init__(self, obj, budget: BaselineBudget):
        self.obj = obj
        self.budget = budget
        self.trace: List[Tuple[int, float]] = []
        self.best_x: Optional[TuningVector] = None
        self.best_f = -math.inf
        self.started = time.perf_counter()

    @property
    def used(self):
        return len(self.trace)

    @property
    def remaining(self):
        return self.budget.max_evaluations - len(self.trace)

    def evaluate(self, x) -> float:
        if self.remaining <= 0:
            raise BudgetExhausted()
        f = aggregate_eval(self.obj, x)
        self.trace.append((len(self.trace), f))
        if f > self.best_f:
            self.best_x, self.best_f = x, f
        return f

    def result(self, method="") -> OptimizationResult:
        seconds = time.perf_counter() - self.started
        logging.debug(f"{method or 'optimizer'} finished: best f {self.best_f:.6f} after {self.used} evaluations")
        return OptimizationResult(self.best_x, self.best_f, self.used, seconds, list(self.trace))
