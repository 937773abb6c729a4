#!/usr/bin/env python3
from baselines.common import BaselineBudget, EvaluationTracker, OptimizationResult
from search_space import sample_uniform


def random_search(obj, space, budget: BaselineBudget, rng) -> OptimizationResult:
    """Uniform sampling over the space; returns the incumbent"""
    tracker = EvaluationTracker(obj, budget)
    for _ in range(budget.max_evaluations):
        tracker.evaluate(sample_uniform(space, rng))
    return tracker.result("random search")
