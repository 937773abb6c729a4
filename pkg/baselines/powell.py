#!/usr/bin/env python3
import math
import logging

import numpy as np

from baselines.common import BaselineBudget, BudgetExhausted, EvaluationTracker, OptimizationResult
from search_space import denormalize, ensure_valid, normalize

INV_PHI = (math.sqrt(5.0) - 1.0) / 2.0
CONTINUOUS_LINE_TOLERANCE = 1e-9


def feasible_interval(y, direction):
    """Range of t keeping y + t * direction inside [-1, 1]^D"""
    t_lo, t_hi = -math.inf, math.inf
    for yi, di in zip(y, direction):
        if di == 0.0:
            continue
        a, b = (-1.0 - yi) / di, (1.0 - yi) / di
        t_lo, t_hi = max(t_lo, min(a, b)), min(t_hi, max(a, b))
    if not math.isfinite(t_lo) or not math.isfinite(t_hi):
        return 0.0, 0.0
    return min(t_lo, 0.0), max(t_hi, 0.0)


def line_tolerance(space, direction):
    """Stop shrinking once the bracket is a quarter of the smallest integer cell along the line"""
    if not space.all_integer:
        return CONTINUOUS_LINE_TOLERANCE
    cells = 2.0 / (space.upper - space.lower)
    moving = np.abs(direction) > 0
    return 0.25 * float(np.min(cells[moving] / np.abs(direction[moving])))


def golden_section(g, a, b, tol, g0):
    """Bounded golden-section minimization of g on [a, b].

    g0 is the known value at t = 0. Returns the best (t, value) seen, which is
    (0, g0) unless some trial point was strictly lower.
    """
    best_t, best_g = 0.0, g0
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    gc, gd = g(c), g(d)
    for t, v in ((c, gc), (d, gd)):
        if v < best_g:
            best_t, best_g = t, v
    while b - a > tol:
        if gc < gd:
            b, d, gd = d, c, gc
            c = b - INV_PHI * (b - a)
            gc = g(c)
            if gc < best_g:
                best_t, best_g = c, gc
        else:
            a, c, gc = c, d, gd
            d = a + INV_PHI * (b - a)
            gd = g(d)
            if gd < best_g:
                best_t, best_g = d, gd
    return best_t, best_g


def powell(obj, space, x0, budget: BaselineBudget) -> OptimizationResult:
    """Powell's direction-set method maximizing f over the normalized cube.

    Integer knobs are handled by continuous relaxation: every trial point is
    denormalized (rounded) before evaluation.
    """
    ensure_valid(space, x0)
    tracker = EvaluationTracker(obj, budget)

    def g(y):
        return -tracker.evaluate(denormalize(space, y))

    y = normalize(space, x0)
    directions = np.eye(space.dimension)
    iteration = 0
    try:
        g_current = -tracker.evaluate(x0)
        while True:
            iteration += 1
            y_start, g_start = y.copy(), g_current
            largest_decrease, largest_index = 0.0, 0
            for index, direction in enumerate(directions):
                t_lo, t_hi = feasible_interval(y, direction)
                if t_hi - t_lo <= 0.0:
                    continue
                t, g_new = golden_section(lambda t: g(y + t * direction), t_lo, t_hi,
                                          line_tolerance(space, direction), g_current)
                if g_current - g_new > largest_decrease:
                    largest_decrease, largest_index = g_current - g_new, index
                y, g_current = np.clip(y + t * direction, -1.0, 1.0), g_new

            displacement = y - y_start
            norm = float(np.linalg.norm(displacement))
            if norm > 0.0:
                new_direction = displacement / norm
                directions[largest_index] = new_direction
                t_lo, t_hi = feasible_interval(y, new_direction)
                if t_hi - t_lo > 0.0:
                    t, g_new = golden_section(lambda t: g(y + t * new_direction), t_lo, t_hi,
                                              line_tolerance(space, new_direction), g_current)
                    y, g_current = np.clip(y + t * new_direction, -1.0, 1.0), g_new

            logging.debug(f"Powell iteration {iteration}: f={-g_current:.8f}, evaluations={tracker.used}")
            if g_start - g_current < budget.tolerance:
                break
    except BudgetExhausted:
        logging.warning(f"Powell budget of {budget.max_evaluations} evaluations exhausted "
                        f"in iteration {iteration}; returning best so far")
    return tracker.result("powell")
