#!/usr/bin/env python3
"""Committed synthetic problems used by the benchmark and the acceptance checks"""
from dataclasses import replace

import numpy as np

from search_space import INTEGER, CONTINUOUS, KnobSpec, SearchSpace, TuningVector
from surrogate import (
    DeviceProfile,
    GroundTruthObjective,
    SurrogateObjective,
    SurrogateTrainConfig,
    gen_synthetic_device_data,
    make_device_profiles,
    train_device_model,
)

FIXTURE_SEED = 42
FIXTURE_KNOBS = 4
FIXTURE_LEVELS = 16
FIXTURE_DEVICES = 8


def fixture_space(n_knobs=FIXTURE_KNOBS, levels=FIXTURE_LEVELS):
    return SearchSpace(tuple(KnobSpec(f"k{i}", INTEGER, 0, levels - 1) for i in range(n_knobs)))


def fixture_profiles(space=None, seed=FIXTURE_SEED, n_devices=FIXTURE_DEVICES):
    space = space or fixture_space()
    return make_device_profiles(space, n_devices, np.random.default_rng(seed))


def fixture_objective(seed=FIXTURE_SEED):
    """4 integer knobs of range 16, 8 devices, mean of the true bump responses"""
    space = fixture_space()
    return GroundTruthObjective(space, fixture_profiles(space, seed), "mean")


def fixture_surrogate(seed=FIXTURE_SEED, n_rows=500, epochs=400):
    """MLP surrogate of the fixture: one Adam-trained model per synthetic device"""
    space = fixture_space()
    rng = np.random.default_rng(seed)
    config = SurrogateTrainConfig(hidden_sizes=(32, 32), learning_rate=0.01, epochs=epochs, seed=seed)
    models = []
    for profile in fixture_profiles(space, seed):
        data = gen_synthetic_device_data(space, replace(profile, n_rows=n_rows), rng)
        models.append(train_device_model(data, space, config))
    return SurrogateObjective(space, models, "mean")


def bump_objective(space, optimum, width=0.3, amplitude=1.0):
    """Single noiseless Gaussian bump peaking at `optimum`"""
    profile = DeviceProfile("bump", TuningVector(tuple(float(v) for v in optimum)), amplitude, width, 0.0, 1)
    return GroundTruthObjective(space, [profile], "mean")


def tiny_space(levels=8):
    return SearchSpace((KnobSpec("k0", INTEGER, 0, levels - 1),))


def continuous_space(n_knobs):
    return SearchSpace(tuple(KnobSpec(f"c{i}", CONTINUOUS, -1.0, 1.0) for i in range(n_knobs)))
