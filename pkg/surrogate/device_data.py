"""Synthetic device measurements standing in for tester data.

Each device responds with a Gaussian bump around its own optimum; process
variation shows up as per-device jitter in optimum, amplitude and width.
"""
import os
import math
import logging
from dataclasses import dataclass
from typing import List

import numpy as np
import pandas as pd

from search_space import (
    SearchSpace,
    InvalidInputError,
    SearchSpaceError,
    MissingArtifactError,
    ArtifactIOError,
    TuningVector,
    normalize,
    validate,
    sample_uniform,
    denormalize,
)
from search_space.artifacts import read_json

PERFORMANCE_COLUMN = "performance"


@dataclass(frozen=True)
class DeviceProfile:
    device_id: str
    optimum: TuningVector
    amplitude: float
    width: float
    noise_std: float
    n_rows: int

    def check(self, space):
        violations = validate(space, self.optimum)
        if violations:
            raise SearchSpaceError(f"device {self.device_id}: optimum invalid: {'; '.join(violations)}")
        if self.noise_std < 0:
            raise InvalidInputError(f"device {self.device_id}: noise_std must be >= 0")
        if self.width <= 0:
            raise InvalidInputError(f"device {self.device_id}: width must be > 0")
        if int(self.n_rows) < 1:
            raise InvalidInputError(f"device {self.device_id}: n_rows must be >= 1, got {self.n_rows}")

    def to_dict(self, space=None):
        return {"device_id": self.device_id, "optimum": self.optimum.to_list(space), "amplitude": self.amplitude,
                "width": self.width, "noise_std": self.noise_std, "n_rows": self.n_rows}

    @classmethod
    def from_dict(cls, data):
        try:
            return cls(str(data["device_id"]), TuningVector(tuple(data["optimum"])), float(data["amplitude"]),
                       float(data["width"]), float(data["noise_std"]), int(data["n_rows"]))
        except (KeyError, TypeError, ValueError) as e:
            raise InvalidInputError(f"malformed device profile {data!r}: {e}")


@dataclass
class DeviceDataset:
    device_id: str
    inputs: np.ndarray       # [n x D] raw knob values
    performance: np.ndarray  # [n]

    def __len__(self):
        return int(self.performance.shape[0])

    def vectors(self) -> List[TuningVector]:
        return [TuningVector(tuple(row)) for row in self.inputs]

    def check(self, space):
        if len(self) < 1:
            raise InvalidInputError(f"dataset {self.device_id} has no rows")
        for row in self.vectors():
            violations = validate(space, row)
            if violations:
                raise SearchSpaceError(f"dataset {self.device_id}: {'; '.join(violations)}")

    def to_csv(self, path, space):
        frame = pd.DataFrame(self.inputs, columns=space.names)
        for knob in space.knobs:
            if knob.is_integer:
                frame[knob.name] = frame[knob.name].astype(np.int64)
        frame[PERFORMANCE_COLUMN] = self.performance
        try:
            frame.to_csv(path, index=False, float_format="%.17g")
        except OSError as e:
            raise ArtifactIOError(f"cannot write {path}: {e}")
        logging.info(f"Wrote {len(self)} rows for device {self.device_id} to {path}")

    @classmethod
    def from_csv(cls, path, space, device_id=None):
        if not os.path.exists(path):
            raise MissingArtifactError(f"dataset not found: {path}")
        frame = pd.read_csv(path)
        expected = space.names + [PERFORMANCE_COLUMN]
        if list(frame.columns) != expected:
            raise InvalidInputError(f"{path}: header {list(frame.columns)} does not match {expected}")
        device_id = device_id or os.path.splitext(os.path.basename(path))[0]
        dataset = cls(device_id, frame[space.names].to_numpy(dtype=float),
                      frame[PERFORMANCE_COLUMN].to_numpy(dtype=float))
        dataset.check(space)
        return dataset


def ground_truth(space: SearchSpace, profile: DeviceProfile, x) -> float:
    """Noiseless device response g_d(x)"""
    delta = normalize(space, x) - normalize(space, profile.optimum)
    return profile.amplitude * math.exp(-float(delta @ delta) / (2.0 * profile.width ** 2))


def gen_synthetic_device_data(space: SearchSpace, profile: DeviceProfile, rng: np.random.Generator) -> DeviceDataset:
    """Sample n_rows uniform points and record the bump response plus Gaussian noise"""
    profile.check(space)
    rows, values = [], []
    for _ in range(profile.n_rows):
        x = sample_uniform(space, rng)
        noise = profile.noise_std * rng.standard_normal()
        rows.append(x.values)
        values.append(ground_truth(space, profile, x) + noise)
    return DeviceDataset(profile.device_id, np.array(rows, dtype=float), np.array(values, dtype=float))


def make_device_profiles(space, n_devices, rng, amplitude=1.0, width=0.5, noise_fraction=0.05,
                         n_rows=2000, jitter=0.15):
    """Devices sharing a common centre with per-device variation"""
    center = rng.uniform(-0.5, 0.5, size=space.dimension)
    profiles = []
    for index in range(n_devices):
        optimum = denormalize(space, center + rng.uniform(-jitter, jitter, size=space.dimension))
        device_amplitude = amplitude * rng.uniform(0.85, 1.15)
        device_width = width * rng.uniform(0.85, 1.15)
        profiles.append(DeviceProfile(f"device{index}", optimum, float(device_amplitude), float(device_width),
                                      float(noise_fraction * device_amplitude), int(n_rows)))
    return profiles


def load_profiles(path, space) -> List[DeviceProfile]:
    """Read a profile file: either an explicit device list or a generator block"""
    data = read_json(path)
    if "devices" in data:
        profiles = [DeviceProfile.from_dict(entry) for entry in data["devices"]]
    elif "generate" in data:
        spec = dict(data["generate"])
        seed = int(spec.pop("seed", 0))
        spec.pop("_note", None)
        try:
            profiles = make_device_profiles(space, rng=np.random.default_rng(seed), **spec)
        except TypeError as e:
            raise InvalidInputError(f"bad profile generator block in {path}: {e}")
    else:
        raise InvalidInputError(f"{path}: expected a 'devices' list or a 'generate' block")
    if not profiles:
        raise InvalidInputError(f"{path}: no devices configured")
    for profile in profiles:
        profile.check(space)
    return profiles
