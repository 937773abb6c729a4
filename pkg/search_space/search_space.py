#!/usr/bin/env python3
import json
import math
import hashlib
import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, List, Sequence, Tuple

import numpy as np

from search_space.errors import SearchSpaceError

INTEGER = "integer"
CONTINUOUS = "continuous"
KNOB_KINDS = (INTEGER, CONTINUOUS)

# Largest integer range a categorical policy head has to cover
MAX_INTEGER_RANGE = 256


def round_half_away(values):
    """Round to the nearest integer, ties away from zero"""
    values = np.asarray(values, dtype=float)
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


@dataclass(frozen=True)
class KnobSpec:
    name: str
    kind: str
    lower: float
    upper: float

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise SearchSpaceError(f"knob name must be a non-empty string, got {self.name!r}")
        if self.kind not in KNOB_KINDS:
            raise SearchSpaceError(f"knob {self.name}: unknown kind {self.kind!r}")
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        if not (math.isfinite(self.lower) and math.isfinite(self.upper)):
            raise SearchSpaceError(f"knob {self.name}: bounds must be finite")
        if not self.lower < self.upper:
            raise SearchSpaceError(f"knob {self.name}: lower ({self.lower}) must be < upper ({self.upper})")
        if self.kind == INTEGER:
            if not (self.lower.is_integer() and self.upper.is_integer()):
                raise SearchSpaceError(f"knob {self.name}: integer bounds must be whole numbers")
            if self.range_size > MAX_INTEGER_RANGE:
                raise SearchSpaceError(
                    f"knob {self.name}: integer range of {self.range_size} values exceeds {MAX_INTEGER_RANGE}")

    @property
    def is_integer(self):
        return self.kind == INTEGER

    @property
    def range_size(self):
        """Number of admissible values of an integer knob"""
        return int(self.upper - self.lower) + 1

    @property
    def span(self):
        return self.upper - self.lower

    def to_dict(self):
        if self.is_integer:
            return {"name": self.name, "kind": self.kind, "lower": int(self.lower), "upper": int(self.upper)}
        return {"name": self.name, "kind": self.kind, "lower": self.lower, "upper": self.upper}


@dataclass(frozen=True)
class TuningVector:
    """A point in a search space, one raw value per knob"""
    values: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    def __len__(self):
        return len(self.values)

    def __iter__(self):
        return iter(self.values)

    def __getitem__(self, index):
        return self.values[index]

    def array(self):
        return np.array(self.values, dtype=float)

    def to_list(self, space=None):
        """Plain list for JSON; integer knobs become ints when the space is known"""
        if space is None:
            return list(self.values)
        return [int(v) if knob.is_integer else v for v, knob in zip(self.values, space.knobs)]


def _frozen_array(values):
    array = np.array(values)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class SearchSpace:
    knobs: Tuple[KnobSpec, ...]

    def __post_init__(self):
        knobs = tuple(self.knobs)
        if not knobs:
            raise SearchSpaceError("search space must contain at least one knob")
        names = [k.name for k in knobs]
        duplicates = sorted({n for n in names if names.count(n) > 1})
        if duplicates:
            raise SearchSpaceError(f"duplicate knob names: {', '.join(duplicates)}")
        object.__setattr__(self, "knobs", knobs)

    @property
    def dimension(self):
        return len(self.knobs)

    @property
    def names(self):
        return [k.name for k in self.knobs]

    # bound arrays are built once per space and shared read-only
    @cached_property
    def lower(self):
        return _frozen_array([k.lower for k in self.knobs])

    @cached_property
    def upper(self):
        return _frozen_array([k.upper for k in self.knobs])

    @cached_property
    def integer_mask(self):
        return _frozen_array([k.is_integer for k in self.knobs])

    @property
    def all_integer(self):
        return bool(self.integer_mask.all())

    def to_dict(self):
        return {"knobs": [k.to_dict() for k in self.knobs]}

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict) or "knobs" not in data:
            raise SearchSpaceError("search space JSON must be an object with a 'knobs' list")
        knobs = []
        for entry in data["knobs"]:
            try:
                knobs.append(KnobSpec(entry["name"], entry["kind"], entry["lower"], entry["upper"]))
            except (KeyError, TypeError) as e:
                raise SearchSpaceError(f"malformed knob entry {entry!r}: {e}")
        return cls(tuple(knobs))

    def canonical_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))

    def space_hash(self):
        """Hash recorded in every artifact built against this space"""
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()[:16]


def load_space(path):
    """Read a search space JSON file"""
    from search_space.artifacts import read_json
    space = SearchSpace.from_dict(read_json(path))
    logging.info(f"Loaded search space with {space.dimension} knobs from {path} (hash {space.space_hash()})")
    return space


def save_space(space, path):
    from search_space.artifacts import write_json
    write_json(path, space.to_dict())


def validate(space: SearchSpace, x) -> List[str]:
    """Return the list of violations of x against the space; empty means valid"""
    values = list(x)
    if len(values) != space.dimension:
        return [f"dimension mismatch: expected {space.dimension} values, got {len(values)}"]
    violations = []
    for value, knob in zip(values, space.knobs):
        try:
            value = float(value)
        except (TypeError, ValueError):
            violations.append(f"knob {knob.name}: non-numeric value {value!r}")
            continue
        if not math.isfinite(value):
            violations.append(f"knob {knob.name}: non-finite value {value}")
            continue
        if value < knob.lower or value > knob.upper:
            violations.append(f"knob {knob.name}: out of bounds ({value} not in [{knob.lower}, {knob.upper}])")
        if knob.is_integer and not value.is_integer():
            violations.append(f"knob {knob.name}: non-integral value {value}")
    return violations


def ensure_valid(space, x):
    violations = validate(space, x)
    if violations:
        raise SearchSpaceError("invalid tuning vector: " + "; ".join(violations))


def normalize(space: SearchSpace, x) -> np.ndarray:
    """Map a valid point to [-1, 1]^D"""
    ensure_valid(space, x)
    values = np.array(list(x), dtype=float)
    return 2.0 * (values - space.lower) / (space.upper - space.lower) - 1.0


def denormalize(space: SearchSpace, y) -> TuningVector:
    """Inverse of normalize; clamps to [-1, 1] first, rounds integer knobs"""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != space.dimension:
        raise SearchSpaceError(f"dimension mismatch: expected {space.dimension} values, got {y.shape[0]}")
    if not np.all(np.isfinite(y)):
        raise SearchSpaceError("cannot denormalize non-finite values")
    y = np.clip(y, -1.0, 1.0)
    raw = space.lower + (y + 1.0) / 2.0 * (space.upper - space.lower)
    mask = space.integer_mask
    raw[mask] = round_half_away(raw[mask])
    raw = np.clip(raw, space.lower, space.upper)
    return TuningVector(tuple(raw))


def sample_uniform(space: SearchSpace, rng: np.random.Generator) -> TuningVector:
    """Draw one point uniformly; consumes one draw per knob in knob order"""
    values = []
    for knob in space.knobs:
        if knob.is_integer:
            values.append(float(rng.integers(int(knob.lower), int(knob.upper) + 1)))
        else:
            values.append(float(rng.uniform(knob.lower, knob.upper)))
    return TuningVector(tuple(values))


def enumerate_grid(space: SearchSpace) -> Iterable[TuningVector]:
    """Every point of an all-integer space, in lexicographic knob order"""
    if not space.all_integer:
        raise SearchSpaceError("grid enumeration needs an all-integer space")
    axes = [np.arange(int(k.lower), int(k.upper) + 1, dtype=float) for k in space.knobs]
    for point in np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, space.dimension):
        yield TuningVector(tuple(point))


def parse_vector(text: str, space: SearchSpace) -> TuningVector:
    """Parse a comma-separated knob list such as '3,7,0,12'"""
    try:
        values: Sequence[float] = [float(v) for v in text.split(",")]
    except ValueError:
        raise SearchSpaceError(f"cannot parse tuning vector {text!r}")
    x = TuningVector(tuple(values))
    ensure_valid(space, x)
    return x
