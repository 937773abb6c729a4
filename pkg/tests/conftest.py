import numpy as np
import pytest

from search_space import INTEGER, CONTINUOUS, KnobSpec, SearchSpace
from surrogate import CallableObjective


@pytest.fixture
def int_space():
    return SearchSpace((KnobSpec("bias", INTEGER, 0, 15), KnobSpec("gain", INTEGER, -4, 3)))


@pytest.fixture
def mixed_space():
    return SearchSpace((
        KnobSpec("bias", INTEGER, 0, 7),
        KnobSpec("vref", CONTINUOUS, -1.0, 2.0),
        KnobSpec("trim", INTEGER, 1, 4),
    ))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def quadratic(mixed_space):
    """Smooth objective peaking at normalized point 0.2 on every knob"""
    return CallableObjective(mixed_space, lambda y: -float(np.sum((y - 0.2) ** 2)))


@pytest.fixture(autouse=True)
def _log_to_tmp(tmp_path, monkeypatch):
    import tuner
    monkeypatch.setattr(tuner, "LOG_FILE", str(tmp_path / "tuner.log"))
