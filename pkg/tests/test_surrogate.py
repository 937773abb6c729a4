import os
import json
import math

import numpy as np
import pytest

from search_space import (
    INTEGER,
    KnobSpec,
    SearchSpace,
    NumericalError,
    SchemaMismatchError,
    InvalidInputError,
    TuningVector,
    normalize,
    sample_uniform,
)
from surrogate import (
    CallableObjective,
    DeviceDataset,
    DeviceProfile,
    GroundTruthObjective,
    MlpLayer,
    MlpModel,
    SurrogateObjective,
    SurrogateTrainConfig,
    gen_synthetic_device_data,
    ground_truth,
    load_profiles,
    make_device_profiles,
    mlp_forward,
    train_device_model,
)

CONFIG_DIR = os.path.join(os.path.dirname(os.path.dirname(os.path.abspath(__file__))), "configs")


def _profile(device_id="dev", optimum=(5, 0), noise=0.0, n_rows=300):
    return DeviceProfile(device_id, TuningVector(optimum), 1.0, 0.5, noise, n_rows)


def _small_config(**overrides):
    values = dict(hidden_sizes=(8,), learning_rate=0.02, epochs=300, seed=3)
    values.update(overrides)
    return SurrogateTrainConfig(**values)


def test_profile_rejects_zero_rows(int_space):
    with pytest.raises(InvalidInputError, match="n_rows"):
        _profile(n_rows=0).check(int_space)
    with pytest.raises(InvalidInputError):
        _profile(optimum=(99, 0)).check(int_space)


def test_ground_truth_peaks_at_optimum(int_space):
    profile = _profile()
    assert ground_truth(int_space, profile, (5, 0)) == pytest.approx(1.0)
    assert ground_truth(int_space, profile, (15, 3)) < 0.5


def test_synthetic_data_is_seeded_and_noiseless_when_asked(int_space):
    profile = _profile()
    a = gen_synthetic_device_data(int_space, profile, np.random.default_rng(11))
    b = gen_synthetic_device_data(int_space, profile, np.random.default_rng(11))
    assert len(a) == 300
    assert np.array_equal(a.inputs, b.inputs) and np.array_equal(a.performance, b.performance)
    expected = [ground_truth(int_space, profile, x) for x in a.vectors()]
    assert np.allclose(a.performance, expected)


def test_dataset_csv_round_trip(int_space, tmp_path):
    data = gen_synthetic_device_data(int_space, _profile(noise=0.05), np.random.default_rng(2))
    path = tmp_path / "dev.csv"
    data.to_csv(str(path), int_space)
    assert path.read_text().splitlines()[0] == "bias,gain,performance"
    loaded = DeviceDataset.from_csv(str(path), int_space)
    assert loaded.device_id == "dev"
    assert np.array_equal(loaded.inputs, data.inputs)
    assert np.array_equal(loaded.performance, data.performance)


def test_dataset_csv_header_must_match(int_space, tmp_path):
    path = tmp_path / "dev.csv"
    path.write_text("gain,bias,performance\n0,0,1.0\n")
    with pytest.raises(InvalidInputError, match="header"):
        DeviceDataset.from_csv(str(path), int_space)


@pytest.mark.parametrize("optimizer", ["adam", "gd"])
def test_training_reduces_loss(int_space, optimizer):
    data = gen_synthetic_device_data(int_space, _profile(), np.random.default_rng(5))
    model = train_device_model(data, int_space, _small_config(optimizer=optimizer))
    assert len(model.loss_history) == 300
    assert model.loss_history[-1] < model.loss_history[0]
    assert model.final_rmse == pytest.approx(np.sqrt(model.loss_history[-1]), rel=0.2)


def test_training_is_deterministic(int_space):
    data = gen_synthetic_device_data(int_space, _profile(), np.random.default_rng(5))
    first = train_device_model(data, int_space, _small_config(epochs=50))
    second = train_device_model(data, int_space, _small_config(epochs=50))
    for a, b in zip(first.layers, second.layers):
        assert np.array_equal(a.weight, b.weight) and np.array_equal(a.bias, b.bias)


def test_model_serialization_preserves_outputs(int_space, rng):
    data = gen_synthetic_device_data(int_space, _profile(), np.random.default_rng(5))
    model = train_device_model(data, int_space, _small_config(epochs=20))
    restored = MlpModel.from_dict(json.loads(json.dumps(model.to_dict())))
    for y in rng.uniform(-1, 1, size=(10, 2)):
        assert mlp_forward(restored, y) == mlp_forward(model, y)


def test_model_rejects_bad_shapes():
    with pytest.raises(InvalidInputError):
        MlpModel.from_dict({"layers": [{"shape": [2, 3], "weight": [0.0] * 5, "bias": [0.0, 0.0]}]})


@pytest.fixture
def surrogate(int_space):
    models = []
    for index, optimum in enumerate([(3, 0), (9, -2), (12, 2)]):
        data = gen_synthetic_device_data(int_space, _profile(f"d{index}", optimum), np.random.default_rng(index))
        models.append(train_device_model(data, int_space, _small_config(epochs=40)))
    return SurrogateObjective(int_space, models)


def test_mean_aggregation_and_device_order(surrogate, int_space):
    x = TuningVector((4, 1))
    outputs = surrogate.device_outputs(normalize(int_space, x))
    assert surrogate.evaluate(x) == pytest.approx(np.mean(outputs), abs=1e-9)
    shuffled = SurrogateObjective(int_space, list(reversed(surrogate.devices)))
    assert shuffled.evaluate(x) == surrogate.evaluate(x)
    minimum = SurrogateObjective(int_space, surrogate.devices, "min")
    assert minimum.evaluate(x) <= surrogate.evaluate(x)


def test_counter_meters_valid_calls_only(surrogate):
    metered = surrogate.with_counter()
    metered.evaluate((1, 1))
    metered((2, 2))
    with pytest.raises(InvalidInputError):
        metered.evaluate((99, 0))
    assert metered.evaluations == 2
    assert surrogate.evaluations == 0


def test_surrogate_save_load_checks_space(surrogate, mixed_space, tmp_path):
    path = str(tmp_path / "surrogate.json")
    surrogate.save(path)
    loaded = SurrogateObjective.load(path, surrogate.space)
    assert loaded.evaluate((7, 0)) == surrogate.evaluate((7, 0))
    with pytest.raises(SchemaMismatchError):
        SurrogateObjective.load(path, mixed_space)


def test_restrict_to_devices(surrogate):
    single = surrogate.restrict(["d1"])
    assert [m.device_id for m in single.devices] == ["d1"]
    with pytest.raises(InvalidInputError, match="unknown devices"):
        surrogate.restrict(["d7"])


def test_ground_truth_objective_single_device(int_space):
    obj = GroundTruthObjective(int_space, [_profile()])
    assert obj.evaluate((5, 0)) == pytest.approx(1.0)
    assert obj.device_truth((5, 0)) == [pytest.approx(1.0)]


def test_make_device_profiles(int_space):
    first = make_device_profiles(int_space, 8, np.random.default_rng(42))
    second = make_device_profiles(int_space, 8, np.random.default_rng(42))
    assert [p.device_id for p in first] == [f"device{i}" for i in range(8)]
    assert first == second
    for profile in first:
        profile.check(int_space)
        assert 0.85 <= profile.amplitude <= 1.15


def test_load_profiles_generator_block(int_space, tmp_path):
    path = tmp_path / "profiles.json"
    path.write_text(json.dumps({"generate": {"seed": 1, "n_devices": 3, "n_rows": 10, "_note": "x"}}))
    profiles = load_profiles(str(path), int_space)
    assert len(profiles) == 3 and all(p.n_rows == 10 for p in profiles)
    path.write_text(json.dumps({"devices": []}))
    with pytest.raises(InvalidInputError):
        load_profiles(str(path), int_space)


def test_non_finite_objective_value_is_numerical_error(int_space, rng):
    obj = CallableObjective(int_space, lambda y: float("nan"))
    with pytest.raises(NumericalError):
        obj.evaluate(sample_uniform(int_space, rng))


def test_zero_network_outputs_zero():
    model = MlpModel([MlpLayer(np.zeros((4, 2)), np.zeros(4)), MlpLayer(np.zeros((1, 4)), np.zeros(1))])
    assert mlp_forward(model, [0.3, -0.7]) == 0.0


def test_forward_matches_a_hand_computed_network():
    w1 = np.array([[0.5, -1.0], [0.25, 0.75], [-0.5, 0.0], [1.0, 1.0]])
    b1 = np.array([0.1, -0.2, 0.0, 0.3])
    w2 = np.array([[1.0, -2.0, 0.5, 0.25]])
    b2 = np.array([0.05])
    model = MlpModel([MlpLayer(w1, b1), MlpLayer(w2, b2)])
    y = (0.4, -0.6)
    hidden = [math.tanh(w1[j, 0] * y[0] + w1[j, 1] * y[1] + b1[j]) for j in range(4)]
    expected = sum(w2[0, j] * hidden[j] for j in range(4)) + b2[0]
    assert mlp_forward(model, y) == pytest.approx(expected, abs=1e-12)


def test_synthetic_noise_has_the_configured_spread():
    space = SearchSpace((KnobSpec("k", INTEGER, 0, 1),))
    profile = DeviceProfile("noisy", TuningVector((1,)), 1.0, 0.5, 0.1, 10_000)
    data = gen_synthetic_device_data(space, profile, np.random.default_rng(17))
    truth = np.array([ground_truth(space, profile, x) for x in data.vectors()])
    assert np.std(data.performance - truth) == pytest.approx(0.1, abs=0.01)


def test_committed_config_trains_monotonically(int_space):
    with open(os.path.join(CONFIG_DIR, "surrogate.json")) as f:
        config = SurrogateTrainConfig.from_dict(json.load(f))
    data = gen_synthetic_device_data(int_space, _profile(n_rows=500), np.random.default_rng(9))
    model = train_device_model(data, int_space, config)
    assert len(model.loss_history) == config.epochs
    assert np.all(np.diff(model.loss_history) <= 0)
    assert model.final_rmse <= 0.05 * 1.0


def test_monotone_training_survives_an_oversized_step(int_space):
    data = gen_synthetic_device_data(int_space, _profile(), np.random.default_rng(5))
    model = train_device_model(data, int_space, _small_config(learning_rate=5.0, epochs=60))
    assert np.all(np.diff(model.loss_history) <= 0)
    assert model.loss_history[-1] < model.loss_history[0]


def test_evaluate_with_point_returns_the_normalized_input(int_space):
    obj = CallableObjective(int_space, lambda y: float(y.sum())).with_counter()
    value, y = obj.evaluate_with_point(TuningVector((15, 3)))
    assert np.allclose(y, [1.0, 1.0])
    assert value == obj.evaluate(TuningVector((15, 3))) == pytest.approx(2.0)
    assert obj.evaluations == 2
