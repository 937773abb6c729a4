import math
from types import SimpleNamespace

import numpy as np
import pytest

from agent import (
    ActionDistribution,
    AgentState,
    KnobDistribution,
    Observation,
    PolicyParams,
    check_case,
    check_policy_matches_space,
    greedy_action,
    init_params,
    log_prob_of,
    policy_step,
    random_case,
    sample_action,
    trajectory_grad,
)
from agent.lstm_policy import LOG_STD_MAX, _forward
from search_space import (
    INTEGER,
    KnobSpec,
    SearchSpace,
    NumericalError,
    SchemaMismatchError,
    InvalidInputError,
    normalize,
    sample_uniform,
    validate,
)


def _obs(space, rng):
    return Observation(normalize(space, sample_uniform(space, rng)), float(rng.standard_normal()))


def test_init_shapes_and_forget_bias(mixed_space):
    params = init_params(mixed_space, hidden_size=6, rng=np.random.default_rng(0))
    assert params.arrays["lstm1.W"].shape == (24, 4)
    assert params.arrays["lstm2.U"].shape == (24, 6)
    assert params.arrays["head.0.W"].shape == (8, 6)
    assert params.arrays["head.1.b"].shape == (2,)
    assert params.arrays["head.2.W"].shape == (4, 6)
    assert np.all(params.arrays["lstm1.b"][6:12] == 1.0)
    assert np.all(np.abs(params.arrays["lstm2.U"]) <= 1.0 / math.sqrt(6))


def _sigmoid(z):
    return 1.0 / (1.0 + math.exp(-z))


def _hand_lstm_cell(W, U, b, x, h, c):
    H = len(h)
    z = [sum(W[r][k] * x[k] for k in range(len(x))) + sum(U[r][k] * h[k] for k in range(H)) + b[r]
         for r in range(4 * H)]
    c_new = [_sigmoid(z[H + j]) * c[j] + _sigmoid(z[j]) * math.tanh(z[3 * H + j]) for j in range(H)]
    h_new = [_sigmoid(z[2 * H + j]) * math.tanh(c_new[j]) for j in range(H)]
    return h_new, c_new


def test_policy_step_matches_a_hand_computed_lstm_step():
    space = SearchSpace((KnobSpec("k", INTEGER, 0, 2),))
    params = init_params(space, 2, np.random.default_rng(11))
    a = {k: v.tolist() for k, v in params.arrays.items()}
    state = AgentState(np.array([0.1, -0.2]), np.array([0.3, 0.05]), np.array([-0.1, 0.2]), np.array([0.0, -0.4]))
    obs = Observation(np.array([0.5]), -0.3)

    h1, c1 = _hand_lstm_cell(a["lstm1.W"], a["lstm1.U"], a["lstm1.b"], [0.5, -0.3], [0.1, -0.2], [0.3, 0.05])
    h2, c2 = _hand_lstm_cell(a["lstm2.W"], a["lstm2.U"], a["lstm2.b"], h1, [-0.1, 0.2], [0.0, -0.4])
    logits = [sum(a["head.0.W"][r][k] * h2[k] for k in range(2)) + a["head.0.b"][r] for r in range(3)]

    dist, new_state = policy_step(params, state, obs)
    assert dist.knobs[0].logits == pytest.approx(np.array(logits), abs=1e-12)
    assert new_state.h1 == pytest.approx(np.array(h1), abs=1e-12)
    assert new_state.c2 == pytest.approx(np.array(c2), abs=1e-12)


def test_inference_step_matches_the_replay_forward(mixed_space, rng):
    params = init_params(mixed_space, 4, rng)
    obs = _obs(mixed_space, rng)
    fast, fast_state = policy_step(params, AgentState.zeros(4), obs)
    full, full_state, caches = _forward(params, AgentState.zeros(4), obs)
    assert caches is not None
    assert np.array_equal(fast.knobs[0].logits, full.knobs[0].logits)
    assert fast.knobs[1].mean == full.knobs[1].mean
    assert np.array_equal(fast_state.c2, full_state.c2)


def test_categorical_heads_are_normalized(mixed_space, rng):
    params = init_params(mixed_space, 5, rng)
    state = AgentState.zeros(5)
    for _ in range(25):
        dist, state = policy_step(params, state, _obs(mixed_space, rng))
        for knob in dist.knobs:
            if knob.kind == "integer":
                assert knob.probabilities().sum() == pytest.approx(1.0, abs=1e-12)
                assert np.all(knob.probabilities() >= 0)


def test_sampled_actions_validate_and_repeat(mixed_space, rng):
    params = init_params(mixed_space, 4, rng)
    dist, _ = policy_step(params, AgentState.zeros(4), _obs(mixed_space, rng))
    for seed in range(30):
        first = sample_action(dist, mixed_space, np.random.default_rng(seed))
        second = sample_action(dist, mixed_space, np.random.default_rng(seed))
        assert first.x == second.x
        assert validate(mixed_space, first.x) == []
        assert first.log_prob == log_prob_of(dist, first.raw)


def test_sample_action_matches_categorical_probabilities():
    space = SearchSpace((KnobSpec("k", INTEGER, 0, 1),))
    dist = ActionDistribution([KnobDistribution("integer", logits=np.array([0.0, math.log(3.0)]))])
    rng = np.random.default_rng(21)
    draws = np.array([sample_action(dist, space, rng).raw[0] for _ in range(100_000)])
    assert np.mean(draws == 0) == pytest.approx(0.25, abs=0.01)
    assert np.mean(draws == 1) == pytest.approx(0.75, abs=0.01)


def test_squashed_gaussian_stays_inside_bounds(mixed_space):
    dist = ActionDistribution([
        KnobDistribution("integer", logits=np.zeros(8)),
        KnobDistribution("continuous", mean=40.0, log_std=-5.0),
        KnobDistribution("integer", logits=np.zeros(4)),
    ])
    x = sample_action(dist, mixed_space, np.random.default_rng(0)).x
    assert x[1] == mixed_space.knobs[1].upper
    assert validate(mixed_space, x) == []


def test_greedy_breaks_ties_towards_lower_index(mixed_space):
    dist = ActionDistribution([
        KnobDistribution("integer", logits=np.array([0.0, 3.0, 3.0, 1.0, 0.0, 0.0, 0.0, 0.0])),
        KnobDistribution("continuous", mean=0.0, log_std=0.0),
        KnobDistribution("integer", logits=np.array([2.0, 2.0, 2.0, 2.0])),
    ])
    x = greedy_action(dist, mixed_space)
    assert x.values == (1.0, 0.5, 1.0)


def test_saturated_head_always_picks_its_value(int_space, rng):
    params = init_params(int_space, 3, rng)
    bias = np.full(16, -50.0)
    bias[9] = 50.0
    arrays = dict(params.arrays)
    arrays["head.0.W"] = np.zeros_like(arrays["head.0.W"])
    arrays["head.0.b"] = bias
    params = params.replace_arrays(arrays)
    dist, _ = policy_step(params, AgentState.zeros(3), _obs(int_space, rng))
    assert all(sample_action(dist, int_space, rng).x[0] == 9.0 for _ in range(50))


def test_entropy_of_uniform_categorical():
    dist = ActionDistribution([KnobDistribution("integer", logits=np.zeros(8))])
    assert dist.entropy() == pytest.approx(math.log(8))


def test_log_std_is_clamped(mixed_space, rng):
    params = init_params(mixed_space, 3, rng)
    arrays = dict(params.arrays)
    arrays["head.1.b"] = np.array([0.0, 30.0])
    dist, _ = policy_step(params.replace_arrays(arrays), AgentState.zeros(3), _obs(mixed_space, rng))
    assert dist.knobs[1].log_std == LOG_STD_MAX


def test_memoryless_policy_ignores_state(mixed_space, rng):
    params = init_params(mixed_space, 4, rng, recurrent=False)
    obs = _obs(mixed_space, rng)
    busy = AgentState(*(rng.standard_normal(4) for _ in range(4)))
    a, _ = policy_step(params, AgentState.zeros(4), obs)
    b, _ = policy_step(params, busy, obs)
    assert np.array_equal(a.knobs[0].logits, b.knobs[0].logits)


def test_recurrent_policy_carries_state(mixed_space, rng):
    params = init_params(mixed_space, 4, rng)
    obs = _obs(mixed_space, rng)
    _, state = policy_step(params, AgentState.zeros(4), obs)
    first, _ = policy_step(params, AgentState.zeros(4), obs)
    second, _ = policy_step(params, state, obs)
    assert not np.array_equal(first.knobs[0].logits, second.knobs[0].logits)


def test_non_finite_weights_raise(mixed_space, rng):
    params = init_params(mixed_space, 3, rng)
    arrays = dict(params.arrays)
    arrays["lstm2.b"] = np.full_like(arrays["lstm2.b"], np.nan)
    with pytest.raises(NumericalError):
        policy_step(params.replace_arrays(arrays), AgentState.zeros(3), _obs(mixed_space, rng))


def test_checkpoint_round_trip_and_space_guard(mixed_space, int_space, rng, tmp_path):
    params = init_params(mixed_space, 4, rng)
    params.standardizer.update([1.0, 2.0, 4.0])
    path = str(tmp_path / "agent.json")
    params.save(path)
    loaded = PolicyParams.load(path, mixed_space)
    assert np.array_equal(loaded.flat(), params.flat())
    assert loaded.standardizer == params.standardizer
    with pytest.raises(SchemaMismatchError):
        PolicyParams.load(path, int_space)
    with pytest.raises(InvalidInputError):
        check_policy_matches_space(params, int_space)


def test_standardizer_matches_batch_statistics(mixed_space, rng):
    params = init_params(mixed_space, 2, rng)
    values = rng.normal(3.0, 2.0, size=40)
    params.standardizer.update(values[:15])
    params.standardizer.update(values[15:])
    assert params.standardizer.mean == pytest.approx(values.mean())
    assert params.standardizer.std == pytest.approx(values.std())


def test_empty_trajectory_has_zero_gradient(mixed_space, rng):
    params = init_params(mixed_space, 3, rng)
    grads = trajectory_grad(params, SimpleNamespace(steps=[]), [])
    assert all(not np.any(g) for g in grads.values())


def test_zero_advantage_without_entropy_has_zero_gradient(rng):
    params, trajectory, advantages, _ = random_case(rng)
    grads = trajectory_grad(params, trajectory, np.zeros_like(advantages), 0.0)
    assert all(not np.any(g) for g in grads.values())


def test_gradient_matches_central_differences():
    rng = np.random.default_rng(2024)
    errors = [check_case(*random_case(rng)) for _ in range(20)]
    assert max(errors) < 1e-4


def test_gradient_length_mismatch(rng):
    params, trajectory, advantages, _ = random_case(rng)
    with pytest.raises(InvalidInputError):
        trajectory_grad(params, trajectory, list(advantages) + [1.0])
