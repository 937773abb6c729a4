#!/usr/bin/env python3
import math
import logging
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from search_space import normalize, NumericalError, InvalidInputError
from search_space.artifacts import reject_unknown_keys


@dataclass
class MlpLayer:
    weight: np.ndarray  # [out x in]
    bias: np.ndarray    # [out]

    @property
    def shape(self):
        return tuple(self.weight.shape)


@dataclass
class MlpModel:
    """Feed-forward regressor: tanh hidden layers, identity output"""
    layers: List[MlpLayer]
    device_id: str = ""
    final_rmse: Optional[float] = None
    loss_history: List[float] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if len(self.layers) < 2:
            raise InvalidInputError("an MLP needs at least one hidden layer")
        for previous, layer in zip(self.layers, self.layers[1:]):
            if layer.weight.shape[1] != previous.weight.shape[0]:
                raise InvalidInputError(
                    f"layer shapes do not chain: {previous.shape} -> {layer.shape}")
        for layer in self.layers:
            if layer.bias.shape != (layer.weight.shape[0],):
                raise InvalidInputError(f"bias shape {layer.bias.shape} does not match weight {layer.shape}")
            if not (np.all(np.isfinite(layer.weight)) and np.all(np.isfinite(layer.bias))):
                raise NumericalError("MLP parameters must be finite")
        if self.layers[-1].weight.shape[0] != 1:
            raise InvalidInputError("MLP output dimension must be 1")

    @property
    def input_dim(self):
        return self.layers[0].weight.shape[1]

    def forward_batch(self, inputs):
        """Evaluate an [n x D] batch of normalized inputs"""
        activation = np.asarray(inputs, dtype=float)
        for layer in self.layers[:-1]:
            activation = np.tanh(activation @ layer.weight.T + layer.bias)
        last = self.layers[-1]
        return (activation @ last.weight.T + last.bias)[:, 0]

    def to_dict(self):
        return {
            "device_id": self.device_id,
            "activation": "tanh",
            "final_rmse": self.final_rmse,
            "layers": [
                {"shape": list(layer.shape), "weight": layer.weight.reshape(-1).tolist(), "bias": layer.bias.tolist()}
                for layer in self.layers
            ],
        }

    @classmethod
    def from_dict(cls, data):
        layers = []
        for entry in data["layers"]:
            out_dim, in_dim = entry["shape"]
            weight = np.array(entry["weight"], dtype=float)
            if weight.size != out_dim * in_dim:
                raise InvalidInputError(f"weight array of size {weight.size} does not match shape {entry['shape']}")
            layers.append(MlpLayer(weight.reshape(out_dim, in_dim), np.array(entry["bias"], dtype=float)))
        return cls(layers, device_id=data.get("device_id", ""), final_rmse=data.get("final_rmse"))


def mlp_forward(model: MlpModel, y) -> float:
    """Evaluate one normalized input vector"""
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.shape[0] != model.input_dim:
        raise InvalidInputError(f"dimension mismatch: model expects {model.input_dim} inputs, got {y.shape[0]}")
    return float(model.forward_batch(y[None, :])[0])


@dataclass
class SurrogateTrainConfig:
    hidden_sizes: Sequence[int] = (32, 32)
    learning_rate: float = 0.01
    epochs: int = 2000
    seed: int = 0
    optimizer: str = "adam"
    monotone: bool = True

    def __post_init__(self):
        self.hidden_sizes = tuple(int(h) for h in self.hidden_sizes)
        if not self.hidden_sizes or min(self.hidden_sizes) < 1:
            raise InvalidInputError("hidden_sizes must list at least one positive layer width")
        if self.learning_rate < 0 or self.epochs < 0:
            raise InvalidInputError("learning_rate and epochs must be non-negative")
        if self.optimizer not in ("gd", "adam"):
            raise InvalidInputError(f"unknown optimizer {self.optimizer!r}")

    @classmethod
    def from_dict(cls, data):
        reject_unknown_keys(data, cls.__dataclass_fields__, "surrogate config")
        return cls(**{k: v for k, v in data.items() if k != "_note"})

    def to_dict(self):
        return {"hidden_sizes": list(self.hidden_sizes), "learning_rate": self.learning_rate,
                "epochs": self.epochs, "seed": self.seed, "optimizer": self.optimizer, "monotone": self.monotone}


def _init_layers(sizes, target_mean, rng):
    layers = []
    for fan_in, fan_out in zip(sizes, sizes[1:]):
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        layers.append(MlpLayer(rng.uniform(-limit, limit, size=(fan_out, fan_in)), np.zeros(fan_out)))
    layers[-1].bias[:] = target_mean
    return layers


def _loss_and_grads(layers, inputs, targets):
    activations = [inputs]
    for layer in layers[:-1]:
        activations.append(np.tanh(activations[-1] @ layer.weight.T + layer.bias))
    last = layers[-1]
    residual = (activations[-1] @ last.weight.T + last.bias)[:, 0] - targets
    loss = float(np.mean(residual ** 2))

    grads = [None] * len(layers)
    delta = (2.0 / len(targets)) * residual[:, None]
    for index in range(len(layers) - 1, -1, -1):
        grads[index] = (delta.T @ activations[index], delta.sum(axis=0))
        if index > 0:
            delta = (delta @ layers[index].weight) * (1.0 - activations[index] ** 2)
    return loss, grads


class _AdamMoments:
    beta1, beta2, eps = 0.9, 0.999, 1e-8

    def __init__(self, layers):
        self.m = [[np.zeros_like(l.weight), np.zeros_like(l.bias)] for l in layers]
        self.v = [[np.zeros_like(l.weight), np.zeros_like(l.bias)] for l in layers]
        self.t = 0

    def direction(self, grads):
        self.t += 1
        directions = []
        for m_pair, v_pair, pair in zip(self.m, self.v, grads):
            steps = []
            for slot, g in enumerate(pair):
                m_pair[slot] = self.beta1 * m_pair[slot] + (1 - self.beta1) * g
                v_pair[slot] = self.beta2 * v_pair[slot] + (1 - self.beta2) * g * g
                m_hat = m_pair[slot] / (1 - self.beta1 ** self.t)
                v_hat = v_pair[slot] / (1 - self.beta2 ** self.t)
                steps.append(m_hat / (np.sqrt(v_hat) + self.eps))
            directions.append(tuple(steps))
        return directions


def train_device_model(data, space, config: SurrogateTrainConfig) -> MlpModel:
    """Full-batch MSE training on normalized inputs; deterministic given config.seed.

    With config.monotone a step that would raise the training loss is rejected
    and the step size halved; accepted steps grow it back towards the
    configured learning rate. loss_history then never increases.
    """
    if len(data) == 0:
        raise InvalidInputError(f"dataset {data.device_id} is empty")
    inputs = np.stack([normalize(space, row) for row in data.vectors()])
    targets = np.asarray(data.performance, dtype=float)
    rng = np.random.default_rng(config.seed)
    layers = _init_layers([space.dimension, *config.hidden_sizes, 1], float(targets.mean()), rng)

    moments = _AdamMoments(layers) if config.optimizer == "adam" else None
    step_size = config.learning_rate
    rejected = 0
    history = []
    loss, grads = _loss_and_grads(layers, inputs, targets)
    for epoch in range(1, config.epochs + 1):
        if not math.isfinite(loss):
            logging.error(f"Non-finite training loss for device {data.device_id} at epoch {epoch}")
            raise NumericalError(f"non-finite loss while training device {data.device_id} (epoch {epoch})")
        history.append(loss)
        directions = grads if moments is None else moments.direction(grads)
        candidate = [MlpLayer(layer.weight - step_size * d_w, layer.bias - step_size * d_b)
                     for layer, (d_w, d_b) in zip(layers, directions)]
        candidate_loss, candidate_grads = _loss_and_grads(candidate, inputs, targets)
        if config.monotone and not candidate_loss <= loss:
            step_size *= 0.5
            rejected += 1
            continue
        layers, loss, grads = candidate, candidate_loss, candidate_grads
        if config.monotone:
            step_size = min(config.learning_rate, step_size * 1.1)
        if epoch % 500 == 0:
            logging.debug(f"Device {data.device_id}: epoch {epoch} mse {loss:.6g}")

    if not math.isfinite(loss):
        raise NumericalError(f"non-finite loss after training device {data.device_id}")
    model = MlpModel(layers, device_id=data.device_id, final_rmse=math.sqrt(loss), loss_history=history)
    logging.info(f"Trained surrogate for device {data.device_id}: rmse {model.final_rmse:.5f} "
                 f"after {config.epochs} epochs ({rejected} rejected steps)")
    return model
