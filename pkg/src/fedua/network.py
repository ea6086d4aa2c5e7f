"""Network assembly, training primitives, and checkpoint serialization.

The model is a fixed chain of layers ending in a sigmoid, so outputs live
in ``(0, 1)^n_e`` and can be compared against binary reference embeddings.
Everything is float64 and deterministic: the same (config, seed) always
produces bit-identical parameters, and the same sequence of batches always
produces bit-identical updates.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterator, Optional

import numpy as np

from . import layers as L
from .errors import ConfigurationError, ParseError, ShapeError, StateError
from .layers import Layer, LayerSpec
from .rng import make_rng

PARAMS_VERSION = 1
CHECKPOINT_FORMAT = "fedua-checkpoint"


@dataclass(frozen=True)
class ModelConfig:
    """Layer chain plus input/output contract."""

    layers: tuple[LayerSpec, ...]
    input_length: int
    embedding_length: int

    def __post_init__(self):
        if self.input_length < 1:
            raise ConfigurationError("input_length must be >= 1")
        if self.embedding_length < 1:
            raise ConfigurationError("embedding_length must be >= 1")

    def build_layers(self) -> list[Layer]:
        """Resolve the chain, or raise naming the offending layer index."""
        if not self.layers:
            raise ConfigurationError("model has no layers")
        built: list[Layer] = []
        shape: tuple = (1, self.input_length)
        for index, spec in enumerate(self.layers):
            try:
                layer = Layer(spec, shape)
            except ConfigurationError as exc:
                raise ConfigurationError(f"layer {index}: {exc}") from None
            built.append(layer)
            shape = layer.out_shape
        if self.layers[-1].kind != L.SIGMOID:
            raise ConfigurationError("final layer must be sigmoid")
        if shape != (self.embedding_length,):
            raise ConfigurationError(
                f"layer chain produces output shape {shape}, expected "
                f"({self.embedding_length},)")
        return built

    def to_dict(self) -> dict:
        return {
            "input_length": self.input_length,
            "embedding_length": self.embedding_length,
            "layers": [spec.to_dict() for spec in self.layers],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ModelConfig":
        try:
            specs = tuple(LayerSpec.from_dict(entry) for entry in data["layers"])
            return cls(layers=specs,
                       input_length=int(data["input_length"]),
                       embedding_length=int(data["embedding_length"]))
        except (KeyError, TypeError) as exc:
            raise ConfigurationError(f"bad model config: {exc}") from None


def speech_architecture(embedding_length: int) -> ModelConfig:
    """Full-scale architecture for 2-second audio vectors of length 2^14."""
    return ModelConfig(
        layers=(
            L.conv1d(2 ** 6, 21), L.relu(), L.avg_pool1d(2 ** 3), L.group_norm(2),
            L.conv1d(2 ** 8, 11), L.relu(), L.avg_pool1d(2 ** 5), L.group_norm(2),
            L.conv1d(2 ** 10, 5), L.relu(), L.avg_pool1d(2 ** 6), L.group_norm(2),
            L.flatten(),
            L.fully_connected(2 ** 10, embedding_length),
            L.sigmoid(),
        ),
        input_length=2 ** 14,
        embedding_length=embedding_length,
    )


def compact_architecture(input_length: int, embedding_length: int) -> ModelConfig:
    """Two-block convolutional model for short synthetic signals.

    ``input_length`` must be divisible by 16 (two pooling stages of 4).
    """
    if input_length % 16 != 0:
        raise ConfigurationError("compact architecture needs input_length divisible by 16")
    flat = 16 * (input_length // 16)
    return ModelConfig(
        layers=(
            L.conv1d(8, 9), L.relu(), L.avg_pool1d(4), L.group_norm(2),
            L.conv1d(16, 5), L.relu(), L.avg_pool1d(4), L.group_norm(2),
            L.flatten(),
            L.fully_connected(flat, embedding_length),
            L.sigmoid(),
        ),
        input_length=input_length,
        embedding_length=embedding_length,
    )


@dataclass
class Parameter:
    value: np.ndarray
    grad: Optional[np.ndarray] = None


class ModelParams:
    """Ordered set of named parameter tensors.

    Keys are ``"{layer_index}.{name}"`` in layer order, so two instances
    built from the same config are element-wise combinable.
    """

    def __init__(self, params: dict[str, Parameter], version: int = PARAMS_VERSION):
        self._params = params
        self.version = version

    def __getitem__(self, key: str) -> Parameter:
        return self._params[key]

    def __contains__(self, key: str) -> bool:
        return key in self._params

    def __len__(self) -> int:
        return len(self._params)

    def keys(self):
        return self._params.keys()

    def items(self) -> Iterator[tuple[str, Parameter]]:
        return iter(self._params.items())

    def values(self) -> Iterator[Parameter]:
        return iter(self._params.values())

    def copy(self) -> "ModelParams":
        return ModelParams(
            {key: Parameter(p.value.copy()) for key, p in self._params.items()},
            version=self.version)

    def same_layout(self, other: "ModelParams") -> bool:
        if list(self.keys()) != list(other.keys()):
            return False
        return all(self[k].value.shape == other[k].value.shape for k in self.keys())

    def zero_grads(self) -> None:
        for p in self._params.values():
            p.grad = None

    def assert_finite(self) -> None:
        for key, p in self._params.items():
            if not np.all(np.isfinite(p.value)):
                raise StateError(f"parameter {key} contains non-finite values")


def build_model(config: ModelConfig, seed: int) -> ModelParams:
    """Initialize parameters uniformly in (-1/sqrt(fan_in), 1/sqrt(fan_in))."""
    built = config.build_layers()
    rng = make_rng(seed, "init")
    params: dict[str, Parameter] = {}
    for index, layer in enumerate(built):
        for name, value in layer.init_params(rng).items():
            params[f"{index}.{name}"] = Parameter(value)
    return ModelParams(params)


class Network:
    """A model config bound to a parameter set, with forward/backward state."""

    def __init__(self, config: ModelConfig, params: ModelParams):
        self.config = config
        self.params = params
        self.layers = config.build_layers()
        self._caches: Optional[list] = None
        self._batch_size: Optional[int] = None

    def _layer_params(self, index: int) -> dict[str, np.ndarray]:
        out = {}
        prefix = f"{index}."
        for key, p in self.params.items():
            if key.startswith(prefix):
                out[key[len(prefix):]] = p.value
        return out

    def forward(self, batch: np.ndarray) -> np.ndarray:
        """Run the chain on a [B, 1, input_length] batch; caches activations."""
        x = np.asarray(batch, dtype=np.float64)
        if x.ndim != 3 or x.shape[1] != 1 or x.shape[2] != self.config.input_length:
            raise ShapeError(
                f"expected batch of shape [B, 1, {self.config.input_length}], "
                f"got {x.shape}")
        if x.shape[0] < 1:
            raise ShapeError("batch must contain at least one sample")
        caches = []
        for index, layer in enumerate(self.layers):
            x, cache = layer.forward(x, self._layer_params(index))
            caches.append(cache)
        self._caches = caches
        self._batch_size = batch.shape[0]
        return x

    def backward(self, loss_grad: np.ndarray) -> None:
        """Populate parameter grads from d(loss)/d(output)."""
        if self._caches is None:
            raise StateError("backward called before forward")
        dy = np.asarray(loss_grad, dtype=np.float64)
        expected = (self._batch_size, self.config.embedding_length)
        if dy.shape != expected:
            raise ShapeError(f"expected loss gradient of shape {expected}, got {dy.shape}")
        for index in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[index]
            dy, grads = layer.backward(dy, self._layer_params(index), self._caches[index])
            for name, grad in grads.items():
                self.params[f"{index}.{name}"].grad = grad
        self._caches = None

    def sgd_step(self, lr: float) -> None:
        """p <- p - lr * grad for every parameter, then clear grads."""
        if lr < 0:
            raise ValueError("learning rate must be non-negative")
        for key, p in self.params.items():
            if p.grad is None:
                raise StateError(f"parameter {key} has no gradient; run backward first")
        for p in self.params.values():
            p.value -= lr * p.grad
            p.grad = None


def forward(params: ModelParams, config: ModelConfig, batch: np.ndarray) -> np.ndarray:
    """One-shot forward pass (no gradient state kept)."""
    return Network(config, params).forward(batch)


def finite_diff_grad(net: Network, loss_fn: Callable[[], float], h: float,
                     ) -> dict[str, np.ndarray]:
    """Central-difference gradient of ``loss_fn`` w.r.t. every parameter scalar.

    ``loss_fn`` must evaluate the loss using the network's current parameter
    values.  This is the testing oracle for ``backward``; it never touches
    the analytic path.
    """
    if h <= 0:
        raise ValueError("finite-difference step h must be > 0")
    grads: dict[str, np.ndarray] = {}
    for key, p in net.params.items():
        grad = np.zeros_like(p.value)
        flat = p.value.reshape(-1)
        gflat = grad.reshape(-1)
        for i in range(flat.size):
            original = flat[i]
            flat[i] = original + h
            up = loss_fn()
            flat[i] = original - h
            down = loss_fn()
            flat[i] = original
            gflat[i] = (up - down) / (2.0 * h)
        grads[key] = grad
    return grads


def save_checkpoint(path: str | Path, config: ModelConfig, params: ModelParams) -> None:
    """Write a versioned JSON checkpoint; floats round-trip exactly."""
    params.assert_finite()
    doc = {
        "format": CHECKPOINT_FORMAT,
        "version": params.version,
        "config": config.to_dict(),
        "params": {
            key: {"shape": list(p.value.shape), "data": p.value.reshape(-1).tolist()}
            for key, p in params.items()
        },
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: str | Path) -> tuple[ModelConfig, ModelParams]:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ParseError(f"checkpoint is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("format") != CHECKPOINT_FORMAT:
        raise ParseError("not a checkpoint file")
    if doc.get("version") != PARAMS_VERSION:
        raise ParseError(f"unsupported checkpoint version {doc.get('version')!r}")
    config = ModelConfig.from_dict(doc["config"])
    params: dict[str, Parameter] = {}
    for key, entry in doc["params"].items():
        shape = tuple(entry["shape"])
        data = np.asarray(entry["data"], dtype=np.float64)
        if data.size != math.prod(shape):
            raise ParseError(f"parameter {key}: {data.size} values for shape {shape}")
        if not np.all(np.isfinite(data)):
            raise ParseError(f"parameter {key} contains non-finite values")
        params[key] = Parameter(data.reshape(shape))
    model_params = ModelParams(params, version=doc["version"])
    # cross-check the layout against the config
    expected = build_model(config, seed=0)
    if not expected.same_layout(model_params):
        raise ParseError("checkpoint parameters do not match its model config")
    return config, model_params
