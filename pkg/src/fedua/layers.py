"""Layer definitions for the authentication network.

Each layer kind knows how to validate and propagate shapes, initialize its
parameters, and run forward/backward on float64 numpy arrays.  The backward
pass returns the gradient with respect to the layer input plus one gradient
array per parameter; no implicit scaling is applied anywhere, so parameter
gradients are exactly the derivative of whatever scalar the loss produced.

Activations are carried as ``[B, C, L]`` (channel maps) or ``[B, n]``
(feature vectors).  Convolutions use stride 1 and symmetric zero padding
with odd kernels, so they preserve length; pooling divides length by its
rate.  A fully-connected layer applied to a channel map flattens it
implicitly when the element count matches its fan-in.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigurationError, ShapeError

CONV1D = "conv1d"
RELU = "relu"
AVG_POOL1D = "avg_pool1d"
GROUP_NORM = "group_norm"
FLATTEN = "flatten"
FULLY_CONNECTED = "fully_connected"
SIGMOID = "sigmoid"

LAYER_KINDS = (CONV1D, RELU, AVG_POOL1D, GROUP_NORM, FLATTEN, FULLY_CONNECTED, SIGMOID)


@dataclass(frozen=True)
class LayerSpec:
    """Declarative description of one layer in the chain."""

    kind: str
    channels: Optional[int] = None   # conv1d: output channels
    kernel: Optional[int] = None     # conv1d: kernel width (odd)
    rate: Optional[int] = None       # avg_pool1d: downsampling rate
    groups: Optional[int] = None     # group_norm: number of groups
    n_in: Optional[int] = None       # fully_connected: fan-in
    n_out: Optional[int] = None      # fully_connected: fan-out
    eps: float = 1e-5                # group_norm: variance floor

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        if self.kind == CONV1D:
            if not self.channels or self.channels < 1:
                raise ConfigurationError("conv1d requires channels >= 1")
            if not self.kernel or self.kernel < 1 or self.kernel % 2 == 0:
                raise ConfigurationError("conv1d requires an odd kernel >= 1")
        elif self.kind == AVG_POOL1D:
            if not self.rate or self.rate < 1:
                raise ConfigurationError("avg_pool1d requires rate >= 1")
        elif self.kind == GROUP_NORM:
            if not self.groups or self.groups < 1:
                raise ConfigurationError("group_norm requires groups >= 1")
            if self.eps <= 0:
                raise ConfigurationError("group_norm requires eps > 0")
        elif self.kind == FULLY_CONNECTED:
            if not self.n_in or self.n_in < 1 or not self.n_out or self.n_out < 1:
                raise ConfigurationError("fully_connected requires n_in, n_out >= 1")

    def to_dict(self) -> dict:
        out = {"kind": self.kind}
        for field in ("channels", "kernel", "rate", "groups", "n_in", "n_out"):
            value = getattr(self, field)
            if value is not None:
                out[field] = value
        if self.kind == GROUP_NORM and self.eps != 1e-5:
            out["eps"] = self.eps
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "LayerSpec":
        known = {"kind", "channels", "kernel", "rate", "groups", "n_in", "n_out", "eps"}
        unknown = set(data) - known
        if unknown:
            raise ConfigurationError(f"unknown layer fields {sorted(unknown)}")
        return cls(**data)


def conv1d(channels: int, kernel: int) -> LayerSpec:
    return LayerSpec(kind=CONV1D, channels=channels, kernel=kernel)


def relu() -> LayerSpec:
    return LayerSpec(kind=RELU)


def avg_pool1d(rate: int) -> LayerSpec:
    return LayerSpec(kind=AVG_POOL1D, rate=rate)


def group_norm(groups: int, eps: float = 1e-5) -> LayerSpec:
    return LayerSpec(kind=GROUP_NORM, groups=groups, eps=eps)


def flatten() -> LayerSpec:
    return LayerSpec(kind=FLATTEN)


def fully_connected(n_in: int, n_out: int) -> LayerSpec:
    return LayerSpec(kind=FULLY_CONNECTED, n_in=n_in, n_out=n_out)


def sigmoid() -> LayerSpec:
    return LayerSpec(kind=SIGMOID)


def _uniform_init(rng: np.random.Generator, shape: tuple, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    # keep outputs strictly inside (0, 1) even where rounding would saturate
    return np.clip(out, np.nextafter(0.0, 1.0), np.nextafter(1.0, 0.0))


class Layer:
    """One instantiated layer: spec plus resolved input/output shapes.

    ``in_shape``/``out_shape`` omit the batch axis: ``(C, L)`` for channel
    maps, ``(n,)`` for feature vectors.
    """

    def __init__(self, spec: LayerSpec, in_shape: tuple):
        self.spec = spec
        self.in_shape = in_shape
        self.out_shape = self._resolve(in_shape)

    def _resolve(self, in_shape: tuple) -> tuple:
        spec = self.spec
        kind = spec.kind
        if kind == CONV1D:
            if len(in_shape) != 2:
                raise ConfigurationError("conv1d requires a [B, C, L] input")
            _, length = in_shape
            if length < spec.kernel:
                raise ConfigurationError(
                    f"conv1d kernel {spec.kernel} exceeds input length {length}")
            return (spec.channels, length)
        if kind == AVG_POOL1D:
            if len(in_shape) != 2:
                raise ConfigurationError("avg_pool1d requires a [B, C, L] input")
            channels, length = in_shape
            if length % spec.rate != 0:
                raise ConfigurationError(
                    f"avg_pool1d rate {spec.rate} does not divide length {length}")
            return (channels, length // spec.rate)
        if kind == GROUP_NORM:
            if len(in_shape) != 2:
                raise ConfigurationError("group_norm requires a [B, C, L] input")
            channels, _ = in_shape
            if channels % spec.groups != 0:
                raise ConfigurationError(
                    f"group_norm groups {spec.groups} does not divide channels {channels}")
            return in_shape
        if kind == FLATTEN:
            if len(in_shape) != 2:
                raise ConfigurationError("flatten requires a [B, C, L] input")
            channels, length = in_shape
            return (channels * length,)
        if kind == FULLY_CONNECTED:
            n_elements = int(np.prod(in_shape))
            if n_elements != spec.n_in:
                raise ConfigurationError(
                    f"fully_connected fan-in {spec.n_in} does not match "
                    f"incoming size {n_elements}")
            return (spec.n_out,)
        # relu / sigmoid keep their input shape
        return in_shape

    def init_params(self, rng: np.random.Generator) -> dict[str, np.ndarray]:
        spec = self.spec
        if spec.kind == CONV1D:
            in_channels = self.in_shape[0]
            fan_in = in_channels * spec.kernel
            return {
                "kernel": _uniform_init(rng, (spec.channels, in_channels, spec.kernel), fan_in),
                "bias": _uniform_init(rng, (spec.channels,), fan_in),
            }
        if spec.kind == GROUP_NORM:
            channels = self.in_shape[0]
            return {
                "scale": np.ones(channels),
                "shift": np.zeros(channels),
            }
        if spec.kind == FULLY_CONNECTED:
            return {
                "weight": _uniform_init(rng, (spec.n_in, spec.n_out), spec.n_in),
                "bias": _uniform_init(rng, (spec.n_out,), spec.n_in),
            }
        return {}

    def forward(self, x: np.ndarray, params: dict[str, np.ndarray]):
        """Returns (output, cache); cache feeds the matching backward call."""
        if x.shape[1:] != self.in_shape:
            raise ShapeError(
                f"{self.spec.kind} expected input {self.in_shape}, got {x.shape[1:]}")
        kind = self.spec.kind
        if kind == CONV1D:
            return self._conv_forward(x, params)
        if kind == RELU:
            return np.maximum(x, 0.0), (x > 0)
        if kind == AVG_POOL1D:
            rate = self.spec.rate
            batch, channels, length = x.shape
            y = x.reshape(batch, channels, length // rate, rate).mean(axis=3)
            return y, None
        if kind == GROUP_NORM:
            return self._group_norm_forward(x, params)
        if kind == FLATTEN:
            return x.reshape(x.shape[0], -1), None
        if kind == FULLY_CONNECTED:
            x2 = x.reshape(x.shape[0], -1)
            y = x2 @ params["weight"] + params["bias"]
            return y, x2
        if kind == SIGMOID:
            y = _sigmoid(x)
            return y, y
        raise AssertionError(kind)

    def backward(self, dy: np.ndarray, params: dict[str, np.ndarray], cache):
        """Returns (dx, grads) where grads maps parameter name -> gradient."""
        kind = self.spec.kind
        if kind == CONV1D:
            return self._conv_backward(dy, params, cache)
        if kind == RELU:
            return dy * cache, {}
        if kind == AVG_POOL1D:
            rate = self.spec.rate
            batch, channels, out_len = dy.shape
            dx = np.broadcast_to((dy / rate)[:, :, :, None],
                                 (batch, channels, out_len, rate))
            return dx.reshape(batch, channels, out_len * rate), {}
        if kind == GROUP_NORM:
            return self._group_norm_backward(dy, params, cache)
        if kind == FLATTEN:
            return dy.reshape((dy.shape[0],) + self.in_shape), {}
        if kind == FULLY_CONNECTED:
            x2 = cache
            grads = {"weight": x2.T @ dy, "bias": dy.sum(axis=0)}
            dx = dy @ params["weight"].T
            return dx.reshape((dy.shape[0],) + self.in_shape), grads
        if kind == SIGMOID:
            y = cache
            return dy * y * (1.0 - y), {}
        raise AssertionError(kind)

    # conv1d

    def _conv_forward(self, x, params):
        kernel = params["kernel"]          # [Cout, Cin, K]
        width = self.spec.kernel
        pad = (width - 1) // 2
        batch, in_channels, length = x.shape
        xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
        windows = sliding_window_view(xp, width, axis=2)      # [B, Cin, L, K]
        col = windows.transpose(0, 2, 1, 3).reshape(batch, length, in_channels * width)
        wmat = kernel.reshape(self.spec.channels, in_channels * width).T
        y = col @ wmat + params["bias"]                        # [B, L, Cout]
        return y.transpose(0, 2, 1), col

    def _conv_backward(self, dy, params, col):
        width = self.spec.kernel
        pad = (width - 1) // 2
        batch, _, length = dy.shape
        in_channels = self.in_shape[0]
        dyt = dy.transpose(0, 2, 1)                            # [B, L, Cout]
        dwmat = np.tensordot(col, dyt, axes=([0, 1], [0, 1]))  # [Cin*K, Cout]
        grads = {
            "kernel": dwmat.T.reshape(self.spec.channels, in_channels, width),
            "bias": dy.sum(axis=(0, 2)),
        }
        wmat = params["kernel"].reshape(self.spec.channels, in_channels * width).T
        dcol = dyt @ wmat.T                                    # [B, L, Cin*K]
        dcol = dcol.reshape(batch, length, in_channels, width).transpose(0, 2, 1, 3)
        dxp = np.zeros((batch, in_channels, length + 2 * pad))
        for k in range(width):
            dxp[:, :, k:k + length] += dcol[:, :, :, k]
        return dxp[:, :, pad:pad + length], grads

    # group_norm

    def _group_norm_forward(self, x, params):
        groups = self.spec.groups
        eps = self.spec.eps
        batch, channels, length = x.shape
        xg = x.reshape(batch, groups, (channels // groups) * length)
        mean = xg.mean(axis=2, keepdims=True)
        var = xg.var(axis=2, keepdims=True)
        inv_std = 1.0 / np.sqrt(var + eps)
        xhat_g = (xg - mean) * inv_std
        xhat = xhat_g.reshape(batch, channels, length)
        y = params["scale"][None, :, None] * xhat + params["shift"][None, :, None]
        return y, (xhat, inv_std)

    def _group_norm_backward(self, dy, params, cache):
        xhat, inv_std = cache
        groups = self.spec.groups
        batch, channels, length = dy.shape
        grads = {
            "scale": (dy * xhat).sum(axis=(0, 2)),
            "shift": dy.sum(axis=(0, 2)),
        }
        dxhat = dy * params["scale"][None, :, None]
        group_size = (channels // groups) * length
        dxhat_g = dxhat.reshape(batch, groups, group_size)
        xhat_g = xhat.reshape(batch, groups, group_size)
        mean_d = dxhat_g.mean(axis=2, keepdims=True)
        mean_dx = (dxhat_g * xhat_g).mean(axis=2, keepdims=True)
        dx_g = inv_std * (dxhat_g - mean_d - xhat_g * mean_dx)
        return dx_g.reshape(batch, channels, length), grads
