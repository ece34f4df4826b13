"""Two-head multi-task regression network on a flat parameter vector.

A fully connected trunk feeds two linear heads: the channel head (real and
imaginary parts of the channel, ``2 N_T`` outputs) and the support head
(beamspace magnitudes, ``N`` outputs). All learnable weights live in one
flat ``float64`` vector so that gradients, averaging and transmission noise
operate on plain arrays.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class Architecture:
    input_dim: int
    hidden: tuple = (256, 256)
    channel_dim: int = 128
    support_dim: int = 320
    dropout_prob: float = 0.5
    activation: str = "relu"

    def __post_init__(self):
        if not 0.0 <= self.dropout_prob < 1.0:
            raise ValueError("dropout_prob must lie in [0, 1)")
        if self.activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")

    @classmethod
    def for_scenario(cls, num_rf_chains, num_tx_antennas, grid_size, **kw):
        return cls(input_dim=3 * num_rf_chains, channel_dim=2 * num_tx_antennas,
                   support_dim=grid_size, **kw)

    def layer_shapes(self) -> list[tuple[str, int, int]]:
        shapes = []
        width = self.input_dim
        for i, h in enumerate(self.hidden):
            shapes.append((f"trunk{i}", width, h))
            width = h
        shapes.append(("channel_head", width, self.channel_dim))
        shapes.append(("support_head", width, self.support_dim))
        return shapes

    @property
    def num_params(self) -> int:
        return sum(fan_in * fan_out + fan_out for _, fan_in, fan_out in self.layer_shapes())

    def to_dict(self) -> dict:
        return {"input_dim": self.input_dim, "hidden": list(self.hidden),
                "channel_dim": self.channel_dim, "support_dim": self.support_dim,
                "dropout_prob": self.dropout_prob, "activation": self.activation}

    @classmethod
    def from_dict(cls, d) -> "Architecture":
        return cls(**{**d, "hidden": tuple(d["hidden"])})


@dataclass
class ModelParameters:
    architecture: Architecture
    flat_params: np.ndarray = field(repr=False)

    def __post_init__(self):
        self.flat_params = np.asarray(self.flat_params, dtype=float)
        if self.flat_params.shape != (self.architecture.num_params,):
            raise ValueError(f"expected {self.architecture.num_params} parameters, "
                             f"got {self.flat_params.shape}")

    @property
    def num_params(self) -> int:
        return self.flat_params.size

    def with_params(self, flat) -> "ModelParameters":
        return ModelParameters(self.architecture, flat)

    def layers(self):
        return unpack(self.architecture, self.flat_params)


def _relu(z):
    return np.maximum(z, 0.0)


def _relu_grad(z, a):
    return (z > 0).astype(z.dtype)


def _tanh_grad(z, a):
    return 1.0 - a ** 2


_ACTIVATIONS = {"relu": (_relu, _relu_grad), "tanh": (np.tanh, _tanh_grad)}


def unpack(arch: Architecture, flat: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Views ``(W, b)`` per layer; ``W`` has shape ``(fan_in, fan_out)``."""
    out = []
    pos = 0
    for _, fan_in, fan_out in arch.layer_shapes():
        W = flat[pos:pos + fan_in * fan_out].reshape(fan_in, fan_out)
        pos += fan_in * fan_out
        b = flat[pos:pos + fan_out]
        pos += fan_out
        out.append((W, b))
    return out


def init_params(arch: Architecture, rng: np.random.Generator) -> ModelParameters:
    """Uniform weights with bound ``sqrt(6/fan_in)`` (trunk) or ``sqrt(3/fan_in)`` (heads), zero biases."""
    flat = np.zeros(arch.num_params)
    n_trunk = len(arch.hidden)
    for i, (W, _) in enumerate(unpack(arch, flat)):
        gain = 6.0 if i < n_trunk else 3.0
        bound = np.sqrt(gain / W.shape[0])
        W[...] = rng.uniform(-bound, bound, size=W.shape)
    return ModelParameters(arch, flat)


def flatten_features(features: np.ndarray, input_dim: int) -> np.ndarray:
    X = np.asarray(features, dtype=float)
    X = X.reshape(-1, input_dim) if X.size else X.reshape(0, input_dim)
    if not np.all(np.isfinite(X)):
        raise ValueError("features must be finite")
    return X


def _forward(params: ModelParameters, X, rng=None):
    arch = params.architecture
    act, _ = _ACTIVATIONS[arch.activation]
    layers = params.layers()
    n_trunk = len(arch.hidden)
    a = X
    cache = []
    for W, b in layers[:n_trunk]:
        z = a @ W + b
        h = act(z)
        mask = None
        if rng is not None and arch.dropout_prob > 0:
            keep = 1.0 - arch.dropout_prob
            mask = (rng.random(h.shape) < keep) / keep
        cache.append((a, z, h, mask))
        a = h if mask is None else h * mask
    (W1, b1), (W2, b2) = layers[n_trunk:]
    return a @ W1 + b1, a @ W2 + b2, (cache, a)


def forward(params: ModelParameters, features, rng: np.random.Generator | None = None):
    """Predict ``(channel_head, support_head)`` for a batch of features.

    ``features`` has shape ``(..., N_RF, 3)`` or ``(B, input_dim)``. Passing
    ``rng`` switches dropout on (training mode); without it the network is
    deterministic.
    """
    X = flatten_features(features, params.architecture.input_dim)
    out1, out2, _ = _forward(params, X, rng)
    return out1, out2


def task_losses(out1, out2, Y1, Y2) -> tuple[float, float]:
    D = out1.shape[0]
    return (float(np.sum((out1 - Y1) ** 2)) / D, float(np.sum((out2 - Y2) ** 2)) / D)


def loss(params: ModelParameters, features, label_channel, label_support,
         omega1: float, omega2: float) -> float:
    """Weighted two-task squared error, evaluated without dropout."""
    if omega1 < 0 or omega2 < 0:
        raise ValueError("task weights must be non-negative")
    out1, out2 = forward(params, features)
    l1, l2 = task_losses(out1, out2, label_channel, label_support)
    return omega1 * l1 + omega2 * l2


def loss_and_grad(params: ModelParameters, X, Y1, Y2, omega1, omega2, rng=None):
    """Return ``(total, task1, task2, gradient)`` on the batch ``X``.

    ``X`` must already be flattened to ``(B, input_dim)``.
    """
    arch = params.architecture
    _, act_grad = _ACTIVATIONS[arch.activation]
    D = X.shape[0]
    out1, out2, (cache, top) = _forward(params, X, rng)
    r1 = out1 - Y1
    r2 = out2 - Y2
    l1 = float(np.sum(r1 ** 2)) / D
    l2 = float(np.sum(r2 ** 2)) / D
    d1 = (2.0 * omega1 / D) * r1
    d2 = (2.0 * omega2 / D) * r2

    grad = np.zeros_like(params.flat_params)
    gl = unpack(arch, grad)
    layers = params.layers()
    n_trunk = len(arch.hidden)
    (W1, _), (W2, _) = layers[n_trunk:]
    gl[n_trunk][0][...] = top.T @ d1
    gl[n_trunk][1][...] = d1.sum(axis=0)
    gl[n_trunk + 1][0][...] = top.T @ d2
    gl[n_trunk + 1][1][...] = d2.sum(axis=0)
    da = d1 @ W1.T + d2 @ W2.T
    for i in range(n_trunk - 1, -1, -1):
        a_in, z, h, mask = cache[i]
        if mask is not None:
            da = da * mask
        dz = da * act_grad(z, h)
        gl[i][0][...] = a_in.T @ dz
        gl[i][1][...] = dz.sum(axis=0)
        if i:
            da = dz @ layers[i][0].T
    return omega1 * l1 + omega2 * l2, l1, l2, grad
