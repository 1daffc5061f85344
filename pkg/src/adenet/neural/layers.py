"""Dense and bidirectional LSTM layers with hand-derived gradients.

Layers register their parameters in a shared ParamStore and accumulate
gradients there during backward. Forward passes cache whatever the matching
backward pass needs; a layer instance is therefore single-writer while
training but freely shareable for inference after training.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, InvalidInputError
from . import kernels
from .params import ParamStore

ACTIVATIONS = ("relu", "sigmoid", "linear")
LAYER_KINDS = ("dense+relu", "dense+sigmoid", "dense+linear", "bilstm")


@dataclass(frozen=True)
class LayerSpec:
    """Shape descriptor for one layer; bilstm output_dim is 2x its hidden units."""

    kind: str
    input_dim: int
    output_dim: int

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ConfigurationError(f"unknown layer kind {self.kind!r}")
        if self.input_dim <= 0 or self.output_dim <= 0:
            raise ConfigurationError("layer dims must be positive")
        if self.kind == "bilstm" and self.output_dim % 2:
            raise ConfigurationError("bilstm output_dim must be even (2 x hidden)")


def validate_chain(specs) -> None:
    for a, b in zip(specs, specs[1:]):
        if a.output_dim != b.input_dim:
            raise ConfigurationError(
                f"layer chain mismatch: {a.kind} gives {a.output_dim}, "
                f"{b.kind} expects {b.input_dim}"
            )


def build_layer(spec: LayerSpec, store: ParamStore, name: str, rng):
    if spec.kind == "bilstm":
        return BiLSTM(store, name, spec.input_dim, spec.output_dim // 2, rng)
    activation = spec.kind.split("+", 1)[1]
    return Dense(store, name, spec.input_dim, spec.output_dim, activation, rng)


class Dense:
    """y = act(x W + b) over a (T, Din) sequence."""

    def __init__(self, store: ParamStore, name: str, din: int, dout: int, activation, rng):
        if activation not in ACTIVATIONS:
            raise ConfigurationError(f"unknown activation {activation!r}")
        self.name = name
        self.din = din
        self.dout = dout
        self.activation = activation
        self.store = store
        limit = 1.0 / np.sqrt(din)
        store.add(f"{name}.W", rng.uniform(-limit, limit, size=(din, dout)))
        store.add(f"{name}.b", np.zeros(dout))
        self._x = None
        self._pre = None
        self._y = None

    @property
    def W(self):
        return self.store[f"{self.name}.W"]

    @property
    def b(self):
        return self.store[f"{self.name}.b"]

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.store.dtype)
        if x.ndim != 2 or x.shape[1] != self.din:
            raise InvalidInputError(
                f"{self.name}: expected (T, {self.din}) input, got {x.shape}"
            )
        pre = x @ self.W + self.b
        if self.activation == "relu":
            y = np.maximum(pre, 0.0)
        elif self.activation == "sigmoid":
            y = 1.0 / (1.0 + np.exp(-pre))
        else:
            y = pre
        self._x, self._pre, self._y = x, pre, y
        return y

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise InvalidInputError(f"{self.name}: backward before forward")
        dy = np.asarray(dy, dtype=self.store.dtype)
        if dy.shape != self._pre.shape:
            raise InvalidInputError(
                f"{self.name}: gradient shape {dy.shape} != {self._pre.shape}"
            )
        if self.activation == "relu":
            dpre = dy * (self._pre > 0)
        elif self.activation == "sigmoid":
            dpre = dy * self._y * (1.0 - self._y)
        else:
            dpre = dy
        self.store.grad(f"{self.name}.W")[...] += self._x.T @ dpre
        self.store.grad(f"{self.name}.b")[...] += dpre.sum(axis=0)
        return dpre @ self.W.T


class BiLSTM:
    """Forward and time-reversed LSTM passes, outputs concatenated per frame.

    Both directions start from zero states. Gate layout and the recurrence
    itself live in the kernel backend (compiled when available).
    """

    def __init__(self, store: ParamStore, name: str, din: int, hidden: int, rng):
        self.name = name
        self.din = din
        self.hidden = hidden
        self.store = store
        lim_x = 1.0 / np.sqrt(din)
        lim_h = 1.0 / np.sqrt(hidden)
        for d in ("fw", "bw"):
            store.add(f"{name}.{d}.Wx", rng.uniform(-lim_x, lim_x, size=(din, 4 * hidden)))
            store.add(f"{name}.{d}.Wh", rng.uniform(-lim_h, lim_h, size=(hidden, 4 * hidden)))
            bias = np.zeros(4 * hidden)
            bias[hidden : 2 * hidden] = 1.0  # forget gate starts open
            store.add(f"{name}.{d}.b", bias)
        self._cache = None

    @property
    def dout(self) -> int:
        return 2 * self.hidden

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.store.dtype)
        if x.ndim != 2 or x.shape[1] != self.din:
            raise InvalidInputError(
                f"{self.name}: expected (T, {self.din}) input, got {x.shape}"
            )
        if x.shape[0] < 1:
            raise InvalidInputError(f"{self.name}: sequence must have at least one frame")
        out = np.empty((x.shape[0], 2 * self.hidden), dtype=self.store.dtype)
        cache = {}
        for d in ("fw", "bw"):
            xd = x if d == "fw" else x[::-1]
            pre = xd @ self.store[f"{self.name}.{d}.Wx"] + self.store[f"{self.name}.{d}.b"]
            h, c, gates = kernels.lstm_forward(pre, self.store[f"{self.name}.{d}.Wh"])
            cache[d] = (xd, h, c, gates)
            if d == "fw":
                out[:, : self.hidden] = h
            else:
                out[:, self.hidden :] = h[::-1]
        self._cache = cache
        return out

    def backward(self, dy: np.ndarray) -> np.ndarray:
        if self._cache is None:
            raise InvalidInputError(f"{self.name}: backward before forward")
        dy = np.asarray(dy, dtype=self.store.dtype)
        dx = np.zeros((dy.shape[0], self.din), dtype=self.store.dtype)
        for d in ("fw", "bw"):
            xd, h, c, gates = self._cache[d]
            dh = dy[:, : self.hidden] if d == "fw" else dy[:, self.hidden :][::-1]
            dpre, dWh = kernels.lstm_backward(
                np.ascontiguousarray(dh), h, c, gates, self.store[f"{self.name}.{d}.Wh"]
            )
            self.store.grad(f"{self.name}.{d}.Wx")[...] += xd.T @ dpre
            self.store.grad(f"{self.name}.{d}.Wh")[...] += dWh
            self.store.grad(f"{self.name}.{d}.b")[...] += dpre.sum(axis=0)
            dxd = dpre @ self.store[f"{self.name}.{d}.Wx"].T
            dx += dxd if d == "fw" else dxd[::-1]
        return dx


def mse_loss(estimate: np.ndarray, reference: np.ndarray):
    """Mean squared error over all entries; returns (loss, gradient wrt estimate)."""
    estimate = np.asarray(estimate)
    reference = np.asarray(reference)
    if estimate.shape != reference.shape:
        raise InvalidInputError(
            f"shape mismatch: estimate {estimate.shape} vs reference {reference.shape}"
        )
    diff = estimate - reference
    loss = float(np.mean(diff.astype(np.float64) ** 2))
    grad = (2.0 / diff.size) * diff
    return loss, grad
