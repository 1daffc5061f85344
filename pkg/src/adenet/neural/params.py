"""Named parameter arrays with matching gradient buffers, plus Adam."""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInputError, InvalidStateError


class ParamStore:
    """Flat registry of named parameter arrays and their gradient buffers.

    Layers accumulate into the gradient buffers during backward; the training
    loop marks gradients ready, and `adam_step` consumes and zeroes them.
    """

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._params: dict[str, np.ndarray] = {}
        self._grads: dict[str, np.ndarray] = {}
        self.grads_ready = False

    def add(self, name: str, values: np.ndarray) -> np.ndarray:
        if name in self._params:
            raise InvalidInputError(f"duplicate parameter name {name!r}")
        arr = np.ascontiguousarray(values, dtype=self.dtype)
        self._params[name] = arr
        self._grads[name] = np.zeros_like(arr)
        return arr

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> np.ndarray:
        return self._params[name]

    def __setitem__(self, name: str, values: np.ndarray) -> None:
        current = self._params[name]
        arr = np.ascontiguousarray(values, dtype=self.dtype)
        if arr.shape != current.shape:
            raise InvalidInputError(
                f"shape mismatch for {name!r}: {arr.shape} vs {current.shape}"
            )
        self._params[name] = arr

    def grad(self, name: str) -> np.ndarray:
        return self._grads[name]

    def names(self) -> list:
        return list(self._params)

    def zero_grads(self) -> None:
        for g in self._grads.values():
            g[...] = 0.0

    @property
    def num_values(self) -> int:
        return sum(p.size for p in self._params.values())

    def global_grad_norm(self) -> float:
        total = 0.0
        for g in self._grads.values():
            total += float(np.sum(g.astype(np.float64) ** 2))
        return float(np.sqrt(total))

    def clip_global_grad_norm(self, max_norm: float) -> float:
        """Scale all gradients down when their global L2 norm exceeds max_norm."""
        norm = self.global_grad_norm()
        if norm > max_norm > 0:
            factor = max_norm / norm
            for g in self._grads.values():
                g *= factor
        return norm

    def snapshot(self) -> dict:
        return {name: arr.copy() for name, arr in self._params.items()}

    def load_snapshot(self, arrays: dict) -> None:
        missing = set(self._params) - set(arrays)
        extra = set(arrays) - set(self._params)
        if missing or extra:
            raise InvalidInputError(
                f"parameter names differ: missing={sorted(missing)} extra={sorted(extra)}"
            )
        for name, arr in arrays.items():
            self[name] = arr


class AdamState:
    """First/second moment accumulators and step count for one ParamStore."""

    def __init__(self, store: ParamStore, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        if lr <= 0:
            raise InvalidInputError("learning rate must be positive")
        self.lr = float(lr)
        self.beta1 = float(beta1)
        self.beta2 = float(beta2)
        self.eps = float(eps)
        self.step = 0
        self.m = {name: np.zeros_like(store[name]) for name in store.names()}
        self.v = {name: np.zeros_like(store[name]) for name in store.names()}


def adam_step(store: ParamStore, state: AdamState) -> None:
    """One Adam update with bias correction; consumes and zeroes the gradients."""
    if not store.grads_ready:
        raise InvalidStateError("gradients not populated; run backward before adam_step")
    state.step += 1
    bc1 = 1.0 - state.beta1**state.step
    bc2 = 1.0 - state.beta2**state.step
    for name in store.names():
        g = store.grad(name)
        m = state.m[name]
        v = state.v[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        store[name] = store[name] - state.lr * (m / bc1) / (np.sqrt(v / bc2) + state.eps)
    store.zero_grads()
    store.grads_ready = False
