"""Central finite-difference verification of the hand-derived gradients."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError
from .params import ParamStore


@dataclass(frozen=True)
class GradCheckReport:
    max_rel_error: float
    worst_param: str
    worst_index: int
    num_checked: int
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.tolerance

    def __str__(self) -> str:
        status = "OK" if self.passed else "FAIL"
        return (
            f"{status}: max rel error {self.max_rel_error:.3e} at "
            f"{self.worst_param}[{self.worst_index}] "
            f"({self.num_checked} entries, tolerance {self.tolerance:g})"
        )


def grad_check(
    loss_fn,
    store: ParamStore,
    tolerance: float = 1e-4,
    h: float = 1e-5,
    max_entries: int = 10000,
    seed: int = 0,
    atol: float = 2e-5,
) -> GradCheckReport:
    """Compare analytic gradients against (L(p+h) - L(p-h)) / 2h per entry.

    `loss_fn(want_grad)` must rerun the full forward pass and return the loss;
    when `want_grad` is true it must also populate the store's gradients.
    Every parameter entry is perturbed unless the store holds more than
    `max_entries` values, in which case a seeded random subsample is checked.
    Entries where both gradients are below `atol` are compared absolutely,
    since finite differences carry ~1e-9 absolute noise at h=1e-5.
    """
    if store.dtype != np.float64:
        raise ConfigurationError("grad_check requires a float64 parameter store")
    store.zero_grads()
    loss_fn(True)
    analytic = {name: store.grad(name).copy() for name in store.names()}

    entries = [(name, idx) for name in store.names() for idx in range(store[name].size)]
    if len(entries) > max_entries:
        rng = np.random.default_rng(seed)
        pick = rng.choice(len(entries), size=max_entries, replace=False)
        entries = [entries[int(k)] for k in pick]

    max_rel = 0.0
    worst = (store.names()[0] if store.names() else "", 0)
    for name, idx in entries:
        p = store[name]
        orig = p.flat[idx]
        p.flat[idx] = orig + h
        lp = loss_fn(False)
        p.flat[idx] = orig - h
        lm = loss_fn(False)
        p.flat[idx] = orig
        numeric = (lp - lm) / (2.0 * h)
        a = float(analytic[name].flat[idx])
        denom = max(abs(a), abs(numeric))
        rel = 0.0 if denom < atol else abs(a - numeric) / denom
        if rel > max_rel:
            max_rel = rel
            worst = (name, idx)
    store.zero_grads()
    store.grads_ready = False
    return GradCheckReport(max_rel, worst[0], worst[1], len(entries), tolerance)
