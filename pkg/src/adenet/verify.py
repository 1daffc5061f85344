"""Finite-difference verification suite over every layer kind and all four
assembled model modes. Used by the `gradcheck` CLI subcommand and the tests.
"""

from __future__ import annotations

import numpy as np

from .models import MODES, ExtractionModel, ModelConfig
from .neural import BiLSTM, Dense, GradCheckReport, ParamStore, grad_check, mse_loss


def _dense_case(activation: str, seed: int = 0):
    rng = np.random.default_rng(seed)
    store = ParamStore(np.float64)
    layer = Dense(store, "dense", 4, 3, activation, rng)
    x = rng.normal(size=(3, 4))
    target = rng.normal(size=(3, 3))

    def loss_fn(want_grad):
        y = layer.forward(x)
        loss, dy = mse_loss(y, target)
        if want_grad:
            layer.backward(dy)
            store.grads_ready = True
        return loss

    return store, loss_fn


def _bilstm_case(seed: int = 0):
    rng = np.random.default_rng(seed)
    store = ParamStore(np.float64)
    layer = BiLSTM(store, "bilstm", 4, 5, rng)
    x = rng.normal(size=(5, 4))
    target = rng.normal(size=(5, 10))

    def loss_fn(want_grad):
        y = layer.forward(x)
        loss, dy = mse_loss(y, target)
        if want_grad:
            layer.backward(dy)
            store.grads_ready = True
        return loss

    return store, loss_fn


def model_case(mode: str, seed: int = 0, feature_dim: int = 17, frames: int = 6):
    """A tiny assembled model of the given mode plus its training-loss closure."""
    config = ModelConfig(
        mode=mode,
        feature_dim=feature_dim,
        recurrent_layers=2,
        recurrent_units=6,
        aux_hidden=8,
    )
    model = ExtractionModel(config, seed=seed, dtype=np.float64)
    rng = np.random.default_rng(seed + 1)
    feats = rng.normal(size=(frames, feature_dim))
    mag = np.abs(rng.normal(size=(frames, feature_dim))) + 0.1
    ref = np.abs(rng.normal(size=(frames, feature_dim)))
    p = None
    if config.needs_activity:
        p = rng.integers(0, 2, size=frames).astype(np.float64)
        p[0] = 1.0
    enroll = rng.normal(size=(4, feature_dim)) if mode == "speakerbeam" else None

    def loss_fn(want_grad):
        mask = model.train_forward(feats, p, enroll)
        est = mask * mag
        loss, dest = mse_loss(est, ref)
        if want_grad:
            model.train_backward(dest * mag)
        return loss

    return model.store, loss_fn


def run_gradcheck_suite(tolerance: float = 1e-4, seed: int = 0):
    """Returns [(check_name, GradCheckReport)] for every layer kind and mode."""
    cases = [
        ("dense+linear", _dense_case("linear", seed)),
        ("dense+relu", _dense_case("relu", seed)),
        ("dense+sigmoid", _dense_case("sigmoid", seed)),
        ("bilstm", _bilstm_case(seed)),
    ]
    cases += [(f"model/{mode}", model_case(mode, seed)) for mode in MODES]
    results = []
    for name, (store, loss_fn) in cases:
        results.append((name, grad_check(loss_fn, store, tolerance=tolerance)))
    return results
