"""Self-contained numerical core: layers with exact analytic gradients,
Adam, finite-difference verification, and checkpoint serialization."""

from .checkpoint import load_arrays, save_arrays
from .gradcheck import GradCheckReport, grad_check
from .kernels import BACKEND
from .layers import ACTIVATIONS, BiLSTM, Dense, LayerSpec, build_layer, mse_loss, validate_chain
from .params import AdamState, ParamStore, adam_step

__all__ = [
    "ACTIVATIONS",
    "AdamState",
    "BACKEND",
    "BiLSTM",
    "Dense",
    "GradCheckReport",
    "LayerSpec",
    "ParamStore",
    "adam_step",
    "build_layer",
    "grad_check",
    "load_arrays",
    "mse_loss",
    "save_arrays",
    "validate_chain",
]
