"""Fenchel-Young losses, structural-matrix diagnostics and small MLP training."""

from .convex import Generator, entropy, fy_loss, fy_loss_grad, link, squared
from .diagnostics import DiagnosticsRecord, sandwich_check, sandwich_record, structural_error, ulg
from .netmodel import ModelConfig, architecture
from .smallmat import gershgorin, sym_eig

__version__ = "0.1.0"

__all__ = [
    "DiagnosticsRecord",
    "Generator",
    "ModelConfig",
    "architecture",
    "entropy",
    "fy_loss",
    "fy_loss_grad",
    "gershgorin",
    "link",
    "sandwich_check",
    "sandwich_record",
    "squared",
    "structural_error",
    "sym_eig",
    "ulg",
]
