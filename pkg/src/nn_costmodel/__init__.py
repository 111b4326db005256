"""Computational-complexity metrics (RM, BOP, NABS, NLG) for neural-network layers."""

from .metrics import MetricReport, analyze, bop, nabs, rm
from .model import (
    BitwidthConfig,
    Conv1DSpec,
    DenseSpec,
    ESNSpec,
    LayerSpec,
    ModelSpec,
    QuantScheme,
    RecurrentKind,
    RecurrentSpec,
    x_w,
)
from .specfile import dump_model_spec, load_model_spec, parse_model_spec

__version__ = "0.1.0"

__all__ = [
    "BitwidthConfig",
    "Conv1DSpec",
    "DenseSpec",
    "ESNSpec",
    "LayerSpec",
    "MetricReport",
    "ModelSpec",
    "QuantScheme",
    "RecurrentKind",
    "RecurrentSpec",
    "analyze",
    "bop",
    "dump_model_spec",
    "load_model_spec",
    "nabs",
    "parse_model_spec",
    "rm",
    "x_w",
]
