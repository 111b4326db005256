"""Closed-form RM, BOP and NABS per layer.

RM counts real multiplications, BOP charges ``b_w * b_x`` per multiply
plus the accumulator width per addition, and NABS replaces every multiply
by a quantized weight with ``X_w`` accumulator-width additions (shifts are
free).  All arithmetic is exact: plain ``int`` everywhere except the ESN
sparsity terms, which are carried as ``Fraction`` and rounded half-up once
per layer.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

from .model import (
    BitwidthConfig,
    Conv1DSpec,
    DenseSpec,
    ESNSpec,
    InvariantViolation,
    LayerSpec,
    ModelSpec,
    QuantScheme,
    RecurrentKind,
    RecurrentSpec,
    SpecError,
    ceil_log2,
    x_w,
)

BOP_MODES = ("table", "exact")


def acc(n: int, b_w: int, b_x: int) -> int:
    """Accumulator width needed to sum ``n`` products of ``b_w x b_x`` bits."""
    return b_w + b_x + ceil_log2(n)


def mult(n: int, b_w: int, b_x: int) -> int:
    """BOP of an ``n``-term dot product: n multiplies and n-1 additions."""
    return n * b_w * b_x + (n - 1) * acc(n, b_w, b_x)


def round_half_up(value: Fraction | int) -> int:
    return math.floor(Fraction(value) + Fraction(1, 2))


def conv_output_size(s: Conv1DSpec) -> int:
    size = s.output_size()
    if size < 1:
        raise InvariantViolation("output size < 1")
    return size


# --- dense ------------------------------------------------------------------

def rm_dense(s: DenseSpec) -> int:
    return s.n_n * s.n_i


def bop_dense(s: DenseSpec, b: BitwidthConfig, mode: str = "table") -> int:
    a = acc(s.n_i, b.b_w, b.b_i)
    if mode == "exact":
        return s.n_n * mult(s.n_i, b.b_w, b.b_i) + s.n_n * a
    if mode == "table":
        return s.n_n * s.n_i * (b.b_w * b.b_i + a)
    raise ValueError(f"unknown BOP mode {mode!r}; expected one of {BOP_MODES}")


def nabs_dense(s: DenseSpec, b: BitwidthConfig, q: QuantScheme) -> int:
    return s.n_n * s.n_i * (x_w(q, b.b_w) + 1) * acc(s.n_i, b.b_w, b.b_i)


# --- 1D convolution -----------------------------------------------------------

def rm_conv1d(s: Conv1DSpec) -> int:
    return s.n_f * s.n_i * s.n_k * conv_output_size(s)


def bop_conv1d(s: Conv1DSpec, b: BitwidthConfig) -> int:
    fan_in = s.n_i * s.n_k
    return (conv_output_size(s) * s.n_f * mult(fan_in, b.b_w, b.b_i)
            + s.n_f * acc(fan_in, b.b_w, b.b_i))


def nabs_conv1d(s: Conv1DSpec, b: BitwidthConfig, q: QuantScheme) -> int:
    fan_in = s.n_i * s.n_k
    a = acc(fan_in, b.b_w, b.b_i)
    x = x_w(q, b.b_w)
    return conv_output_size(s) * s.n_f * (fan_in * (x + 1) - 1) * a + s.n_f * a


# --- recurrent cells ----------------------------------------------------------

def _check_cell(s: RecurrentSpec, cell: RecurrentKind) -> None:
    if s.cell is not cell:
        raise ValueError(f"expected a {cell.value} layer, got {s.cell.value}")


def rm_rnn(s: RecurrentSpec) -> int:
    _check_cell(s, RecurrentKind.RNN)
    return s.n_s * s.n_h * (s.n_i + s.n_h)


def bop_rnn(s: RecurrentSpec, b: BitwidthConfig) -> int:
    _check_cell(s, RecurrentKind.RNN)
    per_unit = (mult(s.n_i, b.b_w, b.b_i) + mult(s.n_h, b.b_w, b.b_a)
                + 2 * acc(s.n_h, b.b_w, b.b_a))
    return s.n_s * s.n_h * per_unit


def nabs_rnn(s: RecurrentSpec, b: BitwidthConfig, q: QuantScheme) -> int:
    _check_cell(s, RecurrentKind.RNN)
    x = x_w(q, b.b_w)
    per_unit = ((s.n_i * (x + 1) - 1) * acc(s.n_i, b.b_w, b.b_i)
                + (s.n_h * (x + 1) + 1) * acc(s.n_h, b.b_w, b.b_a))
    return s.n_s * s.n_h * per_unit


def rm_lstm(s: RecurrentSpec) -> int:
    _check_cell(s, RecurrentKind.LSTM)
    return s.n_s * s.n_h * (4 * s.n_i + 4 * s.n_h + 3)


def bop_lstm(s: RecurrentSpec, b: BitwidthConfig) -> int:
    _check_cell(s, RecurrentKind.LSTM)
    per_unit = (4 * mult(s.n_i, b.b_w, b.b_i) + 4 * mult(s.n_h, b.b_w, b.b_a)
                + 3 * b.b_a ** 2 + 9 * acc(s.n_h, b.b_w, b.b_a))
    return s.n_s * s.n_h * per_unit


def nabs_lstm(s: RecurrentSpec, b: BitwidthConfig, q: QuantScheme) -> int:
    _check_cell(s, RecurrentKind.LSTM)
    x = x_w(q, b.b_w)
    per_unit = (4 * (s.n_i * (x + 1) - 1) * acc(s.n_i, b.b_w, b.b_i)
                + 4 * (s.n_h * (x + 1) + 1) * acc(s.n_h, b.b_w, b.b_a)
                + 6 * b.b_a)
    return s.n_s * s.n_h * per_unit


def rm_gru(s: RecurrentSpec) -> int:
    _check_cell(s, RecurrentKind.GRU)
    return s.n_s * s.n_h * (3 * s.n_i + 3 * s.n_h + 3)


def bop_gru(s: RecurrentSpec, b: BitwidthConfig) -> int:
    _check_cell(s, RecurrentKind.GRU)
    per_unit = (3 * mult(s.n_i, b.b_w, b.b_i) + 3 * mult(s.n_h, b.b_w, b.b_a)
                + 3 * b.b_a ** 2 + 8 * acc(s.n_h, b.b_w, b.b_a))
    return s.n_s * s.n_h * per_unit


def nabs_gru(s: RecurrentSpec, b: BitwidthConfig, q: QuantScheme) -> int:
    _check_cell(s, RecurrentKind.GRU)
    x = x_w(q, b.b_w)
    per_unit = (3 * (s.n_i * (x + 1) - 1) * acc(s.n_i, b.b_w, b.b_i)
                + (3 * s.n_h * (x + 1) + 5) * acc(s.n_h, b.b_w, b.b_a)
                + 6 * b.b_a)
    return s.n_s * s.n_h * per_unit


# --- echo state network -------------------------------------------------------

def rm_esn(s: ESNSpec) -> int:
    return round_half_up(s.n_s * s.n_r * (s.n_i + s.n_r * s.s_p + 2 + s.n_o))


def bop_esn(s: ESNSpec, b: BitwidthConfig) -> int:
    per_unit = (mult(s.n_i, b.b_w, b.b_i) + s.s_p * mult(s.n_r, b.b_w, b.b_a)
                + mult(s.n_o, b.b_w, b.b_a) + 2 * b.b_a ** 2 + 4 * acc(s.n_r, b.b_w, b.b_a))
    return round_half_up(s.n_s * s.n_r * per_unit)


def nabs_esn(s: ESNSpec, b: BitwidthConfig, q: QuantScheme) -> int:
    x = x_w(q, b.b_w)
    # Reservoir term: (s_p * (n_r * X_w + n_r - 1) + 4) * Acc(n_r, b_w, b_a);
    # the four lumped additions sit outside the sparsity factor.
    per_unit = ((s.n_i * (x + 1) - 1) * acc(s.n_i, b.b_w, b.b_i)
                + (s.s_p * (s.n_r * x + s.n_r - 1) + 4) * acc(s.n_r, b.b_w, b.b_a)
                + (s.n_o * (x + 1) - 1) * acc(s.n_o, b.b_w, b.b_a)
                + 4 * b.b_a)
    return round_half_up(s.n_s * s.n_r * per_unit)


# --- dispatch -----------------------------------------------------------------

_RECURRENT = {
    RecurrentKind.RNN: (rm_rnn, bop_rnn, nabs_rnn),
    RecurrentKind.LSTM: (rm_lstm, bop_lstm, nabs_lstm),
    RecurrentKind.GRU: (rm_gru, bop_gru, nabs_gru),
}


def rm(layer: LayerSpec) -> int:
    s = layer.shape
    if isinstance(s, DenseSpec):
        return rm_dense(s)
    if isinstance(s, Conv1DSpec):
        return rm_conv1d(s)
    if isinstance(s, RecurrentSpec):
        return _RECURRENT[s.cell][0](s)
    return rm_esn(s)


def bop(layer: LayerSpec, mode: str = "table") -> int:
    """BOP of ``layer``; ``mode`` only changes dense layers."""
    if mode not in BOP_MODES:
        raise ValueError(f"unknown BOP mode {mode!r}; expected one of {BOP_MODES}")
    s, b = layer.shape, layer.bits
    if isinstance(s, DenseSpec):
        return bop_dense(s, b, mode)
    if isinstance(s, Conv1DSpec):
        return bop_conv1d(s, b)
    if isinstance(s, RecurrentSpec):
        return _RECURRENT[s.cell][1](s, b)
    return bop_esn(s, b)


def nabs(layer: LayerSpec, quant: QuantScheme | None = None) -> int:
    """NABS of ``layer`` under its own scheme, or ``quant`` if given."""
    s, b = layer.shape, layer.bits
    q = layer.quant if quant is None else quant
    q.check(b.b_w)
    if isinstance(s, DenseSpec):
        return nabs_dense(s, b, q)
    if isinstance(s, Conv1DSpec):
        return nabs_conv1d(s, b, q)
    if isinstance(s, RecurrentSpec):
        return _RECURRENT[s.cell][2](s, b, q)
    return nabs_esn(s, b, q)


def metric(layer: LayerSpec, name: str, bop_mode: str = "table") -> int:
    if name == "rm":
        return rm(layer)
    if name == "bop":
        return bop(layer, bop_mode)
    if name == "nabs":
        return nabs(layer)
    raise ValueError(f"unknown metric {name!r}; expected rm, bop or nabs")


@dataclass(frozen=True)
class LayerMetrics:
    name: str
    kind: str
    rm: int
    bop: int
    nabs: int


@dataclass(frozen=True)
class MetricReport:
    model: str
    bop_mode: str
    per_layer: tuple[LayerMetrics, ...]

    @property
    def totals(self) -> dict[str, int]:
        return {
            "rm": sum(m.rm for m in self.per_layer),
            "bop": sum(m.bop for m in self.per_layer),
            "nabs": sum(m.nabs for m in self.per_layer),
        }

    def to_dict(self) -> dict:
        return {
            "model": self.model,
            "bop_mode": self.bop_mode,
            "layers": [
                {"name": m.name, "kind": m.kind, "rm": m.rm, "bop": m.bop, "nabs": m.nabs}
                for m in self.per_layer
            ],
            "totals": self.totals,
        }


def analyze_layer(layer: LayerSpec, bop_mode: str = "table") -> LayerMetrics:
    try:
        return LayerMetrics(layer.name, layer.kind, rm(layer), bop(layer, bop_mode), nabs(layer))
    except SpecError as exc:
        raise type(exc)(exc.message, exc.line, exc.column, layer.name) from None


def analyze(model: ModelSpec, bop_mode: str = "table") -> MetricReport:
    """Evaluate every layer of ``model`` and aggregate the totals."""
    return MetricReport(model.name, bop_mode,
                        tuple(analyze_layer(layer, bop_mode) for layer in model.layers))
