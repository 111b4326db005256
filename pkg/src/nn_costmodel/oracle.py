"""Brute-force operation counter used to check the closed forms.

Each ``trace_*`` function walks the forward pass of one layer and records
every scalar multiply and addition with the operand widths it would have
in a fixed-point datapath.  No numeric values are ever computed.

Width conventions:

* a product of ``l``- and ``r``-bit operands is ``l + r`` bits wide;
* a dot product is summed by a pairwise adder tree.  An unpaired element
  passes to the next level unchanged.  Every node records its true result
  width (``max(children) + 1``) and is charged at the tree's root width,
  which is the width of the accumulator register that holds the sum;
* combining two partial sums costs ``max(widths) + 1`` bits;
* a bias add is charged ``max(width, b_b)`` and does not grow the value;
* activation outputs, gates and states are requantized to ``b_a`` bits,
  so element-wise products always take two ``b_a``-bit operands;
* GRU's ``(1 - z)`` is one ``b_a``-bit addition.
"""

from __future__ import annotations

import random
from collections import Counter
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

from . import metrics
from .metrics import acc, round_half_up
from .model import (
    Conv1DSpec,
    DenseSpec,
    ESNSpec,
    LayerSpec,
    QuantScheme,
    RecurrentKind,
    RecurrentSpec,
    x_w,
)

MAX_OPS = 2 ** 20


class OracleSizeError(ValueError):
    """The layer is too large to enumerate."""


@dataclass(frozen=True)
class Multiply:
    lhs_bits: int
    rhs_bits: int
    acc_bits: int  # width of the accumulator the product feeds


@dataclass(frozen=True)
class Add:
    role: str  # tree, combine, bias, sub
    width: int  # true result width
    acc_bits: int  # width charged for the addition


@dataclass
class OpTrace:
    """Multisets of counted operations."""

    multiplies: Counter = field(default_factory=Counter)
    ew_multiplies: Counter = field(default_factory=Counter)
    adds: Counter = field(default_factory=Counter)

    @property
    def rm_count(self) -> int:
        return sum(self.multiplies.values()) + sum(self.ew_multiplies.values())

    @property
    def add_count(self) -> int:
        return sum(self.adds.values())

    @property
    def bop_total(self) -> int:
        products = sum(m.lhs_bits * m.rhs_bits * n for m, n in self.multiplies.items())
        products += sum(l * r * n for (l, r), n in self.ew_multiplies.items())
        return products + sum(a.acc_bits * n for a, n in self.adds.items())

    @property
    def bop_tree_total(self) -> int:
        """BOP with every addition charged at its true result width."""
        products = sum(m.lhs_bits * m.rhs_bits * n for m, n in self.multiplies.items())
        products += sum(l * r * n for (l, r), n in self.ew_multiplies.items())
        return products + sum(a.width * n for a, n in self.adds.items())

    def nabs_total(self, quant: QuantScheme, b_w: int) -> int:
        x = x_w(quant, b_w)
        total = sum(x * m.acc_bits * n for m, n in self.multiplies.items())
        total += sum(a.acc_bits * n for a, n in self.adds.items())
        return total + sum((l + r) * n for (l, r), n in self.ew_multiplies.items())

    # -- recording ------------------------------------------------------------

    def dot(self, n: int, lhs: int, rhs: int) -> int:
        """Record an ``n``-term dot product of weights and ``rhs``-bit values."""
        root, widths = _tree(n, lhs + rhs)
        self.multiplies[Multiply(lhs, rhs, root)] += n
        for w in widths:
            self.adds[Add("tree", w, root)] += 1
        return root

    def combine(self, a: int, b: int) -> int:
        w = max(a, b) + 1
        self.adds[Add("combine", w, w)] += 1
        return w

    def bias(self, width: int, b_b: int) -> int:
        w = max(width, b_b)
        self.adds[Add("bias", w, w)] += 1
        return w

    def ew(self, lhs: int, rhs: int) -> int:
        self.ew_multiplies[(lhs, rhs)] += 1
        return lhs + rhs

    def sub(self, width: int) -> int:
        self.adds[Add("sub", width, width)] += 1
        return width


@lru_cache(maxsize=None)
def _tree(n: int, leaf: int) -> tuple[int, tuple[int, ...]]:
    """Root width and per-node widths of a pairwise adder tree over ``n`` leaves."""
    level = [leaf] * n
    widths = []
    while len(level) > 1:
        nxt = []
        for k in range(0, len(level) - 1, 2):
            w = max(level[k], level[k + 1]) + 1
            widths.append(w)
            nxt.append(w)
        if len(level) % 2:
            nxt.append(level[-1])
        level = nxt
    return level[0], tuple(widths)


def _guard(layer_or_shape_ops: int) -> None:
    if layer_or_shape_ops > MAX_OPS:
        raise OracleSizeError(
            f"about {layer_or_shape_ops} scalar operations exceed the oracle limit of {MAX_OPS}")


def estimated_ops(layer: LayerSpec) -> int:
    """Upper estimate of the scalar operations a trace would record."""
    s = layer.shape
    if isinstance(s, DenseSpec):
        units = s.n_n
    elif isinstance(s, Conv1DSpec):
        units = s.n_f * s.output_size()
    elif isinstance(s, RecurrentSpec):
        units = s.n_s * s.n_h
    else:
        units = s.n_s * (s.n_r + s.n_o)
    return 2 * metrics.rm(layer) + 8 * units


def check_size(layer: LayerSpec) -> None:
    """Raise ``OracleSizeError`` if tracing ``layer`` would be too expensive."""
    _guard(estimated_ops(layer))


# --- traces -----------------------------------------------------------------

def trace_dense(s: DenseSpec, b) -> OpTrace:
    _guard(2 * s.n_n * s.n_i + s.n_n)
    t = OpTrace()
    for _ in range(s.n_n):
        t.bias(t.dot(s.n_i, b.b_w, b.b_i), b.b_b)
    return t


def trace_conv1d(s: Conv1DSpec, b) -> OpTrace:
    out = s.output_size()
    _guard(2 * s.n_f * out * s.n_i * s.n_k + s.n_f * out)
    t = OpTrace()
    # Padded taps are multiplied like any other tap.
    for _ in range(s.n_f):
        for _ in range(out):
            t.bias(t.dot(s.n_i * s.n_k, b.b_w, b.b_i), b.b_b)
    return t


def _gate(t: OpTrace, s: RecurrentSpec, b) -> int:
    """``W x_t + U h_{t-1} + b`` for one unit."""
    wx = t.dot(s.n_i, b.b_w, b.b_i)
    uh = t.dot(s.n_h, b.b_w, b.b_a)
    return t.bias(t.combine(wx, uh), b.b_b)


def trace_rnn(s: RecurrentSpec, b) -> OpTrace:
    _guard(2 * s.n_s * s.n_h * (s.n_i + s.n_h + 2))
    t = OpTrace()
    for _ in range(s.n_s):
        for _ in range(s.n_h):
            _gate(t, s, b)
    return t


def trace_lstm(s: RecurrentSpec, b) -> OpTrace:
    _guard(2 * s.n_s * s.n_h * (4 * s.n_i + 4 * s.n_h + 6))
    t = OpTrace()
    a = b.b_a
    for _ in range(s.n_s):
        for _ in range(s.n_h):
            for _gate_name in ("input", "forget", "output", "candidate"):
                _gate(t, s, b)
            forget = t.ew(a, a)  # f * C_{t-1}
            write = t.ew(a, a)  # i * candidate
            t.combine(forget, write)  # C_t
            t.ew(a, a)  # o * tanh(C_t)
    return t


def trace_gru(s: RecurrentSpec, b) -> OpTrace:
    _guard(2 * s.n_s * s.n_h * (3 * s.n_i + 3 * s.n_h + 6))
    t = OpTrace()
    a = b.b_a
    for _ in range(s.n_s):
        for _ in range(s.n_h):
            _gate(t, s, b)  # update gate z
            _gate(t, s, b)  # reset gate r
            wx = t.dot(s.n_i, b.b_w, b.b_i)
            t.dot(s.n_h, b.b_w, b.b_a)  # U^h h_{t-1}, requantized to b_a
            reset = t.ew(a, a)  # r * (U^h h_{t-1})
            t.bias(t.combine(wx, reset), b.b_b)  # candidate h'
            keep = t.ew(a, a)  # z * h_{t-1}
            t.sub(a)  # 1 - z
            new = t.ew(a, a)  # (1 - z) * h'
            t.combine(keep, new)
    return t


def reservoir_mask(n_r: int, s_p: Fraction, seed: int = 0) -> list[int]:
    """Nonzero count per reservoir row for a seeded mask of round(s_p * n_r**2) entries."""
    nonzeros = round_half_up(s_p * n_r * n_r)
    picks = random.Random(seed).sample(range(n_r * n_r), nonzeros)
    rows = [0] * n_r
    for p in picks:
        rows[p // n_r] += 1
    return rows


def trace_esn(s: ESNSpec, b, seed: int = 0) -> OpTrace:
    rows = reservoir_mask(s.n_r, s.s_p, seed)
    _guard(2 * s.n_s * (s.n_r * (s.n_i + 4) + sum(rows) + s.n_o * (s.n_r + 1)))
    t = OpTrace()
    a = b.b_a
    for _ in range(s.n_s):
        for k in rows:
            pre = t.dot(s.n_i, b.b_w, b.b_i)  # W^in x_t
            if k:
                pre = t.combine(pre, t.dot(k, b.b_w, b.b_a))  # + W^r s_{t-1}
            old = t.ew(a, a)  # (1 - mu) * s_{t-1}
            new = t.ew(a, a)  # mu * a_t
            t.combine(old, new)
        for _ in range(s.n_o):
            t.bias(t.dot(s.n_r, b.b_w, b.b_a), b.b_b)  # readout W^o s_t + b^o
    return t


def trace(layer: LayerSpec, seed: int = 0) -> OpTrace:
    s, b = layer.shape, layer.bits
    if isinstance(s, DenseSpec):
        return trace_dense(s, b)
    if isinstance(s, Conv1DSpec):
        return trace_conv1d(s, b)
    if isinstance(s, RecurrentSpec):
        return {RecurrentKind.RNN: trace_rnn, RecurrentKind.LSTM: trace_lstm,
                RecurrentKind.GRU: trace_gru}[s.cell](s, b)
    return trace_esn(s, b, seed)


# --- documented deltas --------------------------------------------------------

_LUMPED_ADDS = {RecurrentKind.RNN: 2, RecurrentKind.LSTM: 9, RecurrentKind.GRU: 8}


def rm_bound(layer: LayerSpec) -> int:
    """Largest |oracle - closed form| RM difference the conventions allow.

    Zero except for an ESN whose ``s_p * n_r**2`` is not an integer, where
    the mask rounds once per step and the closed form rounds once per layer.
    """
    s = layer.shape
    if isinstance(s, ESNSpec) and (s.s_p * s.n_r * s.n_r).denominator != 1:
        return s.n_s
    return 0


def bop_bound(layer: LayerSpec) -> int:
    """Largest |oracle - closed form| BOP difference the closed form's simplifications allow.

    * dense: zero while the bias is narrower than the accumulator;
    * conv1d: the closed form adds each filter's bias once instead of once
      per output position;
    * rnn/lstm/gru: every lumped addition is charged ``Acc(n_h, b_w, b_a)``
      instead of its true width, and no true width is further than ``D``
      from that, with D = 1 + max(|Acc_i - Acc_h|, |2 b_a - Acc_h|,
      |b_a - Acc_h|, b_b - Acc_h, 0);
    * esn: the closed form averages the sparse rows and transposes the
      readout, so each restructured group is bounded by the larger of its
      two charges.
    """
    s, b = layer.shape, layer.bits
    if isinstance(s, DenseSpec):
        return s.n_n * max(0, b.b_b - acc(s.n_i, b.b_w, b.b_i))
    if isinstance(s, Conv1DSpec):
        a = acc(s.n_i * s.n_k, b.b_w, b.b_i)
        return s.output_size() * s.n_f * max(a, b.b_b) - s.n_f * a
    if isinstance(s, RecurrentSpec):
        a_i = acc(s.n_i, b.b_w, b.b_i)
        a_h = acc(s.n_h, b.b_w, b.b_a)
        d = 1 + max(abs(a_i - a_h), abs(2 * b.b_a - a_h), abs(b.b_a - a_h), b.b_b - a_h, 0)
        return s.n_s * s.n_h * _LUMPED_ADDS[s.cell] * d
    a_i = acc(s.n_i, b.b_w, b.b_i)
    a_r = acc(s.n_r, b.b_w, b.b_a)
    a_o = acc(s.n_o, b.b_w, b.b_a)
    nonzeros = round_half_up(s.s_p * s.n_r * s.n_r)
    reservoir = max(nonzeros * a_r, s.s_p * s.n_r * (s.n_r - 1) * a_r)
    lumped = max(s.n_r * (max(a_i, a_r) + 1) + s.n_r * (2 * b.b_a + 1), 4 * s.n_r * a_r)
    readout = max(s.n_o * (s.n_r - 1) * a_r + s.n_o * max(a_r, b.b_b), s.n_r * (s.n_o - 1) * a_o)
    products = abs(nonzeros - s.s_p * s.n_r * s.n_r) * b.b_w * b.b_a
    return int(s.n_s * (reservoir + lumped + readout + products)) + 1


@dataclass(frozen=True)
class Check:
    metric: str
    closed_form: int
    oracle: int
    bound: int | None
    required: bool

    @property
    def delta(self) -> int:
        return self.oracle - self.closed_form

    @property
    def verdict(self) -> str:
        if self.delta == 0:
            return "match"
        if self.bound is None:
            return "reported"
        return "within bound" if abs(self.delta) <= self.bound else "MISMATCH"


@dataclass(frozen=True)
class VerificationResult:
    layer: str
    kind: str
    checks: tuple[Check, ...]

    @property
    def ok(self) -> bool:
        return all(c.verdict != "MISMATCH" for c in self.checks if c.required)

    def check(self, metric_name: str) -> Check:
        return next(c for c in self.checks if c.metric == metric_name)


def verify(layer: LayerSpec, seed: int = 0, bop_mode: str = "exact") -> VerificationResult:
    """Compare the oracle's totals with the closed forms for one layer."""
    check_size(layer)
    t = trace(layer, seed)
    closed_bop = metrics.bop(layer, bop_mode)
    checks = (
        Check("rm", metrics.rm(layer), t.rm_count, rm_bound(layer), True),
        Check("bop", closed_bop, t.bop_total, bop_bound(layer), True),
        Check("bop_tree", closed_bop, t.bop_tree_total, None, False),
        Check("nabs", metrics.nabs(layer), t.nabs_total(layer.quant, layer.bits.b_w), None, False),
    )
    return VerificationResult(layer.name, layer.kind, checks)
