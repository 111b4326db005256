"""Logic-gate (NLG) estimates and CLB capacity conversion.

There is no single way to turn operation counts into gates; this module
commits to one baseline circuit family and labels every result an
estimate:

* an ``m x n`` bit multiply is an array multiplier of ``m*n`` AND gates,
  ``n`` half adders and ``(m-2)*n`` full adders;
* a ``w``-bit addition is a ripple-carry chain of one half adder and
  ``w-1`` full adders;
* a half adder is 1 AND + 1 XOR (2 gates), a full adder is 2 AND + 2 XOR
  + 1 OR (5 gates).

Gate totals convert to FPGA configurable logic blocks through the
capacity tables for 4-input (XC4000-era) and 6-input LUT fabrics.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction

from .metrics import acc, round_half_up
from .model import (
    Conv1DSpec,
    DenseSpec,
    ESNSpec,
    InvariantViolation,
    LayerSpec,
    ModelSpec,
    QuantKind,
    QuantScheme,
    RecurrentKind,
    RecurrentSpec,
    SpecSyntaxError,
)
from .specfile import Ident, parse_blocks

HALF_ADDER_GATES = 2
FULL_ADDER_GATES = 5


class GateError(ValueError):
    pass


@dataclass(frozen=True)
class GateCount:
    """Discrete gates plus adder cells; ``total_gates`` expands the cells."""

    and_gates: int = 0
    xor_gates: int = 0
    or_gates: int = 0
    half_adders: int = 0
    full_adders: int = 0
    flip_flops: int = 0

    @property
    def total_gates(self) -> int:
        return (self.and_gates + self.xor_gates + self.or_gates
                + HALF_ADDER_GATES * self.half_adders + FULL_ADDER_GATES * self.full_adders)

    def expanded(self) -> dict[str, int]:
        """AND/XOR/OR counts with every adder cell broken into gates."""
        return {
            "and": self.and_gates + self.half_adders + 2 * self.full_adders,
            "xor": self.xor_gates + self.half_adders + 2 * self.full_adders,
            "or": self.or_gates + self.full_adders,
        }

    def __add__(self, other: GateCount) -> GateCount:
        return GateCount(self.and_gates + other.and_gates, self.xor_gates + other.xor_gates,
                         self.or_gates + other.or_gates, self.half_adders + other.half_adders,
                         self.full_adders + other.full_adders, self.flip_flops + other.flip_flops)

    def __mul__(self, k: int) -> GateCount:
        return GateCount(k * self.and_gates, k * self.xor_gates, k * self.or_gates,
                         k * self.half_adders, k * self.full_adders, k * self.flip_flops)

    __rmul__ = __mul__

    def to_dict(self) -> dict[str, int]:
        return {
            "and_gates": self.and_gates, "xor_gates": self.xor_gates, "or_gates": self.or_gates,
            "half_adders": self.half_adders, "full_adders": self.full_adders,
            "flip_flops": self.flip_flops, "total_gates": self.total_gates,
        }


# A pipelined 27x18 DSP-slice multiplier.  The 90 flip-flops are a quoted
# figure with no derivation, so this is a fixed reference, not a model output.
REFERENCE_27X18 = GateCount(and_gates=486, half_adders=18, full_adders=450, flip_flops=90)


def multiplier_gates(m: int, n: int, pipeline_depth: int = 0) -> GateCount:
    """Array multiplier for an ``m``-bit by ``n``-bit product.

    Pass the wider operand as ``m``.  With ``pipeline_depth`` > 0 the
    ``m+n``-bit product is registered that many times.
    """
    if m < 2 or n < 1:
        raise GateError(f"array multiplier needs m >= 2 and n >= 1, got {m}x{n}")
    if pipeline_depth < 0:
        raise GateError("pipeline depth must be >= 0")
    return GateCount(and_gates=m * n, half_adders=n, full_adders=(m - 2) * n,
                     flip_flops=(m + n) * pipeline_depth)


def adder_gates(width: int) -> GateCount:
    if width < 1:
        raise GateError(f"adder width must be >= 1, got {width}")
    return GateCount(half_adders=1, full_adders=width - 1)


@dataclass(frozen=True)
class Operations:
    """Closed-form operation inventory of one layer, keyed by operand widths."""

    weight_multiplies: dict  # (b_x, acc width) -> count
    ew_multiplies: dict  # (lhs, rhs) -> count
    additions: dict  # width -> count


def _bump(table: dict, key, count) -> None:
    count = round_half_up(count)
    if count:
        table[key] = table.get(key, 0) + count


def operations(layer: LayerSpec) -> Operations:
    """Count the multiplies and additions the closed forms charge for."""
    s, b = layer.shape, layer.bits
    wm, ew, adds = {}, {}, {}
    if isinstance(s, DenseSpec):
        a = acc(s.n_i, b.b_w, b.b_i)
        _bump(wm, (b.b_i, a), s.n_n * s.n_i)
        _bump(adds, a, s.n_n * (s.n_i - 1) + s.n_n)
    elif isinstance(s, Conv1DSpec):
        fan_in, out = s.n_i * s.n_k, s.output_size()
        a = acc(fan_in, b.b_w, b.b_i)
        _bump(wm, (b.b_i, a), out * s.n_f * fan_in)
        _bump(adds, a, out * s.n_f * (fan_in - 1) + s.n_f)
    elif isinstance(s, RecurrentSpec):
        gates, ew_count, lumped = {RecurrentKind.RNN: (1, 0, 2), RecurrentKind.LSTM: (4, 3, 9),
                                   RecurrentKind.GRU: (3, 3, 8)}[s.cell]
        units = s.n_s * s.n_h
        a_i, a_h = acc(s.n_i, b.b_w, b.b_i), acc(s.n_h, b.b_w, b.b_a)
        _bump(wm, (b.b_i, a_i), gates * units * s.n_i)
        _bump(wm, (b.b_a, a_h), gates * units * s.n_h)
        _bump(ew, (b.b_a, b.b_a), ew_count * units)
        _bump(adds, a_i, gates * units * (s.n_i - 1))
        _bump(adds, a_h, gates * units * (s.n_h - 1) + lumped * units)
    else:
        units = s.n_s * s.n_r
        a_i, a_r, a_o = acc(s.n_i, b.b_w, b.b_i), acc(s.n_r, b.b_w, b.b_a), acc(s.n_o, b.b_w, b.b_a)
        _bump(wm, (b.b_i, a_i), units * s.n_i)
        _bump(wm, (b.b_a, a_r), units * s.s_p * s.n_r)
        _bump(wm, (b.b_a, a_o), units * s.n_o)
        _bump(ew, (b.b_a, b.b_a), 2 * units)
        _bump(adds, a_i, units * (s.n_i - 1))
        _bump(adds, a_r, units * s.s_p * (s.n_r - 1) + 4 * units)
        _bump(adds, a_o, units * (s.n_o - 1))
    return Operations(wm, ew, adds)


def _product_gates(p: int, q: int, depth: int) -> GateCount:
    m, n = max(p, q), min(p, q)
    if m == 1:  # a 1x1-bit product is a single AND gate
        return GateCount(and_gates=1, flip_flops=2 * depth)
    return multiplier_gates(m, n, depth)


def layer_nlg(layer: LayerSpec, quant: QuantScheme | None = None,
              pipeline_depth: int = 0) -> GateCount:
    """Estimated gates for ``layer`` under its scheme (or ``quant``).

    Uniform weights use a full array multiplier per product, PoT weights
    cost nothing beyond wiring, and APoT(n) weights cost ``n`` adders at
    the accumulator width.  Element-wise activation products always use
    array multipliers.  Every addition is a ripple-carry adder.
    """
    q = layer.quant if quant is None else quant
    b = layer.bits
    q.check(b.b_w)
    ops = operations(layer)
    total = GateCount()
    for (b_x, width), count in sorted(ops.weight_multiplies.items()):
        if q.kind is QuantKind.UNIFORM:
            total += count * _product_gates(b.b_w, b_x, pipeline_depth)
        elif q.kind is QuantKind.APOT:
            total += (count * q.terms) * adder_gates(width)
    for (l, r), count in sorted(ops.ew_multiplies.items()):
        total += count * _product_gates(l, r, pipeline_depth)
    for width, count in sorted(ops.additions.items()):
        total += count * adder_gates(width)
    return total


def model_nlg(model: ModelSpec, quant: QuantScheme | None = None,
              pipeline_depth: int = 0) -> GateCount:
    total = GateCount()
    for layer in model.layers:
        total += layer_nlg(layer, quant, pipeline_depth)
    return total


# --- CLB capacity -------------------------------------------------------------

@dataclass(frozen=True)
class ResourceRange:
    resource: str
    per_clb: int
    min_gates: int
    max_gates: int

    def __post_init__(self):
        if not 0 <= self.min_gates <= self.max_gates:
            raise InvariantViolation(f"{self.resource}: need 0 <= min <= max gates")
        if self.per_clb < 1:
            raise InvariantViolation(f"{self.resource}: per_clb must be >= 1")


@dataclass(frozen=True)
class ClbCapacityTable:
    era: str
    rows: tuple[ResourceRange, ...]
    total_min: int
    total_max: int
    typical_gates_per_clb: Fraction | None = None

    def __post_init__(self):
        if not 1 <= self.total_min <= self.total_max:
            raise InvariantViolation(f"{self.era}: need 1 <= total_min <= total_max")
        if self.typical_gates_per_clb is not None and self.typical_gates_per_clb <= 0:
            raise InvariantViolation(f"{self.era}: typical gates per CLB must be positive")


LUT4_TABLE = ClbCapacityTable(
    era="lut4",
    rows=(
        ResourceRange("4-input LUT", 2, 1, 9),
        ResourceRange("3-input LUT", 1, 1, 6),
        ResourceRange("flip-flop", 2, 6, 12),
    ),
    total_min=15,
    total_max=48,
    typical_gates_per_clb=Fraction("28.5"),
)

# The per-LUT maximum already carries the +50% uplift for 6-input LUTs.
LUT6_TABLE = ClbCapacityTable(
    era="lut6",
    rows=(
        ResourceRange("6-input LUT", 8, 6, 15),
        ResourceRange("flip-flop", 16, 6, 12),
    ),
    total_min=144,
    total_max=312,
)

CLB_TABLES = {"lut4": LUT4_TABLE, "lut6": LUT6_TABLE}


@dataclass(frozen=True)
class ClbEstimate:
    gates: int
    min_clbs: int
    max_clbs: int
    typical_clbs: int | None

    def to_dict(self) -> dict:
        return {"gates": self.gates, "min_clbs": self.min_clbs, "max_clbs": self.max_clbs,
                "typical_clbs": self.typical_clbs}


def _ceil_div(num, den) -> int:
    return math.ceil(Fraction(num) / Fraction(den))


def clb_estimate(g: GateCount, table: ClbCapacityTable = LUT6_TABLE) -> ClbEstimate:
    """CLBs needed for ``g``: densest packing gives the minimum, sparsest the maximum."""
    total = g.total_gates
    typical = None
    if table.typical_gates_per_clb is not None:
        typical = _ceil_div(total, table.typical_gates_per_clb)
    return ClbEstimate(total, _ceil_div(total, table.total_max), _ceil_div(total, table.total_min),
                       typical)


def _table_number(entry, integer=True):
    value = entry.value
    if isinstance(value, bool) or not isinstance(value, (int, Fraction)):
        raise InvariantViolation(f"{entry.key} must be a number", entry.line, entry.column)
    if integer:
        if Fraction(value).denominator != 1:
            raise InvariantViolation(f"{entry.key} must be an integer", entry.line, entry.column)
        return int(value)
    return Fraction(value)


def parse_clb_table(text: str) -> ClbCapacityTable:
    """Read a capacity table in the spec-file block syntax or its JSON mirror::

        clb_table "custom" {
            era = lut6; total_min = 144; total_max = 312;
            resource "6-input LUT" { per_clb = 8; min = 6; max = 15; }
            resource "flip-flop" { per_clb = 16; min = 6; max = 12; }
        }

    ``typical = 28.5;`` is optional.  The JSON form is
    ``{"clb_table": {"era": ..., "total_min": ..., "total_max": ...,
    "typical": ..., "resources": [{"name", "per_clb", "min", "max"}]}}``.
    """
    if text.lstrip().startswith("{"):
        return _clb_table_from_json(json.loads(text))
    blocks = parse_blocks(text)
    if len(blocks) != 1 or blocks[0].keyword != "clb_table":
        raise SpecSyntaxError("expected exactly one clb_table block")
    block = blocks[0]
    entries = block.entry_map()
    for key in ("era", "total_min", "total_max"):
        if key not in entries:
            raise InvariantViolation(f"clb_table is missing {key!r}", block.line, block.column)
    era = entries["era"].value
    era = era.name if isinstance(era, Ident) else str(era)
    rows = []
    for child in block.children:
        if child.keyword != "resource" or child.label is None:
            raise SpecSyntaxError("clb_table may only contain named resource blocks",
                                  child.line, child.column)
        fields = child.entry_map()
        try:
            rows.append(ResourceRange(child.label, _table_number(fields["per_clb"]),
                                      _table_number(fields["min"]), _table_number(fields["max"])))
        except KeyError as exc:
            raise InvariantViolation(f"resource is missing {exc.args[0]!r}", child.line,
                                     child.column) from None
    typical = _table_number(entries["typical"], integer=False) if "typical" in entries else None
    return ClbCapacityTable(era, tuple(rows), _table_number(entries["total_min"]),
                            _table_number(entries["total_max"]), typical)


def _clb_table_from_json(data) -> ClbCapacityTable:
    try:
        body = data["clb_table"]
        rows = tuple(ResourceRange(r["name"], int(r["per_clb"]), int(r["min"]), int(r["max"]))
                     for r in body.get("resources", []))
        typical = body.get("typical")
        return ClbCapacityTable(str(body["era"]), rows, int(body["total_min"]), int(body["total_max"]),
                                Fraction(str(typical)) if typical is not None else None)
    except (KeyError, TypeError) as exc:
        raise InvariantViolation(f"malformed clb_table JSON: {exc}") from None
