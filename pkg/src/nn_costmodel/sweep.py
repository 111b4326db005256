"""Parameter sweeps and the comparison reports built on them.

A sweep varies one to three parameters of a base layer over inclusive
grids and evaluates one metric at every point.  Points whose layer is
invalid (a convolution kernel longer than its padded input, an APoT term
count the bitwidth cannot hold) are kept as explicit ``None`` values and
written as ``null``.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from fractions import Fraction

from . import metrics
from .model import (
    SHAPE_FIELDS,
    BitwidthConfig,
    Conv1DSpec,
    DenseSpec,
    ESNSpec,
    InvariantViolation,
    LayerSpec,
    MissingField,
    QuantScheme,
    RecurrentKind,
    RecurrentSpec,
    SpecSyntaxError,
    make_shape,
    shape_values,
)
from .specfile import (
    Ident,
    format_fraction,
    layer_from_block,
    layer_from_dict,
    layer_to_dict,
    parse_blocks,
)

NULL = "null"
METRICS = ("rm", "bop", "nabs")
BIT_PARAMS = ("b_w", "b_i", "b_a", "b_b")
SCHEME_PARAM = "x_w"

FIXTURE_NOTE = ("dense n_i=1000 n_n=2000; conv1d n_i=100 n_s=300 n_k=100 n_f=1; "
                "rnn/lstm/gru n_i=n_s=n_h=100; esn N_r=n_i=n_s=n_o=100 s_p=0.5; 8-bit everywhere")


def reference_fixture(bits: int = 8, quant: QuantScheme | None = None) -> list[LayerSpec]:
    """One layer of each kind at the reference sizes used for the comparison reports."""
    b = BitwidthConfig.uniform(bits)
    q = quant or QuantScheme.uniform()
    return [
        LayerSpec("dense", DenseSpec(n_i=1000, n_n=2000), b, q),
        LayerSpec("conv1d", Conv1DSpec(n_i=100, n_f=1, n_k=100, n_s=300), b, q),
        LayerSpec("rnn", RecurrentSpec(RecurrentKind.RNN, 100, 100, 100), b, q),
        LayerSpec("lstm", RecurrentSpec(RecurrentKind.LSTM, 100, 100, 100), b, q),
        LayerSpec("gru", RecurrentSpec(RecurrentKind.GRU, 100, 100, 100), b, q),
        LayerSpec("esn", ESNSpec(n_r=100, n_i=100, n_o=100, n_s=100, s_p=Fraction(1, 2),
                                 mu=Fraction(1, 2)), b, q),
    ]


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class Axis:
    param: str
    start: int | Fraction
    stop: int | Fraction
    step: int | Fraction

    def values(self) -> list:
        """Inclusive grid; a final partial step is dropped."""
        out, k = [], 0
        while self.start + k * self.step <= self.stop:
            out.append(self.start + k * self.step)
            k += 1
        return out


@dataclass(frozen=True)
class SweepPlan:
    name: str
    base: LayerSpec
    axes: tuple[Axis, ...]
    metric: str = "rm"
    bop_mode: str = "table"

    def __post_init__(self):
        object.__setattr__(self, "axes", tuple(self.axes))
        if not 1 <= len(self.axes) <= 3:
            raise PlanError("a sweep needs 1 to 3 axes")
        if self.metric not in METRICS:
            raise PlanError(f"unknown metric {self.metric!r}; expected one of {', '.join(METRICS)}")
        if self.bop_mode not in metrics.BOP_MODES:
            raise PlanError(f"unknown bop_mode {self.bop_mode!r}")
        allowed = set(SHAPE_FIELDS[self.base.kind]) | set(BIT_PARAMS) | {SCHEME_PARAM}
        seen = set()
        for axis in self.axes:
            if axis.param not in allowed:
                raise PlanError(f"{axis.param!r} is not a parameter of a {self.base.kind} layer")
            if axis.param in seen:
                raise PlanError(f"axis {axis.param!r} given twice")
            seen.add(axis.param)
            if axis.step <= 0:
                raise PlanError(f"axis {axis.param!r}: step must be positive")
            if axis.start > axis.stop:
                raise PlanError(f"axis {axis.param!r}: empty range {axis.start}..{axis.stop}")


@dataclass(frozen=True)
class SweepResult:
    plan: SweepPlan
    grid: tuple[tuple, ...]  # values per axis
    points: tuple[tuple[tuple, int | None], ...]  # (coordinates, value) in grid order
    metadata: dict

    def value_at(self, *coords) -> int | None:
        for point, value in self.points:
            if point == tuple(coords):
                return value
        raise KeyError(coords)


def layer_at(base: LayerSpec, overrides: dict) -> LayerSpec:
    """``base`` with some shape fields, bitwidths or ``x_w`` replaced."""
    shape = dict(shape_values(base.shape))
    bits = {}
    adders = None
    for key, value in overrides.items():
        if key in BIT_PARAMS:
            bits[key] = value
        elif key == SCHEME_PARAM:
            adders = value
        else:
            shape[key] = value
    shape_changed = len(bits) + (adders is not None) < len(overrides)
    new_shape = make_shape(base.kind, shape) if shape_changed else base.shape
    new_bits = base.bits.replace(**bits) if bits else base.bits
    quant = base.quant if adders is None else QuantScheme.for_adders(adders, new_bits.b_w)
    return LayerSpec(base.name, new_shape, new_bits, quant)


def run_sweep(plan: SweepPlan, include_timestamp: bool = True) -> SweepResult:
    """Evaluate ``plan.metric`` at every grid point, in row-major axis order."""
    from . import __version__

    grid = tuple(tuple(axis.values()) for axis in plan.axes)
    names = [axis.param for axis in plan.axes]
    points = []
    for coords in itertools.product(*grid):
        try:
            layer = layer_at(plan.base, dict(zip(names, coords)))
            value = metrics.metric(layer, plan.metric, plan.bop_mode)
        except InvariantViolation:
            value = None
        points.append((coords, value))
    meta = {"tool": "nn_costmodel", "version": __version__}
    if include_timestamp:
        meta["timestamp"] = datetime.now(timezone.utc).isoformat(timespec="seconds")
    return SweepResult(plan, grid, tuple(points), meta)


# --- serialization ------------------------------------------------------------

def _cell(value) -> str:
    if value is None:
        return NULL
    if isinstance(value, Fraction):
        return format_fraction(value)
    return str(value)


def _json_scalar(value):
    if isinstance(value, Fraction):
        return value.numerator if value.denominator == 1 else format_fraction(value)
    return value


def sweep_to_csv(result: SweepResult) -> str:
    """Columns: one per axis in plan order, then ``metric``, then ``value`` (``null`` if unavailable)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow([axis.param for axis in result.plan.axes] + ["metric", "value"])
    for coords, value in result.points:
        writer.writerow([_cell(c) for c in coords] + [result.plan.metric, _cell(value)])
    return buf.getvalue()


def plan_to_dict(plan: SweepPlan) -> dict:
    return {
        "name": plan.name,
        "metric": plan.metric,
        "bop_mode": plan.bop_mode,
        "layer": layer_to_dict(plan.base),
        "axes": [{"param": a.param, "start": _json_scalar(a.start), "stop": _json_scalar(a.stop),
                  "step": _json_scalar(a.step)} for a in plan.axes],
    }


def _nest(values: list, shape: list[int]):
    if len(shape) == 1:
        return values
    stride = len(values) // shape[0]
    return [_nest(values[k * stride:(k + 1) * stride], shape[1:]) for k in range(shape[0])]


def sweep_to_dict(result: SweepResult) -> dict:
    values = [v for _, v in result.points]
    return {
        "plan": plan_to_dict(result.plan),
        "metadata": result.metadata,
        "axes": [{"param": a.param, "values": [_json_scalar(v) for v in vals]}
                 for a, vals in zip(result.plan.axes, result.grid)],
        "values": _nest(values, [len(vals) for vals in result.grid]),
    }


def sweep_to_json(result: SweepResult) -> str:
    return json.dumps(sweep_to_dict(result), indent=2) + "\n"


# --- plan files -----------------------------------------------------------------

def _axis_number(entry):
    value = entry.value
    if isinstance(value, bool) or not isinstance(value, (int, Fraction)):
        raise InvariantViolation(f"axis {entry.key} must be a number", entry.line, entry.column)
    return value if isinstance(value, int) or value.denominator != 1 else int(value)


def parse_sweep_plan(text: str) -> SweepPlan:
    """Read a sweep plan::

        sweep "dense_rm" {
            metric = rm;                 # rm | bop | nabs
            bop_mode = table;            # optional
            layer "base" dense { n_i = 100; n_n = 100; bits { w = 8; i = 8; a = 8; b = 8; } quant = uniform; }
            axis "n_i" { start = 100; stop = 1500; step = 100; }
            axis "n_n" { start = 100; stop = 1500; step = 100; }
        }

    or the JSON mirror ``{"sweep": {"name", "metric", "bop_mode", "layer", "axes": [...]}}``.
    """
    if text.lstrip().startswith("{"):
        return _plan_from_json(json.loads(text))
    blocks = parse_blocks(text)
    if len(blocks) != 1 or blocks[0].keyword != "sweep":
        raise SpecSyntaxError("expected exactly one sweep block")
    block = blocks[0]
    entries = block.entry_map()
    metric = entries["metric"].value if "metric" in entries else Ident("rm")
    bop_mode = entries["bop_mode"].value if "bop_mode" in entries else Ident("table")
    layers = block.child_blocks("layer")
    if len(layers) != 1:
        raise MissingField("sweep needs exactly one base layer", block.line, block.column)
    axes = []
    for child in block.child_blocks("axis"):
        fields = child.entry_map()
        missing = [k for k in ("start", "stop", "step") if k not in fields]
        if child.label is None or missing:
            raise MissingField("axis needs a quoted parameter and start/stop/step",
                               child.line, child.column)
        axes.append(Axis(child.label, _axis_number(fields["start"]), _axis_number(fields["stop"]),
                         _axis_number(fields["step"])))
    name = block.label or "sweep"
    return SweepPlan(name, layer_from_block(layers[0]), tuple(axes),
                     getattr(metric, "name", metric), getattr(bop_mode, "name", bop_mode))


def _plan_number(value):
    if isinstance(value, str):
        value = Fraction(value)
    elif isinstance(value, float):
        value = Fraction(repr(value))
    if isinstance(value, Fraction) and value.denominator == 1:
        return int(value)
    return value


def _plan_from_json(data) -> SweepPlan:
    try:
        body = data["sweep"]
        axes = tuple(Axis(a["param"], _plan_number(a["start"]), _plan_number(a["stop"]),
                          _plan_number(a["step"])) for a in body["axes"])
        return SweepPlan(body.get("name", "sweep"), layer_from_dict(body["layer"]), axes,
                         body.get("metric", "rm"), body.get("bop_mode", "table"))
    except (KeyError, TypeError) as exc:
        raise MissingField(f"malformed sweep JSON: missing {exc}") from None


# --- comparison reports ---------------------------------------------------------

@dataclass(frozen=True)
class ReductionRow:
    layer: str
    kind: str
    bop_hi: int
    bop_lo: int

    @property
    def reduction(self) -> Fraction:
        """Fractional BOP saving, 0..1."""
        return Fraction(self.bop_hi - self.bop_lo, self.bop_hi)

    @property
    def percent(self) -> float:
        return float(100 * self.reduction)


def _with_bit(layer: LayerSpec, which: str, value: int) -> LayerSpec:
    bits = layer.bits.replace(**{which: value})
    try:
        return LayerSpec(layer.name, layer.shape, bits, layer.quant)
    except InvariantViolation:
        # BOP ignores the scheme; fall back when APoT no longer fits b_w.
        return LayerSpec(layer.name, layer.shape, bits, QuantScheme.uniform())


def bitwidth_reduction_report(layers: list[LayerSpec], which: str, hi: int, lo: int,
                              bop_mode: str = "table") -> list[ReductionRow]:
    """BOP saving per layer when one bitwidth drops from ``hi`` to ``lo`` bits."""
    if which not in ("b_w", "b_i", "b_a"):
        raise PlanError(f"bitwidth must be b_w, b_i or b_a, got {which!r}")
    if not hi > lo >= 1:
        raise PlanError(f"need hi > lo >= 1, got hi={hi}, lo={lo}")
    rows = []
    for layer in layers:
        hi_bop = metrics.bop(_with_bit(layer, which, hi), bop_mode)
        lo_bop = metrics.bop(_with_bit(layer, which, lo), bop_mode)
        rows.append(ReductionRow(layer.name, layer.kind, hi_bop, lo_bop))
    return rows


@dataclass(frozen=True)
class SchemeComparison:
    adders: tuple[int, ...]  # X_w values, 0 (PoT) .. b_w - 1 (uniform)
    schemes: tuple[str, ...]
    rows: tuple[tuple[str, str, tuple[int, ...]], ...]  # (layer, kind, NABS per X_w)

    def nabs(self, layer: str) -> tuple[int, ...]:
        return next(values for name, _, values in self.rows if name == layer)


def scheme_comparison(layers: list[LayerSpec] | None = None,
                      bits: BitwidthConfig | None = None) -> SchemeComparison:
    """NABS of each layer for every achievable X_w at its weight width.

    Defaults to the reference fixture; ``bits`` overrides every layer's
    bitwidths.  All layers must share b_w so the X_w axis is common.
    """
    if layers is None:
        layers = reference_fixture()
    if bits is not None:
        layers = [LayerSpec(l.name, l.shape, bits, QuantScheme.uniform()) for l in layers]
    widths = {l.bits.b_w for l in layers}
    if len(widths) != 1:
        raise PlanError(f"scheme comparison needs one common b_w, got {sorted(widths)}")
    b_w = widths.pop()
    adders = tuple(range(b_w))
    schemes = tuple(str(QuantScheme.for_adders(x, b_w)) for x in adders)
    rows = []
    for layer in layers:
        values = tuple(metrics.nabs(layer, QuantScheme.for_adders(x, b_w)) for x in adders)
        rows.append((layer.name, layer.kind, values))
    return SchemeComparison(adders, schemes, tuple(rows))
