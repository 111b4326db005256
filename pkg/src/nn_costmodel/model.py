"""Layer, precision and quantization types.

Every type here is a frozen dataclass that validates itself on construction,
so an instance that exists is an instance that satisfies its invariants.
Soft violations (assumptions the cost formulas rely on but can still be
evaluated without) are reported by :func:`layer_warnings` instead.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Union


class SpecError(Exception):
    """Base class for every model-spec problem.

    ``line`` and ``column`` are 1-based and set when the problem can be
    traced to a position in a spec file.
    """

    def __init__(self, message: str, line: int | None = None, column: int | None = None,
                 layer: str | None = None):
        self.message = message
        self.line = line
        self.column = column
        self.layer = layer
        super().__init__(str(self))

    def __str__(self) -> str:
        where = []
        if self.line is not None:
            where.append(f"line {self.line}, column {self.column}")
        if self.layer is not None:
            where.append(f"layer {self.layer!r}")
        prefix = f"{'; '.join(where)}: " if where else ""
        return prefix + self.message


class SpecSyntaxError(SpecError):
    """The text does not follow the spec-file grammar."""


class UnknownLayerKind(SpecError):
    """A layer block names a kind that is not supported."""


class MissingField(SpecError):
    """A required key is absent."""


class InvariantViolation(SpecError, ValueError):
    """A value is well-formed but breaks a domain invariant."""


def ceil_log2(n: int) -> int:
    """Exact ``ceil(log2(n))`` for ``n >= 1`` (0 for ``n == 1``)."""
    if n < 1:
        raise ValueError(f"ceil_log2 needs n >= 1, got {n}")
    return (n - 1).bit_length()


def _require_int(name: str, value, minimum: int) -> None:
    if isinstance(value, bool) or not isinstance(value, int):
        raise InvariantViolation(f"{name} must be an integer, got {value!r}")
    if value < minimum:
        raise InvariantViolation(f"{name} must be >= {minimum}, got {value}")


def _as_fraction(name: str, value) -> Fraction:
    if isinstance(value, bool):
        raise InvariantViolation(f"{name} must be a number, got {value!r}")
    try:
        return Fraction(value) if not isinstance(value, float) else Fraction(str(value))
    except (TypeError, ValueError):
        raise InvariantViolation(f"{name} must be a number, got {value!r}") from None


@dataclass(frozen=True)
class BitwidthConfig:
    """Operand precisions in bits: weights, inputs, activations, bias."""

    b_w: int
    b_i: int
    b_a: int
    b_b: int

    def __post_init__(self):
        for name in ("b_w", "b_i", "b_a", "b_b"):
            _require_int(name, getattr(self, name), 1)

    @classmethod
    def uniform(cls, bits: int) -> BitwidthConfig:
        return cls(bits, bits, bits, bits)

    def replace(self, **changes) -> BitwidthConfig:
        values = {"b_w": self.b_w, "b_i": self.b_i, "b_a": self.b_a, "b_b": self.b_b}
        values.update(changes)
        return BitwidthConfig(**values)


class QuantKind(enum.Enum):
    UNIFORM = "uniform"
    POT = "pot"
    APOT = "apot"


@dataclass(frozen=True)
class QuantScheme:
    """Weight quantization scheme; ``terms`` is the APoT additive-term count."""

    kind: QuantKind
    terms: int | None = None

    def __post_init__(self):
        if self.kind is QuantKind.APOT:
            _require_int("apot term count", self.terms, 1)
        elif self.terms is not None:
            raise InvariantViolation(f"{self.kind.value} quantization takes no term count")

    @classmethod
    def uniform(cls) -> QuantScheme:
        return cls(QuantKind.UNIFORM)

    @classmethod
    def pot(cls) -> QuantScheme:
        return cls(QuantKind.POT)

    @classmethod
    def apot(cls, n: int) -> QuantScheme:
        return cls(QuantKind.APOT, n)

    @classmethod
    def for_adders(cls, adders: int, b_w: int) -> QuantScheme:
        """The scheme whose worst-case adder count per multiply is ``adders``."""
        if adders == 0:
            return cls.pot()
        if adders == b_w - 1:
            return cls.uniform()
        scheme = cls.apot(adders)
        scheme.check(b_w)
        return scheme

    def check(self, b_w: int) -> None:
        if self.kind is QuantKind.APOT and not 1 <= self.terms <= b_w - 2:
            raise InvariantViolation(
                f"apot({self.terms}) needs 1 <= n <= b_w - 2 = {b_w - 2}")

    def __str__(self) -> str:
        if self.kind is QuantKind.APOT:
            return f"apot({self.terms})"
        return self.kind.value


def x_w(scheme: QuantScheme, b_w: int) -> int:
    """Worst-case number of adders to multiply by one quantized weight."""
    if scheme.kind is QuantKind.UNIFORM:
        return b_w - 1
    if scheme.kind is QuantKind.POT:
        return 0
    return scheme.terms


@dataclass(frozen=True)
class DenseSpec:
    n_i: int
    n_n: int

    kind = "dense"

    def __post_init__(self):
        _require_int("n_i", self.n_i, 1)
        _require_int("n_n", self.n_n, 1)


@dataclass(frozen=True)
class Conv1DSpec:
    n_i: int
    n_f: int
    n_k: int
    n_s: int
    padding: int = 0
    dilation: int = 1
    stride: int = 1

    kind = "conv1d"

    def __post_init__(self):
        for name in ("n_i", "n_f", "n_k", "n_s", "dilation", "stride"):
            _require_int(name, getattr(self, name), 1)
        _require_int("padding", self.padding, 0)
        if self.output_size() < 1:
            raise InvariantViolation(
                f"output size < 1 (n_s={self.n_s}, n_k={self.n_k}, padding={self.padding}, "
                f"dilation={self.dilation}, stride={self.stride})")

    def output_size(self) -> int:
        # Python floor division also floors negative numerators, so an
        # oversized kernel yields a value < 1 rather than a spurious 1.
        span = self.n_s + 2 * self.padding - self.dilation * (self.n_k - 1) - 1
        return span // self.stride + 1


class RecurrentKind(enum.Enum):
    RNN = "rnn"
    LSTM = "lstm"
    GRU = "gru"


@dataclass(frozen=True)
class RecurrentSpec:
    cell: RecurrentKind
    n_i: int
    n_h: int
    n_s: int

    def __post_init__(self):
        if not isinstance(self.cell, RecurrentKind):
            raise InvariantViolation(f"unknown recurrent cell {self.cell!r}")
        for name in ("n_i", "n_h", "n_s"):
            _require_int(name, getattr(self, name), 1)

    @property
    def kind(self) -> str:
        return self.cell.value


@dataclass(frozen=True)
class ESNSpec:
    """Leaky echo state network.

    ``s_p`` is the fraction of *retained* reservoir connections: the
    reservoir performs ``s_p * n_r**2`` multiplications per step.
    ``mu`` (leak rate) is carried for completeness; no metric depends on it.
    """

    n_r: int
    n_i: int
    n_o: int
    n_s: int
    s_p: Fraction = Fraction(1)
    mu: Fraction = Fraction(1)

    kind = "esn"

    def __post_init__(self):
        for name in ("n_r", "n_i", "n_o", "n_s"):
            _require_int(name, getattr(self, name), 1)
        object.__setattr__(self, "s_p", _as_fraction("s_p", self.s_p))
        object.__setattr__(self, "mu", _as_fraction("mu", self.mu))
        if not 0 <= self.s_p <= 1:
            raise InvariantViolation(f"s_p must lie in [0, 1], got {self.s_p}")
        if not 0 < self.mu <= 1:
            raise InvariantViolation(f"mu must lie in (0, 1], got {self.mu}")


Shape = Union[DenseSpec, Conv1DSpec, RecurrentSpec, ESNSpec]

# Ordered key lists per layer kind, as they appear in spec files.
SHAPE_FIELDS: dict[str, tuple[str, ...]] = {
    "dense": ("n_i", "n_n"),
    "conv1d": ("n_i", "n_f", "n_k", "n_s", "padding", "dilation", "stride"),
    "rnn": ("n_i", "n_h", "n_s"),
    "lstm": ("n_i", "n_h", "n_s"),
    "gru": ("n_i", "n_h", "n_s"),
    "esn": ("n_r", "n_i", "n_o", "n_s", "s_p", "mu"),
}
OPTIONAL_FIELDS: dict[str, dict[str, object]] = {
    "conv1d": {"padding": 0, "dilation": 1, "stride": 1},
    "esn": {"mu": Fraction(1)},
}
LAYER_KINDS = tuple(SHAPE_FIELDS)


def make_shape(kind: str, values: dict) -> Shape:
    """Build the shape dataclass for ``kind`` from a field mapping."""
    if kind not in SHAPE_FIELDS:
        raise UnknownLayerKind(f"unknown layer kind {kind!r}; expected one of {', '.join(LAYER_KINDS)}")
    if kind == "dense":
        return DenseSpec(**values)
    if kind == "conv1d":
        return Conv1DSpec(**values)
    if kind == "esn":
        return ESNSpec(**values)
    return RecurrentSpec(RecurrentKind(kind), **values)


def shape_values(shape: Shape) -> dict:
    return {name: getattr(shape, name) for name in SHAPE_FIELDS[shape.kind]}


@dataclass(frozen=True)
class LayerSpec:
    name: str
    shape: Shape
    bits: BitwidthConfig
    quant: QuantScheme = field(default_factory=QuantScheme.uniform)

    def __post_init__(self):
        if not isinstance(self.name, str) or not self.name:
            raise InvariantViolation("layer name must be a non-empty string")
        try:
            self.quant.check(self.bits.b_w)
        except InvariantViolation as exc:
            raise InvariantViolation(exc.message, layer=self.name) from None

    @property
    def kind(self) -> str:
        return self.shape.kind

    def with_bits(self, **changes) -> LayerSpec:
        return LayerSpec(self.name, self.shape, self.bits.replace(**changes), self.quant)

    def with_quant(self, quant: QuantScheme) -> LayerSpec:
        return LayerSpec(self.name, self.shape, self.bits, quant)


def layer_warnings(layer: LayerSpec) -> list[str]:
    """Soft violations of the accumulator-dominance assumptions."""
    shape, bits = layer.shape, layer.bits
    warnings = []
    fan_in = shape.n_i * shape.n_k if isinstance(shape, Conv1DSpec) else shape.n_i
    acc = bits.b_w + bits.b_i + ceil_log2(fan_in)
    if not bits.b_b < acc:
        warnings.append(
            f"layer {layer.name!r}: bias width b_b={bits.b_b} is not below the accumulator "
            f"width {acc}; bias additions may overflow the accumulator")
    if isinstance(shape, RecurrentSpec) and shape.n_h < shape.n_i:
        warnings.append(
            f"layer {layer.name!r}: n_h={shape.n_h} < n_i={shape.n_i}; the recurrent accumulator "
            f"is not guaranteed to dominate the input accumulator")
    return warnings


@dataclass(frozen=True)
class ModelSpec:
    name: str
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "layers", tuple(self.layers))
        if not self.layers:
            raise InvariantViolation(f"model {self.name!r} has no layers")
        seen = set()
        for layer in self.layers:
            if layer.name in seen:
                raise InvariantViolation(f"duplicate layer name {layer.name!r}", layer=layer.name)
            seen.add(layer.name)

    @property
    def warnings(self) -> list[str]:
        return [w for layer in self.layers for w in layer_warnings(layer)]

