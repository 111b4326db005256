"""Reading and writing model-spec files.

The text format is a small nested key-value language::

    # comments run to end of line
    model "equalizer" {
        bits { w = 8; i = 8; a = 8; b = 8; }    # default for every layer
        quant = uniform;                        # uniform | pot | apot(n)
        layer "fc1" dense { n_i = 1000; n_n = 2000; }
        layer "res" esn {
            N_r = 100; n_i = 100; n_o = 100; n_s = 100;
            s_p = 0.5; mu = 0.3;
            quant = apot(2);                    # per-layer override
        }
    }

Values are decimal integers, decimal fractions (``0.5``), rationals
(``1/3``), bare identifiers, ``apot(<int>)`` or double-quoted strings.
The same block syntax is reused by sweep plans and CLB capacity tables.

A JSON document with the same field names is accepted as an alternative
encoding; see :func:`model_to_dict` for its shape.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from .model import (
    OPTIONAL_FIELDS,
    SHAPE_FIELDS,
    BitwidthConfig,
    InvariantViolation,
    LayerSpec,
    MissingField,
    ModelSpec,
    QuantScheme,
    SpecError,
    SpecSyntaxError,
    UnknownLayerKind,
    make_shape,
    shape_values,
)


class UnknownField(SpecError):
    """A key that the enclosing block does not accept."""


@dataclass(frozen=True)
class Ident:
    """A bare identifier used as a value (``uniform``, ``lut6``...)."""

    name: str


@dataclass(frozen=True)
class Call:
    """``name(arg)`` value, e.g. ``apot(2)``."""

    name: str
    arg: int


@dataclass
class Entry:
    key: str
    value: Any
    line: int
    column: int


@dataclass
class Block:
    keyword: str
    label: str | None
    kind: str | None
    line: int
    column: int
    entries: list[Entry] = field(default_factory=list)
    children: list[Block] = field(default_factory=list)

    def entry_map(self) -> dict[str, Entry]:
        seen: dict[str, Entry] = {}
        for entry in self.entries:
            if entry.key in seen:
                raise SpecSyntaxError(f"duplicate key {entry.key!r}", entry.line, entry.column)
            seen[entry.key] = entry
        return seen

    def child_blocks(self, keyword: str) -> list[Block]:
        return [child for child in self.children if child.keyword == keyword]


_TOKEN_RE = re.compile(r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<string>"(?:[^"\\\n]|\\.)*")
  | (?P<number>-?\d+(?:\.\d+|/\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<punct>[{}=;()])
""", re.VERBOSE)


@dataclass
class _Token:
    type: str
    text: str
    line: int
    column: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    pos, line, line_start = 0, 1, 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise SpecSyntaxError(f"unexpected character {text[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        if kind == "nl":
            line, line_start = line + 1, m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(_Token(kind, m.group(), line, pos - line_start + 1))
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self, offset: int = 0) -> _Token:
        return self.tokens[min(self.pos + offset, len(self.tokens) - 1)]

    def take(self, type_: str, text: str | None = None) -> _Token:
        tok = self.peek()
        if tok.type != type_ or (text is not None and tok.text != text):
            want = repr(text) if text is not None else type_
            got = repr(tok.text) if tok.type != "eof" else "end of input"
            raise SpecSyntaxError(f"expected {want}, found {got}", tok.line, tok.column)
        self.pos += 1
        return tok

    def parse_file(self) -> list[Block]:
        blocks = []
        while self.peek().type != "eof":
            blocks.append(self.parse_block())
        return blocks

    def parse_block(self) -> Block:
        head = self.take("ident")
        label = kind = None
        if self.peek().type == "string":
            label = _unquote(self.take("string").text)
        if self.peek().type == "ident":
            kind = self.take("ident").text
        block = Block(head.text, label, kind, head.line, head.column)
        self.take("punct", "{")
        while not (self.peek().type == "punct" and self.peek().text == "}"):
            tok = self.peek()
            if tok.type != "ident":
                got = repr(tok.text) if tok.type != "eof" else "end of input"
                raise SpecSyntaxError(f"expected a key or block, found {got}", tok.line, tok.column)
            nxt = self.peek(1)
            if nxt.type == "punct" and nxt.text == "=":
                self.pos += 2
                value = self.parse_value()
                self.take("punct", ";")
                block.entries.append(Entry(tok.text, value, tok.line, tok.column))
            else:
                block.children.append(self.parse_block())
        self.take("punct", "}")
        return block

    def parse_value(self):
        tok = self.peek()
        if tok.type == "number":
            self.pos += 1
            try:
                return _number(tok.text)
            except ZeroDivisionError:
                raise SpecSyntaxError(f"zero denominator in {tok.text}", tok.line, tok.column) from None
        if tok.type == "string":
            self.pos += 1
            return _unquote(tok.text)
        if tok.type == "ident":
            self.pos += 1
            if self.peek().type == "punct" and self.peek().text == "(":
                self.pos += 1
                arg = self.take("number")
                if not re.fullmatch(r"-?\d+", arg.text):
                    raise SpecSyntaxError("call argument must be an integer", arg.line, arg.column)
                self.take("punct", ")")
                return Call(tok.text, int(arg.text))
            return Ident(tok.text)
        got = repr(tok.text) if tok.type != "eof" else "end of input"
        raise SpecSyntaxError(f"expected a value, found {got}", tok.line, tok.column)


def _unquote(text: str) -> str:
    return json.loads(text)


def _number(text: str) -> int | Fraction:
    if re.fullmatch(r"-?\d+", text):
        return int(text)
    return Fraction(text)


def parse_blocks(text: str) -> list[Block]:
    """Parse spec-file text into its generic block tree."""
    return _Parser(text).parse_file()


# --- interpretation ---------------------------------------------------------

def _int_value(entry: Entry) -> int:
    value = entry.value
    if isinstance(value, int):
        return value
    if isinstance(value, Fraction) and value.denominator == 1:
        return int(value)
    raise InvariantViolation(f"{entry.key} must be an integer, got {format_value(value)}",
                             entry.line, entry.column)


def _fraction_value(entry: Entry) -> Fraction:
    if isinstance(entry.value, (int, Fraction)):
        return Fraction(entry.value)
    raise InvariantViolation(f"{entry.key} must be a number, got {format_value(entry.value)}",
                             entry.line, entry.column)


def parse_quant(value, line: int | None = None, column: int | None = None) -> QuantScheme:
    """Interpret ``uniform``, ``pot`` or ``apot(n)`` (identifier, call or string)."""
    if isinstance(value, str):
        m = re.fullmatch(r"\s*(uniform|pot|apot)\s*(?:\(\s*(-?\d+)\s*\))?\s*", value)
        if m is None:
            raise InvariantViolation(f"unknown quantization scheme {value!r}", line, column)
        value = Call(m.group(1), int(m.group(2))) if m.group(2) is not None else Ident(m.group(1))
    if isinstance(value, Ident) and value.name in ("uniform", "pot"):
        return QuantScheme.uniform() if value.name == "uniform" else QuantScheme.pot()
    if isinstance(value, Call) and value.name == "apot":
        try:
            return QuantScheme.apot(value.arg)
        except InvariantViolation as exc:
            raise InvariantViolation(exc.message, line, column) from None
    raise InvariantViolation(f"unknown quantization scheme {format_value(value)}", line, column)


_BITS_KEYS = {"w": "b_w", "i": "b_i", "a": "b_a", "b": "b_b"}


def _bits_from_block(block: Block) -> BitwidthConfig:
    if block.label is not None or block.kind is not None or block.children:
        raise SpecSyntaxError("bits block takes only w, i, a, b entries", block.line, block.column)
    entries = block.entry_map()
    for key, entry in entries.items():
        if key not in _BITS_KEYS:
            raise UnknownField(f"unknown bits key {key!r}; expected w, i, a, b", entry.line, entry.column)
    values = {}
    for key, name in _BITS_KEYS.items():
        if key not in entries:
            raise MissingField(f"bits block is missing {key!r}", block.line, block.column)
        values[name] = _int_value(entries[key])
    try:
        return BitwidthConfig(**values)
    except InvariantViolation as exc:
        raise InvariantViolation(exc.message, block.line, block.column) from None


def _defaults(block: Block) -> tuple[BitwidthConfig | None, QuantScheme | None]:
    bits_blocks = block.child_blocks("bits")
    if len(bits_blocks) > 1:
        raise SpecSyntaxError("more than one bits block", bits_blocks[1].line, bits_blocks[1].column)
    bits = _bits_from_block(bits_blocks[0]) if bits_blocks else None
    entry = block.entry_map().get("quant")
    quant = parse_quant(entry.value, entry.line, entry.column) if entry else None
    return bits, quant


def layer_from_block(block: Block, default_bits: BitwidthConfig | None = None,
                     default_quant: QuantScheme | None = None) -> LayerSpec:
    """Interpret a ``layer "<name>" <kind> { ... }`` block."""
    if block.label is None:
        raise SpecSyntaxError("layer needs a quoted name", block.line, block.column)
    if block.kind is None:
        raise SpecSyntaxError(f"layer {block.label!r} needs a kind", block.line, block.column)
    kind = block.kind
    if kind not in SHAPE_FIELDS:
        raise UnknownLayerKind(f"unknown layer kind {kind!r}; expected one of "
                               f"{', '.join(SHAPE_FIELDS)}", block.line, block.column, block.label)
    for child in block.children:
        if child.keyword != "bits":
            raise UnknownField(f"unexpected block {child.keyword!r} in layer", child.line, child.column,
                               block.label)
    bits, quant = _defaults(block)
    bits = bits or default_bits
    quant = quant or default_quant
    if bits is None:
        raise MissingField("missing required field 'bits'", block.line, block.column, block.label)
    if quant is None:
        raise MissingField("missing required field 'quant'", block.line, block.column, block.label)

    entries = block.entry_map()
    names = SHAPE_FIELDS[kind]
    aliases = {"N_r": "n_r"}
    values = dict(OPTIONAL_FIELDS.get(kind, {}))
    for key, entry in entries.items():
        if key == "quant":
            continue
        name = aliases.get(key, key)
        if name not in names:
            raise UnknownField(f"unknown {kind} key {key!r}", entry.line, entry.column, block.label)
        values[name] = _fraction_value(entry) if name in ("s_p", "mu") else _int_value(entry)
    for name in names:
        if name not in values:
            shown = "N_r" if name == "n_r" else name
            raise MissingField(f"missing required field {shown!r}", block.line, block.column, block.label)
    try:
        shape = make_shape(kind, values)
        return LayerSpec(block.label, shape, bits, quant)
    except InvariantViolation as exc:
        raise InvariantViolation(exc.message, block.line, block.column, block.label) from None


def model_from_block(block: Block) -> ModelSpec:
    if block.keyword != "model":
        raise SpecSyntaxError(f"expected a model block, found {block.keyword!r}", block.line, block.column)
    if block.label is None:
        raise SpecSyntaxError("model needs a quoted name", block.line, block.column)
    for entry in block.entries:
        if entry.key != "quant":
            raise UnknownField(f"unknown model key {entry.key!r}", entry.line, entry.column)
    bits, quant = _defaults(block)
    layers = []
    for child in block.children:
        if child.keyword == "layer":
            layers.append(layer_from_block(child, bits, quant))
        elif child.keyword != "bits":
            raise UnknownField(f"unexpected block {child.keyword!r} in model", child.line, child.column)
    try:
        return ModelSpec(block.label, tuple(layers))
    except InvariantViolation as exc:
        raise InvariantViolation(exc.message, block.line, block.column, exc.layer) from None


def parse_model_spec(text: str, fmt: str = "auto") -> ModelSpec:
    """Parse and fully validate a model spec.

    ``fmt`` is ``"text"``, ``"json"`` or ``"auto"`` (JSON if the first
    non-blank character is ``{``).
    """
    if fmt == "auto":
        fmt = "json" if text.lstrip().startswith("{") else "text"
    if fmt == "json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecSyntaxError(exc.msg, exc.lineno, exc.colno) from None
        return model_from_dict(data)
    blocks = parse_blocks(text)
    if len(blocks) != 1:
        where = blocks[1] if blocks else None
        raise SpecSyntaxError("expected exactly one model block",
                              where.line if where else 1, where.column if where else 1)
    return model_from_block(blocks[0])


def load_model_spec(path: str | Path) -> ModelSpec:
    """Read a spec file; a ``.json`` extension selects the JSON encoding."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    return parse_model_spec(text, "json" if path.suffix.lower() == ".json" else "text")


# --- serialization ----------------------------------------------------------

def format_value(value) -> str:
    if isinstance(value, bool):
        raise TypeError("booleans are not spec values")
    if isinstance(value, int):
        return str(value)
    if isinstance(value, Fraction):
        return format_fraction(value)
    if isinstance(value, Ident):
        return value.name
    if isinstance(value, Call):
        return f"{value.name}({value.arg})"
    if isinstance(value, QuantScheme):
        return str(value)
    if isinstance(value, str):
        return json.dumps(value)
    raise TypeError(f"cannot format {value!r}")


def format_fraction(value: Fraction) -> str:
    """Shortest exact literal: integer, terminating decimal or ``p/q``."""
    if value.denominator == 1:
        return str(value.numerator)
    den = value.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        return f"{value.numerator}/{value.denominator}"
    digits = max(twos, fives)
    scaled = abs(value.numerator) * 10 ** digits // value.denominator
    sign = "-" if value < 0 else ""
    whole, frac = divmod(scaled, 10 ** digits)
    return f"{sign}{whole}.{frac:0{digits}d}"


def layer_to_text(layer: LayerSpec, indent: str = "    ") -> str:
    values = shape_values(layer.shape)
    fields = " ".join(f"{'N_r' if k == 'n_r' else k} = {format_value(v)};" for k, v in values.items())
    b = layer.bits
    return (f"{indent}layer {json.dumps(layer.name)} {layer.kind} {{\n"
            f"{indent}    {fields}\n"
            f"{indent}    bits {{ w = {b.b_w}; i = {b.b_i}; a = {b.b_a}; b = {b.b_b}; }}\n"
            f"{indent}    quant = {layer.quant};\n"
            f"{indent}}}\n")


def dump_model_spec(model: ModelSpec) -> str:
    """Serialize ``model`` to the text format; every layer is fully explicit."""
    body = "".join(layer_to_text(layer) for layer in model.layers)
    return f"model {json.dumps(model.name)} {{\n{body}}}\n"


def _json_number(value):
    if isinstance(value, Fraction):
        return value.numerator if value.denominator == 1 else format_fraction(value)
    return value


def layer_to_dict(layer: LayerSpec) -> dict:
    data = {"name": layer.name, "kind": layer.kind}
    for key, value in shape_values(layer.shape).items():
        data["N_r" if key == "n_r" else key] = _json_number(value)
    b = layer.bits
    data["bits"] = {"w": b.b_w, "i": b.b_i, "a": b.b_a, "b": b.b_b}
    data["quant"] = str(layer.quant)
    return data


def model_to_dict(model: ModelSpec) -> dict:
    """JSON mirror: ``{"model": {"name": ..., "layers": [{"name", "kind", <fields>, "bits", "quant"}]}}``.

    Fractions that are not integers are written as strings (``"0.5"``,
    ``"1/3"``) so they survive a round trip exactly.
    """
    return {"model": {"name": model.name, "layers": [layer_to_dict(l) for l in model.layers]}}


def _json_value(key: str, value):
    if isinstance(value, bool):
        raise InvariantViolation(f"{key} must be a number, got {value!r}")
    if isinstance(value, float):
        return Fraction(repr(value))
    if isinstance(value, str) and key in ("s_p", "mu"):
        try:
            return Fraction(value)
        except ValueError:
            raise InvariantViolation(f"{key} must be a number, got {value!r}") from None
    if isinstance(value, (int, str)):
        return value
    raise InvariantViolation(f"{key} has unsupported value {value!r}")


def _bits_from_dict(data) -> BitwidthConfig:
    if not isinstance(data, dict):
        raise InvariantViolation("bits must be an object with w, i, a, b")
    block = Block("bits", None, None, 0, 0,
                  [Entry(k, _json_value(k, v), None, None) for k, v in data.items()])
    try:
        return _bits_from_block(block)
    except SpecError as exc:
        raise type(exc)(exc.message) from None


def layer_from_dict(data: dict, default_bits=None, default_quant=None) -> LayerSpec:
    if not isinstance(data, dict):
        raise SpecSyntaxError("layer must be a JSON object")
    for key in ("name", "kind"):
        if key not in data:
            raise MissingField(f"layer is missing {key!r}", layer=data.get("name"))
    block = Block("layer", data["name"], data["kind"], None, None)
    for key, value in data.items():
        if key in ("name", "kind", "bits"):
            continue
        if key == "quant":
            block.entries.append(Entry(key, value, None, None))
        else:
            block.entries.append(Entry(key, _json_value(key, value), None, None))
    bits = _bits_from_dict(data["bits"]) if "bits" in data else default_bits
    return layer_from_block(block, bits, default_quant)


def model_from_dict(data: dict) -> ModelSpec:
    if not isinstance(data, dict) or not isinstance(data.get("model"), dict):
        raise SpecSyntaxError("JSON spec must be an object with a 'model' object")
    body = data["model"]
    for key in body:
        if key not in ("name", "layers", "bits", "quant"):
            raise UnknownField(f"unknown model key {key!r}")
    if "name" not in body:
        raise MissingField("model is missing 'name'")
    bits = _bits_from_dict(body["bits"]) if "bits" in body else None
    quant = parse_quant(body["quant"]) if "quant" in body else None
    layers = body.get("layers")
    if not isinstance(layers, list):
        raise MissingField("model is missing a 'layers' list")
    return ModelSpec(body["name"], tuple(layer_from_dict(l, bits, quant) for l in layers))


def dump_model_json(model: ModelSpec) -> str:
    return json.dumps(model_to_dict(model), indent=2) + "\n"
