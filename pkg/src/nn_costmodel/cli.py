"""Command-line front end: ``nn-costmodel <subcommand> ...``.

Exit codes:
    0  success
    1  validate found a closed-form/oracle mismatch
    2  input file not found, or bad command-line usage
    3  spec file syntax error
    4  spec or plan failed validation
    5  spec too large for the oracle

Errors are reported as one line on stderr::

    nn-costmodel: <category>: <message>
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from pathlib import Path

from . import __version__, gates, oracle, sweep
from .metrics import BOP_MODES, analyze
from .model import ModelSpec, SpecError, SpecSyntaxError
from .specfile import parse_model_spec

PROG = "nn-costmodel"

EXIT_OK = 0
EXIT_MISMATCH = 1
EXIT_NOT_FOUND = 2
EXIT_SYNTAX = 3
EXIT_INVALID = 4
EXIT_TOO_LARGE = 5

FORMATS = ("text", "json", "csv")
SCI_THRESHOLD = 10 ** 9
NO_COLOR_ENV = "NN_COSTMODEL_NO_COLOR"


class CliError(Exception):
    def __init__(self, code: int, category: str, message: str):
        super().__init__(message)
        self.code = code
        self.category = category


# --- rendering ----------------------------------------------------------------

def fmt_count(value) -> str:
    """Thousands separators, or scientific notation above 10^9."""
    if value is None:
        return "n/a"
    if not isinstance(value, int):
        return str(value)
    if abs(value) > SCI_THRESHOLD:
        return f"{value:.4e}"
    return f"{value:,}"


def styling_enabled(stream) -> bool:
    if os.environ.get(NO_COLOR_ENV):
        return False
    return hasattr(stream, "isatty") and stream.isatty()


def render_table(headers: list[str], rows: list[list], bold: bool = False) -> str:
    cells = [[fmt_count(c) if not isinstance(c, str) else c for c in row] for row in rows]
    widths = [max([len(h)] + [len(r[k]) for r in cells]) for k, h in enumerate(headers)]
    numeric = [bool(rows) and all(not isinstance(row[k], str) for row in rows)
               for k in range(len(headers))]

    def line(values):
        parts = [v.rjust(w) if num else v.ljust(w) for v, w, num in zip(values, widths, numeric)]
        return "  ".join(parts).rstrip()

    head = line(headers)
    if bold:
        head = f"\033[1m{head}\033[0m"
    rule = "  ".join("-" * w for w in widths)
    return "\n".join([head, rule] + [line(r) for r in cells]) + "\n"


def render_csv(headers: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(headers)
    for row in rows:
        writer.writerow(["null" if c is None else c for c in row])
    return buf.getvalue()


def render_json(data) -> str:
    return json.dumps(data, indent=2) + "\n"


def _tabular(fmt: str, headers, rows, data, bold: bool, title: str | None = None) -> str:
    if fmt == "json":
        return render_json(data)
    if fmt == "csv":
        return render_csv(headers, rows)
    text = render_table(headers, rows, bold)
    return f"{title}\n\n{text}" if title else text


# --- input --------------------------------------------------------------------

def _read_text(path: str) -> str:
    try:
        return Path(path).read_text(encoding="utf-8")
    except FileNotFoundError:
        raise CliError(EXIT_NOT_FOUND, "file not found", path) from None
    except OSError as exc:
        raise CliError(EXIT_NOT_FOUND, "cannot read", f"{path}: {exc.strerror}") from None


def _load_model(path: str) -> ModelSpec:
    text = _read_text(path)
    return parse_model_spec(text, "json" if Path(path).suffix.lower() == ".json" else "text")


def _warn(model: ModelSpec) -> None:
    for message in model.warnings:
        print(f"{PROG}: warning: {message}", file=sys.stderr)


# --- subcommands ----------------------------------------------------------------

def cmd_analyze(args, fmt: str, bold: bool) -> tuple[str, int]:
    model = _load_model(args.spec)
    _warn(model)
    report = analyze(model, args.bop_mode)
    headers = ["layer", "kind", "rm", "bop", "nabs"]
    rows = [[m.name, m.kind, m.rm, m.bop, m.nabs] for m in report.per_layer]
    totals = report.totals
    rows.append(["total", "", totals["rm"], totals["bop"], totals["nabs"]])
    title = f"model {report.model} (bop mode: {report.bop_mode})"
    return _tabular(fmt, headers, rows, report.to_dict(), bold, title), EXIT_OK


def cmd_sweep(args, fmt: str, bold: bool) -> tuple[str, int]:
    plan = sweep.parse_sweep_plan(_read_text(args.plan))
    result = sweep.run_sweep(plan, include_timestamp=not args.no_timestamp)
    if fmt == "json":
        return sweep.sweep_to_json(result), EXIT_OK
    if fmt == "csv":
        return sweep.sweep_to_csv(result), EXIT_OK
    headers = [a.param for a in plan.axes] + [plan.metric]
    rows = [[str(c) for c in coords] + [value] for coords, value in result.points]
    return _tabular("text", headers, rows, None, bold, f"sweep {plan.name}"), EXIT_OK


_AXES = {"bw": "b_w", "bi": "b_i", "ba": "b_a"}


def cmd_compare(args, fmt: str, bold: bool) -> tuple[str, int]:
    layers = sweep.reference_fixture() if args.spec is None else list(_load_model(args.spec).layers)
    if args.schemes:
        table = sweep.scheme_comparison(layers)
        headers = ["layer", "kind"] + [f"x_w={x}" for x in table.adders]
        rows = [[name, kind, *values] for name, kind, values in table.rows]
        data = {
            "report": "scheme_comparison",
            "x_w": list(table.adders),
            "schemes": list(table.schemes),
            "layers": [{"name": n, "kind": k, "nabs": list(v)} for n, k, v in table.rows],
        }
        if args.spec is None:
            data["fixture"] = sweep.FIXTURE_NOTE
        title = "NABS by adders per weight multiply (" + ", ".join(
            f"{x}={s}" for x, s in zip(table.adders, table.schemes)) + ")"
        return _tabular(fmt, headers, rows, data, bold, title), EXIT_OK
    if args.axis is None:
        raise CliError(EXIT_NOT_FOUND, "usage", "compare needs --axis or --schemes")
    which = _AXES[args.axis]
    report = sweep.bitwidth_reduction_report(layers, which, args.hi, args.lo, args.bop_mode)
    headers = ["layer", "kind", f"bop@{args.hi}", f"bop@{args.lo}", "reduction_%"]
    rows = [[r.layer, r.kind, r.bop_hi, r.bop_lo, f"{r.percent:.2f}"] for r in report]
    data = {
        "report": "bitwidth_reduction",
        "bitwidth": which,
        "from": args.hi,
        "to": args.lo,
        "bop_mode": args.bop_mode,
        "layers": [{"name": r.layer, "kind": r.kind, "bop_from": r.bop_hi, "bop_to": r.bop_lo,
                    "reduction_percent": round(r.percent, 6)} for r in report],
    }
    if args.spec is None:
        data["fixture"] = sweep.FIXTURE_NOTE
    title = f"BOP reduction for {which} {args.hi} -> {args.lo}"
    return _tabular(fmt, headers, rows, data, bold, title), EXIT_OK


def cmd_validate(args, fmt: str, bold: bool) -> tuple[str, int]:
    model = _load_model(args.spec)
    for layer in model.layers:  # refuse before tracing anything
        oracle.check_size(layer)
    results = [oracle.verify(layer, args.seed) for layer in model.layers]
    headers = ["layer", "kind", "metric", "closed_form", "oracle", "delta", "bound", "verdict"]
    rows = []
    for res in results:
        for c in res.checks:
            rows.append([res.layer, res.kind, c.metric, c.closed_form, c.oracle, c.delta,
                         "-" if c.bound is None else c.bound, c.verdict])
    ok = all(r.ok for r in results)
    data = {
        "model": model.name,
        "seed": args.seed,
        "ok": ok,
        "layers": [{"name": r.layer, "kind": r.kind, "ok": r.ok,
                    "checks": [{"metric": c.metric, "closed_form": c.closed_form,
                                "oracle": c.oracle, "delta": c.delta, "bound": c.bound,
                                "required": c.required, "verdict": c.verdict}
                               for c in r.checks]} for r in results],
    }
    title = f"model {model.name}: {'ok' if ok else 'MISMATCH'} (seed {args.seed})"
    return _tabular(fmt, headers, rows, data, bold, title), EXIT_OK if ok else EXIT_MISMATCH


def cmd_gates(args, fmt: str, bold: bool) -> tuple[str, int]:
    model = _load_model(args.spec)
    table = gates.parse_clb_table(_read_text(args.table)) if args.table else gates.CLB_TABLES[args.era]
    headers = ["layer", "kind", "and", "half_adders", "full_adders", "flip_flops", "gates",
               "clb_min", "clb_typical", "clb_max"]
    rows, layers = [], []
    total = gates.GateCount()
    for layer in model.layers:
        g = gates.layer_nlg(layer, pipeline_depth=args.pipeline_depth)
        total += g
        est = gates.clb_estimate(g, table)
        rows.append([layer.name, layer.kind, g.and_gates, g.half_adders, g.full_adders,
                     g.flip_flops, g.total_gates, est.min_clbs, est.typical_clbs, est.max_clbs])
        layers.append({"name": layer.name, "kind": layer.kind, "gates": g.to_dict(),
                       "clbs": est.to_dict()})
    est = gates.clb_estimate(total, table)
    rows.append(["total", "", total.and_gates, total.half_adders, total.full_adders,
                 total.flip_flops, total.total_gates, est.min_clbs, est.typical_clbs, est.max_clbs])
    data = {"model": model.name, "era": table.era, "pipeline_depth": args.pipeline_depth,
            "layers": layers, "total": {"gates": total.to_dict(), "clbs": est.to_dict()}}
    title = f"model {model.name}: gate estimate, {table.era} CLB capacity"
    return _tabular(fmt, headers, rows, data, bold, title), EXIT_OK


# --- entry point ----------------------------------------------------------------

def _nonnegative(text: str) -> int:
    value = int(text)
    if value < 0:
        raise argparse.ArgumentTypeError("must be >= 0")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog=PROG,
        description="RM, BOP, NABS and gate-count estimates for neural-network layers.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=FORMATS,
                        help="output format (default: text on a terminal, json otherwise)")
    common.add_argument("-o", "--output", help="write to this file instead of stdout")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    p = sub.add_parser("analyze", parents=[common], help="per-layer RM/BOP/NABS and totals")
    p.add_argument("spec", help="model spec file (.json for the JSON form)")
    p.add_argument("--bop-mode", choices=BOP_MODES, default="table")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("sweep", parents=[common], help="evaluate a metric over a parameter grid")
    p.add_argument("plan", help="sweep plan file")
    p.add_argument("--no-timestamp", action="store_true",
                   help="omit the timestamp from JSON metadata")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("compare", parents=[common],
                       help="BOP reduction for a bitwidth change, or NABS across schemes")
    p.add_argument("spec", nargs="?", help="model spec file (default: the reference fixture)")
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--axis", choices=sorted(_AXES))
    group.add_argument("--schemes", action="store_true")
    p.add_argument("--from", dest="hi", type=int, default=8)
    p.add_argument("--to", dest="lo", type=int, default=4)
    p.add_argument("--bop-mode", choices=BOP_MODES, default="table")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("validate", parents=[common], help="check closed forms against the oracle")
    p.add_argument("spec")
    p.add_argument("--seed", type=int, default=0, help="seed for the reservoir mask")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("gates", parents=[common], help="logic-gate and CLB estimates")
    p.add_argument("spec")
    p.add_argument("--era", choices=sorted(gates.CLB_TABLES), default="lut6")
    p.add_argument("--pipeline-depth", type=_nonnegative, default=0)
    p.add_argument("--table", help="custom CLB capacity table file (overrides --era)")
    p.set_defaults(func=cmd_gates)
    return parser


def _one_line(message: str) -> str:
    return " ".join(str(message).split())


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    to_file = args.output is not None
    fmt = args.format or ("text" if not to_file and sys.stdout.isatty() else "json")
    bold = fmt == "text" and not to_file and styling_enabled(sys.stdout)
    try:
        try:
            text, code = args.func(args, fmt, bold)
        except oracle.OracleSizeError as exc:
            raise CliError(EXIT_TOO_LARGE, "too large for oracle", str(exc)) from None
        except SpecSyntaxError as exc:
            raise CliError(EXIT_SYNTAX, "syntax error", str(exc)) from None
        except json.JSONDecodeError as exc:
            raise CliError(EXIT_SYNTAX, "syntax error",
                           f"line {exc.lineno}, column {exc.colno}: {exc.msg}") from None
        except (SpecError, ValueError) as exc:
            raise CliError(EXIT_INVALID, "invalid", str(exc)) from None
        if to_file:
            Path(args.output).write_text(text)
        else:
            sys.stdout.write(text)
        return code
    except CliError as exc:
        print(f"{PROG}: {exc.category}: {_one_line(exc)}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
