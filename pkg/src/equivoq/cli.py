"""Command-line front end.

    equivoq rd-curve      --instance inst.json --points 11 --out rd.csv
    equivoq equivocation  --instance inst.json --which all --out eq.json
    equivoq sweep         --instance inst.json --axis key_rate --values 0:2:9 --out sweep.csv
    equivoq oracle-check  --instance inst.json --n 1 --variant pi1 --out report.json

Exit codes: 0 ok, 1 other library error, 2 bad arguments or instance file,
3 infeasible instance, 4 oracle gap below -1e-9, 5 enumeration/grid too large.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys

from . import __version__
from .characterization import (
    Equivocation,
    SearchOptions,
    SecrecyConfig,
    SWEEP_AXES,
    equivocation,
    equivocation_sweep,
    exhaustive_aux_search,
    joint_equivocation,
    reconstruction_equivocation,
)
from .errors import ArgumentError, EquivoqError, InfeasibleError, ResourceError
from .logloss import LogLossPayoff
from .oracle import GAP_TOL, MATCHED_MODE, DisclosureMode, operational_value
from .prob import Pmf
from .ratedist import DEFAULT_TOL, DistortionSpec, rd_curve

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_PARSE = 2
EXIT_INFEASIBLE = 3
EXIT_GAP = 4
EXIT_RESOURCE = 5

MONOTONE_TOL = 1e-9
OUTPUTS = ("source", "reconstruction", "joint")


class InstanceError(ArgumentError):
    pass


def _fmt(x: float) -> str:
    return "{:.12g}".format(x)


def load_instance(path: str) -> SecrecyConfig:
    """Parse an instance file into a SecrecyConfig with field-specific errors."""
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise InstanceError(f"{path}: cannot read ({exc.strerror})") from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise InstanceError(f"{path}: line {exc.lineno} column {exc.colno}: {exc.msg}") from None
    return parse_instance(data, path)


def parse_instance(data, where: str = "instance") -> SecrecyConfig:
    if not isinstance(data, dict):
        raise InstanceError(f"{where}: top level must be an object")

    def field(name, fn):
        if name not in data:
            raise InstanceError(f"{where}: missing field '{name}'")
        try:
            return fn(data[name])
        except (ArgumentError, TypeError, ValueError) as exc:
            raise InstanceError(f"{where}: field '{name}': {exc}") from None

    def distortion(d):
        if not isinstance(d, dict) or "matrix" not in d:
            raise ArgumentError("expected an object with 'matrix' and 'limit'")
        if "limit" not in d:
            raise ArgumentError("missing 'limit'")
        return DistortionSpec.from_json(d)

    def number(x):
        if isinstance(x, bool) or not isinstance(x, (int, float)):
            raise ArgumentError(f"expected a number, got {x!r}")
        return float(x)

    source = field("source", Pmf)
    dist = field("distortion", distortion)
    rate = field("rate", number)
    key_rate = field("key_rate", number)
    try:
        return SecrecyConfig(source, dist, rate, key_rate)
    except ArgumentError as exc:
        raise InstanceError(f"{where}: {exc}") from None


def parse_values(text: str) -> list:
    """'a,b,c' or 'start:stop:count' (inclusive, evenly spaced)."""
    try:
        if ":" in text:
            start, stop, count = text.split(":")
            count = int(count)
            if count < 1:
                raise ValueError
            if count == 1:
                vals = [float(start)]
            else:
                a, b = float(start), float(stop)
                vals = [a + (b - a) * i / (count - 1) for i in range(count)]
        else:
            vals = [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise ArgumentError(f"cannot parse values {text!r}; use 'a,b,c' or 'start:stop:count'") from None
    if not vals or not all(math.isfinite(v) for v in vals):
        raise ArgumentError("sweep values must be finite and nonempty")
    return vals


def _search_options(args) -> SearchOptions:
    base = {}
    if getattr(args, "search_options", None):
        with open(args.search_options, encoding="utf-8") as fh:
            base = json.load(fh)
        base = SearchOptions.from_json(base).to_json()
    if args.restarts is not None:
        base["restarts"] = args.restarts
    if args.aux_card is not None:
        base["aux_cardinality"] = args.aux_card
    base["seed"] = args.seed
    if args.tol is not None:
        base["tol"] = args.tol
    return SearchOptions.from_json(base)


def _metadata(args, **extra) -> dict:
    meta = {"tool": "equivoq", "version": __version__, "command": args.command, "seed": args.seed,
            "tol": args.tol}
    meta.update(extra)
    return meta


def _emit(text: str, out_path):
    if out_path:
        with open(out_path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump_json(doc) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def cmd_rd_curve(args) -> int:
    cfg = load_instance(args.instance)
    tol = DEFAULT_TOL if args.tol is None else args.tol
    points = rd_curve(cfg.source, cfg.distortion, args.points, tol=tol)
    rows = [(_fmt(p.distortion), _fmt(p.rate), _fmt(p.slope)) for p in points]
    _emit(_csv_text(["distortion", "rate", "slope"], rows), args.out)
    return EXIT_OK


def _selected(which: str) -> list:
    return list(Equivocation) if which == "all" else [Equivocation.parse(which)]


def cmd_equivocation(args) -> int:
    cfg = load_instance(args.instance)
    opts = _search_options(args)
    results = {}
    warnings = []
    for which in _selected(args.which):
        grid = None
        if args.grid_step is not None and which is not Equivocation.SOURCE:
            grid = exhaustive_aux_search(cfg, args.grid_step, args.grid_aux, which)
            solver = reconstruction_equivocation if which is Equivocation.RECONSTRUCTION else joint_equivocation
            res = solver(cfg, opts, seeds=[grid.optimizer])
        else:
            res = equivocation(cfg, which, opts)
        doc = res.to_json()
        if grid is not None:
            doc["grid"] = grid.to_json()
        if res.diagnostics.get("converged") is False:
            warnings.append(f"{which.value}: best restart stopped at the iteration cap")
        results[which.value] = doc
    meta = _metadata(args, instance=cfg.to_json(), search_options=opts.to_json(),
                     grid_step=args.grid_step, warnings=warnings)
    for w in warnings:
        print(f"warning: {w}", file=sys.stderr)
    _emit(_dump_json({"metadata": meta, "results": results}), args.out)
    return EXIT_OK


def _monotone_violations(values, column, tol=MONOTONE_TOL) -> list:
    return [i for i in range(1, len(column)) if column[i] < column[i - 1] - tol]


def cmd_sweep(args) -> int:
    cfg = load_instance(args.instance)
    values = parse_values(args.values)
    outputs = [o.strip() for o in args.outputs.split(",") if o.strip()]
    for o in outputs:
        if o not in OUTPUTS:
            raise ArgumentError(f"unknown output {o!r}; choose from {', '.join(OUTPUTS)}")
    outputs = [o for o in OUTPUTS if o in outputs]
    opts = _search_options(args)
    columns = {o: [r.value for r in equivocation_sweep(cfg, args.axis, values, o, opts)] for o in outputs}

    checks = outputs if args.axis == "key_rate" else (["source"] if args.axis == "distortion_limit" else [])
    for o in checks:
        if o not in columns:
            continue
        for i in _monotone_violations(values, columns[o]):
            print(
                f"warning: {o} equivocation decreases from {_fmt(columns[o][i - 1])} to {_fmt(columns[o][i])} "
                f"between {args.axis} = {_fmt(values[i - 1])} and {_fmt(values[i])}",
                file=sys.stderr,
            )
    header = ["axis_value"] + [f"{o}_eq" for o in outputs]
    rows = [[_fmt(v)] + [_fmt(columns[o][i]) for o in outputs] for i, v in enumerate(values)]
    _emit(_csv_text(header, rows), args.out)
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    cfg = load_instance(args.instance)
    variant = LogLossPayoff.parse(args.variant)
    mode = DisclosureMode.parse(args.mode) if args.mode else MATCHED_MODE[variant]
    opts = _search_options(args)
    report = operational_value(args.n, cfg, mode, variant, distortion_filter=not args.no_distortion_filter,
                               opts=opts)
    meta = _metadata(args, instance=cfg.to_json(), search_options=opts.to_json(),
                     distortion_filter=not args.no_distortion_filter)
    _emit(_dump_json({"metadata": meta, "report": report.to_json()}), args.out)
    if args.dump_codes:
        with open(args.dump_codes, "w", encoding="utf-8") as fh:
            fh.write(_dump_json(report.best_code.to_json()))
    if report.gap is not None and report.gap < -GAP_TOL:
        print(
            f"error: operational value {report.operational_value!r} exceeds the characterization "
            f"{report.characterization_value!r} (gap {report.gap:.3g})",
            file=sys.stderr,
        )
        return EXIT_GAP
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="equivoq", description="Equivocation with a distortion-constrained receiver")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--instance", required=True, help="instance JSON file")
        p.add_argument("--out", help="output path (default stdout)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--tol", type=float, default=None, help="override the solver tolerance")

    def search(p):
        p.add_argument("--restarts", type=int, default=None)
        p.add_argument("--aux-card", type=int, default=None, help="auxiliary alphabet size")
        p.add_argument("--search-options", help="SearchOptions JSON file; flags override it")

    p = sub.add_parser("rd-curve", help="rate-distortion curve as CSV")
    common(p)
    p.add_argument("--points", type=int, default=11)
    p.set_defaults(func=cmd_rd_curve)

    p = sub.add_parser("equivocation", help="optimal equivocation values as JSON")
    common(p)
    search(p)
    p.add_argument("--which", choices=list(OUTPUTS) + ["all"], default="all")
    p.add_argument("--grid-step", type=float, default=None,
                   help="also run the exhaustive grid with this step and seed the ascent with its best point")
    p.add_argument("--grid-aux", type=int, default=2, help="auxiliary alphabet size for the grid")
    p.set_defaults(func=cmd_equivocation)

    p = sub.add_parser("sweep", help="equivocation along one parameter axis as CSV")
    common(p)
    search(p)
    p.add_argument("--axis", choices=SWEEP_AXES, required=True)
    p.add_argument("--values", required=True, help="'a,b,c' or 'start:stop:count'")
    p.add_argument("--outputs", default=",".join(OUTPUTS), help="comma-separated subset of source,reconstruction,joint")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle-check", help="brute-force operational value against the characterization")
    common(p)
    search(p)
    p.add_argument("--n", type=int, default=1, help="blocklength")
    p.add_argument("--variant", choices=[v.value for v in LogLossPayoff], default="pi1")
    p.add_argument("--mode", choices=[m.value for m in DisclosureMode], default=None,
                   help="defaults to the mode matched with --variant")
    p.add_argument("--no-distortion-filter", action="store_true", help="let codes violating D compete")
    p.add_argument("--dump-codes", metavar="PATH", help="write the best code's tables to PATH as JSON")
    p.set_defaults(func=cmd_oracle_check)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "points", 1) < 1 or getattr(args, "n", 1) < 1:
        parser.error("--points and --n must be >= 1")
    try:
        return args.func(args)
    except ArgumentError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except InfeasibleError as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except ResourceError as exc:
        print(f"too large: {exc}", file=sys.stderr)
        return EXIT_RESOURCE
    except (EquivoqError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
