"""Command-line front end: ``sngem gen|estimate|estimate-chirp|bench|gnss-demo``.

Exit codes: 0 success, 2 usage error, 3 data error, 4 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

from . import bench, chirp, filters, pencil
from .errors import NumericalError, SngemError, ValidationError
from .recordfile import dumps_json, read_record, record_to_text, write_record
from .signal_model import SamplingGrid, make_record, spec_from_dict

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3
EXIT_NUMERICAL = 4

_UNSET = object()  # --snr not given: experiment default applies


# --- argument types -------------------------------------------------------

def _arg_type(fn, what):
    def convert(text):
        try:
            return fn(text)
        except (ValidationError, ValueError) as exc:
            raise argparse.ArgumentTypeError(f"invalid {what} {text!r}: {exc}") from None
    convert.__name__ = what
    return convert


def _snr(text: str):
    if text.lower() in ("none", "inf"):
        return None
    value = float(text)
    if math.isnan(value):
        raise ValueError("SNR cannot be NaN")
    return value


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    return value


def _positive_int(text: str) -> int:
    value = int(text)
    if value < 1:
        raise ValueError("must be >= 1")
    return value


def load_spec_arg(text: str, kind: str):
    """Inline JSON or ``@path`` to a JSON file."""
    if text.startswith("@"):
        try:
            text = Path(text[1:]).read_text(encoding="utf-8")
        except OSError as exc:
            raise ValidationError(f"cannot read spec file: {exc}") from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"spec is not valid JSON: {exc}") from exc
    return spec_from_dict(data, kind)


# --- subcommands ----------------------------------------------------------

def _emit(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_gen(args) -> int:
    spec = load_spec_arg(args.spec, args.kind)
    grid = SamplingGrid.from_rate(args.fs, args.n, args.t0)
    record = make_record(spec, grid, args.filter, args.snr, args.seed)
    if args.out:
        write_record(record, args.out)
    else:
        sys.stdout.write(record_to_text(record))
    return EXIT_OK


def cmd_estimate(args) -> int:
    record = read_record(args.input)
    if record.kind != "multitone":
        raise ValidationError(f"expected a multitone record, got kind = {record.kind}")
    options = pencil.EstimatorOptions(n=args.pencil_n, order=args.order, amp_method=args.amp)
    result = pencil.estimate_multitone(record, options=options)
    _emit(dumps_json(result.to_json(verbose=args.verbose)) + "\n", args.out)
    return EXIT_OK


def cmd_estimate_chirp(args) -> int:
    windows = []
    for path in filter(None, (args.input, args.input2)):
        record = read_record(path)
        if record.kind != "chirp":
            raise ValidationError(f"{path}: expected a chirp record, got kind = {record.kind}")
        windows.append(chirp.ChirpWindow.from_record(record))
    est = chirp.estimate_chirp(windows)
    scenario = chirp.LosScenario(args.carrier, args.angle) if args.carrier is not None else None
    out = est.to_json(scenario)
    if args.verbose:
        out["diagnostics"] = est.diagnostics
    sys.stdout.write(dumps_json(out) + "\n")
    return EXIT_OK


def cmd_bench(args) -> int:
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / f"{args.experiment}.csv"
    if args.experiment == "table2":
        bench.experiment_table2(path)
    elif args.experiment == "fig5":
        kw = {} if args.snr is _UNSET else {"snr_db": args.snr}
        bench.experiment_fig5(path, trials=args.trials or 50, seed=args.seed, **kw)
    elif args.experiment == "table3":
        snr = None if args.snr is _UNSET else args.snr
        bench.experiment_table3(path, snr_db=snr, seed=args.seed)
    else:
        bench.experiment_robustness(path, trials=args.trials or bench.ROBUST_TRIALS, seed=args.seed)
    print(path)
    return EXIT_OK


def _sig4(x: float) -> str:
    return format(x, ".4g") if x else "0"


def cmd_gnss_demo(args) -> int:
    result = bench.experiment_table3(None)
    header = ("angle", "v_ref", "v_sngem", "v_err", "a_ref", "a_sngem", "a_err")
    print("  ".join(f"{h:>10}" for h in header))
    for row in result["rows"]:
        print("  ".join(f"{_sig4(v):>10}" for v in row[:7]))
    return EXIT_OK


# --- parser ---------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sngem", description="Sub-Nyquist generalized-eigenvalue spectrum estimation")
    p.add_argument("--verbose", action="store_true", help="include extra diagnostics in JSON output")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="synthesize a dual-channel signal file")
    g.add_argument("--kind", choices=("multitone", "chirp"), default="multitone")
    g.add_argument("--spec", required=True, help="JSON spec, or @path to a JSON file")
    g.add_argument("--fs", type=float, required=True, help="sampling rate in Hz")
    g.add_argument("--t0", type=float, default=0.0, help="first sample instant in s")
    g.add_argument("--n", type=int, required=True, help="sample count (>= 3)")
    g.add_argument("--filter", type=_arg_type(filters.parse_descriptor, "filter"),
                   default=filters.ideal_differentiator())
    g.add_argument("--snr", type=_arg_type(_snr, "snr"), default=None, help="dB, or 'none'")
    g.add_argument("--seed", type=_arg_type(_u64, "seed"), default=None)
    g.add_argument("--out", help="output path (default: stdout)")
    g.set_defaults(func=cmd_gen)

    e = sub.add_parser("estimate", help="multi-tone estimation from a signal file")
    e.add_argument("--in", dest="input", required=True)
    e.add_argument("--order", type=_arg_type(pencil.parse_order, "order"),
                   default=pencil.RelThreshold())
    e.add_argument("--pencil-n", type=_arg_type(_positive_int, "pencil size"), default=None)
    e.add_argument("--amp", choices=("eq17", "lsq"), default="eq17")
    e.add_argument("--out")
    e.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS)
    e.set_defaults(func=cmd_estimate)

    c = sub.add_parser("estimate-chirp", help="chirp estimation from one or two window files")
    c.add_argument("--in", dest="input", required=True)
    c.add_argument("--in2", dest="input2")
    c.add_argument("--carrier", type=float, help="carrier in Hz; enables kinematics output")
    c.add_argument("--angle", type=float, default=0.0, help="line-of-sight angle in degrees")
    c.add_argument("--verbose", action="store_true", default=argparse.SUPPRESS)
    c.set_defaults(func=cmd_estimate_chirp)

    b = sub.add_parser("bench", help="run a reproduction experiment")
    b.add_argument("--experiment", choices=bench.EXPERIMENTS, required=True)
    b.add_argument("--trials", type=_arg_type(_positive_int, "trial count"), default=None)
    b.add_argument("--seed", type=_arg_type(_u64, "seed"), default=0)
    b.add_argument("--snr", type=_arg_type(_snr, "snr"), default=_UNSET)
    b.add_argument("--out-dir", default=".")
    b.set_defaults(func=cmd_bench)

    d = sub.add_parser("gnss-demo", help="print the GNSS Doppler kinematics table")
    d.set_defaults(func=cmd_gnss_demo)
    return p


def _error_json(exc: Exception) -> str:
    return dumps_json({"error": {"type": type(exc).__name__, "message": str(exc)}}) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    try:
        return args.func(args)
    except NumericalError as exc:
        if args.command.startswith("estimate"):
            sys.stdout.write(_error_json(exc))
        print(f"sngem: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except SngemError as exc:
        if args.command.startswith("estimate"):
            sys.stdout.write(_error_json(exc))
        print(f"sngem: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"sngem: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
