"""Command line front end: ``otkhorn solve | bench | gen``.

Exit codes: 0 converged, 1 usage or validation error, 2 iteration cap hit,
3 numerical failure, 4 dataset missing, 5 output path not writable.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .bench import BenchSpec, DatasetMissing, Experiment, default_jobs, run_bench
from .core import ArgumentError, ConfigurationError, Termination
from .data import (
    gen_synthetic_image,
    l1_ground_cost,
    read_cost_csv,
    read_measure_csv,
    write_idx,
    write_matrix_csv,
    write_measure_csv,
)
from .driver import ApproxRequest, Method, approx_ot

EXIT_OK, EXIT_USAGE, EXIT_MAXITER, EXIT_NUMERIC, EXIT_DATASET, EXIT_UNWRITABLE = 0, 1, 2, 3, 4, 5
TERMINATION_EXIT = {
    Termination.CONVERGED: EXIT_OK,
    Termination.MAX_ITERATIONS: EXIT_MAXITER,
    Termination.NUMERICAL_FAILURE: EXIT_NUMERIC,
}
TRACE_COLUMNS = ("iter", "error", "dual_f", "elapsed_ns")

log = logging.getLogger("otkhorn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; 2 is taken by MaxIterations here.
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _positive(kind):
    def conv(s):
        v = kind(s)
        if not v > 0 or (isinstance(v, float) and not math.isfinite(v)):
            raise argparse.ArgumentTypeError(f"must be positive, got {s}")
        return v

    return conv


def _floats(s: str) -> list[float]:
    return [float(x) for x in s.split(",") if x.strip()]


def _comparisons(s: str) -> list[tuple[str, str]]:
    out = []
    for item in s.split(","):
        a, sep, b = item.strip().partition(":")
        if not sep:
            raise ValueError(f"comparison {item!r} must look like X:Y")
        out.append((a, b))
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="otkhorn", description="Entropic optimal transport solvers.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("solve", help="approximate one transport problem")
    s.add_argument("--method", required=True, choices=[m.value for m in Method])
    s.add_argument("--cost", required=True, help="cost matrix CSV")
    s.add_argument("--r", required=True, help="source measure CSV")
    s.add_argument("--c", required=True, help="target measure CSV")
    s.add_argument("--eps", type=_positive(float), required=True)
    s.add_argument("--eta", type=_positive(float))
    s.add_argument("--eps-prime", type=_positive(float))
    s.add_argument("--max-iter", type=_positive(int))
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", help="guarantee record JSON (stdout if omitted)")
    s.add_argument("--trace", help="per-iteration trace CSV")
    s.add_argument("--plan", help="rounded plan CSV")
    s.add_argument("--assert-bounds", action="store_true")
    s.add_argument("--normalization-trick", action="store_true")

    b = sub.add_parser("bench", help="run a benchmark protocol")
    b.add_argument("--config", help="key=value file; flags override it")
    b.add_argument("--experiment", choices=[e.value for e in Experiment])
    b.add_argument("--methods", help="comma separated methods")
    b.add_argument("--comparisons", help="comma separated X:Y pairs")
    b.add_argument("--pairs", type=_positive(int))
    b.add_argument("--etas", help="comma separated")
    b.add_argument("--eps-grid", help="comma separated")
    b.add_argument("--max-updates", type=_positive(int))
    b.add_argument("--checkpoints", type=_positive(int))
    b.add_argument("--seed", type=int)
    b.add_argument("--side", type=_positive(int))
    b.add_argument("--seeds", type=_positive(int))
    b.add_argument("--mnist-images")
    b.add_argument("--mnist-labels")
    b.add_argument("--no-eta-sweep", action="store_true")
    b.add_argument("--jobs", type=_positive(int), default=None)
    b.add_argument("--out-dir", required=True)

    g = sub.add_parser("gen", help="write synthetic data")
    g.add_argument("--what", required=True, choices=["synthetic", "cost", "idx-fixture"])
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--side", type=_positive(int), default=20)
    g.add_argument("--fg-fraction", type=_positive(float), default=0.1)
    g.add_argument("--count", type=_positive(int), default=3, help="images in an IDX fixture")
    g.add_argument("--out", required=True)
    g.add_argument("--labels-out", help="label file for an IDX fixture")
    return p


# --- solve ------------------------------------------------------------------


def _write_trace(path, report) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(TRACE_COLUMNS)
        for rec in report.trace:
            w.writerow([rec.iter, "%.17g" % rec.error, "%.17g" % rec.dual_f, rec.elapsed_ns])


def _read(fn, path):
    try:
        return fn(path)
    except OSError as e:
        raise ArgumentError(f"cannot read {path}: {e.strerror or e}") from None


def cmd_solve(args) -> int:
    C = _read(read_cost_csv, args.cost)
    r = _read(read_measure_csv, args.r)
    c = _read(read_measure_csv, args.c)
    req = ApproxRequest(
        Method.parse(args.method),
        args.eps,
        eta=args.eta,
        eps_prime=args.eps_prime,
        max_iter=args.max_iter,
        seed=args.seed,
        assert_bounds=args.assert_bounds,
        normalization_trick=args.normalization_trick,
    )
    plan, report, rec = approx_ot(req, C, r, c)
    doc = rec.to_json()
    if args.assert_bounds:
        doc["violations"] = report.violations
    text = json.dumps(doc, indent=2, allow_nan=True)
    if args.out:
        Path(args.out).write_text(text + "\n")
    else:
        print(text)
    if args.trace:
        _write_trace(args.trace, report)
    if args.plan and plan is not None:
        write_matrix_csv(args.plan, plan.entries)
    return TERMINATION_EXIT[report.termination]


# --- bench ------------------------------------------------------------------

_INT_KEYS = {"pairs", "max_updates", "checkpoints", "seed", "side", "seeds", "jobs", "sweep_max_iter", "ref_max_iter"}
_FLOAT_KEYS = {"fg_fraction", "ref_eta"}
_BOOL_KEYS = {"eta_sweep"}


def read_config(path) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected key=value")
        out[key.strip().replace("-", "_")] = val.strip()
    return out


def _coerce(key: str, val):
    if not isinstance(val, str):
        return val
    if key == "methods":
        return [m.strip() for m in val.split(",") if m.strip()]
    if key == "comparisons":
        return _comparisons(val)
    if key in ("etas", "eps_grid"):
        return _floats(val)
    if key in _INT_KEYS:
        return int(val)
    if key in _FLOAT_KEYS:
        return float(val)
    if key in _BOOL_KEYS:
        return val.lower() in ("1", "true", "yes", "on")
    return val


def bench_spec_from(args) -> BenchSpec:
    fields = set(BenchSpec.__dataclass_fields__)
    settings = _read(read_config, args.config) if args.config else {}
    unknown = set(settings) - fields
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    for key in ("experiment", "methods", "comparisons", "pairs", "etas", "eps_grid", "max_updates",
                "checkpoints", "seed", "side", "seeds", "mnist_images", "mnist_labels", "jobs"):
        val = getattr(args, key)
        if val is not None:
            settings[key] = val
    if args.no_eta_sweep:
        settings["eta_sweep"] = False
    settings.setdefault("jobs", default_jobs())
    return BenchSpec(**{k: _coerce(k, v) for k, v in settings.items()})


def cmd_bench(args) -> int:
    spec = bench_spec_from(args)
    res = run_bench(spec, args.out_dir)
    for name, path in res.files.items():
        print(f"{name}: {path}")
    return EXIT_OK


# --- gen --------------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.what == "synthetic":
        img = gen_synthetic_image(args.seed, args.side, args.fg_fraction)
        write_measure_csv(args.out, img.intensities.ravel())
    elif args.what == "cost":
        write_matrix_csv(args.out, l1_ground_cost(args.side).entries)
    else:
        rng = np.random.default_rng(args.seed)
        images = rng.integers(0, 256, size=(args.count, args.side, args.side), dtype=np.uint8)
        images[rng.random(images.shape) < 0.5] = 0
        labels = rng.integers(0, 10, size=args.count, dtype=np.uint8) if args.labels_out else None
        write_idx(args.out, images, labels, args.labels_out)
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "bench": cmd_bench, "gen": cmd_gen}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as e:
        print(f"otkhorn: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        return COMMANDS[args.command](args)
    except DatasetMissing as e:
        print(f"otkhorn: {e}", file=sys.stderr)
        return EXIT_DATASET
    except (ArgumentError, ConfigurationError, ValueError) as e:
        print(f"otkhorn: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as e:
        print(f"otkhorn: cannot write output: {e}", file=sys.stderr)
        return EXIT_UNWRITABLE


if __name__ == "__main__":
    sys.exit(main())
