"""Command-line surface: simulate, fit, predict, bench, report.

Every command is a pure function of its flags plus input file bytes, so
repeated invocations reproduce identical output bytes.  Wall-clock timings
therefore never enter the primary artifacts: `fit` omits the measured time
from the model document (it goes to stderr), and `bench` routes per-cell
times to a separate .timings.csv sidecar.

Exit codes: 0 success, 1 usage error (help text on stderr), 2 data or fit
error (diagnostics on stderr).
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__, bench as bench_mod
from .bench import (
    PLAN_SCHEMA_VERSION,
    desk_plan,
    emit_plot,
    load_plan,
    read_results_csv,
    run,
    summarize,
    write_results_csv,
    write_summary_csv,
    write_timings_csv,
)
from .core import (
    Dataset,
    FitError,
    InvalidArgumentError,
    InvalidSpecError,
    LoadError,
    SeededRng,
    UndefinedMetricError,
    atomic_write_text,
)
from .ensembles import PRESETS, algo_from_doc, fit_any
from .io import MODEL_SCHEMA_VERSION, load_model, model_to_doc
from .simgen import GENERATOR_VERSION, SimCondition, generate_with_flips

SEED_ENV_VAR = "STACKBENCH_SEED"


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems as exit code 1, not 2."""

    def error(self, message):
        self.print_help(sys.stderr)
        sys.stderr.write(f"\nerror: {message}\n")
        raise _UsageError(message)


def _fmt_float(x: float) -> str:
    return repr(float(x))


# --------------------------------------------------------------------------
# CSV input

def _read_table(path) -> tuple:
    """(header, float matrix); errors name the offending row and column."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as handle:
            reader = csv.reader(handle)
            table = [row for row in reader if row]
    except OSError as exc:
        raise LoadError(f"cannot read {path}: {exc}")
    if not table:
        raise LoadError(f"{path} is empty")
    header = [c.strip() for c in table[0]]
    if len(table) == 1:
        raise LoadError(f"{path} has a header but no data rows")
    X = np.empty((len(table) - 1, len(header)), dtype=np.float64)
    for ri, row in enumerate(table[1:], start=2):
        if len(row) != len(header):
            raise LoadError(
                f"{path}: row {ri} has {len(row)} fields, header has {len(header)}")
        for ci, cell in enumerate(row):
            try:
                X[ri - 2, ci] = float(cell)
            except ValueError:
                raise LoadError(
                    f"{path}: row {ri}, column {header[ci]!r}: "
                    f"non-numeric value {cell!r}")
    return header, X


def load_csv(path, label: str) -> Dataset:
    """Dataset from a headed CSV; the label column may sit anywhere."""
    header, X = _read_table(path)
    if label not in header:
        raise LoadError(
            f"{path}: no column named {label!r} (columns: {', '.join(header)})")
    li = header.index(label)
    y = X[:, li]
    bad = np.flatnonzero((y != 0.0) & (y != 1.0))
    if bad.size:
        raise LoadError(
            f"{path}: row {bad[0] + 2}, column {label!r}: "
            f"label must be 0 or 1, got {y[bad[0]]!r}")
    keep = [ci for ci in range(len(header)) if ci != li]
    names = tuple(header[ci] for ci in keep)
    return Dataset(X[:, keep], y.astype(np.int64), names)


# --------------------------------------------------------------------------
# seed resolution: flag > environment > default 0

def _resolve_seed(flag_value) -> int:
    if flag_value is not None:
        return flag_value
    env = os.environ.get(SEED_ENV_VAR)
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise InvalidArgumentError(
                f"{SEED_ENV_VAR} must be an integer, got {env!r}")
    return 0


def _resolve_algo(name_or_path: str):
    if name_or_path in PRESETS:
        return PRESETS[name_or_path]()
    if os.path.exists(name_or_path):
        try:
            with open(name_or_path, "r", encoding="utf-8") as handle:
                doc = json.load(handle)
        except json.JSONDecodeError as exc:
            raise LoadError(f"{name_or_path} is not valid JSON: {exc}")
        return algo_from_doc(doc)
    raise LoadError(
        f"--algo {name_or_path!r} is neither a preset "
        f"({', '.join(PRESETS)}) nor a spec document path")


# --------------------------------------------------------------------------
# commands

def _cmd_simulate(args) -> int:
    condition = SimCondition.from_id(args.condition)
    seed = _resolve_seed(args.seed)
    data, flipped = generate_with_flips(condition, args.n, SeededRng(seed))
    buf = [",".join(data.feature_names + ("y",))]
    for i in range(data.n_rows):
        cells = [_fmt_float(v) for v in data.features[i]]
        cells.append(str(int(data.labels[i])))
        buf.append(",".join(cells))
    atomic_write_text(args.out, "\n".join(buf) + "\n")
    meta = {
        "format": "stackbench-dataset-meta",
        "generator_version": GENERATOR_VERSION,
        "condition": condition.to_doc(),
        "condition_id": condition.condition_id,
        "n": args.n,
        "seed": seed,
        "n_flipped": int(flipped.size),
    }
    atomic_write_text(str(args.out) + ".meta.json", json.dumps(meta, indent=2) + "\n")
    print(f"wrote {data.n_rows} rows to {args.out}")
    return 0


def _cmd_fit(args) -> int:
    algo = _resolve_algo(args.algo)
    data = load_csv(args.data, args.label)
    seed = _resolve_seed(args.seed)
    model = fit_any(algo, data, SeededRng(seed))
    doc = model_to_doc(model)
    # the model file is a deterministic artifact; measured time is not a result
    del doc["fit_seconds"]
    atomic_write_text(args.model_out, json.dumps(doc) + "\n")
    print(f"fit took {model.fit_seconds:.3f}s", file=sys.stderr)
    print(f"wrote model to {args.model_out}")
    return 0


def _cmd_predict(args) -> int:
    model = load_model(args.model)
    header, X = _read_table(args.data)
    if args.label in header and len(header) == model.n_features + 1:
        keep = [ci for ci in range(len(header)) if ci != header.index(args.label)]
        X = X[:, keep]
    probs = model.predict(X)
    atomic_write_text(
        args.out, "prob\n" + "\n".join(_fmt_float(p) for p in probs) + "\n")
    print(f"wrote {probs.size} predictions to {args.out}")
    return 0


def _cmd_bench(args) -> int:
    if args.config == "desk":
        plan = desk_plan(master_seed=_resolve_seed(None))
    else:
        plan = load_plan(args.config)
    if args.threads is not None:
        import dataclasses
        plan = dataclasses.replace(plan, thread_count=args.threads)
    rows = run(plan)
    write_results_csv(rows, args.out)
    root, ext = os.path.splitext(str(args.out))
    write_timings_csv(rows, root + ".timings" + (ext or ".csv"))
    n_err = sum(1 for r in rows if r.error is not None)
    print(f"wrote {len(rows)} rows to {args.out} ({n_err} errors)")
    return 0


def _cmd_report(args) -> int:
    rows = read_results_csv(args.results)
    summary = summarize(rows)
    write_summary_csv(summary, args.summary_out)
    print(f"wrote {len(summary)} summary rows to {args.summary_out}")
    if args.plot_out is not None:
        emit_plot(summary, args.plot_out)
        print(f"wrote plot to {args.plot_out}")
    return 0


# --------------------------------------------------------------------------
# parser

def build_parser() -> _Parser:
    parser = _Parser(
        prog="stackbench",
        description="Stacking ensembles, ML cascades, and a simulation benchmark.",
    )
    parser.add_argument(
        "--version", action="version",
        version=(f"stackbench {__version__} "
                 f"(model schema {MODEL_SCHEMA_VERSION}, "
                 f"plan schema {PLAN_SCHEMA_VERSION})"))
    sub = parser.add_subparsers(dest="command", required=True,
                                parser_class=_Parser)

    p = sub.add_parser("simulate", help="generate a synthetic dataset CSV")
    p.add_argument("--condition", required=True,
                   help="condition id, e.g. linear-low or mixed-high-mis")
    p.add_argument("--n", type=int, required=True, help="number of rows")
    p.add_argument("--seed", type=int, default=None,
                   help=f"master seed (default: ${SEED_ENV_VAR} or 0)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(handler=_cmd_simulate)

    p = sub.add_parser("fit", help="fit an algorithm and save the model")
    p.add_argument("--algo", required=True,
                   help=f"preset ({', '.join(PRESETS)}) or spec JSON path")
    p.add_argument("--data", required=True, help="training CSV path")
    p.add_argument("--label", required=True, help="label column name")
    p.add_argument("--seed", type=int, default=None,
                   help=f"master seed (default: ${SEED_ENV_VAR} or 0)")
    p.add_argument("--model-out", required=True, help="model JSON output path")
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("predict", help="score a CSV with a saved model")
    p.add_argument("--model", required=True, help="model JSON path")
    p.add_argument("--data", required=True, help="feature CSV path")
    p.add_argument("--label", default="y",
                   help="column to drop if present (default: y)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(handler=_cmd_predict)

    p = sub.add_parser("bench", help="run a benchmark plan")
    p.add_argument("--config", required=True,
                   help="plan JSON path, or 'desk' for the built-in plan")
    p.add_argument("--out", required=True, help="results CSV path")
    p.add_argument("--threads", type=int, default=None,
                   help="worker threads (default: plan setting or all cores)")
    p.set_defaults(handler=_cmd_bench)

    p = sub.add_parser("report", help="summarize results and plot")
    p.add_argument("--results", required=True, help="results CSV path")
    p.add_argument("--summary-out", required=True, help="summary CSV path")
    p.add_argument("--plot-out", default=None, help="SVG plot path (optional)")
    p.set_defaults(handler=_cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError:
        return 1
    except SystemExit as exc:  # --version / --help print-and-exit
        return int(exc.code or 0)
    try:
        return args.handler(args)
    except (LoadError, FitError, InvalidArgumentError, InvalidSpecError,
            UndefinedMetricError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
