"""Factorial benchmark runner: conditions x sizes x replications x algorithms.

Execution is organized around cells.  A cell is one (condition, size,
replication) triple; its seed is a stable hash of the plan's master seed and
the cell coordinates, so every algorithm inside the cell sees the identical
generated dataset and the identical 70/30 split no matter how many threads
run the plan or in which order cells finish.

The results CSV is a deterministic artifact: it is a pure function of the
plan and master seed, byte-identical across thread counts and reruns.  Wall
times are machine state, not results, so the fit_seconds column is left
empty there and the measured values go to a separate timings CSV.  In-memory
ResultRow objects always carry the measured times.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from io import StringIO
from typing import Optional

import numpy as np

from .core import (
    FitError,
    InvalidArgumentError,
    LoadError,
    MetricReport,
    SeededRng,
    UndefinedMetricError,
    accuracy,
    atomic_write_text,
    auc,
    confusion_rates,
    split,
    stable_hash,
    stratified_split,
)
from . import learners, simgen
from .ensembles import PRESETS, AlgoSpec, algo_from_doc, algo_to_doc, fit_any
from .simgen import SimCondition, condition_catalog, generate

PLAN_FORMAT = "stackbench-plan"
PLAN_SCHEMA_VERSION = 1

RESULT_COLUMNS = (
    "condition", "relationship", "noise", "misclassification_rate",
    "n", "replication", "algorithm", "cell_seed",
    "accuracy", "auc", "fnr", "fpr", "fit_seconds", "error",
)

SUMMARY_COLUMNS = (
    "condition", "relationship", "noise", "misclassification_rate",
    "n", "algorithm", "n_reps", "n_errors",
    "accuracy_mean", "accuracy_sd", "auc_mean", "auc_sd",
    "fnr_mean", "fnr_sd", "fpr_mean", "fpr_sd",
    "fit_seconds_mean", "fit_seconds_sd",
)


@dataclass(frozen=True)
class BenchPlan:
    conditions: tuple
    sizes: tuple
    replications: int
    algorithms: tuple          # ordered (name, spec) pairs
    train_fraction: float = 0.7
    master_seed: int = 0
    thread_count: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "conditions", tuple(self.conditions))
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "algorithms",
                           tuple((str(n), s) for n, s in self.algorithms))
        if len(self.conditions) == 0:
            raise InvalidArgumentError("plan needs at least one condition")
        for c in self.conditions:
            if not isinstance(c, SimCondition):
                raise InvalidArgumentError(f"not a SimCondition: {c!r}")
        if len(self.sizes) == 0:
            raise InvalidArgumentError("plan needs at least one sample size")
        if any(s <= 0 for s in self.sizes):
            raise InvalidArgumentError(f"sizes must be positive, got {self.sizes}")
        if list(self.sizes) != sorted(self.sizes):
            raise InvalidArgumentError(f"sizes must be ascending, got {self.sizes}")
        if self.replications < 1:
            raise InvalidArgumentError(
                f"replications must be >= 1, got {self.replications}")
        if len(self.algorithms) == 0:
            raise InvalidArgumentError("plan needs at least one algorithm")
        names = [n for n, _ in self.algorithms]
        if len(set(names)) != len(names):
            raise InvalidArgumentError(f"algorithm names must be unique: {names}")
        if not 0.0 < self.train_fraction < 1.0:
            raise InvalidArgumentError(
                f"train_fraction must be in (0,1), got {self.train_fraction}")
        if self.thread_count is not None and self.thread_count < 1:
            raise InvalidArgumentError(
                f"thread_count must be >= 1, got {self.thread_count}")

    @property
    def n_rows(self) -> int:
        return (len(self.conditions) * len(self.sizes)
                * self.replications * len(self.algorithms))


@dataclass(frozen=True)
class ResultRow:
    condition: SimCondition
    n: int
    replication: int
    algorithm: str
    cell_seed: int
    metrics: Optional[MetricReport]    # None when the fit errored
    error: Optional[str] = None


def cell_seed_for(master_seed: int, condition_index: int, n: int,
                  replication: int) -> int:
    """Identical regardless of execution order or thread count."""
    return stable_hash(master_seed, condition_index, n, replication)


# --------------------------------------------------------------------------
# plan documents

def plan_to_doc(plan: BenchPlan) -> dict:
    return {
        "format": PLAN_FORMAT,
        "version": PLAN_SCHEMA_VERSION,
        "conditions": [c.to_doc() for c in plan.conditions],
        "sizes": list(plan.sizes),
        "replications": plan.replications,
        "algorithms": [{"name": n, "spec": algo_to_doc(s)}
                       for n, s in plan.algorithms],
        "train_fraction": plan.train_fraction,
        "master_seed": plan.master_seed,
        "thread_count": plan.thread_count,
    }


def plan_from_doc(doc: dict) -> BenchPlan:
    if not isinstance(doc, dict):
        raise LoadError("plan document must be a JSON object")
    if doc.get("format") != PLAN_FORMAT:
        raise LoadError(f"not a {PLAN_FORMAT} document (format={doc.get('format')!r})")
    if doc.get("version") != PLAN_SCHEMA_VERSION:
        raise LoadError(
            f"unsupported plan schema version {doc.get('version')!r} "
            f"(this build reads version {PLAN_SCHEMA_VERSION})")
    try:
        conditions = []
        for c in doc["conditions"]:
            if isinstance(c, str):
                conditions.append(SimCondition.from_id(c))
            else:
                conditions.append(SimCondition.from_doc(c))
        algorithms = []
        for a in doc["algorithms"]:
            if "preset" in a:
                spec = PRESETS[a["preset"]]()
                name = a.get("name", a["preset"])
            else:
                spec = algo_from_doc(a["spec"])
                name = a["name"]
            algorithms.append((name, spec))
        return BenchPlan(
            conditions=tuple(conditions),
            sizes=tuple(doc["sizes"]),
            replications=int(doc["replications"]),
            algorithms=tuple(algorithms),
            train_fraction=float(doc.get("train_fraction", 0.7)),
            master_seed=int(doc.get("master_seed", 0)),
            thread_count=doc.get("thread_count"),
        )
    except (KeyError, TypeError, ValueError, InvalidArgumentError) as exc:
        raise LoadError(f"malformed plan document: {exc}")


def load_plan(path) -> BenchPlan:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            doc = json.load(handle)
    except OSError as exc:
        raise LoadError(f"cannot read plan file {path}: {exc}")
    except json.JSONDecodeError as exc:
        raise LoadError(f"plan file {path} is not valid JSON: {exc}")
    return plan_from_doc(doc)


def save_plan(plan: BenchPlan, path) -> None:
    atomic_write_text(path, json.dumps(plan_to_doc(plan), indent=2) + "\n")


# --------------------------------------------------------------------------
# canned plans

def desk_plan(master_seed: int = 0) -> BenchPlan:
    """All nine conditions and every preset at laptop-friendly sizes.

    The size sweep stops at 5000: the n=10000 column multiplies the
    heaviest fits and belongs in a purpose-built plan that names only the
    algorithms you care about (see the README's two-step recipe).
    """
    return BenchPlan(
        conditions=tuple(condition_catalog()),
        sizes=(500, 1000, 2500, 5000),
        replications=2,
        algorithms=tuple((name, make()) for name, make in PRESETS.items()),
        master_seed=master_seed,
    )


def paper_plan(master_seed: int = 0) -> BenchPlan:
    """The full factorial protocol: five sizes, ten replications.

    At the largest sizes this takes hours, not minutes; see the README for
    a two-step recipe that runs the heavy cells on a trimmed algorithm set.
    """
    return BenchPlan(
        conditions=tuple(condition_catalog()),
        sizes=(500, 1000, 2500, 5000, 10000),
        replications=10,
        algorithms=tuple((name, make()) for name, make in PRESETS.items()),
        master_seed=master_seed,
    )


# --------------------------------------------------------------------------
# execution

def _run_cell(plan: BenchPlan, condition_index: int, n: int,
              replication: int) -> list:
    condition = plan.conditions[condition_index]
    seed = cell_seed_for(plan.master_seed, condition_index, n, replication)
    crng = SeededRng(seed)
    data = generate(condition, n, crng.child("data"))
    parts = split(n, plan.train_fraction, crng.child("split"))
    train = data.subset(parts.train_indices)
    test = data.subset(parts.test_indices)
    rows = []
    for name, algo in plan.algorithms:
        try:
            model = fit_any(algo, train, crng.child("fit", name))
            probs = model.predict(test.features)
            metrics = MetricReport(
                accuracy=accuracy(probs, test.labels),
                auc=auc(probs, test.labels),
                fnr=confusion_rates(probs, test.labels)[0],
                fpr=confusion_rates(probs, test.labels)[1],
                fit_seconds=model.fit_seconds,
            )
            rows.append(ResultRow(condition, n, replication, name, seed, metrics))
        except (FitError, UndefinedMetricError, InvalidArgumentError) as exc:
            rows.append(ResultRow(condition, n, replication, name, seed,
                                  None, f"{type(exc).__name__}: {exc}"))
    return rows


def run(plan: BenchPlan) -> list:
    """Execute the full factorial; rows come back in canonical
    (condition, size, replication, algorithm) order regardless of threads."""
    threads = plan.thread_count or os.cpu_count() or 1
    cells = [
        (ci, n, rep)
        for ci in range(len(plan.conditions))
        for n in plan.sizes
        for rep in range(plan.replications)
    ]
    results: list = []
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(_run_cell, plan, ci, n, rep)
                   for ci, n, rep in cells]
        for fut in futures:
            results.extend(fut.result())
    return results


# --------------------------------------------------------------------------
# aggregation

def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return repr(value)
    return str(value)


def _row_prefix(condition: SimCondition) -> list:
    return [
        condition.condition_id,
        condition.relationship,
        condition.noise,
        _fmt(condition.misclassification_rate),
    ]


def results_csv_text(rows) -> str:
    """The deterministic results artifact (fit_seconds intentionally empty)."""
    buf = StringIO()
    buf.write(",".join(RESULT_COLUMNS) + "\n")
    for r in rows:
        m = r.metrics
        buf.write(",".join(
            _row_prefix(r.condition)
            + [str(r.n), str(r.replication), r.algorithm, str(r.cell_seed)]
            + ([_fmt(m.accuracy), _fmt(m.auc), _fmt(m.fnr), _fmt(m.fpr)]
               if m is not None else ["", "", "", ""])
            + ["", _fmt(r.error)]
        ) + "\n")
    return buf.getvalue()


def write_results_csv(rows, path) -> None:
    atomic_write_text(path, results_csv_text(rows))


def write_timings_csv(rows, path) -> None:
    """Measured wall times; machine-dependent, kept out of the results CSV."""
    buf = StringIO()
    buf.write("condition,n,replication,algorithm,fit_seconds\n")
    for r in rows:
        secs = "" if r.metrics is None else _fmt(r.metrics.fit_seconds)
        buf.write(f"{r.condition.condition_id},{r.n},{r.replication},"
                  f"{r.algorithm},{secs}\n")
    atomic_write_text(path, buf.getvalue())


def read_results_csv(path) -> list:
    """Rebuild ResultRows from a results CSV (fit_seconds reads as NaN)."""
    try:
        with open(path, "r", encoding="utf-8") as handle:
            lines = handle.read().splitlines()
    except OSError as exc:
        raise LoadError(f"cannot read results file {path}: {exc}")
    if not lines or lines[0] != ",".join(RESULT_COLUMNS):
        raise LoadError(
            f"{path} does not look like a results CSV (bad or missing header)")
    rows = []
    for idx, line in enumerate(lines[1:], start=2):
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != len(RESULT_COLUMNS):
            raise LoadError(
                f"{path}:{idx}: expected {len(RESULT_COLUMNS)} fields, "
                f"got {len(parts)}")
        (cond_id, rel, noise, mis, n, rep, algo, seed,
         acc, auc_v, fnr, fpr, secs, err) = parts
        try:
            condition = SimCondition(rel, noise, float(mis) if mis else None)
            if err:
                metrics = None
            else:
                metrics = MetricReport(
                    accuracy=float(acc), auc=float(auc_v),
                    fnr=float(fnr), fpr=float(fpr),
                    fit_seconds=float(secs) if secs else math.nan,
                )
            rows.append(ResultRow(condition, int(n), int(rep), algo,
                                  int(seed), metrics, err or None))
        except (ValueError, InvalidArgumentError) as exc:
            raise LoadError(f"{path}:{idx}: {exc}")
    return rows


@dataclass(frozen=True)
class SummaryRow:
    condition: SimCondition
    n: int
    algorithm: str
    n_reps: int
    n_errors: int
    means: dict
    sds: dict


def _mean_sd(values) -> tuple:
    vals = [v for v in values if not math.isnan(v)]
    if not vals:
        return math.nan, math.nan
    arr = np.asarray(vals, dtype=np.float64)
    mean = float(arr.mean())
    sd = 0.0 if arr.size == 1 else float(arr.std(ddof=1))
    return mean, sd


def summarize(rows) -> list:
    """Per (condition, n, algorithm): mean/sd of each metric over the
    replications that succeeded, plus success and error counts."""
    if not rows:
        raise InvalidArgumentError("summarize needs at least one result row")
    groups: dict = {}
    order = []
    for r in rows:
        key = (r.condition.condition_id, r.n, r.algorithm)
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(r)
    out = []
    for key in order:
        members = groups[key]
        good = [r for r in members if r.metrics is not None]
        means, sds = {}, {}
        for field in ("accuracy", "auc", "fnr", "fpr", "fit_seconds"):
            m, s = _mean_sd([getattr(r.metrics, field) for r in good])
            means[field], sds[field] = m, s
        out.append(SummaryRow(
            condition=members[0].condition,
            n=members[0].n,
            algorithm=members[0].algorithm,
            n_reps=len(good),
            n_errors=len(members) - len(good),
            means=means,
            sds=sds,
        ))
    return out


def summary_csv_text(summary) -> str:
    buf = StringIO()
    buf.write(",".join(SUMMARY_COLUMNS) + "\n")
    for s in summary:
        cells = _row_prefix(s.condition) + [
            str(s.n), s.algorithm, str(s.n_reps), str(s.n_errors)]
        for field in ("accuracy", "auc", "fnr", "fpr", "fit_seconds"):
            cells.append(_fmt(s.means[field]))
            cells.append(_fmt(s.sds[field]))
        buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def write_summary_csv(summary, path) -> None:
    atomic_write_text(path, summary_csv_text(summary))


# --------------------------------------------------------------------------
# plotting

def emit_plot(summary, path) -> None:
    """One panel per condition: mean accuracy vs n (log x), line per
    algorithm.  Output is a self-contained SVG with deterministic bytes."""
    if not summary:
        raise InvalidArgumentError("emit_plot needs a non-empty summary")
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    cond_ids = []
    for s in summary:
        if s.condition.condition_id not in cond_ids:
            cond_ids.append(s.condition.condition_id)
    algos = []
    for s in summary:
        if s.algorithm not in algos:
            algos.append(s.algorithm)

    ncols = min(3, len(cond_ids))
    nrows = (len(cond_ids) + ncols - 1) // ncols
    with plt.rc_context({"svg.hashsalt": "stackbench", "svg.fonttype": "path"}):
        fig, axes = plt.subplots(nrows, ncols,
                                 figsize=(4.2 * ncols, 3.2 * nrows),
                                 squeeze=False)
        for pi, cid in enumerate(cond_ids):
            ax = axes[pi // ncols][pi % ncols]
            for algo in algos:
                pts = [(s.n, s.means["accuracy"]) for s in summary
                       if s.condition.condition_id == cid
                       and s.algorithm == algo
                       and not math.isnan(s.means["accuracy"])]
                if not pts:
                    continue
                pts.sort()
                ax.plot([p[0] for p in pts], [p[1] for p in pts],
                        marker="o", markersize=3, linewidth=1.2, label=algo)
            ax.set_xscale("log")
            ax.set_title(cid, fontsize=9)
            ax.set_xlabel("n")
            ax.set_ylabel("accuracy")
            ax.tick_params(labelsize=7)
        for pi in range(len(cond_ids), nrows * ncols):
            axes[pi // ncols][pi % ncols].set_axis_off()
        handles, labels = axes[0][0].get_legend_handles_labels()
        if handles:
            fig.legend(handles, labels, loc="lower center",
                       ncol=min(4, len(labels)), fontsize=8)
        fig.tight_layout(rect=(0, 0.06, 1, 1))
        buf = StringIO()
        fig.savefig(buf, format="svg", metadata={"Date": None})
        plt.close(fig)
    atomic_write_text(path, buf.getvalue())


# --------------------------------------------------------------------------
# DNN tuning

def default_dnn_grid() -> list:
    """The documented search space; order defines tie-breaking."""
    grid = []
    for lr in (0.01, 0.1):
        for momentum in (0.0, 0.9):
            for batch in (16, 64):
                for epochs in (50, 200):
                    grid.append(learners.Mlp(
                        hidden_sizes=(13, 5, 3, 1),
                        learning_rate=lr, momentum=momentum,
                        epochs=epochs, batch_size=batch))
    return grid


TUNE_FITS_PER_MEMBER = 3


def tune_dnn(grid, condition: SimCondition, n: int, rng: SeededRng):
    """Exhaustive grid search judged by accuracy on an internal stratified
    80/20 validation split; ties go to the earliest grid entry.

    Each member's validation accuracy is the mean over
    TUNE_FITS_PER_MEMBER independent re-initializations.  A single SGD run
    of a deep all-sigmoid net sometimes leaves its initial plateau and
    sometimes does not, so one lucky fit would otherwise crown a member
    whose accuracy does not replicate.
    """
    if not grid:
        raise InvalidArgumentError("tune_dnn needs a non-empty grid")
    data = generate(condition, n, rng.child("tune-data"))
    parts = stratified_split(data.labels, 0.8, rng.child("tune-split"))
    train = data.subset(parts.train_indices)
    val = data.subset(parts.test_indices)
    best_spec = None
    best_acc = -1.0
    for i, spec in enumerate(grid):
        accs = []
        for r in range(TUNE_FITS_PER_MEMBER):
            model = learners.fit(spec, train, rng.child("tune-fit", i, r))
            accs.append(accuracy(model.predict(val.features), val.labels))
        acc = float(np.mean(accs))
        if acc > best_acc:
            best_acc = acc
            best_spec = spec
    return best_spec
