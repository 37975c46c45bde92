"""Benchmark protocols: paired image comparisons, tolerance sweeps, eta sweeps.

Methods are compared at equal numbers of row/column updates.  One update is
a single row or column scaling; see ``UPDATE_UNITS`` for the cost charged per
iteration of each method.
"""
from __future__ import annotations

import csv
import enum
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import SolverConfig, ot_cost, regularized_objective, round_to_feasible
from .data import competitive_ratio, gen_synthetic_image, l1_ground_cost, load_mnist_idx
from .driver import Method, run_solver
from .oracle import MAX_N, exact_ot_lp

log = logging.getLogger(__name__)

DEFAULT_COMPARISONS = (
    (Method.SINKHORN, Method.GREENKHORN),
    (Method.APDAGD, Method.APDAMD),
    (Method.SINKHORN, Method.RANDKHORN),
    (Method.GREENKHORN, Method.GANDKHORN),
)
# Floor for d(X) inside the log ratio; a solver that hits exact feasibility
# would otherwise make the ratio infinite.
D_FLOOR = 1e-300
RUN_TO_BUDGET = 1e-300


class DatasetMissing(FileNotFoundError):
    pass


class Experiment(enum.Enum):
    SYNTHETIC = "SyntheticPairs"
    MNIST = "MnistPairs"
    EPS_SWEEP = "EpsSweep"
    ETA_SWEEP = "EtaSweep"

    @classmethod
    def parse(cls, s) -> "Experiment":
        if isinstance(s, cls):
            return s
        for e in cls:
            if str(s).lower() in (e.value.lower(), e.name.lower()):
                return e
        raise ValueError(f"unknown experiment {s!r}")


def update_units(method: Method, n: int) -> int:
    """Row/column updates charged for one iteration of ``method``."""
    return {
        Method.SINKHORN: 2 * n,
        Method.GREENKHORN: 1,
        Method.RANDKHORN: 2 * n + 2,
        Method.GANDKHORN: 3,
        Method.APDAMD: 2 * n,
        Method.APDAGD: 2 * n,
    }[method]


@dataclass
class BenchSpec:
    experiment: Experiment = Experiment.SYNTHETIC
    methods: list = field(default_factory=lambda: [m for m in Method])
    comparisons: list = field(default_factory=lambda: list(DEFAULT_COMPARISONS))
    pairs: int = 10
    etas: list = field(default_factory=lambda: [1.0, 10.0, 100.0])
    eps_grid: list = field(default_factory=lambda: [1e-1, 3e-2, 1e-2, 3e-3])
    max_updates: int | None = None  # default: ten passes of n line updates
    checkpoints: int = 20
    seed: int = 0
    side: int = 20
    fg_fraction: float = 0.1
    seeds: int = 20  # solver seeds per point of the tolerance sweep
    sweep_max_iter: int = 200_000
    ref_eta: float = 0.1
    ref_max_iter: int = 5_000
    eta_sweep: bool = True  # also emit rounded/regularized values against a baseline
    mnist_images: str | None = None
    mnist_labels: str | None = None
    jobs: int = 1

    def __post_init__(self):
        self.experiment = Experiment.parse(self.experiment)
        self.methods = [Method.parse(m) for m in self.methods]
        self.comparisons = [(Method.parse(a), Method.parse(b)) for a, b in self.comparisons]
        if not self.methods:
            raise ValueError("methods must be nonempty")
        if self.pairs < 1 or self.checkpoints < 1 or self.jobs < 1:
            raise ValueError("pairs, checkpoints and jobs must be positive")
        if self.max_updates is not None and self.max_updates < 1:
            raise ValueError("max_updates must be positive")
        if not self.etas or any(e <= 0 for e in self.etas):
            raise ValueError("etas must be positive")

    def budget(self, n: int) -> int:
        return self.max_updates if self.max_updates is not None else 10 * n

    def compared_methods(self) -> list:
        seen = []
        for a, b in self.comparisons:
            for m in (a, b):
                if m not in seen:
                    seen.append(m)
        return seen


@dataclass
class BenchResult:
    traces: list = field(default_factory=list)
    summary: list = field(default_factory=list)
    eta_sweep: list = field(default_factory=list)
    eps_sweep: list = field(default_factory=list)
    slopes: list = field(default_factory=list)
    files: dict = field(default_factory=dict)


def image_seeds(seed: int, count: int) -> list[int]:
    return [int(s) for s in np.random.SeedSequence(seed).generate_state(count, dtype=np.uint64)]


def synthetic_pairs(spec: BenchSpec, side: int | None = None) -> list[tuple[np.ndarray, np.ndarray]]:
    side = side or spec.side
    seeds = image_seeds(spec.seed, 2 * spec.pairs)
    imgs = [gen_synthetic_image(s, side, spec.fg_fraction).measure().weights for s in seeds]
    return [(imgs[2 * k], imgs[2 * k + 1]) for k in range(spec.pairs)]


def mnist_pairs(spec: BenchSpec) -> tuple[list, int]:
    if not spec.mnist_images or not Path(spec.mnist_images).is_file():
        raise DatasetMissing(f"MNIST image file not found: {spec.mnist_images!r}")
    if spec.mnist_labels and not Path(spec.mnist_labels).is_file():
        raise DatasetMissing(f"MNIST label file not found: {spec.mnist_labels!r}")
    imgs = load_mnist_idx(spec.mnist_images, spec.mnist_labels)
    if len(imgs) < 2 * spec.pairs:
        raise ValueError(f"need {2 * spec.pairs} images, file has {len(imgs)}")
    pick = np.random.default_rng(spec.seed).choice(len(imgs), size=2 * spec.pairs, replace=False)
    ws = [imgs[k].measure().weights for k in pick]
    return [(ws[2 * k], ws[2 * k + 1]) for k in range(spec.pairs)], imgs[0].side


def checkpoint_budgets(total: int, k: int) -> list[int]:
    return sorted({max(1, int(round(total * (i + 1) / k))) for i in range(k)})


def error_at_budget(errors: np.ndarray, units: int, budget: int) -> float:
    it = min(budget // units, errors.size - 1)
    return float(errors[it])


def _run_budget(method, C, eta, r, c, budget, seed):
    n = r.size
    units = update_units(method, n)
    cfg = SolverConfig(eps_prime=RUN_TO_BUDGET, max_iter=max(1, budget // units), seed=seed)
    X, report = run_solver(method, C, eta, r, c, cfg)
    return X, report, units


def _reference_cost(C, r, c, spec):
    if r.size <= MAX_N:
        return exact_ot_lp(C, r, c).cost, "oracle"
    cfg = SolverConfig(eps_prime=1e-9, max_iter=spec.ref_max_iter)
    X, _ = run_solver(Method.SINKHORN, C, spec.ref_eta, r, c, cfg)
    return ot_cost(round_to_feasible(X, r, c), C), "reference"


def _pair_job(args):
    k, r, c, C, spec = args
    n = r.size
    budget = spec.budget(n)
    marks = checkpoint_budgets(budget, spec.checkpoints)
    traces, sweep, d_at = [], [], {}
    base, kind = _reference_cost(C, r, c, spec) if spec.eta_sweep else (float("nan"), "none")
    for eta in spec.etas:
        for m in spec.compared_methods():
            X, report, units = _run_budget(m, C, eta, r, c, budget, spec.seed)
            errs = report.errors()
            for b in marks:
                d = error_at_budget(errs, units, b)
                d_at[(eta, m, b)] = d
                traces.append(dict(pair=k, eta=eta, method=m.value, units_per_iter=units, budget=b,
                                   iter=min(b // units, errs.size - 1), error=d))
            if spec.eta_sweep and X is not None:
                Xr = round_to_feasible(X, r, c)
                sweep.append(dict(pair=k, eta=eta, method=m.value, ot_cost=ot_cost(Xr, C),
                                  reg_objective=regularized_objective(X, C, eta), baseline=base,
                                  baseline_kind=kind, gap=ot_cost(Xr, C) - base))
    return k, traces, sweep, d_at


def _map(fn, jobs, items):
    if jobs <= 1:
        return [fn(a) for a in items]
    with ProcessPoolExecutor(max_workers=jobs) as ex:
        return list(ex.map(fn, items))


def summarize(d_at_all: list[dict], spec: BenchSpec, marks: list[int]) -> list[dict]:
    rows = []
    for eta in spec.etas:
        for a, b in spec.comparisons:
            for bud in marks:
                vals = [competitive_ratio(max(d[(eta, a, bud)], D_FLOOR), max(d[(eta, b, bud)], D_FLOOR))
                        for d in d_at_all]
                rows.append(dict(eta=eta, method_x=a.value, method_y=b.value, budget=bud,
                                 max=float(np.max(vals)), median=float(np.median(vals)), min=float(np.min(vals))))
    return rows


def run_pairs(spec: BenchSpec) -> BenchResult:
    if spec.experiment is Experiment.MNIST:
        pairs, side = mnist_pairs(spec)
    else:
        pairs, side = synthetic_pairs(spec), spec.side
    C = l1_ground_cost(side).entries
    items = [(k, r, c, C, spec) for k, (r, c) in enumerate(pairs)]
    out = sorted(_map(_pair_job, spec.jobs, items), key=lambda t: t[0])
    res = BenchResult()
    for _, traces, sweep, _ in out:
        res.traces += traces
        res.eta_sweep += sweep
    marks = checkpoint_budgets(spec.budget(side * side), spec.checkpoints)
    res.summary = summarize([d for *_, d in out], spec, marks)
    return res


def _sweep_job(args):
    m, seed, C, r, c, eta, grid, max_iter = args
    rows = []
    for ep in grid:
        cfg = SolverConfig(eps_prime=ep, max_iter=max_iter, seed=seed)
        _, report = run_solver(m, C, eta, r, c, cfg)
        rows.append(dict(method=m.value, seed=seed, eta=eta, eps_prime=ep, iterations=report.iterations,
                         termination=report.termination.value))
    return rows


def fit_slope(eps_grid, iterations) -> float:
    """Least-squares slope of ``log(iterations)`` against ``log(1/eps')``."""
    x = np.log(1.0 / np.asarray(eps_grid, dtype=float))
    y = np.log(np.maximum(np.asarray(iterations, dtype=float), 1.0))
    return float(np.polyfit(x, y, 1)[0])


def run_eps_sweep(spec: BenchSpec) -> BenchResult:
    """Iterations to reach each tolerance on one synthetic pair, per solver seed."""
    side = spec.side
    s1, s2 = image_seeds(spec.seed, 2)
    r = gen_synthetic_image(s1, side, spec.fg_fraction).measure().weights
    c = gen_synthetic_image(s2, side, spec.fg_fraction).measure().weights
    C = l1_ground_cost(side).entries
    eta = spec.etas[0]
    items = [(m, s, C, r, c, eta, list(spec.eps_grid), spec.sweep_max_iter)
             for m in spec.methods for s in range(spec.seeds)]
    res = BenchResult()
    for rows in _map(_sweep_job, spec.jobs, items):
        res.eps_sweep += rows
    for m in spec.methods:
        slopes = []
        for s in range(spec.seeds):
            its = [row["iterations"] for row in res.eps_sweep if row["method"] == m.value and row["seed"] == s]
            slopes.append(fit_slope(spec.eps_grid, its))
        res.slopes.append(dict(method=m.value, eta=eta, median_slope=float(np.median(slopes)),
                               min_slope=float(np.min(slopes)), max_slope=float(np.max(slopes))))
    return res


def run_bench(spec: BenchSpec, out_dir=None) -> BenchResult:
    if spec.experiment is Experiment.EPS_SWEEP:
        res = run_eps_sweep(spec)
    else:
        res = run_pairs(spec)
        if spec.experiment is Experiment.ETA_SWEEP:
            res.traces, res.summary = [], []
    if out_dir is not None:
        write_outputs(res, out_dir)
    return res


def _fmt(v):
    if isinstance(v, float):
        return "%.17g" % v
    return v


def write_rows(path, rows: list[dict]) -> None:
    if not rows:
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(v) for k, v in row.items()})


def write_outputs(res: BenchResult, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("traces", "summary", "eta_sweep", "eps_sweep", "slopes"):
        rows = getattr(res, name)
        if rows:
            path = out / f"{name}.csv"
            write_rows(path, rows)
            res.files[name] = os.fspath(path)
    return res.files


def default_jobs() -> int:
    try:
        return max(1, int(os.environ.get("OTKHORN_JOBS", "1")))
    except ValueError:
        return 1
