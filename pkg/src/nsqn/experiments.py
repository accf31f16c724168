"""Monte-Carlo failure-rate sweeps, trace exports and the max-affine accuracy study.

Every trial draws its starting point from ``numpy.random.default_rng``
seeded with ``SeedSequence([base_seed, trial_index])``.  The seed does not
depend on ``a`` or on the method, so all cells of a sweep share the same
starting points, and results do not depend on worker count or order.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .objectives import (
    ObjectiveSpec,
    PaperAbs,
    SkewAbs,
    make_max_affine_known_opt,
    make_max_affine_vertex_opt,
    spec_to_dict,
)
from .optimizer import LBFGS, Method, RunParams, Termination, Trace, format_field, parse_method, run, sample_x0

log = logging.getLogger(__name__)

SWEEP_COLUMNS = ("a", "method", "m", "scaled", "trials", "fail_rate", "n_conv", "n_div", "n_unbdd", "n_maxiter")
TRACE_COLUMNS = ("k", "f", "t", "abs_s1", "b_k", "gamma_k")

_ERROR = "error"
_CLASSES = [t.value for t in Termination] + [_ERROR]


def trial_rng(base_seed: int, trial: int) -> np.random.Generator:
    """Generator for one trial; a pure function of ``(base_seed, trial)``."""
    if base_seed < 0 or trial < 0:
        raise ValueError("seeds and trial indices must be nonnegative")
    return np.random.default_rng(np.random.SeedSequence([base_seed, trial]))


@dataclass(frozen=True)
class ObjectiveTemplate:
    """Builds the objective for each ``a`` of a sweep.

    ``kind`` is ``"paper_abs"`` or ``"skew_abs"``.  For the skewed function
    ``b1`` and ``b2`` are drawn once from ``skew_seed`` and shared by all
    cells.
    """

    kind: str = "paper_abs"
    n: int = 2
    skew_seed: int = 0

    def __post_init__(self):
        if self.kind not in ("paper_abs", "skew_abs"):
            raise ValueError(f"unknown objective template {self.kind!r}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"need integer n >= 2, got n={self.n}")

    def build(self, a: float) -> ObjectiveSpec:
        if self.kind == "paper_abs":
            return PaperAbs(a, self.n)
        return SkewAbs.random(a, self.n, np.random.default_rng(self.skew_seed))


@dataclass(frozen=True)
class SweepConfig:
    objective: ObjectiveTemplate
    a_values: tuple
    methods: tuple
    trials: int = 200
    base_seed: int = 0
    run_params: RunParams = RunParams()

    def __post_init__(self):
        object.__setattr__(self, "a_values", tuple(float(a) for a in self.a_values))
        object.__setattr__(self, "methods", tuple(self.methods))
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")
        if not self.a_values:
            raise ValueError("need at least one value of a")
        for a in self.a_values:
            if not (math.isfinite(a) and a > 0):
                raise ValueError(f"a values must be finite and positive, got {a}")
        if not self.methods:
            raise ValueError("need at least one method")

    @property
    def n(self) -> int:
        return self.objective.n


@dataclass(frozen=True)
class SweepRow:
    a: float
    method: str
    trials: int
    counts: dict
    mean_iterations: float

    @property
    def failure_rate(self) -> float:
        return self.counts[Termination.CONVERGED_NONOPTIMAL.value] / self.trials

    def csv_fields(self) -> list:
        method = parse_method(self.method)
        m = str(method.m) if isinstance(method, LBFGS) else ""
        scaled = ("true" if method.scaled else "false") if isinstance(method, LBFGS) else ""
        c = self.counts
        return [
            repr(self.a),
            self.method,
            m,
            scaled,
            str(self.trials),
            repr(self.failure_rate),
            str(c[Termination.CONVERGED_NONOPTIMAL.value]),
            str(c[Termination.DIVERGING.value]),
            str(c[Termination.UNBOUNDED_DIRECTION.value]),
            str(c[Termination.MAX_ITER.value]),
        ]


def _run_cell(job) -> tuple:
    """One ``(a, method)`` cell: returns per-class counts and total iterations."""
    spec, method, trials, base_seed, params = job
    counts = dict.fromkeys(_CLASSES, 0)
    iters = 0
    for i in range(trials):
        x0 = sample_x0(spec, trial_rng(base_seed, i))
        try:
            tr = run(spec, method, x0, params)
        except Exception as exc:  # counted, never expected
            log.error("trial %d of %s on %s raised %r", i, method.describe(), spec, exc)
            counts[_ERROR] += 1
            continue
        counts[tr.termination.value] += 1
        iters += tr.iterations
    return counts, iters


def failure_rate_sweep(config: SweepConfig, workers: int = 1) -> list:
    """Run every ``(a, method)`` cell and aggregate termination classes.

    Rows come out ordered by ``a`` then by method, whatever ``workers`` is.
    """
    jobs, keys = [], []
    for a in config.a_values:
        spec = config.objective.build(a)
        for method in config.methods:
            jobs.append((spec, method, config.trials, config.base_seed, config.run_params))
            keys.append((a, method.describe()))
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]

    rows = []
    for (a, desc), (counts, iters) in zip(keys, results):
        row = SweepRow(a, desc, config.trials, counts, iters / config.trials)
        if counts[Termination.MAX_ITER.value]:
            log.warning(
                "%d of %d runs hit max_iters at a=%r, %s; they are not counted as failures",
                counts[Termination.MAX_ITER.value], config.trials, a, desc,
            )
        if counts[_ERROR]:
            log.warning("%d runs raised at a=%r, %s", counts[_ERROR], a, desc)
        rows.append(row)
    return rows


def sweep_csv(rows: Iterable[SweepRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for r in rows:
        w.writerow(r.csv_fields())
    return buf.getvalue()


def sweep_manifest(config: SweepConfig, rows: Sequence[SweepRow], workers: int = 1) -> dict:
    return {
        "experiment": "failure_rate_sweep",
        "objective": asdict(config.objective),
        "a_values": list(config.a_values),
        "methods": [m.describe() for m in config.methods],
        "trials": config.trials,
        "base_seed": config.base_seed,
        "seed_rule": "numpy SeedSequence([base_seed, trial_index])",
        "run_params": _params_dict(config.run_params),
        "workers": workers,
        "rows": [
            {"a": r.a, "method": r.method, "failure_rate": r.failure_rate, "counts": r.counts,
             "mean_iterations": r.mean_iterations}
            for r in rows
        ],
    }


def _params_dict(params: RunParams) -> dict:
    d = asdict(params)
    d["linesearch"] = asdict(params.linesearch)
    return d


# -- max-affine accuracy ----------------------------------------------------


@dataclass(frozen=True)
class AccuracyRow:
    m: int
    scaled: bool
    trials: int
    median_error: float
    median_log10_error: float
    counts: dict


def accuracy_instance(n: int, p: int, seed: int, construction: str = "vertex") -> tuple:
    """``(spec, f_star)`` for the accuracy study.

    ``"vertex"`` uses :func:`make_max_affine_vertex_opt` (the default);
    ``"cone"`` uses the ``r = 0`` instance of :func:`make_max_affine_known_opt`,
    on which ``f`` is positively homogeneous.
    """
    if construction == "vertex":
        spec, f_star, _ = make_max_affine_vertex_opt(n, p, seed)
    elif construction == "cone":
        spec, f_star = make_max_affine_known_opt(n, p, seed)
    else:
        raise ValueError(f"unknown construction {construction!r}")
    return spec, f_star


def _accuracy_cell(job) -> tuple:
    spec, f_star, method, trials, base_seed, params = job
    errors = []
    counts = dict.fromkeys(_CLASSES, 0)
    for i in range(trials):
        x0 = sample_x0(spec, trial_rng(base_seed, i))
        tr = run(spec, method, x0, params)
        counts[tr.termination.value] += 1
        errors.append(tr.f_final - f_star)
    return errors, counts


def pwl_accuracy_experiment(
    n: int = 10,
    p: int = 50,
    m_values: Sequence[int] = tuple(range(1, 11)),
    trials: int = 50,
    base_seed: int = 0,
    instance_seed: int = 1,
    construction: str = "vertex",
    run_params: RunParams = RunParams(),
    workers: int = 1,
) -> list:
    """Median final error of scaled and unscaled L-BFGS-m on one max-affine instance."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    spec, f_star = accuracy_instance(n, p, instance_seed, construction)
    keys = [(m, scaled) for m in m_values for scaled in (True, False)]
    jobs = [(spec, f_star, LBFGS(m, scaled), trials, base_seed, run_params) for m, scaled in keys]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_accuracy_cell, jobs))
    else:
        results = [_accuracy_cell(j) for j in jobs]

    rows = []
    for (m, scaled), (errors, counts) in zip(keys, results):
        err = np.asarray(errors)
        if np.any(err < 0):
            raise AssertionError(f"final value below the known optimum (min error {err.min()!r})")
        med = float(np.median(err))
        with np.errstate(divide="ignore"):
            med_log = float(np.median(np.log10(err)))
        rows.append(AccuracyRow(m, scaled, trials, med, med_log, counts))
    return rows


def accuracy_csv(rows: Iterable[AccuracyRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("m", "scaled", "trials", "median_error", "median_log10_error"))
    for r in rows:
        w.writerow((r.m, "true" if r.scaled else "false", r.trials, repr(r.median_error), repr(r.median_log10_error)))
    return buf.getvalue()


# -- trace export -----------------------------------------------------------


def run_shared_start(spec: ObjectiveSpec, methods: Sequence[Method], seed: int, params: RunParams = RunParams()) -> dict:
    """Run each method from the same seeded start; returns ``{descriptor: Trace}``."""
    x0 = sample_x0(spec, trial_rng(seed, 0))
    return {m.describe(): run(spec, m, x0, params) for m in methods}


def _safe_name(desc: str) -> str:
    return desc.replace(":", "_")


def trace_export(
    spec: ObjectiveSpec,
    methods: Sequence[Method],
    seed: int,
    params: RunParams = RunParams(),
    out_dir: Optional[str] = None,
    stem: str = "trace",
) -> dict:
    """Run ``methods`` from one shared start and write plot-ready files.

    Files (when ``out_dir`` is given): ``<stem>_<method>.csv`` per method,
    ``<stem>_f.csv`` with the ``f_k`` series side by side (blank once a run
    has stopped), and ``<stem>.json`` with full traces and termination tags.
    """
    traces = run_shared_start(spec, methods, seed, params)
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        for desc, tr in traces.items():
            with open(os.path.join(out_dir, f"{stem}_{_safe_name(desc)}.csv"), "w", newline="") as fh:
                fh.write(_trace_csv(tr))
        with open(os.path.join(out_dir, f"{stem}_f.csv"), "w", newline="") as fh:
            fh.write(aligned_f_csv(traces))
        doc = {
            "objective": spec_to_dict(spec),
            "seed": seed,
            "run_params": _params_dict(params),
            "traces": {desc: tr.to_dict() for desc, tr in traces.items()},
        }
        with open(os.path.join(out_dir, f"{stem}.json"), "w") as fh:
            json.dump(doc, fh, allow_nan=False)
    return traces


def _trace_csv(tr: Trace) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(TRACE_COLUMNS)
    for r in tr.rows:
        w.writerow([format_field(getattr(r, c)) for c in TRACE_COLUMNS])
    return buf.getvalue()


def aligned_f_csv(traces: dict) -> str:
    names = list(traces)
    length = max(len(tr.rows) for tr in traces.values())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k"] + [f"f_{n}" for n in names])
    for k in range(length):
        w.writerow([k] + [repr(traces[n].rows[k].f) if k < len(traces[n].rows) else "" for n in names])
    w.writerow(["termination"] + [traces[n].termination.value for n in names])
    return buf.getvalue()
