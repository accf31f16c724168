"""Gradient, BFGS and L-BFGS-m driven by the bracketing line search.

A run ends in one of four ways:

* ``CONVERGED_NONOPTIMAL`` -- the line search bracket collapsed without an
  acceptable step (rounding error near a kink).  On an objective that is
  unbounded below this is a failure.
* ``DIVERGING`` -- ``f`` dropped below ``RunParams.f_divergence_threshold``,
  or the run entered an exact two-step cycle (see :class:`_CycleWatch`).
* ``UNBOUNDED_DIRECTION`` -- the line search kept doubling without ever
  bracketing, so ``f`` looks unbounded along the current direction.
* ``MAX_ITER`` -- the iteration limit was reached.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Optional, Union

import numpy as np

from .directions import (
    HistoryBuffer,
    UpdatePair,
    full_bfgs_update,
    lbfgs_two_loop,
    memoryless_direction,
    scale_factor,
)
from .linesearch import (
    LineSearchParams,
    NondifferentiableError,
    Stagnated,
    Step,
    UnboundedSuspected,
    bracketing_search,
)
from .objectives import DimensionError, ObjectiveSpec, PaperAbs, SkewAbs, evaluate


@dataclass(frozen=True)
class Gradient:
    def describe(self) -> str:
        return "gradient"


@dataclass(frozen=True)
class FullBFGS:
    def describe(self) -> str:
        return "bfgs"


@dataclass(frozen=True)
class LBFGS:
    m: int = 1
    scaled: bool = True

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise ValueError(f"L-BFGS memory must be an integer >= 1, got m={self.m}")

    def describe(self) -> str:
        return f"lbfgs:{self.m}:{'scaled' if self.scaled else 'unscaled'}"


Method = Union[Gradient, FullBFGS, LBFGS]


def parse_method(text: str) -> Method:
    """Parse ``gradient``, ``bfgs`` or ``lbfgs:<m>:<scaled|unscaled>``."""
    parts = text.strip().lower().split(":")
    if parts == ["gradient"]:
        return Gradient()
    if parts == ["bfgs"]:
        return FullBFGS()
    if parts[0] == "lbfgs" and len(parts) in (2, 3):
        scaled = True
        if len(parts) == 3:
            if parts[2] not in ("scaled", "unscaled"):
                raise ValueError(f"scaling must be 'scaled' or 'unscaled', got {parts[2]!r}")
            scaled = parts[2] == "scaled"
        return LBFGS(int(parts[1]), scaled)
    raise ValueError(f"cannot parse method {text!r}")


class Termination(str, enum.Enum):
    CONVERGED_NONOPTIMAL = "converged_nonoptimal"
    DIVERGING = "diverging"
    UNBOUNDED_DIRECTION = "unbounded_direction"
    MAX_ITER = "max_iter"


@dataclass(frozen=True)
class RunParams:
    linesearch: LineSearchParams = LineSearchParams()
    max_iters: int = 100_000
    f_divergence_threshold: float = -1e12
    step_stagnation_floor: float = 0.0
    cycle_window: int = 10  # 0 disables the periodic-step divergence check
    record_iterates: bool = False

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError(f"max_iters must be >= 1, got {self.max_iters}")
        if not self.f_divergence_threshold < 0:
            raise ValueError("f_divergence_threshold must be negative")
        if self.cycle_window < 0:
            raise ValueError("cycle_window must be >= 0")


@dataclass(frozen=True)
class TraceRow:
    k: int
    f: float
    t: float  # nan on the terminating iteration
    abs_s1: float  # |t_k d_k[0]|, nan when no step was taken
    b_k: Optional[float]  # d_k[1] / d_k[0], PaperAbs only
    gamma_k: Optional[float]  # scale used to form d_k, scaled L-BFGS only
    ls_evals: int


CSV_COLUMNS = ("k", "f", "t", "abs_s1", "b_k", "gamma_k", "ls_evals")


@dataclass
class Trace:
    rows: list = field(default_factory=list)
    termination: Optional[Termination] = None
    x_final: Optional[np.ndarray] = None
    f_final: float = math.nan
    detail: str = ""
    iterates: Optional[list] = None

    @property
    def iterations(self) -> int:
        """Number of accepted steps."""
        return sum(1 for r in self.rows if not math.isnan(r.t))

    @property
    def failed(self) -> bool:
        return self.termination is Termination.CONVERGED_NONOPTIMAL

    def column(self, name: str) -> np.ndarray:
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name) for r in self.rows], dtype=float)

    def to_dict(self) -> dict:
        return {
            "termination": self.termination.value if self.termination else None,
            "detail": self.detail,
            "f_final": self.f_final,
            "x_final": None if self.x_final is None else self.x_final.tolist(),
            "rows": [_json_row(r) for r in self.rows],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), allow_nan=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([format_field(getattr(r, c)) for c in CSV_COLUMNS])
        return buf.getvalue()


def _json_row(r: TraceRow) -> dict:
    # nan marks "no step taken"; JSON has no nan, so it becomes null
    return {k: None if isinstance(v, float) and math.isnan(v) else v for k, v in asdict(r).items()}


def format_field(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def measure_ratio(d) -> float:
    """``d[1] / d[0]``, checking that every ``d[i] / d[0]`` agrees."""
    d = np.asarray(d, dtype=float)
    if d.size < 2:
        raise ValueError("direction must have at least two components")
    if d[0] == 0.0:
        raise ValueError("first component of the direction is zero")
    ratios = d[1:] / d[0]
    ref = ratios[0]
    if np.any(np.abs(ratios - ref) > 1e-9 * max(abs(ref), np.finfo(float).tiny)):
        raise AssertionError(f"trailing direction components are not proportional: {ratios}")
    return float(ref)


def sample_x0(spec: ObjectiveSpec, rng: np.random.Generator) -> np.ndarray:
    """Componentwise standard normal start, redrawn until ``f`` is differentiable there."""
    while True:
        x0 = rng.standard_normal(spec.dim)
        if evaluate(spec, x0).differentiable:
            return x0


class _DirectionState:
    def __init__(self, method: Method, n: int):
        self.method = method
        if isinstance(method, FullBFGS):
            self.H = np.eye(n)
        elif isinstance(method, LBFGS):
            self.history = HistoryBuffer(method.m)

    def direction(self, g: np.ndarray) -> tuple[np.ndarray, Optional[float]]:
        m = self.method
        if isinstance(m, Gradient):
            return -g, None
        if isinstance(m, FullBFGS):
            return -(self.H @ g), None
        if not len(self.history):
            return -g, None
        gamma = scale_factor(self.history.newest) if m.scaled else None
        if m.m == 1 and m.scaled:
            return memoryless_direction(g, self.history.newest), gamma
        return lbfgs_two_loop(g, self.history, m.scaled), gamma

    def update(self, pair: UpdatePair) -> None:
        if isinstance(self.method, FullBFGS):
            self.H = full_bfgs_update(self.H, pair)
        elif isinstance(self.method, LBFGS):
            self.history.push(pair)


class _CycleWatch:
    """Detects steps and gradients that repeat exactly with period two.

    On PaperAbs and SkewAbs the line search and the gradient depend on ``x``
    only through the kink coordinate, so a memory-free (or limited-memory,
    once its history has cycled through) method whose steps and gradients
    repeat with period two, while ``f`` strictly decreases, translates by the
    same vector forever and ``f`` falls linearly to ``-inf``.  ``window``
    consecutive periodic steps are required before the cycle is reported.
    """

    def __init__(self, window: int):
        self.window = window
        self.recent: deque = deque(maxlen=2)
        self.streak = 0

    def push(self, s: np.ndarray, g: np.ndarray, f: float) -> bool:
        if len(self.recent) == 2:
            s2, g2, f2 = self.recent[0]
            if f < f2 and np.array_equal(s, s2) and np.array_equal(g, g2):
                self.streak += 1
            else:
                self.streak = 0
        self.recent.append((s, g, f))
        return self.streak >= self.window


def _cycles_certify_divergence(spec: ObjectiveSpec, method: Method, window: int) -> bool:
    if window == 0 or not isinstance(spec, (PaperAbs, SkewAbs)):
        return False
    return isinstance(method, Gradient) or (isinstance(method, LBFGS) and window >= method.m + 2)


def run(spec: ObjectiveSpec, method: Method, x0, params: RunParams = RunParams()) -> Trace:
    """Minimise ``spec`` from ``x0`` and return the full trace."""
    x = np.array(x0, dtype=float)
    if x.ndim != 1 or x.size != spec.dim:
        raise DimensionError(f"x0 has shape {x.shape}, objective expects ({spec.dim},)")
    ev = evaluate(spec, x)
    if not ev.differentiable:
        raise NondifferentiableError("f is not differentiable at x0")
    f, g = ev.value, ev.gradient

    is_paper = isinstance(spec, PaperAbs)
    state = _DirectionState(method, x.size)
    trace = Trace(iterates=[x.copy()] if params.record_iterates else None)
    rows = trace.rows
    watch = _CycleWatch(params.cycle_window) if _cycles_certify_divergence(spec, method, params.cycle_window) else None

    for k in range(params.max_iters + 1):
        d, gamma = state.direction(g)
        b_k = measure_ratio(d) if is_paper and d[0] != 0.0 else None
        if k == params.max_iters:
            rows.append(TraceRow(k, f, math.nan, math.nan, b_k, gamma, 0))
            trace.termination = Termination.MAX_ITER
            break

        gd = float(g @ d)
        if not gd < 0:
            rows.append(TraceRow(k, f, math.nan, math.nan, b_k, gamma, 0))
            trace.termination = Termination.CONVERGED_NONOPTIMAL
            trace.detail = f"non-descent direction (g'd = {gd!r})"
            break

        out = bracketing_search(spec, x, d, params.linesearch, f0=f, g0=g)
        if isinstance(out, Stagnated):
            rows.append(TraceRow(k, f, math.nan, math.nan, b_k, gamma, out.evals))
            trace.termination = Termination.CONVERGED_NONOPTIMAL
            trace.detail = f"bracket collapsed (width {out.bracket_width!r})"
            break
        if isinstance(out, UnboundedSuspected):
            rows.append(TraceRow(k, f, math.nan, math.nan, b_k, gamma, out.evals))
            trace.termination = Termination.UNBOUNDED_DIRECTION
            trace.detail = f"no upper bracket up to t = {out.last_t!r}"
            break

        assert isinstance(out, Step)
        s = out.t * d
        rows.append(TraceRow(k, f, out.t, abs(float(s[0])), b_k, gamma, out.evals))
        if not isinstance(method, Gradient):
            state.update(UpdatePair.from_vectors(s, out.g - g))
        x, f, g = out.x, out.f, out.g
        if trace.iterates is not None:
            trace.iterates.append(x.copy())
        if float(np.max(np.abs(s))) <= params.step_stagnation_floor:
            rows.append(TraceRow(k + 1, f, math.nan, math.nan, None, None, 0))
            trace.termination = Termination.CONVERGED_NONOPTIMAL
            trace.detail = "step below stagnation floor"
            break
        if f < params.f_divergence_threshold:
            rows.append(TraceRow(k + 1, f, math.nan, math.nan, None, None, 0))
            trace.termination = Termination.DIVERGING
            trace.detail = "f below divergence threshold"
            break
        if watch is not None and watch.push(s, g, f):
            rows.append(TraceRow(k + 1, f, math.nan, math.nan, None, None, 0))
            trace.termination = Termination.DIVERGING
            trace.detail = f"exact two-step cycle with constant decrease over {params.cycle_window} steps"
            break

    trace.x_final = x
    trace.f_final = f
    return trace
