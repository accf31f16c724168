"""Armijo-Wolfe bracketing line search.

The search starts at ``t = 1`` with bracket ``[alpha, beta] = [0, inf)``.
An Armijo failure shrinks ``beta`` to ``t``; a Wolfe failure raises
``alpha`` to ``t``.  The next trial is the bracket midpoint once ``beta``
is finite, otherwise ``2 * alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .objectives import EvalResult, ObjectiveSpec, evaluate

EPS = np.finfo(float).eps


class NotDescentError(ValueError):
    """Raised when the search direction is not a descent direction."""


class NondifferentiableError(ValueError):
    """Raised when a gradient is needed at a kink."""


@dataclass(frozen=True)
class LineSearchParams:
    c1: float = 0.01
    c2: float = 0.5
    max_expansions: int = 60
    max_bisections: int = 100

    def __post_init__(self):
        if not 0.0 < self.c1 < self.c2 < 1.0:
            raise ValueError(f"need 0 < c1 < c2 < 1, got c1={self.c1}, c2={self.c2}")
        if self.max_expansions < 1 or self.max_bisections < 1:
            raise ValueError("max_expansions and max_bisections must be >= 1")


@dataclass(frozen=True)
class Step:
    """Accepted steplength, plus the evaluation at the new point."""

    t: float
    evals: int
    x: np.ndarray
    f: float
    g: np.ndarray


@dataclass(frozen=True)
class UnboundedSuspected:
    last_t: float
    evals: int = 0


@dataclass(frozen=True)
class Stagnated:
    bracket_width: float
    evals: int = 0


LineSearchOutcome = Union[Step, UnboundedSuspected, Stagnated]


def armijo_holds(f0: float, g0d: float, t: float, f_t: float, c1: float) -> bool:
    if not g0d < 0:
        raise NotDescentError(f"directional derivative must be negative, got {g0d}")
    if t < 0:
        raise ValueError(f"steplength must be nonnegative, got {t}")
    return f_t <= f0 + c1 * t * g0d


def wolfe_holds(gtd: float, g0d: float, c2: float) -> bool:
    if not g0d < 0:
        raise NotDescentError(f"directional derivative must be negative, got {g0d}")
    return gtd >= c2 * g0d


def bracketing_search(
    spec: ObjectiveSpec,
    x,
    d,
    params: LineSearchParams = LineSearchParams(),
    *,
    f0: Optional[float] = None,
    g0: Optional[np.ndarray] = None,
) -> LineSearchOutcome:
    """Run the bracketing search from ``x`` along ``d``.

    ``f0`` and ``g0`` may be passed to skip re-evaluating ``f`` at ``x``.

    A trial point that lands exactly on a kink counts as a Wolfe failure.
    The sufficient-decrease test is applied strictly (``f_t < f0 + c1 t g'd``),
    which differs from :func:`armijo_holds` only on a null set in exact
    arithmetic but keeps the search from accepting steps that do not change
    ``f`` in floating point.
    """
    x = np.asarray(x, dtype=float)
    d = np.asarray(d, dtype=float)
    if f0 is None or g0 is None:
        ev = evaluate(spec, x)
        if not ev.differentiable:
            raise NondifferentiableError("f is not differentiable at the line search origin")
        f0, g0 = ev.value, ev.gradient
    g0d = float(g0 @ d)
    if not g0d < 0:
        raise NotDescentError(f"d is not a descent direction (g'd = {g0d})")

    c1, c2 = params.c1, params.c2
    alpha, beta = 0.0, math.inf
    t = 1.0
    evals = 0
    expansions = 0
    bisections = 0
    while True:
        xt = x + t * d
        ev: EvalResult = evaluate(spec, xt)
        evals += 1
        # Strict: once c1*t*g0d is below the rounding level of f0, a trial
        # with f_t == f0 must not pass as sufficient decrease.
        if not ev.value < f0 + c1 * t * g0d:
            beta = t
        elif not ev.differentiable or not float(ev.gradient @ d) >= c2 * g0d:
            alpha = t
        else:
            assert armijo_holds(f0, g0d, t, ev.value, c1)
            assert wolfe_holds(float(ev.gradient @ d), g0d, c2)
            return Step(t, evals, xt, ev.value, ev.gradient)

        if beta < math.inf:
            if bisections >= params.max_bisections or beta - alpha <= 4 * EPS * alpha:
                return Stagnated(beta - alpha, evals)
            bisections += 1
            t = (alpha + beta) / 2
        else:
            if expansions >= params.max_expansions:
                return UnboundedSuspected(t, evals)
            expansions += 1
            t = 2 * alpha
