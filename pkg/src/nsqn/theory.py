"""Closed-form predictions for scaled memoryless BFGS on ``a|x1| + sum(x[1:])``.

Notation: ``b_k`` is the common ratio ``d_k[i] / d_k[0]`` of the search
direction (``i >= 1``), which alternates in sign; ``beta_k = |b_k|``
follows a scalar recurrence started at ``beta_0 = 1/a`` and, for
``a >= 2 sqrt(n-1)``, converges to :func:`limit_b`.

Scalar work is done in ``numpy.longdouble`` (the widest hardware float
numpy exposes; on some platforms it is just double) and returned as
Python floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_F = np.longdouble
_EPS = float(np.finfo(float).eps)


def _check_n(n: int) -> int:
    if int(n) != n or n < 2:
        raise ValueError(f"need integer n >= 2, got n={n}")
    return int(n)


def _check_a(a: float) -> float:
    if not (a > 0 and math.isfinite(a)):
        raise ValueError(f"need finite a > 0, got a={a}")
    return a


def _check_c1(c1: float) -> float:
    if not 0.0 < c1 < 1.0:
        raise ValueError(f"need 0 < c1 < 1, got c1={c1}")
    return c1


@dataclass(frozen=True)
class Thresholds:
    sqrt_nm1: float
    sqrt_3nm1: float
    two_sqrt_nm1: float


def thresholds(n: int) -> Thresholds:
    """The three critical values of ``a`` for dimension ``n``."""
    n = _check_n(n)
    r = math.sqrt(n - 1)
    return Thresholds(r, math.sqrt(3 * (n - 1)), 2 * r)


@dataclass(frozen=True)
class RecurrenceState:
    """One term of the ``beta`` recurrence; ``b = (-1)^k beta``."""

    a: float
    n: int
    k: int
    beta: float

    @classmethod
    def initial(cls, a: float, n: int) -> "RecurrenceState":
        return cls(a, _check_n(n), 0, 1.0 / _check_a(a))

    @property
    def b(self) -> float:
        return self.beta if self.k % 2 == 0 else -self.beta

    @property
    def theta(self) -> float:
        """Angle of the direction's projection onto the (x1, x2) plane."""
        return math.atan(self.b)

    def step(self) -> "RecurrenceState":
        return RecurrenceState(self.a, self.n, self.k + 1, beta_next(self.beta, self.a, self.n))


def beta_next(beta: float, a: float, n: int) -> float:
    """``(1 + (n-1) beta^2) / (a - (n-1) beta) - beta``."""
    n = _check_n(n)
    beta, a = _F(beta), _F(a)
    den = a - (n - 1) * beta
    if not den > 0:
        raise ValueError(f"a - (n-1) beta must be positive, got {float(den)}")
    return float((1 + (n - 1) * beta * beta) / den - beta)


def b_next_signed(b_prev: float, k: int, a: float, n: int) -> float:
    """Signed update ``b_{k-1} -> b_k``.

    ``((-1)^k a b + 2(n-1) b^2 + 1) / ((-1)^k a + (n-1) b)`` with ``b = b_{k-1}``.
    """
    n = _check_n(n)
    b, a = _F(b_prev), _F(a)
    sa = a if k % 2 == 0 else -a
    den = sa + (n - 1) * b
    if den == 0:
        raise ZeroDivisionError(f"zero denominator at k={k}")
    return float((sa * b + 2 * (n - 1) * b * b + 1) / den)


def beta_sequence(a: float, n: int, k_max: int) -> np.ndarray:
    """``beta_0, ..., beta_{k_max}`` from ``beta_0 = 1/a``, as float64."""
    n = _check_n(n)
    a = _check_a(a)
    if k_max < 0:
        raise ValueError("k_max must be >= 0")
    out = np.empty(k_max + 1, dtype=_F)
    af = _F(a)
    beta = 1 / af
    out[0] = beta
    for k in range(1, k_max + 1):
        den = af - (n - 1) * beta
        if not den > 0:
            raise ValueError(f"recurrence left its domain at k={k} (a - (n-1) beta = {float(den)})")
        beta = (1 + (n - 1) * beta * beta) / den - beta
        out[k] = beta
    return out.astype(float)


def b_sequence(a: float, n: int, k_max: int) -> np.ndarray:
    """Signed ratios ``b_k = (-1)^k beta_k``."""
    beta = beta_sequence(a, n, k_max)
    beta[1::2] *= -1
    return beta


def limit_b(a: float, n: int) -> float:
    """``(a - sqrt(a^2 - 3(n-1))) / (3(n-1))``, the limit of ``beta_k``."""
    n = _check_n(n)
    a = _check_a(a)
    af = _F(a)
    disc = af * af - 3 * (n - 1)
    if disc < 0:
        # a reached as sqrt(3(n-1)) in float arithmetic may undershoot slightly
        if disc >= -4 * _EPS * 3 * (n - 1):
            return 1.0 / a
        raise ValueError(f"need a^2 >= 3(n-1), got a={a}, n={n}")
    return float((af - np.sqrt(disc)) / (3 * (n - 1)))


@dataclass(frozen=True)
class Convergence:
    limit: float
    K: int


class NotConvergedError(RuntimeError):
    pass


def recurrence_converge(a: float, n: int, tol: float = 1e-10, max_k: int = 10_000) -> Convergence:
    """Iterate ``beta_next`` from ``1/a`` until within ``tol`` of :func:`limit_b`.

    Convergence is guaranteed for ``a >= 2 sqrt(n-1)``.  Any ``a`` with
    ``a^2 >= 3(n-1)`` is accepted (the limit exists there and the iteration
    converges in practice); :class:`NotConvergedError` is raised if ``max_k``
    iterations do not suffice.
    """
    n = _check_n(n)
    a = _check_a(a)
    if not tol > 0:
        raise ValueError("tol must be positive")
    target = limit_b(a, n)
    af = _F(a)
    beta = 1 / af
    for k in range(max_k + 1):
        if abs(float(beta) - target) <= tol:
            return Convergence(float(beta), k)
        beta = (1 + (n - 1) * beta * beta) / (af - (n - 1) * beta) - beta
    raise NotConvergedError(f"no convergence to within {tol} after {max_k} iterations (a={a}, n={n})")


def varphi(a: float, n: int, c1: float, abs_bk: float) -> float:
    """Ratio of the Wolfe lower bound to the Armijo upper bound on ``t_k``."""
    n = _check_n(n)
    _check_a(a)
    _check_c1(c1)
    if not 0 < abs_bk <= (1 + 4 * _EPS) / a:
        raise ValueError(f"need 0 < |b_k| <= 1/a, got |b_k|={abs_bk}")
    a_, b = _F(a), _F(abs_bk)
    return float((c1 * (a_ + (n - 1) * b) + a_ - (n - 1) * b) / (2 * a_))


def _check_assumption(a: float, n: int) -> None:
    if a < 2 * math.sqrt(n - 1):
        raise ValueError(f"need a >= 2 sqrt(n-1) = {2 * math.sqrt(n - 1)}, got a={a}")


def phi_limit(a: float, n: int, c1: float) -> float:
    """``varphi`` evaluated at the limit ``|b_k| -> b``."""
    n = _check_n(n)
    _check_a(a)
    _check_assumption(a, n)
    return varphi(a, n, c1, limit_b(a, n))


def psi_eps(a: float, n: int, c1: float, eps: float) -> float:
    """``(1 - phi) / phi + 15 eps / a``, the eventual contraction bound for ``|s_k[0]|``."""
    n = _check_n(n)
    _check_a(a)
    _check_assumption(a, n)
    eps_max = math.sqrt(max(a * a - 3 * (n - 1), 0.0)) / 3
    if not 0 <= eps <= eps_max:
        raise ValueError(f"need 0 <= eps <= sqrt(a^2 - 3(n-1))/3 = {eps_max}, got eps={eps}")
    phi = _F(phi_limit(a, n, c1))
    return float((1 - phi) / phi + 15 * _F(eps) / _F(a))


def delta_eps(a: float, n: int, eps: float) -> float:
    """``(a - (n-1) b) / a + eps / a``, the contraction bound when every ``t_k <= 2``."""
    n = _check_n(n)
    _check_a(a)
    _check_assumption(a, n)
    if not eps >= 0:
        raise ValueError(f"need eps >= 0, got eps={eps}")
    a_ = _F(a)
    return float((a_ - (n - 1) * _F(limit_b(a, n))) / a_ + _F(eps) / a_)


def decrease_bound(a: float, n: int, eps: float, abs_x1_K: float, sum_abs_s1: float) -> float:
    """Upper bound on ``f(x_K) - f(x_N)`` once ``||b_k| - b| < eps/(n-1)`` for ``k >= K``.

    ``sum_abs_s1`` is ``sum_{k=K}^{N-1} |s_k[0]|``.
    """
    n = _check_n(n)
    return a * abs_x1_K + ((n - 1) * limit_b(a, n) + eps) * sum_abs_s1


@dataclass(frozen=True)
class FailurePrediction:
    memoryless_any_armijo_wolfe: bool
    memoryless_algorithm2: bool
    gradient_method: bool
    thresholds: Thresholds


def predict_failure(a: float, n: int, c1: float) -> FailurePrediction:
    """Which methods provably converge to a non-optimal point.

    All comparisons are strict, so boundary cases report ``False``.
    """
    n = _check_n(n)
    _check_a(a)
    _check_c1(c1)
    th = thresholds(n)
    lhs = (1 - c1) / c1 * (n - 1)
    assumption = a >= th.two_sqrt_nm1
    memoryless_any = assumption and lhs < a * a + a * math.sqrt(a * a - 3 * (n - 1))
    gradient = lhs < a * a
    return FailurePrediction(memoryless_any, assumption, gradient, th)


def direction_unbounded(beta: float, a: float, n: int) -> bool:
    """Whether ``f`` is unbounded below along ``-(+-1, beta, ..., beta)``.

    Along such a direction ``f`` changes by ``a|x1 -+ t| - a|x1| - (n-1) beta t``,
    which is unbounded below exactly when ``a < (n-1) beta``.
    """
    n = _check_n(n)
    if not beta > 0:
        raise ValueError(f"need beta > 0, got {beta}")
    return a / (n - 1) < beta


def theory_table(a: float, n: int, c1: float, eps: float) -> dict:
    """Every reported quantity for one ``(a, n, c1, eps)``; undefined entries are ``None``."""
    n = _check_n(n)
    _check_a(a)
    _check_c1(c1)
    th = thresholds(n)
    pred = predict_failure(a, n, c1)
    row = {
        "a": a,
        "n": n,
        "c1": c1,
        "eps": eps,
        "sqrt_nm1": th.sqrt_nm1,
        "sqrt_3nm1": th.sqrt_3nm1,
        "two_sqrt_nm1": th.two_sqrt_nm1,
        "b": None,
        "theta": None,
        "phi": None,
        "psi_eps": None,
        "delta_eps": None,
        "memoryless_fail_any_ls": pred.memoryless_any_armijo_wolfe,
        "memoryless_fail_alg2": pred.memoryless_algorithm2,
        "gradient_fail": pred.gradient_method,
    }
    if a >= th.sqrt_3nm1:
        b = limit_b(a, n)
        row["b"] = b
        row["theta"] = math.atan(b)
    if a >= th.two_sqrt_nm1:
        row["phi"] = phi_limit(a, n, c1)
        try:
            row["psi_eps"] = psi_eps(a, n, c1, eps)
        except ValueError:
            pass
        row["delta_eps"] = delta_eps(a, n, eps)
    return row
