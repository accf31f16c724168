"""Nonsmooth convex test functions.

Three families are provided:

* :class:`PaperAbs`  -- ``f(x) = a|x[0]| + sum(x[1:])``, unbounded below.
* :class:`SkewAbs`   -- ``f(x) = a|b1 @ x| + b2 @ x`` with unit ``b1, b2``.
* :class:`MaxAffine` -- ``f(x) = max_i (B[i] @ x - r[i])``.

Each is a frozen dataclass; :func:`evaluate` returns an :class:`EvalResult`
holding the value and, where ``f`` is differentiable, the gradient.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class PaperAbs:
    a: float
    n: int

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"PaperAbs requires a > 0, got a={self.a}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"PaperAbs requires integer n >= 2, got n={self.n}")

    @property
    def dim(self) -> int:
        return int(self.n)


@dataclass(frozen=True, eq=False)
class SkewAbs:
    a: float
    b1: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"SkewAbs requires a > 0, got a={self.a}")
        b1 = np.array(self.b1, dtype=float).ravel()
        b2 = np.array(self.b2, dtype=float).ravel()
        if b1.shape != b2.shape:
            raise DimensionError("b1 and b2 must have the same length")
        for name, v in (("b1", b1), ("b2", b2)):
            nrm = np.linalg.norm(v)
            if not np.isfinite(nrm) or nrm == 0.0:
                raise ValueError(f"{name} must be a finite nonzero vector")
            if abs(nrm - 1.0) > 4 * np.finfo(float).eps:
                v /= nrm  # leaves already-unit vectors bit-for-bit unchanged
            v.setflags(write=False)
            object.__setattr__(self, name, v)

    @property
    def dim(self) -> int:
        return self.b1.size

    @classmethod
    def random(cls, a: float, n: int, rng: np.random.Generator) -> "SkewAbs":
        """Draw ``b1, b2`` from a standard normal; normalisation happens on construction."""
        return cls(a, rng.standard_normal(n), rng.standard_normal(n))


@dataclass(frozen=True, eq=False)
class MaxAffine:
    B: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        B = np.array(self.B, dtype=float)
        if B.ndim != 2 or B.shape[0] < 1:
            raise ValueError("B must be a p x n matrix with p >= 1")
        r = np.array(self.r, dtype=float).ravel()
        if r.size != B.shape[0]:
            raise DimensionError(f"r has {r.size} entries, B has {B.shape[0]} rows")
        if not (np.all(np.isfinite(B)) and np.all(np.isfinite(r))):
            raise ValueError("MaxAffine rows must be finite")
        B.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "r", r)

    @property
    def dim(self) -> int:
        return self.B.shape[1]

    @property
    def pieces(self) -> int:
        return self.B.shape[0]


ObjectiveSpec = Union[PaperAbs, SkewAbs, MaxAffine]


@dataclass(frozen=True)
class EvalResult:
    value: float
    gradient: Optional[np.ndarray]
    differentiable: bool
    active_index: Optional[int] = None


def evaluate(spec: ObjectiveSpec, x) -> EvalResult:
    """Value and (where it exists) gradient of ``spec`` at ``x``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size != spec.dim:
        raise DimensionError(f"x has shape {x.shape}, objective expects ({spec.dim},)")

    if isinstance(spec, PaperAbs):
        x1 = x[0]
        value = spec.a * abs(x1) + x[1:].sum()
        if x1 == 0.0:
            return EvalResult(float(value), None, False)
        g = np.ones_like(x)
        g[0] = spec.a if x1 > 0 else -spec.a
        return EvalResult(float(value), g, True)

    if isinstance(spec, SkewAbs):
        u = spec.b1 @ x
        value = spec.a * abs(u) + spec.b2 @ x
        if u == 0.0:
            return EvalResult(float(value), None, False)
        g = (spec.a if u > 0 else -spec.a) * spec.b1 + spec.b2
        return EvalResult(float(value), g, True)

    if isinstance(spec, MaxAffine):
        vals = spec.B @ x - spec.r
        i = int(np.argmax(vals))
        value = vals[i]
        # argmax returns the first maximiser; a tie elsewhere means a kink.
        if np.count_nonzero(vals == value) > 1:
            return EvalResult(float(value), None, False, i)
        return EvalResult(float(value), spec.B[i].copy(), True, i)

    raise TypeError(f"unknown objective spec {type(spec).__name__}")


def value(spec: ObjectiveSpec, x) -> float:
    return evaluate(spec, x).value


def make_max_affine_known_opt(n: int, p: int, seed: int) -> tuple[MaxAffine, float]:
    """Max-affine instance whose minimum value is 0, attained at the origin.

    The first ``p - 1`` rows are standard normal draws and the last row is
    minus their mean, so 0 is a strictly positive convex combination of the
    rows (weights ``1/(2(p-1))`` for the drawn rows and ``1/2`` for the last).
    With ``r = 0`` this gives ``f >= 0`` everywhere and ``f(0) = 0``.
    """
    if p < 2:
        raise ValueError(f"need p >= 2 pieces, got p={p}")
    rng = np.random.default_rng(seed)
    drawn = rng.standard_normal((p - 1, n))
    last = -drawn.sum(axis=0) / (p - 1)
    B = np.vstack([drawn, last])
    return MaxAffine(B, np.zeros(p)), 0.0


def convex_weights_at_origin(spec: MaxAffine) -> np.ndarray:
    """Weights of the construction in :func:`make_max_affine_known_opt`."""
    p = spec.pieces
    w = np.full(p, 1.0 / (2 * (p - 1)))
    w[-1] = 0.5
    return w


def make_max_affine_vertex_opt(n: int, p: int, seed: int) -> tuple[MaxAffine, float, np.ndarray]:
    """Max-affine instance with a generic optimal vertex at the origin.

    All rows start as standard normal draws.  The first ``n + 1`` rows are
    recentred by a Dirichlet-weighted mean so that they are active at 0
    with strictly positive multipliers; the remaining rows get offsets
    ``r = |N(0, 1)|`` and are inactive there.  Unlike the ``r = 0`` cone of
    :func:`make_max_affine_known_opt`, ``f`` is not positively homogeneous,
    so a method cannot reach 0 merely by shrinking its steps geometrically.

    Returns ``(spec, 0.0, weights)`` where ``weights`` (length ``p``, zero on
    the inactive rows) certifies ``0 in conv{B[i] : r[i] = 0}``.
    """
    if p < n + 1:
        raise ValueError(f"need p >= n + 1 pieces for a vertex optimum, got p={p}, n={n}")
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((p, n))
    w = rng.dirichlet(np.ones(n + 1))
    B[: n + 1] -= w @ B[: n + 1]
    r = np.concatenate([np.zeros(n + 1), np.abs(rng.standard_normal(p - n - 1))])
    weights = np.concatenate([w, np.zeros(p - n - 1)])
    return MaxAffine(B, r), 0.0, weights


# -- JSON ---------------------------------------------------------------


def spec_to_dict(spec: ObjectiveSpec) -> dict:
    if isinstance(spec, PaperAbs):
        return {"kind": "paper_abs", "a": float(spec.a), "n": int(spec.n)}
    if isinstance(spec, SkewAbs):
        return {"kind": "skew_abs", "a": float(spec.a), "b1": spec.b1.tolist(), "b2": spec.b2.tolist()}
    if isinstance(spec, MaxAffine):
        p, n = spec.B.shape
        return {
            "kind": "max_affine",
            "p": p,
            "n": n,
            "B": spec.B.ravel().tolist(),  # row-major
            "r": spec.r.tolist(),
        }
    raise TypeError(f"unknown objective spec {type(spec).__name__}")


def spec_from_dict(d: dict) -> ObjectiveSpec:
    kind = d.get("kind")
    if kind == "paper_abs":
        return PaperAbs(float(d["a"]), int(d["n"]))
    if kind == "skew_abs":
        return SkewAbs(float(d["a"]), np.asarray(d["b1"]), np.asarray(d["b2"]))
    if kind == "max_affine":
        p, n = int(d["p"]), int(d["n"])
        B = np.asarray(d["B"], dtype=float)
        if B.size != p * n:
            raise DimensionError(f"B has {B.size} entries, expected {p}*{n}")
        return MaxAffine(B.reshape(p, n), np.asarray(d["r"], dtype=float))
    raise ValueError(f"unknown objective kind {kind!r}")


def dumps(spec: ObjectiveSpec) -> str:
    return json.dumps(spec_to_dict(spec))


def loads(text: str) -> ObjectiveSpec:
    return spec_from_dict(json.loads(text))
