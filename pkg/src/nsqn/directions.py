"""Quasi-Newton search directions.

Conventions: ``s`` is the iterate difference and ``y`` the gradient
difference of one curvature pair; every function returns the search
direction ``d = -H g`` rather than ``H g``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np


class CurvatureError(ValueError):
    """Raised for curvature pairs with s'y not safely positive."""


@dataclass(frozen=True)
class UpdatePair:
    s: np.ndarray
    y: np.ndarray
    sy: float

    @classmethod
    def from_vectors(cls, s, y) -> "UpdatePair":
        s = np.asarray(s, dtype=float)
        y = np.asarray(y, dtype=float)
        if s.shape != y.shape or s.ndim != 1:
            raise ValueError(f"s and y must be vectors of equal length, got {s.shape} and {y.shape}")
        sy = float(s @ y)
        if not sy > 1e-300 * np.linalg.norm(s) * np.linalg.norm(y):
            raise CurvatureError(f"curvature condition violated: s'y = {sy}")
        return cls(s, y, sy)


@dataclass
class HistoryBuffer:
    """The ``m`` most recent curvature pairs, oldest first."""

    m: int
    pairs: deque = field(default_factory=deque)

    def __post_init__(self):
        if self.m < 1:
            raise ValueError(f"history capacity must be >= 1, got {self.m}")
        self.pairs = deque(self.pairs, maxlen=self.m)

    def push(self, pair: UpdatePair) -> None:
        self.pairs.append(pair)

    @property
    def newest(self) -> UpdatePair:
        return self.pairs[-1]

    def __len__(self) -> int:
        return len(self.pairs)

    def __iter__(self) -> Iterable[UpdatePair]:
        return iter(self.pairs)


def scale_factor(pair: UpdatePair) -> float:
    """``s'y / y'y``, the multiple of the identity used as initial inverse Hessian."""
    if not pair.sy > 0:
        raise CurvatureError(f"curvature condition violated: s'y = {pair.sy}")
    yy = float(pair.y @ pair.y)
    if yy == 0.0:
        raise CurvatureError("y'y = 0")
    return pair.sy / yy


def lbfgs_two_loop(g, history: HistoryBuffer, scaled: bool) -> np.ndarray:
    """Two-loop recursion.  ``H0 = gamma I`` from the newest pair when ``scaled``, else ``I``."""
    q = np.array(g, dtype=float)
    pairs = list(history)
    for p in pairs:
        if p.s.shape != q.shape:
            raise ValueError(f"history vectors have shape {p.s.shape}, gradient {q.shape}")
    if not pairs:
        return -q

    alphas = []
    for p in reversed(pairs):
        alpha = (p.s @ q) / p.sy
        q -= alpha * p.y
        alphas.append(alpha)
    if scaled:
        q *= scale_factor(pairs[-1])
    for p, alpha in zip(pairs, reversed(alphas)):
        beta = (p.y @ q) / p.sy
        q += (alpha - beta) * p.s
    return -q


def memoryless_direction(g, pair: UpdatePair) -> np.ndarray:
    """Scaled memoryless BFGS direction from a single pair.

    Expanding ``H = gamma V'V + ss'/s'y`` with ``V = I - ys'/y's`` and
    ``gamma = s'y/y'y`` gives

        H g = gamma g - (y'g/y'y) s - (s'g/y'y) y + 2 (s'g/s'y) s,

    which needs only four inner products.
    """
    if not pair.sy > 0:
        raise CurvatureError(f"curvature condition violated: s'y = {pair.sy}")
    g = np.asarray(g, dtype=float)
    s, y, sy = pair.s, pair.y, pair.sy
    yy = float(y @ y)
    sg = float(s @ g)
    yg = float(y @ g)
    Hg = (sy / yy) * g - (yg / yy) * s - (sg / yy) * y + (2.0 * sg / sy) * s
    return -Hg


def memoryless_matrix(pair: UpdatePair) -> np.ndarray:
    """Dense ``H`` of the memoryless update; for checks on small problems."""
    s, y, sy = pair.s, pair.y, pair.sy
    n = s.size
    V = np.eye(n) - np.outer(y, s) / sy
    return (sy / (y @ y)) * V.T @ V + np.outer(s, s) / sy


def full_bfgs_update(H: np.ndarray, pair: UpdatePair) -> np.ndarray:
    """Inverse BFGS update ``(I - rho s y') H (I - rho y s') + rho s s'``."""
    if not pair.sy > 0:
        raise CurvatureError(f"curvature condition violated: s'y = {pair.sy}")
    s, y = pair.s, pair.y
    rho = 1.0 / pair.sy
    Hy = H @ y
    Hn = H - rho * (np.outer(s, Hy) + np.outer(Hy, s)) + (rho * rho * (y @ Hy) + rho) * np.outer(s, s)
    return 0.5 * (Hn + Hn.T)
