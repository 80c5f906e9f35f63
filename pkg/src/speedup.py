"""
speedup.py

Speedup functions s(k) and the EQUI aggregate service rate.

A speedup function maps a level of parallelization k (cores per job) to the
ratio of single-core runtime to k-core runtime. Every curve obeys the same
rule below one core: s(k) = k for 0 < k <= 1, which models processor sharing
of a single core.
"""
from __future__ import annotations

from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np

CONCAVITY_TOLERANCE = 1e-9


class SpeedupFunction(ABC):
    """
    Abstract base class for concave, non-decreasing, sublinear speedup curves.

    Subclasses only describe the curve for k > 1; the k <= 1 rule and the
    argument checks live here so every curve shares them.
    """

    def __call__(self, k: float) -> float:
        return self.evaluate(k)

    def evaluate(self, k: float) -> float:
        """
        Return s(k).

        Raises:
            TypeError: if k is not a number
            ValueError: if k is not positive
        """
        if isinstance(k, bool) or not isinstance(k, (int, float, np.floating, np.integer)):
            raise TypeError("k must be a number")
        if not k > 0:
            raise ValueError(f"k must be positive, got {k}")
        if k <= 1:
            return float(k)
        return float(self._above_one(float(k)))

    def evaluate_array(self, ks) -> np.ndarray:
        """Vectorised s(k) for an array of non-negative k (s(0) = 0)."""
        ks = np.asarray(ks, dtype=float)
        if np.any(ks < 0):
            raise ValueError("k must be non-negative")
        out = ks.copy()
        above = ks > 1
        if np.any(above):
            out[above] = self._above_one_array(ks[above])
        return out

    @property
    @abstractmethod
    def upper_bound(self) -> float:
        """Finite constant bounding s from above."""

    @abstractmethod
    def _above_one(self, k: float) -> float:
        pass

    def _above_one_array(self, ks: np.ndarray) -> np.ndarray:
        return np.array([self._above_one(k) for k in ks])


class AmdahlSpeedup(SpeedupFunction):
    """Amdahl's law s(k) = 1 / (p/k + 1 - p) with parallel fraction p in [0, 1)."""

    def __init__(self, p: float):
        if isinstance(p, bool) or not isinstance(p, (int, float)):
            raise TypeError("p must be a number")
        if not 0 <= p < 1:
            raise ValueError(f"p must lie in [0, 1), got {p}")
        self._p = float(p)

    @property
    def p(self) -> float:
        return self._p

    @property
    def upper_bound(self) -> float:
        return 1.0 / (1.0 - self._p)

    def _above_one(self, k: float) -> float:
        return 1.0 / (self._p / k + 1.0 - self._p)

    def _above_one_array(self, ks: np.ndarray) -> np.ndarray:
        return 1.0 / (self._p / ks + 1.0 - self._p)

    def __eq__(self, other) -> bool:
        return isinstance(other, AmdahlSpeedup) and other.p == self._p

    def __hash__(self) -> int:
        return hash(("amdahl", self._p))

    def __str__(self) -> str:
        return f"Amdahl(p={self._p})"

    def __repr__(self) -> str:
        return f"AmdahlSpeedup(p={self._p!r})"


class TabulatedSpeedup(SpeedupFunction):
    """
    Speedup curve given as sorted (k, s) points.

    Values between points are linearly interpolated; beyond the last point the
    curve stays flat at the last value. The point (1, 1) is added when absent.
    The curve is checked at construction for monotonicity, sublinearity and
    concavity (non-increasing slopes, the slope below k=1 being 1).
    """

    def __init__(self, points):
        pts = sorted((float(k), float(s)) for k, s in points)
        if not pts:
            raise ValueError("points cannot be empty")
        if any(k < 1 for k, _ in pts):
            raise ValueError("tabulated points must have k >= 1")
        if pts[0][0] != 1.0:
            pts.insert(0, (1.0, 1.0))
        ks = np.array([k for k, _ in pts])
        ss = np.array([s for _, s in pts])
        if abs(ss[0] - 1.0) > CONCAVITY_TOLERANCE:
            raise ValueError("s(1) must equal 1")
        if np.any(np.diff(ks) <= 0):
            raise ValueError("k values must be distinct")
        if np.any(np.diff(ss) < -CONCAVITY_TOLERANCE):
            raise ValueError("speedup must be non-decreasing")
        if np.any(ss[1:] >= ks[1:]):
            raise ValueError("speedup must be sublinear: s(k) < k for k > 1")
        slopes = np.concatenate(([1.0], np.diff(ss) / np.diff(ks), [0.0]))
        if np.any(np.diff(slopes) > CONCAVITY_TOLERANCE):
            raise ValueError("speedup must be concave")
        self._ks = ks
        self._ss = ss

    @property
    def points(self) -> list:
        return list(zip(self._ks.tolist(), self._ss.tolist()))

    @property
    def upper_bound(self) -> float:
        return float(self._ss[-1])

    def _above_one(self, k: float) -> float:
        return float(np.interp(k, self._ks, self._ss))

    def _above_one_array(self, ks: np.ndarray) -> np.ndarray:
        return np.interp(ks, self._ks, self._ss)

    def __str__(self) -> str:
        return f"Tabulated(points={len(self._ks)})"

    def __repr__(self) -> str:
        return f"TabulatedSpeedup({self.points!r})"


def load_tabulated(path) -> TabulatedSpeedup:
    """
    Load a tabulated curve from a two-column (k, s) text file with a header.

    Columns may be separated by commas or whitespace.

    Raises:
        RuntimeError: if the file cannot be read
        ValueError: if the rows are malformed or the curve is invalid
    """
    try:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise RuntimeError(f"cannot read speedup table {path}: {exc}") from exc
    rows = [line.replace(",", " ") for line in lines[1:] if line.strip()]
    data = np.loadtxt(rows, ndmin=2)
    if data.shape[1] != 2:
        raise ValueError("speedup table must have exactly two columns")
    return TabulatedSpeedup(data.tolist())


def evaluate(s: SpeedupFunction, k: float) -> float:
    """Return s(k); see SpeedupFunction.evaluate."""
    return s.evaluate(k)


def equi_total_rate(i: int, n: int, s: SpeedupFunction, mu: float) -> float:
    """
    Total completion rate of EQUI with i jobs: i * s(n/i) * mu.

    Args:
        i: number of jobs present
        n: number of cores
        s: speedup function
        mu: per-core completion rate 1/E[X]

    Returns:
        0 for an empty system, n*mu once i >= n.

    Examples:
        >>> equi_total_rate(4, 16, AmdahlSpeedup(0.5), 1.0)
        6.4
    """
    if i < 0:
        raise ValueError("i must be non-negative")
    if n < 1:
        raise ValueError("n must be at least 1")
    if mu <= 0:
        raise ValueError("mu must be positive")
    if i == 0:
        return 0.0
    if i >= n:
        return n * mu
    return i * s.evaluate(n / i) * mu


def amdahl_harmonic_merge(p1: float, p2: float) -> float:
    """
    Parameter of the Amdahl curve whose reciprocal is the average reciprocal.

    1/(2 s1(k)) + 1/(2 s2(k)) = 1/s3(k) for all k >= 1 with p3 = (p1 + p2)/2,
    since 1/s(k) = p/k + 1 - p is affine in p.
    """
    for name, value in (("p1", p1), ("p2", p2)):
        if not 0 <= value < 1:
            raise ValueError(f"{name} must lie in [0, 1), got {value}")
    return (p1 + p2) / 2


def check_midpoint_concavity(s: SpeedupFunction, grid, tolerance: float = CONCAVITY_TOLERANCE) -> list:
    """
    Return the (a, b) pairs of a sampled grid where midpoint concavity fails.

    A pair fails when s((a+b)/2) < (s(a) + s(b))/2 - tolerance.
    """
    values = sorted(float(g) for g in grid)
    failures = []
    for idx, a in enumerate(values):
        for b in values[idx + 1:]:
            if s.evaluate((a + b) / 2) < (s.evaluate(a) + s.evaluate(b)) / 2 - tolerance:
                failures.append((a, b))
    return failures
