"""
mdp.py

Two-class continuous-time MDP over the number of jobs of each class.

States are (x1, x2) with 0 <= x1, x2 <= B; the action is the number of cores
a1 given to class 1 (the rest go to class 2), each class splitting its cores
EQUI-style. The chain is uniformized at U = Λ1 + Λ2 + nμ (no class can
complete faster than nμ in total, since s(k) <= k) and time is rescaled so
U = 1. Arrivals that would push a class above B are rejected and become
self-loops. Average cost is E[N]; response times use Little's Law.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple, Optional, Union

import numpy as np

from src.errors import DivergenceError
from src.speedup import SpeedupFunction
from src.workload import SystemConfig

logger = logging.getLogger(__name__)

PLATEAU_TOLERANCE = 1e-9
SPAN_TOLERANCE = 1e-8
MAX_ITERATIONS = 500_000


# ---------------- Types ----------------


@dataclass(frozen=True)
class MdpModel:
    """Truncated two-class model; class 1 is the less parallelizable one."""

    n: int
    lambda1: float
    lambda2: float
    mu: float
    s1: SpeedupFunction
    s2: SpeedupFunction
    bound: int = 60
    refine: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise ValueError("arrival rates must be non-negative")
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.bound < 1:
            raise ValueError("bound must be at least 1")
        if self.refine < 1:
            raise ValueError("refine must be at least 1")

    @classmethod
    def from_config(cls, cfg: SystemConfig, bound: int = 60, refine: int = 1) -> "MdpModel":
        """Model for a config; a single-class config becomes class 1 with Λ2 = 0."""
        if cfg.num_classes == 1:
            return cls(cfg.n, cfg.total_rate, 0.0, cfg.mu, cfg.speedup, cfg.speedup, bound, refine)
        (s1, s2), (l1, l2) = cfg.speedups, cfg.class_rates
        return cls(cfg.n, l1, l2, cfg.mu, s1, s2, bound, refine)

    @property
    def action_grid(self) -> np.ndarray:
        return np.arange(self.n * self.refine + 1) / self.refine

    @property
    def total_rate(self) -> float:
        return self.lambda1 + self.lambda2

    @property
    def uniformization(self) -> float:
        return self.lambda1 + self.lambda2 + self.n * self.mu

    def with_bound(self, bound: int) -> "MdpModel":
        return MdpModel(self.n, self.lambda1, self.lambda2, self.mu, self.s1, self.s2, bound, self.refine)


@dataclass(frozen=True)
class ValueGrid:
    """Relative value function V(x1, x2) with its convergence record."""

    values: np.ndarray
    iterations: int
    span: float
    average_cost: float

    @property
    def bound(self) -> int:
        return self.values.shape[0] - 1


class PolicyTable:
    """
    Cores a1(x1, x2) given to class 1 in every truncated state.

    Invariants: 0 <= a1 <= n, a1 = 0 when x1 = 0, a1 = n when x2 = 0 < x1.
    """

    def __init__(self, a1: np.ndarray, n: int, provenance: str = "custom"):
        a1 = np.asarray(a1, dtype=float)
        if a1.ndim != 2 or a1.shape[0] != a1.shape[1]:
            raise ValueError("a1 must be a square (B+1) x (B+1) table")
        if np.any(a1 < -1e-12) or np.any(a1 > n + 1e-12):
            raise ValueError(f"a1 must lie in [0, {n}]")
        if np.any(a1[0, :] != 0):
            raise ValueError("a1 must be 0 when x1 = 0")
        if np.any(a1[1:, 0] != n):
            raise ValueError("a1 must be n when x2 = 0 and x1 > 0")
        self._a1 = a1
        self._n = n
        self._provenance = provenance

    @property
    def a1(self) -> np.ndarray:
        return self._a1

    @property
    def n(self) -> int:
        return self._n

    @property
    def bound(self) -> int:
        return self._a1.shape[0] - 1

    @property
    def provenance(self) -> str:
        return self._provenance

    def action(self, x1: int, x2: int) -> float:
        """a1 for a state; states beyond the table use the nearest boundary entry."""
        if x1 == 0:
            return 0.0
        if x2 == 0:
            return float(self._n)
        b = self.bound
        return float(self._a1[min(x1, b), min(x2, b)])

    def rows(self):
        """(x1, x2, a1) triples in row-major order."""
        b = self.bound
        for x1 in range(b + 1):
            for x2 in range(b + 1):
                yield x1, x2, float(self._a1[x1, x2])

    def __str__(self) -> str:
        return f"PolicyTable({self._provenance}, n={self._n}, B={self.bound})"

    def __repr__(self) -> str:
        return f"PolicyTable(provenance={self._provenance!r}, n={self._n}, bound={self.bound})"


class PropertyViolation(NamedTuple):
    prop: int
    state: tuple
    lhs: float
    rhs: float


class ValueReport(NamedTuple):
    violations: list
    checked: int

    @property
    def ok(self) -> bool:
        return not self.violations


# ---------------- Rates and allocations ----------------


def class_service_rate(a: float, x: int, s: SpeedupFunction, mu: float) -> float:
    """
    Total departure rate of a class with x jobs on a cores.

    min{a, x} μ s(max{1, a/x}); zero when a = 0 or x = 0.
    """
    if a < 0 or x < 0:
        raise ValueError("a and x must be non-negative")
    if a == 0 or x == 0:
        return 0.0
    return min(a, x) * mu * s.evaluate(max(1.0, a / x))


def _class_rates(actions: np.ndarray, xs: np.ndarray, s: SpeedupFunction, mu: float) -> np.ndarray:
    """class_service_rate over an (actions x xs) grid."""
    a = np.asarray(actions, dtype=float)[:, None]
    x = np.asarray(xs, dtype=float)[None, :]
    ratio = a / np.maximum(x, 1.0)
    return np.minimum(a, x) * mu * s.evaluate_array(np.maximum(1.0, ratio))


def greedy_star_allocation(x1: int, x2: int, n: int, s1: SpeedupFunction, s2: SpeedupFunction,
                           mu: float, grid: Optional[np.ndarray] = None) -> float:
    """
    GREEDY* cores for class 1 in state (x1, x2).

    Among the grid actions whose total departure rate is within a relative
    1e-9 of the maximum β(x1, x2), take the largest a1 (defer the
    parallelizable class). x1 = 0 forces 0 and x2 = 0 < x1 forces n.
    """
    if x1 < 0 or x2 < 0:
        raise ValueError("job counts must be non-negative")
    if x1 == 0:
        return 0.0
    if x2 == 0:
        return float(n)
    actions = np.arange(n + 1, dtype=float) if grid is None else np.asarray(grid, dtype=float)
    total = _class_rates(actions, [x1], s1, mu)[:, 0] + _class_rates(n - actions, [x2], s2, mu)[:, 0]
    beta = total.max()
    plateau = actions[total >= beta - PLATEAU_TOLERANCE * beta]
    return float(plateau.max())


# ---------------- Precomputed tables ----------------


class _Tables(NamedTuple):
    actions: np.ndarray
    rate1: np.ndarray   # (A, B+1): class-1 rate for action a and x1
    rate2: np.ndarray   # (A, B+1): class-2 rate for action a and x2
    allowed: np.ndarray  # (A, B+1, B+1)
    cost: np.ndarray


@lru_cache(maxsize=32)
def _tables(model: MdpModel) -> _Tables:
    actions = model.action_grid
    xs = np.arange(model.bound + 1)
    rate1 = _class_rates(actions, xs, model.s1, model.mu)
    rate2 = _class_rates(model.n - actions, xs, model.s2, model.mu)
    b = model.bound + 1
    allowed = np.ones((len(actions), b, b), dtype=bool)
    allowed[:, 0, :] = False
    allowed[0, 0, :] = True
    allowed[:, 1:, 0] = False
    allowed[-1, 1:, 0] = True
    cost = (xs[:, None] + xs[None, :]).astype(float)
    return _Tables(actions, rate1, rate2, allowed, cost)


def _neighbours(values: np.ndarray):
    """V at x1+1, x2+1 (rejected at B) and at (x1-1)+, (x2-1)+."""
    up1 = np.concatenate((values[1:, :], values[-1:, :]), axis=0)
    up2 = np.concatenate((values[:, 1:], values[:, -1:]), axis=1)
    down1 = np.concatenate((values[:1, :], values[:-1, :]), axis=0)
    down2 = np.concatenate((values[:, :1], values[:, :-1]), axis=1)
    return up1, up2, down1, down2


def _total_rates(model: MdpModel, a1: np.ndarray):
    """Per-state class departure rates for a fixed allocation table."""
    xs = np.arange(model.bound + 1, dtype=float)
    x1 = xs[:, None] * np.ones_like(a1)
    x2 = xs[None, :] * np.ones_like(a1)
    a2 = model.n - a1

    def rate(a, x, s):
        return np.minimum(a, x) * model.mu * s.evaluate_array(np.maximum(1.0, a / np.maximum(x, 1.0)))

    return rate(a1, x1, model.s1), rate(a2, x2, model.s2)


# ---------------- Value iteration ----------------


def _optimality_rows(values, tables, model, rows):
    """Bellman optimality update for a block of x1 rows (Jacobi: reads the old V only)."""
    u = model.uniformization
    l1, l2 = model.lambda1 / u, model.lambda2 / u
    up1, up2, down1, down2 = _neighbours(values)
    v = values[rows]
    base = tables.cost[rows] + v + l1 * (up1[rows] - v) + l2 * (up2[rows] - v)
    r1 = tables.rate1[:, rows][:, :, None] / u
    r2 = tables.rate2[:, None, :] / u
    choice = r1 * (down1[rows] - v)[None] + r2 * (down2[rows] - v)[None]
    choice = np.where(tables.allowed[:, rows], choice, np.inf)
    # largest a1 among equal minimisers
    flipped = choice[::-1]
    best = len(tables.actions) - 1 - np.argmin(flipped, axis=0)
    return base + np.min(choice, axis=0), best


def _iterate(step, start: np.ndarray, tol: float, max_iterations: int, label: str):
    values = start
    trace = []
    for iteration in range(1, max_iterations + 1):
        new_values, extra = step(values)
        diff = new_values - values
        hi, lo = float(diff.max()), float(diff.min())
        span = hi - lo
        values = new_values - new_values[0, 0]
        if iteration % 1000 == 0:
            trace.append(span)
            logger.debug("%s: iteration %d span %.3e", label, iteration, span)
        if span < tol:
            logger.info("%s converged after %d iterations (span %.2e)", label, iteration, span)
            return values, extra, iteration, span, (hi + lo) / 2
    trace.append(span)
    logger.warning("%s did not converge: span %.3e after %d iterations", label, span, max_iterations)
    raise DivergenceError(f"{label} did not converge in {max_iterations} iterations", trace)


def value_iteration(model: MdpModel, tol: float = SPAN_TOLERANCE, max_iterations: int = MAX_ITERATIONS,
                    workers: int = 1):
    """
    Average-cost value iteration for OPT, starting from V0 = 0.

    V_{n+1} = A_n + H_n with cost x1 + x2. Stops when the span of
    V_{n+1} - V_n drops below tol; E[N] is the midpoint of that difference.
    With workers > 1 each sweep splits the x1 rows across threads; every row
    reads the previous V only, so the result does not depend on workers.

    Returns:
        (E[N], ValueGrid, PolicyTable)

    Raises:
        DivergenceError: if the span does not drop below tol
    """
    tables = _tables(model)
    b = model.bound + 1
    blocks = np.array_split(np.arange(b), max(1, min(workers, b)))
    pool = ThreadPoolExecutor(max_workers=workers) if workers > 1 else None

    def step(values):
        if pool is None:
            return _optimality_rows(values, tables, model, slice(None))
        parts = list(pool.map(lambda rows: _optimality_rows(values, tables, model, rows), blocks))
        return np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts])

    try:
        values, best, iterations, span, gain = _iterate(step, np.zeros((b, b)), tol, max_iterations, "OPT")
    finally:
        if pool is not None:
            pool.shutdown()
    a1 = tables.actions[best]
    a1[0, :] = 0.0
    a1[1:, 0] = model.n
    grid = ValueGrid(values, iterations, span, gain)
    return gain, grid, PolicyTable(a1, model.n, "OPT")


# ---------------- Fixed policies ----------------


def initial_values(bound: int) -> np.ndarray:
    """V0(x1, x2) = x1 + x2 + x1 / (x1 + x2 + 1)."""
    xs = np.arange(bound + 1, dtype=float)
    x1, x2 = xs[:, None], xs[None, :]
    return x1 + x2 + x1 / (x1 + x2 + 1)


def greedy_table(model: MdpModel, prefer: str = "max") -> PolicyTable:
    """
    A GREEDY policy table: every state takes a maximal-departure-rate action.

    prefer="max" gives GREEDY* (largest such a1); "min" takes the smallest.
    """
    if prefer not in ("max", "min"):
        raise ValueError("prefer must be 'max' or 'min'")
    tables = _tables(model)
    total = tables.rate1[:, :, None] + tables.rate2[:, None, :]
    total = np.where(tables.allowed, total, -np.inf)
    beta = total.max(axis=0)
    near = total >= beta - PLATEAU_TOLERANCE * beta
    if prefer == "max":
        index = len(tables.actions) - 1 - np.argmax(near[::-1], axis=0)
    else:
        index = np.argmax(near, axis=0)
    a1 = tables.actions[index]
    return PolicyTable(a1, model.n, "GREEDY*" if prefer == "max" else "GREEDY-min")


def equi_table(model: MdpModel) -> PolicyTable:
    """
    EQUI: a1 = n x1 / (x1 + x2), rounded half-up to the action grid.

    When both classes are present each keeps at least one grid step, so a
    lone job facing a long queue of the other class is never starved.
    """
    xs = np.arange(model.bound + 1, dtype=float)
    x1, x2 = xs[:, None], xs[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        share = np.where(x1 + x2 > 0, model.n * x1 / (x1 + x2), 0.0)
    step = 1.0 / model.refine
    a1 = np.floor(share * model.refine + 0.5) * step
    both = (x1 > 0) & (x2 > 0) & (model.n - step >= step)
    a1 = np.where(both, np.clip(a1, step, model.n - step), a1)
    a1[1:, 0] = model.n
    return PolicyTable(a1, model.n, "EQUI")


_RULES = {"EQUI": equi_table, "GREEDY*": greedy_table,
          "GREEDY-min": lambda model: greedy_table(model, "min")}


def policy_table(model: MdpModel, rule: str) -> PolicyTable:
    """Build the table for a named rule (EQUI, GREEDY*, GREEDY-min)."""
    try:
        return _RULES[rule](model)
    except KeyError:
        raise ValueError(f"unknown policy rule {rule!r}; expected one of {sorted(_RULES)}") from None


def policy_evaluation(model: MdpModel, policy: Union[PolicyTable, str], tol: float = SPAN_TOLERANCE,
                      max_iterations: int = MAX_ITERATIONS):
    """
    Average cost of a fixed policy by value iteration from V0.

    Returns:
        (E[N], ValueGrid)

    Raises:
        DivergenceError: if the span does not drop below tol
    """
    table = policy_table(model, policy) if isinstance(policy, str) else policy
    if table.bound != model.bound:
        raise ValueError(f"policy table bound {table.bound} != model bound {model.bound}")
    tables = _tables(model)
    u = model.uniformization
    l1, l2 = model.lambda1 / u, model.lambda2 / u
    rate1, rate2 = _total_rates(model, table.a1)
    r1, r2 = rate1 / u, rate2 / u

    def step(values):
        up1, up2, down1, down2 = _neighbours(values)
        new = (tables.cost + values + l1 * (up1 - values) + l2 * (up2 - values)
               + r1 * (down1 - values) + r2 * (down2 - values))
        return new, None

    values, _, iterations, span, gain = _iterate(step, initial_values(model.bound), tol, max_iterations,
                                                 table.provenance)
    return gain, ValueGrid(values, iterations, span, gain)


def mean_response(model: MdpModel, mean_number: float) -> float:
    """E[T] = E[N] / (Λ1 + Λ2)."""
    if model.total_rate == 0:
        return 0.0
    return mean_number / model.total_rate


# ---------------- Value-function properties ----------------


def check_value_properties(grid: Union[ValueGrid, np.ndarray], margin: Optional[int] = None) -> ValueReport:
    """
    Check the three monotonicity properties of a value function.

    1. V(x1+1, x2) > V(x1, x2)
    2. V(x1, x2+1) > V(x1, x2)
    3. V(x1+1, x2) > V(x1, x2+1)

    States within `margin` of the truncation bound are skipped (default 2).
    Arrivals are rejected at B, which lowers V on the last rows and columns
    and can flip property 3 there; the distortion fades within a couple of
    states at the loads the heat maps use.
    """
    values = grid.values if isinstance(grid, ValueGrid) else np.asarray(grid, dtype=float)
    bound = values.shape[0] - 1
    margin = 2 if margin is None else max(margin, 1)
    top = bound - margin
    violations = []
    checked = 0
    for x1 in range(top):
        for x2 in range(top):
            checked += 1
            here, right, up = values[x1, x2], values[x1 + 1, x2], values[x1, x2 + 1]
            if not right > here:
                violations.append(PropertyViolation(1, (x1, x2), right, here))
            if not up > here:
                violations.append(PropertyViolation(2, (x1, x2), up, here))
            if not right > up:
                violations.append(PropertyViolation(3, (x1, x2), right, up))
    return ValueReport(violations, checked)
