"""
experiment.py

Experiment orchestration: sweeps over load, (p1, p2) heat maps and single
MDP points, producing ResultRow records that the report classes export.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from typing import NamedTuple, Optional

from src import analytic
from src.csv_report import CSVReport
from src.errors import InstabilityError
from src.mdp import MdpModel, mean_response, policy_evaluation, value_iteration
from src.policies import POLICY_NAMES, make_policy
from src.results import Difference, ResultRow
from src.simulator import simulate
from src.speedup import AmdahlSpeedup
from src.workload import SystemConfig, divisors

logger = logging.getLogger(__name__)

COMMANDS = ("analyze", "simulate", "mdp", "sweep", "heatmap", "validate")
FIXED_WIDTH = ("random-chunk", "jsq-chunk", "random")

_ANALYSIS = {
    "random-chunk": analytic.random_chunk_mrt,
    "jsq-chunk": analytic.jsq_chunk_mrt,
}


@dataclass(frozen=True)
class ExperimentSpec:
    """
    Everything one CLI command needs.

    widths of None means every divisor of n. mrc holds (k1, k2, a1) for
    mixed-random-chunk.
    """

    command: str
    config: SystemConfig
    policies: tuple = ("random-chunk", "jsq-chunk", "equi")
    widths: Optional[tuple] = None
    rho_grid: tuple = ()
    p_grid: tuple = ()
    seed: int = 1
    reps: int = 10
    jobs_per_rep: int = 100_000
    simulate: bool = False
    mrc: Optional[tuple] = None
    mdp_bound: int = 60
    mdp_refine: int = 1
    workers: int = 1
    quick: bool = False
    extras: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.command not in COMMANDS:
            raise ValueError(f"unknown command {self.command!r}")
        if self.command in ("analyze", "simulate", "sweep") and not self.policies:
            raise ValueError("policies: at least one policy is required")
        unknown = [p for p in self.policies if p not in POLICY_NAMES]
        if unknown:
            raise ValueError(f"policies: unknown policy {unknown[0]!r}")
        if self.command == "sweep" and not self.rho_grid:
            raise ValueError("rho.grid: grid must be nonempty")
        if any(not 0 < rho < 1 for rho in self.rho_grid):
            raise ValueError("rho.grid: loads must lie in (0, 1)")
        if self.command == "heatmap" and not self.p_grid:
            raise ValueError("p.grid: grid must be nonempty")
        if any(not 0 <= p < 1 for p in self.p_grid):
            raise ValueError("p.grid: values must lie in [0, 1)")
        if self.widths is not None:
            bad = [k for k in self.widths if k < 1 or self.config.n % k]
            if bad and any(p in ("random-chunk", "jsq-chunk") for p in self.policies):
                raise ValueError(f"k: width {bad[0]} does not divide n={self.config.n}")
        if "mixed-random-chunk" in self.policies and self.mrc is None:
            raise ValueError("mrc.k1: mixed-random-chunk needs mrc.k1, mrc.k2 and mrc.a1")
        if self.reps < 1 or self.jobs_per_rep < 1:
            raise ValueError("reps: replication counts must be positive")

    @property
    def chunk_widths(self) -> tuple:
        return tuple(self.widths) if self.widths is not None else tuple(divisors(self.config.n))


class HeatmapResult(NamedTuple):
    rows: list
    differences: list
    diagonal_trend: list


class ExperimentRunner:
    """
    Runs ExperimentSpecs and builds reports.

    The report format is injected, so the same run can be exported as CSV or
    JSON lines.
    """

    def __init__(self, report_class=CSVReport):
        self._report_class = report_class
        self._reports = []

    # ---------------- Properties ----------------

    @property
    def reports(self):
        return self._reports

    @property
    def report_class(self):
        return self._report_class

    def set_report_format(self, report_class):
        self._report_class = report_class

    def build_report(self, rows: list):
        report = self._report_class(rows)
        self._reports.append(report)
        return report

    # ---------------- Single rows ----------------

    def analysis_row(self, cfg: SystemConfig, name: str, k: Optional[int], spec: ExperimentSpec) -> Optional[ResultRow]:
        """Closed-form row, or None when the policy has no formula for cfg."""
        try:
            if name in _ANALYSIS:
                value = _ANALYSIS[name](cfg, k)
            elif name == "equi" and cfg.num_classes == 1:
                value = analytic.equi_mrt(cfg)
            elif name == "mixed-random-chunk":
                value = analytic.mixed_random_chunk_mrt(cfg, *spec.mrc)
            else:
                return None
        except InstabilityError as exc:
            logger.warning("%s k=%s unstable at rho=%.4g: %s", name, k, cfg.load, exc)
            return self._row(cfg, name, k, None, None, "analysis", False, None, spec)
        return self._row(cfg, name, k, value, 0.0, "analysis", True, None, spec)

    def simulation_row(self, cfg: SystemConfig, name: str, k: Optional[int], spec: ExperimentSpec) -> ResultRow:
        params = dict(zip(("k1", "k2", "a1"), spec.mrc)) if spec.mrc else {}
        policy = make_policy(name, k, **params)
        result = simulate(cfg, policy, spec.jobs_per_rep, spec.seed, spec.reps, workers=spec.workers)
        if math.isinf(result.half_width) or math.isnan(result.mean_response):
            return self._row(cfg, name, k, None, None, "simulation", False, spec.seed, spec)
        return self._row(cfg, name, k, result.mean_response, result.half_width, "simulation",
                         not result.unstable, spec.seed, spec)

    @staticmethod
    def _row(cfg, name, k, value, half, source, stable, seed, spec, p=None) -> ResultRow:
        if p is None:
            p = _class_parameters(cfg)
        width = _width_label(name, k, spec)
        if value is None:
            return ResultRow(name, cfg.n, width, cfg.load, p[0], p[1], None, None, None, source, False, seed)
        return ResultRow(name, cfg.n, width, cfg.load, p[0], p[1], value, value - half, value + half, source,
                         stable, seed)

    def _policy_points(self, spec: ExperimentSpec):
        for name in spec.policies:
            if name in FIXED_WIDTH:
                for k in spec.chunk_widths:
                    yield name, k
            else:
                yield name, None

    def _point(self, cfg: SystemConfig, spec: ExperimentSpec, analysis: bool, simulation: bool) -> list:
        rows = []
        for name, k in self._policy_points(spec):
            if name == "random" and k is not None and k > cfg.n:
                continue
            if analysis:
                row = self.analysis_row(cfg, name, k, spec)
                if row is not None:
                    rows.append(row)
            if simulation:
                rows.append(self.simulation_row(cfg, name, k, spec))
        return rows

    # ---------------- Commands ----------------

    def analyze(self, spec: ExperimentSpec) -> list:
        """Closed-form rows at the configured load."""
        return self._point(spec.config, spec, analysis=True, simulation=False)

    def simulate(self, spec: ExperimentSpec) -> list:
        """Simulation rows at the configured load."""
        return self._point(spec.config, spec, analysis=False, simulation=True)

    def sweep_rho(self, spec: ExperimentSpec) -> list:
        """
        One analysis row (and a simulation row with spec.simulate) for every
        load, policy and width. EQUI is always included as the baseline for
        single-class configs.
        """
        if "equi" not in spec.policies and spec.config.num_classes == 1:
            spec = replace(spec, policies=tuple(spec.policies) + ("equi",))
        points = _grid_map(partial(_sweep_point, self), spec, list(spec.rho_grid))
        return [row for rows in points for row in rows]

    def mdp_point(self, spec: ExperimentSpec, cfg: Optional[SystemConfig] = None) -> tuple:
        """
        OPT, GREEDY*, GREEDY-min and EQUI at one two-class point.

        Returns:
            (rows, OPT policy table)
        """
        cfg = cfg or spec.config
        model = MdpModel.from_config(cfg, spec.mdp_bound, spec.mdp_refine)
        gain, _, table = value_iteration(model, workers=spec.workers)
        values = {"opt": mean_response(model, gain)}
        for name, rule in (("greedy-star", "GREEDY*"), ("greedy-min", "GREEDY-min"), ("equi", "EQUI")):
            values[name] = mean_response(model, policy_evaluation(model, rule)[0])
        p = _class_parameters(cfg)
        rows = [ResultRow(name, cfg.n, "", cfg.load, p[0], p[1], value, value, value, "mdp", True, None)
                for name, value in values.items()]
        return rows, table

    def heatmap(self, spec: ExperimentSpec) -> HeatmapResult:
        """
        OPT, GREEDY*, EQUI (MDP) and JSQ-Chunk with its best width (analysis)
        over every p1 <= p2 pair of the grid, with percentage gaps to OPT.
        """
        cfg0 = spec.config
        if cfg0.num_classes != 2:
            raise ValueError("heatmap needs a two-class config (lambda1, lambda2)")
        grid = [(p1, p2) for p1 in spec.p_grid for p2 in spec.p_grid if p1 <= p2]
        rows, differences = [], []
        opt_by_point = {}
        for (p1, p2), (point_rows, values) in zip(grid, _grid_map(partial(_heatmap_point, self), spec, grid)):
            rows.extend(point_rows)
            opt = values["opt"]
            opt_by_point[(p1, p2)] = opt
            for name in ("greedy-star", "equi", "jsq-chunk"):
                if name in values:
                    differences.append(Difference(p1, p2, name, "opt", 100.0 * (values[name] - opt) / opt))
        return HeatmapResult(rows, differences, diagonal_trend(opt_by_point))

    def heatmap_point(self, spec: ExperimentSpec, p1: float, p2: float) -> tuple:
        """
        Rows for one (p1, p2) point.

        Returns:
            (rows, {policy: E[T]}); jsq-chunk is absent when no width is stable
        """
        l1, l2 = spec.config.class_rates
        cfg = SystemConfig(spec.config.n, spec.config.dist, (AmdahlSpeedup(p1), AmdahlSpeedup(p2)), (l1, l2),
                           labels=("p1", "p2"))
        logger.info("heat map point p1=%.3g p2=%.3g", p1, p2)
        model = MdpModel.from_config(cfg, spec.mdp_bound, spec.mdp_refine)
        values = {"opt": mean_response(model, value_iteration(model, workers=spec.workers)[0])}
        for name, rule in (("greedy-star", "GREEDY*"), ("equi", "EQUI")):
            values[name] = mean_response(model, policy_evaluation(model, rule)[0])
        rows = [ResultRow(name, cfg.n, "", cfg.load, p1, p2, value, value, value, "mdp", True, None)
                for name, value in values.items()]
        try:
            k_star, jsq = analytic.optimal_fixed_width(cfg, analytic.jsq_chunk_mrt)
        except InstabilityError:
            rows.append(ResultRow("jsq-chunk", cfg.n, "", cfg.load, p1, p2, None, None, None,
                                  "analysis", False, None))
        else:
            values["jsq-chunk"] = jsq
            rows.append(ResultRow("jsq-chunk", cfg.n, str(k_star), cfg.load, p1, p2, jsq, jsq, jsq,
                                  "analysis", True, None))
        return rows, values


# ---------------- Helpers ----------------


def _sweep_point(runner: ExperimentRunner, spec: ExperimentSpec, rho: float) -> list:
    cfg = spec.config.with_load(rho)
    logger.info("sweep point rho=%.4g", rho)
    return runner._point(cfg, spec, analysis=True, simulation=spec.simulate)


def _heatmap_point(runner: ExperimentRunner, spec: ExperimentSpec, point: tuple) -> tuple:
    return runner.heatmap_point(spec, *point)


def _grid_map(task, spec: ExperimentSpec, points: list) -> list:
    """
    Run task(spec, point) for every grid point; results come back in grid order.

    With spec.workers > 1 the points go to a process pool, and each point runs
    its simulations and value iterations single-worker.
    """
    if spec.workers > 1 and len(points) > 1:
        inner = replace(spec, workers=1)
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            return list(pool.map(partial(task, inner), points))
    return [task(spec, point) for point in points]


def diagonal_trend(values: dict) -> list:
    """
    For each p1 + p2 diagonal, whether the value never increases as
    |p1 - p2| grows. Returns (p1 + p2, points, non_increasing) triples.
    """
    diagonals = {}
    for (p1, p2), value in values.items():
        diagonals.setdefault(round(p1 + p2, 9), []).append((abs(p2 - p1), value))
    trend = []
    for total in sorted(diagonals):
        points = sorted(diagonals[total])
        ordered = all(b[1] <= a[1] * (1 + 1e-9) for a, b in zip(points, points[1:]))
        trend.append((total, len(points), ordered))
    return trend


def _class_parameters(cfg: SystemConfig) -> tuple:
    ps = [getattr(s, "p", math.nan) for s in cfg.speedups]
    return (ps[0], ps[1]) if len(ps) == 2 else (ps[0], None)


def _width_label(name: str, k: Optional[int], spec: ExperimentSpec) -> str:
    if name == "mixed-random-chunk" and spec.mrc:
        k1, k2, a1 = spec.mrc
        return f"k1={k1};k2={k2};a1={a1}"
    return "" if k is None else str(k)
