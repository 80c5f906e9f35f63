"""
validation.py

Cross-checks between the closed forms, the chain solvers, the MDP and the
simulator, plus a table of golden values. The CLI's validate command runs
these and exits non-zero on any failure.
"""
from __future__ import annotations

import csv
import logging
from pathlib import Path
from typing import Callable, NamedTuple, Optional

import numpy as np

from src import analytic
from src.config import HEATMAP_MEAN, HEATMAP_RATE_PER_16_CORES
from src.errors import InstabilityError
from src.mdp import MdpModel, check_value_properties, mean_response, policy_evaluation, value_iteration
from src.policies import Equi, GreedyStar, JSQChunk, Random, RandomChunk
from src.simulator import paired_difference, simulate
from src.speedup import AmdahlSpeedup, equi_total_rate
from src.workload import Exponential, ShiftedPareto, SystemConfig, divisors, fit_hyperexp

logger = logging.getLogger(__name__)

GOLDEN_PATH = Path(__file__).parent / "data" / "golden_analysis.csv"


class CheckResult(NamedTuple):
    module: str
    invariant: str
    observed: object
    expected: object
    passed: bool

    def __str__(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.module}/{self.invariant}: observed {self.observed}, expected {self.expected}"


class ValidationReport(NamedTuple):
    results: list

    @property
    def passed(self) -> bool:
        return all(result.passed for result in self.results)

    @property
    def failures(self) -> list:
        return [result for result in self.results if not result.passed]

    def lines(self) -> list:
        return [str(result) for result in self.results]


def _amdahl_cfg(n: int, rho: float, p: float, dist=None) -> SystemConfig:
    return SystemConfig.at_load(n, rho, dist or Exponential(1.0), AmdahlSpeedup(p))


def _optimal_width(rho: float) -> float:
    return analytic.optimal_fixed_width(_amdahl_cfg(16, rho, 0.8))[1]


GOLDEN_CASES: dict = {
    "random_chunk_n16_k2_p0.5_rho0.3": lambda: analytic.random_chunk_mrt(_amdahl_cfg(16, 0.3, 0.5), 2),
    "random_chunk_n4_k1_rho0.5": lambda: analytic.random_chunk_mrt(_amdahl_cfg(4, 0.5, 0.5), 1),
    "erlang_c_wait_c2_rho0.5_mu1": lambda: analytic.erlang_c_wait(2, 0.5, 1.0),
    "threshold_equal_rates_lambda1_mu2": lambda: analytic.threshold_chain_mrt(
        analytic.ThresholdChainParams(1.0, 5, 2.0, 2.0)),
    "birth_death_mm2_lambda1_mu1": lambda: analytic.birth_death_solve(
        analytic.BirthDeathChain(1.0, lambda i: float(min(i, 2)), 1, 2.0)).mean_response,
    "equi_n1_rho0.5": lambda: analytic.equi_mrt(_amdahl_cfg(1, 0.5, 0.5)),
    "optimal_width_n16_p0.8_rho0.5": lambda: _optimal_width(0.5),
    "optimal_width_n16_p0.8_rho0.05": lambda: _optimal_width(0.05),
    "optimal_width_n16_p0.8_rho0.9": lambda: _optimal_width(0.9),
    "equi_n4_p0.5_lambda2": lambda: analytic.equi_mrt(_amdahl_cfg(4, 0.5, 0.5)),
    "jsq_approx_lambda4_c8_meanx0.75": lambda: analytic.jsq_mrt_approx(4.0, 8, 0.75),
    "jsq_chunk_n16_k2_p0.5_rho0.3": lambda: analytic.jsq_chunk_mrt(_amdahl_cfg(16, 0.3, 0.5), 2),
}


def check_golden(path=GOLDEN_PATH) -> list:
    """Compare every golden row with its recomputed value."""
    try:
        with open(path, "r", newline="", encoding="utf-8") as f:
            rows = list(csv.DictReader(f))
    except OSError as exc:
        return [CheckResult("golden", str(path), f"unreadable ({exc})", "readable file", False)]
    results = []
    for row in rows:
        name = row.get("name") or "<missing name>"
        try:
            expected = float(row["expected"])
            tolerance = float(row["tolerance"])
        except (KeyError, TypeError, ValueError):
            results.append(CheckResult("golden", name, "malformed row", "expected,tolerance numbers", False))
            continue
        case = GOLDEN_CASES.get(name)
        if case is None:
            results.append(CheckResult("golden", name, "unknown case", "a known case name", False))
            continue
        observed = case()
        passed = abs(observed - expected) <= tolerance * max(1.0, abs(expected))
        results.append(CheckResult("golden", name, observed, expected, passed))
    if not rows:
        results.append(CheckResult("golden", str(path), "no rows", "at least one golden row", False))
    return results


# ---------------- Analytic checks ----------------


def check_threshold_against_oracle(rng: np.random.Generator, count: int = 100) -> CheckResult:
    """threshold_chain_mrt vs the birth-death solver on random stable chains."""
    worst = 0.0
    for _ in range(count):
        while True:
            lam = rng.uniform(0.1, 5.0)
            mu_high = lam / rng.uniform(0.05, 0.95)
            mu_low = lam / rng.uniform(0.2, 2.0)
            if abs(lam / mu_low - 1) > 0.05:
                break
        params = analytic.ThresholdChainParams(lam, int(rng.integers(0, 21)), mu_low, mu_high)
        closed = analytic.threshold_chain_mrt(params)
        oracle = analytic.birth_death_solve(params.as_chain()).mean_response
        worst = max(worst, abs(closed - oracle) / oracle)
    return CheckResult("analytic", "threshold-vs-birth-death", worst, "< 1e-8", worst < 1e-8)


def check_optimizer_brute_force(rng: np.random.Generator, count: int = 100) -> CheckResult:
    """optimal_fixed_width agrees with an exhaustive divisor search."""
    mismatches = 0
    for _ in range(count):
        n = int(rng.choice([4, 8, 12, 16, 24, 32, 64]))
        cfg = _amdahl_cfg(n, float(rng.uniform(0.02, 0.95)), float(rng.uniform(0.0, 0.95)))
        values = {}
        for k in divisors(n):
            try:
                values[k] = analytic.random_chunk_mrt(cfg, k)
            except InstabilityError:
                pass
        if not values:
            continue
        best = min(values.values())
        brute = min(k for k, v in values.items() if v <= best * (1 + 1e-12))
        if analytic.optimal_fixed_width(cfg)[0] != brute:
            mismatches += 1
    return CheckResult("analytic", "optimizer-vs-brute-force", mismatches, 0, mismatches == 0)


def check_width_regions() -> CheckResult:
    """Random-Chunk regions at n=16, p=0.8: k*=n at light load, k*=1 at heavy load."""
    cfg = _amdahl_cfg(16, 0.5, 0.8)
    regions = analytic.optimal_width_regions(cfg, (0.02, 0.95))
    observed = (regions[0][1], regions[-1][1])
    return CheckResult("analytic", "width-regions", observed, (16, 1), observed == (16, 1))


def check_equi_sandwich(ns=(64,), epsilon: float = 0.5) -> list:
    """LB <= EQUI <= UB at the critical load of k*=4 (p=0.5), and the gap to 1/(s(4) mu) shrinks."""
    s = AmdahlSpeedup(0.5)
    dist = Exponential(1.0)
    target = 1.0 / s.evaluate(4)
    results, gaps = [], []
    for n in ns:
        cfg = analytic.critical_load_config(n, s, 4, dist)
        bounds = analytic.equi_bounds(cfg, 4, epsilon)
        equi = analytic.equi_mrt(cfg)
        ok = bounds.lower <= equi * (1 + 1e-9) and equi <= bounds.upper * (1 + 1e-9)
        results.append(CheckResult("analytic", f"equi-sandwich-n{n}", (bounds.lower, equi, bounds.upper),
                                   "lower <= equi <= upper", ok))
        gaps.append(abs(equi - target))
    if len(ns) > 1:
        ok = all(b < a for a, b in zip(gaps, gaps[1:])) and gaps[-1] * 2 <= gaps[0]
        results.append(CheckResult("analytic", "equi-convergence", gaps, "decreasing, last <= first/2", ok))
    return results


def check_equi_dominance(rho_grid=None) -> CheckResult:
    """EQUI beats every stable fixed width at n=64, p=0.5, Pareto sizes."""
    grid = rho_grid or tuple(np.round(np.arange(0.05, 0.96, 0.05), 10))
    dist = ShiftedPareto.with_mean(2.0, 1.0)
    violations = []
    for rho in grid:
        cfg = _amdahl_cfg(64, float(rho), 0.5, dist)
        equi = analytic.equi_mrt(cfg)
        for k in divisors(64):
            for formula in (analytic.random_chunk_mrt, analytic.jsq_chunk_mrt):
                try:
                    value = formula(cfg, k)
                except InstabilityError:
                    continue
                if equi > value * (1 + 1e-9):
                    violations.append((float(rho), k, formula.__name__))
    return CheckResult("analytic", "equi-dominance", violations, [], not violations)


def check_equi_saturation(n: int = 16) -> CheckResult:
    """With at least n jobs EQUI depletes exactly n units of work per second."""
    s = AmdahlSpeedup(0.5)
    totals = [equi_total_rate(i, n, s, 1.0) for i in (n, 2 * n, 5 * n)]
    ok = all(abs(total - n) < 1e-12 for total in totals)
    return CheckResult("speedup", "equi-saturation", totals, n, ok)


def _second_differences(values) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    return values[2:] - 2 * values[1:-1] + values[:-2]


def check_mixed_chunk_linearity(rng: np.random.Generator, count: int = 50) -> CheckResult:
    """Mixed-Random-Chunk E[T] is affine in a1, so a pure width is always at least as good."""
    failures = []
    for _ in range(count):
        n = int(rng.choice([8, 16, 32, 64]))
        k1, k2 = (int(k) for k in rng.choice(divisors(n), 2, replace=False))
        s = AmdahlSpeedup(float(rng.uniform(0.0, 0.95)))
        limit = min(analytic.stability_load(s, k1), analytic.stability_load(s, k2), 0.99)
        cfg = _amdahl_cfg(n, float(rng.uniform(0.05, 0.95)) * limit, s.p)
        step = max(k1, k2)
        values = np.array([analytic.mixed_random_chunk_mrt(cfg, k1, k2, a1) for a1 in range(0, n + 1, step)])
        curvature = np.abs(_second_differences(values)) if len(values) > 2 else np.zeros(1)
        affine = bool(np.all(curvature <= 1e-12 * max(1.0, float(values.max()))))
        boundary = values.min() >= min(values[0], values[-1]) * (1 - 1e-12)
        if not (affine and boundary):
            failures.append((n, k1, k2, round(cfg.load, 6)))
    return CheckResult("analytic", "mixed-chunk-affine-in-a1", failures, [], not failures)


def check_mixed_chunk_variance_concavity(rng: np.random.Generator, count: int = 50) -> CheckResult:
    """Mixed-Random-Chunk variance is concave in a1 with its minimum at a1 = 0 or a1 = n."""
    cases = [(16, analytic.ChunkMoments(1.0, 3.0), analytic.ChunkMoments(2.0, 9.0))]
    for _ in range(count - 1):
        moments = []
        for _ in range(2):
            m1 = float(rng.uniform(0.1, 5.0))
            moments.append(analytic.ChunkMoments(m1, m1 * m1 * float(rng.uniform(1.0, 10.0))))
        cases.append((int(rng.choice([8, 16, 64])), *moments))
    failures = []
    for n, mom1, mom2 in cases:
        values = np.array([analytic.mixed_random_chunk_var(n, a1, mom1, mom2) for a1 in range(n + 1)])
        concave = bool(np.all(_second_differences(values) <= 1e-12 * max(1.0, float(np.abs(values).max()))))
        boundary = values.min() >= min(values[0], values[-1]) - 1e-12 * max(1.0, float(np.abs(values).max()))
        if not (concave and boundary):
            failures.append((n, mom1, mom2))
    return CheckResult("analytic", "mixed-chunk-variance-concave", failures, [], not failures)


# ---------------- MDP checks ----------------


def check_mdp(bound: int = 24) -> list:
    """GREEDY* value properties, OPT lowest, GREEDY* within 1% of OPT."""
    s1, s2 = AmdahlSpeedup(0.2), AmdahlSpeedup(0.8)
    model = MdpModel(8, 1.5, 1.5, 1.0, s1, s2, bound)
    opt, _, _ = value_iteration(model)
    greedy, greedy_values = policy_evaluation(model, "GREEDY*")
    equi, _ = policy_evaluation(model, "EQUI")
    report = check_value_properties(greedy_values)
    gap = (greedy - opt) / opt
    return [
        CheckResult("mdp", "greedy-star-value-properties", len(report.violations), 0, report.ok),
        CheckResult("mdp", "opt-is-lowest", (opt, greedy, equi), "opt <= greedy*, equi",
                    opt <= greedy * (1 + 1e-7) and opt <= equi * (1 + 1e-7)),
        CheckResult("mdp", "greedy-star-within-1pct", gap, "<= 0.01", gap <= 0.01),
        CheckResult("mdp", "littles-law", mean_response(model, opt) * model.total_rate, opt,
                    abs(mean_response(model, opt) * model.total_rate - opt) < 1e-9),
    ]


def _heatmap_cfg(n: int, p1: float, p2: float) -> SystemConfig:
    rate = HEATMAP_RATE_PER_16_CORES * n / 16
    return SystemConfig.two_class(n, rate, rate, Exponential(1.0 / HEATMAP_MEAN), AmdahlSpeedup(p1),
                                  AmdahlSpeedup(p2))


def check_jsq_chunk_diagonal(n: int = 16, bound: int = 60,
                             points=((0.5, 0.5), (0.4, 0.6), (0.3, 0.7))) -> list:
    """
    Along p1 + p2 = const with equal class rates the best JSQ-Chunk value does
    not move, while its gap to OPT widens as the classes drift apart.
    """
    jsq, gaps = [], []
    for p1, p2 in points:
        cfg = _heatmap_cfg(n, p1, p2)
        jsq.append(analytic.optimal_fixed_width(cfg, analytic.jsq_chunk_mrt)[1])
        model = MdpModel.from_config(cfg, bound)
        opt = mean_response(model, value_iteration(model)[0])
        gaps.append((jsq[-1] - opt) / opt)
    spread = max(jsq) - min(jsq)
    return [
        CheckResult("cli", "jsq-chunk-constant-on-diagonal", spread, "<= 1e-10 relative",
                    spread <= 1e-10 * max(jsq)),
        CheckResult("cli", "jsq-chunk-gap-grows-off-diagonal", gaps, "increasing",
                    all(b > a for a, b in zip(gaps, gaps[1:]))),
    ]


def check_truncation_robustness(n: int = 16, bound: int = 30, p1: float = 0.2, p2: float = 0.8) -> CheckResult:
    """Doubling the truncation bound moves the OPT average cost by less than 0.5%."""
    model = MdpModel.from_config(_heatmap_cfg(n, p1, p2), bound)
    small = value_iteration(model)[0]
    large = value_iteration(model.with_bound(2 * bound))[0]
    change = abs(large - small) / large
    return CheckResult("mdp", f"truncation-B{bound}-vs-B{2 * bound}", change, "< 0.005", change < 0.005)


def check_heatmap_acceptance(n: int = 16, bound: int = 60, step: float = 0.1) -> list:
    """
    Over every p1 <= p2 point of the grid: GREEDY* within 1.5% of OPT, the
    ordering OPT <= GREEDY* <= EQUI, and no value-property violations on the
    GREEDY* value functions.
    """
    grid = np.round(np.arange(0.0, 1.0 - step / 2, step), 10)
    worst_gap, disordered, violating = 0.0, [], []
    for p1 in grid:
        for p2 in grid[grid >= p1]:
            model = MdpModel.from_config(_heatmap_cfg(n, float(p1), float(p2)), bound)
            opt = value_iteration(model)[0]
            greedy, greedy_values = policy_evaluation(model, "GREEDY*")
            equi = policy_evaluation(model, "EQUI")[0]
            worst_gap = max(worst_gap, (greedy - opt) / opt)
            if not (opt <= greedy * (1 + 1e-8) and greedy <= equi * (1 + 1e-8)):
                disordered.append((float(p1), float(p2)))
            if not check_value_properties(greedy_values).ok:
                violating.append((float(p1), float(p2)))
    return [
        CheckResult("mdp", f"heatmap-greedy-star-within-1.5pct-n{n}", worst_gap, "<= 0.015", worst_gap <= 0.015),
        CheckResult("mdp", "heatmap-opt-greedy-equi-order", disordered, [], not disordered),
        CheckResult("mdp", "heatmap-greedy-star-value-properties", violating, [], not violating),
    ]


# ---------------- Simulation checks ----------------


def check_random_chunk_simulation(seed: int, jobs: int, reps: int) -> CheckResult:
    cfg = _amdahl_cfg(4, 0.5, 0.5)
    result = simulate(cfg, RandomChunk(1), jobs, seed, reps)
    return CheckResult("simulator", "random-chunk-k1-ci", result.ci, 2.0, result.contains(2.0))


def check_equi_simulation(seed: int, jobs: int, reps: int) -> CheckResult:
    cfg = _amdahl_cfg(16, 0.5, 0.5)
    expected = analytic.equi_mrt(cfg)
    result = simulate(cfg, Equi(), jobs, seed, reps)
    return CheckResult("simulator", "equi-ci", result.ci, expected, result.contains(expected))


def check_random_vs_chunk(seed: int, jobs: int, reps: int, widths=(2, 4, 8), loads=(0.3, 0.6)) -> list:
    """Paired runs: splitting over random cores is slower than using a chunk."""
    results = []
    for rho in loads:
        cfg = _amdahl_cfg(16, rho, 0.5)
        for k in widths:
            try:
                analytic.random_chunk_mrt(cfg, k)
            except InstabilityError:
                continue
            split = simulate(cfg, Random(k), jobs, seed, reps)
            chunk = simulate(cfg, RandomChunk(k), jobs, seed, reps)
            diff, p_value = paired_difference(split, chunk)
            results.append(CheckResult("simulator", f"random-vs-chunk-k{k}-rho{rho}", (diff, p_value),
                                       "diff > 0, p < 0.05", diff > 0 and p_value < 0.05))
    return results


def check_jsq_approximation(seed: int, jobs: int, reps: int, n: int = 16, widths=None,
                            fractions=(0.2, 0.5, 0.9)) -> list:
    """JSQ-Chunk simulation vs the JSQ approximation, within 5%, over widths and loads up to 0.9 of stability."""
    s = AmdahlSpeedup(0.5)
    results = []
    for k in widths or divisors(n):
        for fraction in fractions:
            cfg = _amdahl_cfg(n, fraction * min(analytic.stability_load(s, k), 1.0), s.p)
            approx = analytic.jsq_chunk_mrt(cfg, k)
            result = simulate(cfg, JSQChunk(k), jobs, seed, reps)
            error = abs(result.mean_response - approx) / approx
            results.append(CheckResult("simulator", f"jsq-approximation-n{n}-k{k}-at{fraction}", error, "<= 0.05",
                                       error <= 0.05))
    return results


def check_insensitivity_simulation(seed: int, jobs: int, reps: int, loads=(0.3, 0.6), n: int = 16) -> list:
    """EQUI and Random-Chunk simulated under three size laws with E[X]=1: the 95% intervals overlap."""
    dists = (Exponential(1.0), fit_hyperexp(1.0, 10.0), ShiftedPareto.with_mean(2.0, 1.0))
    results = []
    for rho in loads:
        for policy in (Equi(), RandomChunk(2)):
            intervals = [simulate(_amdahl_cfg(n, rho, 0.5, dist), policy, jobs, seed, reps).ci for dist in dists]
            overlap = max(low for low, _ in intervals) <= min(high for _, high in intervals)
            results.append(CheckResult("simulator", f"insensitivity-{policy.name}-rho{rho}", intervals,
                                       "common overlap", overlap))
    return results


def check_greedy_star_simulation(seed: int, jobs: int, reps: int, bound: int = 30) -> CheckResult:
    """Simulated GREEDY* against its MDP policy evaluation (exponential sizes)."""
    cfg = SystemConfig.two_class(8, 1.5, 1.5, Exponential(1.0), AmdahlSpeedup(0.2), AmdahlSpeedup(0.8))
    model = MdpModel.from_config(cfg, bound)
    expected = mean_response(model, policy_evaluation(model, "GREEDY*")[0])
    result = simulate(cfg, GreedyStar(), jobs, seed, reps)
    return CheckResult("simulator", "greedy-star-vs-mdp", result.ci, expected, result.contains(expected))


def check_littles_law(seed: int, jobs: int, reps: int) -> CheckResult:
    """|E[N] - Λ E[T]| / E[N] < 5% in every replication."""
    cfg = _amdahl_cfg(16, 0.5, 0.5)
    result = simulate(cfg, RandomChunk(2), jobs, seed, reps)
    gaps = [abs(r.mean_number - cfg.total_rate * r.mean_response) / r.mean_number
            for r in result.records if r.mean_number > 0]
    worst = max(gaps, default=0.0)
    return CheckResult("simulator", "littles-law-per-replication", worst, "< 0.05", worst < 0.05)


# ---------------- Entry point ----------------


def validate(seed: int = 1, quick: bool = False, golden_path: Optional[str] = None,
             progress: Optional[Callable[[CheckResult], None]] = None) -> ValidationReport:
    """
    Run the validation suite.

    quick keeps the analytic checks, small MDPs and two short simulations;
    the full run adds the simulation oracles and the n=16, B=60 heat map.
    """
    rng = np.random.default_rng(seed)
    jobs, reps = (5_000, 10) if quick else (50_000, 10)
    results = []

    def add(items):
        for item in items if isinstance(items, list) else [items]:
            logger.info("%s", item)
            results.append(item)
            if progress is not None:
                progress(item)

    add(check_golden(golden_path or GOLDEN_PATH))
    add(check_threshold_against_oracle(rng, 20 if quick else 100))
    add(check_optimizer_brute_force(rng, 20 if quick else 100))
    add(check_width_regions())
    add(check_equi_saturation())
    add(check_equi_sandwich((64,) if quick else (64, 512, 4096)))
    add(check_equi_dominance((0.2, 0.5, 0.8) if quick else None))
    add(check_mixed_chunk_linearity(rng))
    add(check_mixed_chunk_variance_concavity(rng))
    add(check_mdp(16 if quick else 30))
    add(check_truncation_robustness(*((8, 15) if quick else (16, 30))))
    add(check_jsq_chunk_diagonal(*((8, 20) if quick else (16, 60))))
    add(check_random_chunk_simulation(seed, jobs, reps))
    add(check_littles_law(seed, jobs, reps))
    if not quick:
        add(check_equi_simulation(seed, jobs, reps))
        add(check_random_vs_chunk(seed, jobs, reps))
        add(check_jsq_approximation(seed, jobs, reps))
        add(check_jsq_approximation(seed, jobs, reps, n=64, widths=(1, 8), fractions=(0.5,)))
        add(check_insensitivity_simulation(seed, jobs, reps))
        add(check_greedy_star_simulation(seed, jobs, reps))
        add(check_heatmap_acceptance())
    report = ValidationReport(results)
    if not report.passed:
        for failure in report.failures:
            logger.warning("%s", failure)
    return report

