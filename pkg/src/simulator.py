"""
simulator.py

Event-driven simulation of the n-core machine.

Every station is a processor-sharing queue. Stations keep a virtual clock
("attained service per job") that advances at the station's per-job rate;
a piece finishes when the clock reaches the value it was tagged with on
arrival. Between events all rates are constant, so the next completion time
is exact and no time stepping is involved.
"""
from __future__ import annotations

import heapq
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from src.analytic import ChunkMoments
from src.policies import SchedulingPolicy, depletion_rates, jsq_dispatch  # noqa: F401  (re-exported)
from src.workload import SystemConfig, replication_streams

logger = logging.getLogger(__name__)

BLOCK = 4096
WARMUP_FRACTION = 0.25  # of the measured count, i.e. 20% of all jobs


def random_piece_response(arrival: float, completions) -> float:
    """A split job leaves when its last piece is done."""
    completions = list(completions)
    if not completions:
        raise ValueError("a job has at least one piece")
    if min(completions) < arrival:
        raise ValueError("a piece cannot finish before the job arrives")
    return max(completions) - arrival


@dataclass(frozen=True)
class ReplicationRecord:
    replication: int
    mean_response: float
    mean_number: float
    class_means: tuple
    chunk_moments: dict
    completed: int
    unstable: bool
    duration: float


@dataclass
class SimResult:
    """Estimate over independent replications with a 95% t-interval."""

    policy: str
    mean_response: float
    half_width: float
    mean_number: float
    class_means: tuple
    replications: int
    seed: int
    unstable: bool
    records: list = field(default_factory=list, repr=False)
    chunk_moments: dict = field(default_factory=dict)

    @property
    def ci(self) -> tuple:
        return self.mean_response - self.half_width, self.mean_response + self.half_width

    def contains(self, value: float) -> bool:
        low, high = self.ci
        return low <= value <= high

    @property
    def per_replication(self) -> np.ndarray:
        return np.array([r.mean_response for r in self.records])

    def littles_law_gap(self, total_rate: float) -> float:
        """|E[N] - Λ E[T]| / E[N]."""
        if self.mean_number == 0:
            return 0.0
        return abs(self.mean_number - total_rate * self.mean_response) / self.mean_number

    def __str__(self) -> str:
        low, high = self.ci
        flag = " UNSTABLE" if self.unstable else ""
        return f"{self.policy}: E[T]={self.mean_response:.5g} [{low:.5g}, {high:.5g}] R={self.replications}{flag}"


class _Buffered:
    """Draws from a generator in blocks."""

    def __init__(self, draw):
        self._draw = draw
        self._values = draw(BLOCK)
        self._pos = 0

    def next(self):
        if self._pos == len(self._values):
            self._values = self._draw(BLOCK)
            self._pos = 0
        value = self._values[self._pos]
        self._pos += 1
        return value


def _run_replication(cfg: SystemConfig, policy: SchedulingPolicy, measured: int, warmup: int,
                     seed: int, replication: int, max_population: int) -> ReplicationRecord:
    arrivals_rng, sizes_rng, dispatch_rng = replication_streams(seed, replication)
    bound = policy.prepare(cfg)
    total_rate = cfg.total_rate
    if total_rate <= 0:
        raise ValueError("simulation needs a positive arrival rate")

    gaps = _Buffered(lambda size: arrivals_rng.exponential(1.0 / total_rate, size))
    sizes = _Buffered(lambda size: cfg.dist.sample(sizes_rng, size))
    probabilities = np.array(cfg.class_probabilities)
    classes = _Buffered(lambda size: sizes_rng.choice(len(probabilities), size=size, p=probabilities))

    stations = bound.num_stations()
    counts = np.zeros(stations, dtype=int)
    class_counts = np.zeros(cfg.num_classes, dtype=int)
    clock = np.zeros(stations)
    heaps = [[] for _ in range(stations)]
    head = np.full(stations, np.inf)
    rates = np.zeros(stations)

    # job id -> [arrival, pieces left, class, chunk type]
    jobs = {}
    first, last = warmup, warmup + measured - 1
    responses = np.zeros(measured)
    response_classes = np.zeros(measured, dtype=int)
    response_types = np.zeros(measured, dtype=int)
    filled = np.zeros(measured, dtype=bool)
    done = 0

    now = 0.0
    next_arrival = gaps.next()
    next_id = 0
    population = 0
    area = 0.0
    halves = [0.0, 0.0]
    half_times = [0.0, 0.0]
    window_start = window_end = None
    middle = first + measured // 2
    sequence = 0
    unstable = False

    while done < measured:
        with np.errstate(divide="ignore", invalid="ignore"):
            remaining = np.where(rates > 0, (head - clock) / rates, np.inf)
        station = int(np.argmin(remaining))
        to_completion = max(float(remaining[station]), 0.0)
        to_arrival = next_arrival - now
        step = min(to_arrival, to_completion)

        if window_start is not None and window_end is None:
            area += population * step
            half = 0 if next_id <= middle else 1
            halves[half] += population * step
            half_times[half] += step
        clock += rates * step
        now += step

        if to_arrival <= to_completion:
            job_class = int(classes.next())
            size = float(sizes.next())
            targets = bound.dispatch(job_class, counts, dispatch_rng)
            jobs[next_id] = [now, len(targets), job_class, bound.chunk_type(targets[0])]
            for target in targets:
                tag = clock[target] + size / bound.divisor(job_class, target)
                heapq.heappush(heaps[target], (tag, sequence, next_id))
                sequence += 1
                head[target] = heaps[target][0][0]
                counts[target] += 1
            class_counts[job_class] += 1
            population += 1
            if next_id == first:
                window_start = now
            if next_id == last:
                window_end = now
            next_id += 1
            next_arrival = now + gaps.next()
            if population > max_population:
                unstable = True
                logger.warning("population exceeded %d under %s; stopping replication %d",
                               max_population, bound.name, replication)
                break
        else:
            _, _, job_id = heapq.heappop(heaps[station])
            counts[station] -= 1
            head[station] = heaps[station][0][0] if heaps[station] else np.inf
            job = jobs[job_id]
            job[1] -= 1
            if job[1] == 0:
                del jobs[job_id]
                class_counts[job[2]] -= 1
                population -= 1
                if first <= job_id <= last:
                    slot = job_id - first
                    responses[slot] = now - job[0]
                    response_classes[slot] = job[2]
                    response_types[slot] = job[3]
                    filled[slot] = True
                    done += 1
        rates = bound.rates(counts, class_counts)

    if window_end is None:
        window_end = now
    if window_start is None:
        window_start = 0.0
    span = window_end - window_start
    mean_number = area / span if span > 0 else 0.0
    if not unstable:
        first_half, second_half = (a / t if t > 0 else 0.0 for a, t in zip(halves, half_times))
        if second_half > 2.0 * first_half + 10.0:
            unstable = True
            logger.warning("population kept growing under %s (replication %d)", bound.name, replication)

    observed = responses[filled]
    kinds = response_classes[filled]
    chunk_kinds = response_types[filled]
    class_means = tuple(float(observed[kinds == c].mean()) if np.any(kinds == c) else math.nan
                        for c in range(cfg.num_classes))
    chunk_moments = {int(t): (float(observed[chunk_kinds == t].mean()), float((observed[chunk_kinds == t] ** 2).mean()))
                     for t in np.unique(chunk_kinds)}
    record = ReplicationRecord(replication, float(observed.mean()) if len(observed) else math.nan, mean_number,
                               class_means, chunk_moments, len(observed), unstable, now)
    logger.debug("replication %d of %s: E[T]=%.5g E[N]=%.5g", replication, bound.name,
                 record.mean_response, record.mean_number)
    return record


def _replicate(args):
    return _run_replication(*args)


def simulate(cfg: SystemConfig, policy: SchedulingPolicy, measured_jobs: int = 100_000, seed: int = 1,
             replications: int = 10, warmup_jobs: Optional[int] = None, workers: int = 1,
             max_population: int = 200_000) -> SimResult:
    """
    Simulate a policy over independent replications.

    Each replication discards warmup_jobs (default a quarter of
    measured_jobs, so 20% of the total) and averages the response times of
    the next measured_jobs arrivals; arrivals continue until all of them
    have left. Replication r uses streams derived from (seed, r), so results
    do not depend on workers and two policies run with the same seed see the
    same arrivals and sizes.

    Returns:
        SimResult whose unstable flag is set when any replication saw its
        population keep growing or hit max_population.
    """
    if measured_jobs < 1:
        raise ValueError("measured_jobs must be at least 1")
    if replications < 1:
        raise ValueError("replications must be at least 1")
    policy.validate(cfg)
    warmup = int(measured_jobs * WARMUP_FRACTION) if warmup_jobs is None else warmup_jobs
    if warmup < 0:
        raise ValueError("warmup_jobs must be non-negative")
    logger.info("simulating %s at rho=%.4g (n=%d, %d x %d jobs)", policy.name, cfg.load, cfg.n,
                replications, measured_jobs)

    tasks = [(cfg, policy, measured_jobs, warmup, seed, r, max_population) for r in range(replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_replicate, tasks))
    else:
        records = [_replicate(task) for task in tasks]
    records.sort(key=lambda record: record.replication)
    return summarize(policy.name, records, seed)


def summarize(name: str, records: list, seed: int) -> SimResult:
    """Combine replication records into a SimResult with a 95% t-interval."""
    means = np.array([r.mean_response for r in records])
    count = len(records)
    mean = float(means.mean())
    if count > 1:
        half = float(stats.t.ppf(0.975, count - 1) * means.std(ddof=1) / math.sqrt(count))
    else:
        half = math.inf
    classes = len(records[0].class_means)
    class_means = tuple(float(np.nanmean([r.class_means[c] for r in records])) for c in range(classes))
    moments = {}
    for kind in sorted({t for r in records for t in r.chunk_moments}):
        pairs = [r.chunk_moments[kind] for r in records if kind in r.chunk_moments]
        moments[kind] = ChunkMoments(float(np.mean([p[0] for p in pairs])), float(np.mean([p[1] for p in pairs])))
    result = SimResult(name, mean, half, float(np.mean([r.mean_number for r in records])), class_means, count,
                       seed, any(r.unstable for r in records), records, moments)
    logger.info("%s", result)
    return result


def paired_difference(a: SimResult, b: SimResult) -> tuple:
    """
    Mean per-replication difference a - b and the one-sided p-value for
    "a is larger", from a paired t-test over seed-paired replications.
    """
    if a.replications != b.replications or a.seed != b.seed:
        raise ValueError("results must come from the same seed and replication count")
    if a.replications < 2:
        raise ValueError("need at least two replications")
    x, y = a.per_replication, b.per_replication
    test = stats.ttest_rel(x, y, alternative="greater")
    return float(np.mean(x - y)), float(test.pvalue)
