"""
analytic.py

Closed-form and Markov-chain response-time calculators.

Tiers:
- Fixed-width formulas: Random-Chunk, Mixed-Random-Chunk, JSQ-Chunk
- Queueing helpers: Erlang-C wait, the JSQ approximation
- Chain solvers: birth-death chains, threshold chains, EQUI and its bounds
- Optimizers: best fixed width and its load regions

Every function is a pure function of its arguments.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple, Optional

import numpy as np
from scipy.special import gammaln, logsumexp

from src.errors import InstabilityError
from src.speedup import SpeedupFunction, equi_total_rate
from src.workload import JobSizeDistribution, SystemConfig, divisors

# Nelson-Philips correction constants
ALPHA_1 = 0.0455
ALPHA_2 = 0.7678
GAMMA_1 = 0.0216
GAMMA_2 = 0.0045

DEGENERATE_RATE_TOLERANCE = 1e-12


# =========================== TYPES =========================== #


@dataclass(frozen=True)
class BirthDeathChain:
    """
    Birth-death chain with constant arrival rate and state-dependent departures.

    departure_rate(i) is used for 1 <= i <= tail_level; every state above
    tail_level departs at tail_rate, so the tail is geometric with ratio
    arrival_rate / tail_rate.
    """

    arrival_rate: float
    departure_rate: Callable[[int], float]
    tail_level: int
    tail_rate: float

    def __post_init__(self):
        if self.arrival_rate < 0:
            raise ValueError("arrival_rate must be non-negative")
        if self.tail_level < 0:
            raise ValueError("tail_level must be non-negative")
        if self.tail_rate <= 0:
            raise ValueError("tail_rate must be positive")

    @property
    def tail_ratio(self) -> float:
        return self.arrival_rate / self.tail_rate


class BirthDeathSolution(NamedTuple):
    mean_number: float
    mean_response: float
    probabilities: np.ndarray
    tail_mass: float


@dataclass(frozen=True)
class ThresholdChainParams:
    """Threshold chain: rate mu_low in states 1..t, mu_high above t."""

    arrival_rate: float
    threshold: int
    mu_low: float
    mu_high: float

    def __post_init__(self):
        if self.arrival_rate <= 0:
            raise ValueError("arrival_rate must be positive")
        if self.threshold < 0:
            raise ValueError("threshold must be non-negative")
        if self.mu_low <= 0 or self.mu_high <= 0:
            raise ValueError("rates must be positive")

    def as_chain(self) -> BirthDeathChain:
        t, low = self.threshold, self.mu_low
        return BirthDeathChain(self.arrival_rate, lambda i: low, t, self.mu_high)


@dataclass(frozen=True)
class ChunkMoments:
    """First and second response-time moments given the chunk type."""

    m1: float
    m2: float

    def __post_init__(self):
        if self.m1 < 0:
            raise ValueError("m1 must be non-negative")
        if self.m2 < self.m1 ** 2 - 1e-12 * max(1.0, self.m2):
            raise ValueError(f"moments violate Jensen: m2={self.m2} < m1^2={self.m1 ** 2}")

    @property
    def variance(self) -> float:
        return max(self.m2 - self.m1 ** 2, 0.0)


class EquiBounds(NamedTuple):
    lower: float
    upper: float


# =========================== FIXED-WIDTH FORMULAS =========================== #


def _check_width(cfg: SystemConfig, k: int) -> None:
    if isinstance(k, bool) or not isinstance(k, (int, np.integer)):
        raise TypeError("k must be an integer")
    if k < 1 or cfg.n % k:
        raise ValueError(f"k={k} must be a positive divisor of n={cfg.n}")


def mixed_chunk_mean(cfg: SystemConfig, k: float) -> float:
    """
    Mean size of a job run on k cores, mixed over the classes.

    E[X_k] = sum_i (Λi / Λ) E[X] / s_i(k); one class gives E[X] / s(k).
    """
    return sum(prob * cfg.mean_size / s.evaluate(k)
               for prob, s in zip(cfg.class_probabilities, cfg.speedups))


def random_chunk_mrt(cfg: SystemConfig, k: int) -> float:
    """
    Mean response time under Random-Chunk with width k.

    Each core sees Poisson arrivals at rate Λk/n with pieces of mean E[X_k],
    a PS queue, so E[T] = E[X_k] / (1 - ρ k / s(k)) = E[X] / (s(k) - kρ).

    Raises:
        ValueError: if k does not divide n
        InstabilityError: if kρ >= s(k)

    Examples:
        >>> from src.speedup import AmdahlSpeedup
        >>> from src.workload import Exponential
        >>> cfg = SystemConfig.at_load(4, 0.5, Exponential(1.0), AmdahlSpeedup(0.5))
        >>> random_chunk_mrt(cfg, 1)
        2.0
    """
    _check_width(cfg, k)
    mean_k = mixed_chunk_mean(cfg, k)
    margin = 1.0 - cfg.chunk_arrival_rate(k) * mean_k
    if margin <= 0:
        raise InstabilityError(f"Random-Chunk with k={k} is unstable", cfg.mean_size / mean_k * margin)
    return mean_k / margin


def stability_load(s: SpeedupFunction, k: float) -> float:
    """Load at which a width-k chunk saturates: ρ = s(k)/k."""
    return s.evaluate(k) / k


def mixed_random_chunk_mrt(cfg: SystemConfig, k1: int, k2: int, a1: int) -> float:
    """
    Mean response time under Mixed-Random-Chunk.

    a1 cores form width-k1 chunks, the other n - a1 form width-k2 chunks. A job
    picks a core uniformly, so it lands in a width-ki chunk with probability
    ai/n, and E[T] = (a1/n) E[T|E1] + (a2/n) E[T|E2] with
    E[T|Ei] = E[X] / (s(ki) - ki ρ).

    Raises:
        ValueError: on divisibility violations
        InstabilityError: if a chunk type that receives jobs is unstable
    """
    n = cfg.n
    if not 0 <= a1 <= n:
        raise ValueError(f"a1 must lie in [0, {n}]")
    a2 = n - a1
    if k1 < 1 or k2 < 1:
        raise ValueError("chunk widths must be positive")
    if a1 % k1:
        raise ValueError(f"k1={k1} must divide a1={a1}")
    if a2 % k2:
        raise ValueError(f"k2={k2} must divide n - a1={a2}")
    total = 0.0
    for share, k in ((a1, k1), (a2, k2)):
        if share == 0:
            continue
        mean_k = mixed_chunk_mean(cfg, k)
        margin = 1.0 - cfg.load * k * mean_k / cfg.mean_size
        if margin <= 0:
            raise InstabilityError(f"width-{k} chunks are unstable", cfg.mean_size / mean_k * margin)
        total += share / n * mean_k / margin
    return total


def mixed_random_chunk_var(n: int, a1: int, mom1: ChunkMoments, mom2: ChunkMoments) -> float:
    """
    Variance of response time under Mixed-Random-Chunk by conditioning.

    Var = (a1/n) m2(1) + (a2/n) m2(2) - ((a1/n) m1(1) + (a2/n) m1(2))^2.
    The conditional moments come from simulation.
    """
    if not 0 <= a1 <= n:
        raise ValueError(f"a1 must lie in [0, {n}]")
    if not isinstance(mom1, ChunkMoments) or not isinstance(mom2, ChunkMoments):
        raise TypeError("moments must be ChunkMoments")
    w1 = a1 / n
    w2 = (n - a1) / n
    mean = w1 * mom1.m1 + w2 * mom2.m1
    return w1 * mom1.m2 + w2 * mom2.m2 - mean ** 2


# =========================== JSQ APPROXIMATION =========================== #


def erlang_c_wait(c: int, rho: float, mu: float) -> float:
    """
    Mean wait in queue of an M/M/c system with per-server load rho.

    W = (1/μ) P_c / (c (1 - ρ)) where
    A = sum_{j<c} (cρ)^j / j! + (cρ)^c / (c! (1 - ρ)) and
    P_c = (cρ)^c / (c! (1 - ρ) A). The terms are summed in log space.

    Raises:
        InstabilityError: if rho >= 1

    Examples:
        >>> round(erlang_c_wait(2, 0.5, 1.0), 12)
        0.333333333333
    """
    if c < 1:
        raise ValueError("c must be at least 1")
    if mu <= 0:
        raise ValueError("mu must be positive")
    if rho < 0:
        raise ValueError("rho must be non-negative")
    if rho >= 1:
        raise InstabilityError(f"M/M/{c} with rho={rho}", 1.0 - rho)
    if rho == 0:
        return 0.0
    offered = c * rho
    j = np.arange(c)
    log_terms = j * math.log(offered) - gammaln(j + 1)
    log_last = c * math.log(offered) - gammaln(c + 1) - math.log1p(-rho)
    log_a = logsumexp(np.append(log_terms, log_last))
    p_c = math.exp(log_last - log_a)
    return p_c / (c * (1 - rho)) / mu


def jsq_mrt_approx(Lambda: float, c: int, meanX: float) -> float:
    """
    Nelson-Philips approximation of mean response time under JSQ with c queues.

    E[T] ≈ W_{M/M/c}(ρ) S(ρ) R(ρ) + E[X] with ρ = Λ E[X] / c. A single queue
    is an M/M/1 and is answered exactly (the b(ρ) term divides by c - 1).

    Raises:
        InstabilityError: if ρ >= 1
    """
    if c < 1:
        raise ValueError("c must be at least 1")
    if meanX <= 0:
        raise ValueError("meanX must be positive")
    if Lambda < 0:
        raise ValueError("Lambda must be non-negative")
    rho = Lambda * meanX / c
    if rho >= 1:
        raise InstabilityError(f"JSQ over {c} queues with rho={rho:.6g}", 1.0 - rho)
    if rho == 0:
        return meanX
    if c == 1:
        return meanX / (1 - rho)

    rho_c = rho ** c
    a = 1 - c * rho / (c + 4)
    b = c * rho / ((c + 4) * (c - 1))
    xi = rho * (1 - c * rho ** (c - 1) + (c - 1) * rho_c) / ((1 - rho) * (1 - rho_c))
    q = a + b * xi
    shortest = c * (1 - rho) / (1 - rho_c) * (rho_c + q * (1 - rho_c))

    log_c = math.log2(c)
    r_c = GAMMA_1 * log_c + GAMMA_2
    i_c = -1 / math.log2(ALPHA_1 * log_c + ALPHA_2)
    rho_i = rho ** i_c
    correction = 1 / (1 - 4 * r_c * rho_i * (1 - rho_i))

    wait = erlang_c_wait(c, rho, 1.0 / meanX)
    return wait * shortest * correction + meanX


def jsq_chunk_mrt(cfg: SystemConfig, k: int) -> float:
    """
    Mean response time under JSQ-Chunk with width k.

    The n/k chunks behave like a JSQ system of c = n/k queues fed at rate Λ
    with job sizes X_k (mixed over the classes for two-class configs).

    Raises:
        ValueError: if k does not divide n
        InstabilityError: if the chunk load ρ k / s(k) >= 1
    """
    _check_width(cfg, k)
    c = cfg.n // k
    mean_k = mixed_chunk_mean(cfg, k)
    rho_k = cfg.total_rate * mean_k / c
    if rho_k >= 1:
        raise InstabilityError(f"JSQ-Chunk with k={k} has chunk load {rho_k:.6g}", 1.0 - rho_k)
    return jsq_mrt_approx(cfg.total_rate, c, mean_k)


# =========================== CHAIN SOLVERS =========================== #


def birth_death_solve(chain: BirthDeathChain, levels: Optional[int] = None) -> BirthDeathSolution:
    """
    Steady state of a birth-death chain with a geometric tail.

    States 0..L are solved from the balance equations (in log space) and the
    tail above L is summed in closed form, where L = max(tail_level, levels).
    E[T] follows from Little's Law.

    Raises:
        InstabilityError: if the tail ratio is >= 1
    """
    lam = chain.arrival_rate
    ratio = chain.tail_ratio
    if ratio >= 1:
        raise InstabilityError("birth-death chain has tail ratio >= 1", 1.0 - ratio)
    if lam == 0:
        return BirthDeathSolution(0.0, 0.0, np.array([1.0]), 0.0)

    top = max(chain.tail_level, levels or 0)
    rates = np.array([chain.departure_rate(i) if i <= chain.tail_level else chain.tail_rate
                      for i in range(1, top + 1)], dtype=float)
    if np.any(rates <= 0):
        raise ValueError("departure rates must be positive in states >= 1")
    log_w = np.concatenate(([0.0], np.cumsum(math.log(lam) - np.log(rates))))

    # tail beyond L: w_{L+j} = w_L r^j
    log_tail_mass = log_w[-1] + math.log(ratio) - math.log1p(-ratio) if ratio > 0 else -np.inf
    log_z = logsumexp(np.append(log_w, log_tail_mass))
    probs = np.exp(log_w - log_z)
    tail_mass = math.exp(log_tail_mass - log_z) if ratio > 0 else 0.0

    states = np.arange(top + 1)
    mean_number = float(np.dot(states, probs))
    if ratio > 0:
        # sum_{j>=1} (L + j) p_L r^j
        mean_number += probs[-1] * (top * ratio / (1 - ratio) + ratio / (1 - ratio) ** 2)
    return BirthDeathSolution(mean_number, mean_number / lam, probs, tail_mass)


def threshold_chain_mrt(params: ThresholdChainParams) -> float:
    """
    Mean response time of a threshold chain in closed form.

    With ρ_low = Λ/μ_low and ρ_high = Λ/μ_high,
    E[T] = (1/Λ) (t + ρ_low/(1-ρ_low) + 1/(1-ρ_high)
                  + (1 + t - tρ_high) / (ρ_high - 1 + ρ_low^t (ρ_low - ρ_high))).
    Equal rates collapse to the M/M/1 value 1/(μ - Λ); ρ_low = 1 uses the
    removable-singularity limit.

    Raises:
        InstabilityError: if Λ >= μ_high
    """
    lam = params.arrival_rate
    t = params.threshold
    if lam >= params.mu_high:
        raise InstabilityError("threshold chain unstable above the threshold", 1.0 - lam / params.mu_high)
    if abs(params.mu_low - params.mu_high) < DEGENERATE_RATE_TOLERANCE * params.mu_high:
        return 1.0 / (params.mu_high - lam)

    rho_low = lam / params.mu_low
    rho_high = lam / params.mu_high
    if t == 0:
        return 1.0 / (params.mu_high - lam)
    if abs(rho_low - 1) < 1e-9:
        geo = rho_high / (1 - rho_high)
        norm = (t + 1) + geo
        number = t * (t + 1) / 2 + t * geo + rho_high / (1 - rho_high) ** 2
        return number / norm / lam

    numerator = 1 + t - t * rho_high
    log_power = t * math.log(rho_low)
    if log_power > 0:
        # divide through by ρ_low^t to keep the power finite
        shrink = math.exp(-log_power)
        last = numerator * shrink / ((rho_low - rho_high) + (rho_high - 1) * shrink)
    else:
        last = numerator / (rho_high - 1 + math.exp(log_power) * (rho_low - rho_high))
    number = t + rho_low / (1 - rho_low) + 1 / (1 - rho_high) + last
    return number / lam


def equi_chain(cfg: SystemConfig) -> BirthDeathChain:
    """Birth-death chain of the number of jobs under EQUI."""
    s, n, mu = cfg.speedup, cfg.n, cfg.mu
    return BirthDeathChain(cfg.total_rate, lambda i: equi_total_rate(i, n, s, mu), n, n * mu)


def equi_mrt(cfg: SystemConfig) -> float:
    """
    Mean response time under EQUI (single speedup function).

    Insensitive to the size law beyond E[X].

    Raises:
        InstabilityError: if ρ >= 1
    """
    if cfg.num_classes != 1:
        raise ValueError("equi_mrt needs a single speedup function; use mdp.policy_evaluation")
    rho = cfg.load
    if rho >= 1:
        raise InstabilityError(f"EQUI with rho={rho:.6g}", 1.0 - rho)
    if cfg.total_rate == 0:
        return cfg.mean_size / cfg.speedup.evaluate(cfg.n)
    return birth_death_solve(equi_chain(cfg)).mean_response


def critical_load_config(n: int, s: SpeedupFunction, k_star: int, dist: JobSizeDistribution) -> SystemConfig:
    """Config with Λ = (n/k*) s(k*) μ, where a width-k* chunk has load 1."""
    if n % k_star:
        raise ValueError(f"k_star={k_star} must divide n={n}")
    rate = (n // k_star) * s.evaluate(k_star) / dist.mean()
    return SystemConfig(n, dist, (s,), (rate,))


def equi_bounds(cfg: SystemConfig, k_star: int, epsilon: float) -> EquiBounds:
    """
    Threshold-chain lower and upper bounds on EQUI at a critical load point.

    Upper bound: t = ceil(c(1+ε)), μ_low = s(n)μ, μ_high = t s(n/t) μ.
    Lower bound: t = floor(c(1-ε)), μ_low = t s(n/t) μ, μ_high = nμ.
    Both are evaluated with threshold_chain_mrt.

    Raises:
        ValueError: if k_star == 1, ε is outside (0, 1], or cfg is not at
            the critical load of k_star
    """
    if k_star == 1:
        raise ValueError("k_star = 1 is unsupported: EQUI and JSQ-Chunk both diverge there")
    if not 0 < epsilon <= 1:
        raise ValueError("epsilon must lie in (0, 1]")
    n, s, mu, lam = cfg.n, cfg.speedup, cfg.mu, cfg.total_rate
    if n % k_star:
        raise ValueError(f"k_star={k_star} must divide n={n}")
    c = n // k_star
    critical = c * s.evaluate(k_star) * mu
    if abs(lam - critical) > 1e-9 * critical:
        raise ValueError(f"arrival rate {lam} is not the critical rate {critical}")

    t_up = math.ceil(c * (1 + epsilon) - 1e-9)
    upper = ThresholdChainParams(lam, t_up, s.evaluate(n) * mu, equi_total_rate(t_up, n, s, mu))
    t_low = math.floor(c * (1 - epsilon) + 1e-9)
    if t_low == 0:
        lower = ThresholdChainParams(lam, 0, n * mu, n * mu)
    else:
        lower = ThresholdChainParams(lam, t_low, equi_total_rate(t_low, n, s, mu), n * mu)
    return EquiBounds(threshold_chain_mrt(lower), threshold_chain_mrt(upper))


# =========================== OPTIMIZERS =========================== #


def optimal_fixed_width(cfg: SystemConfig, mrt_fn=random_chunk_mrt) -> tuple:
    """
    Best chunk width k* over the divisors of n for a fixed-width formula.

    Unstable widths are skipped; ties go to the smaller k.

    Returns:
        (k*, E[T] at k*)

    Raises:
        InstabilityError: if no divisor is stable
    """
    best_k, best_value = None, math.inf
    worst_margin = -math.inf
    for k in divisors(cfg.n):
        try:
            value = mrt_fn(cfg, k)
        except InstabilityError as exc:
            worst_margin = max(worst_margin, exc.margin)
            continue
        if value < best_value * (1 - 1e-12):
            best_k, best_value = k, value
    if best_k is None:
        raise InstabilityError(f"no stable chunk width for n={cfg.n}", worst_margin)
    return best_k, best_value


def optimal_width_regions(cfg: SystemConfig, rho_grid, mrt_fn=random_chunk_mrt) -> list:
    """k*(ρ) along a load grid as (ρ, k*) pairs; k* is None when nothing is stable."""
    regions = []
    for rho in rho_grid:
        try:
            k_star, _ = optimal_fixed_width(cfg.with_load(rho), mrt_fn)
        except InstabilityError:
            k_star = None
        regions.append((rho, k_star))
    return regions


def jsq_chunk_limit(cfg: SystemConfig) -> float:
    """
    Large-n limit of JSQ-Chunk with its best width: 1 / (s(k*) μ).

    k* is the largest divisor whose chunk load ρ k / s(k) stays below 1.
    """
    stable = [k for k in divisors(cfg.n) if cfg.load * k * mixed_chunk_mean(cfg, k) / cfg.mean_size < 1]
    if not stable:
        raise InstabilityError("no stable chunk width", 1.0 - cfg.load)
    return mixed_chunk_mean(cfg, max(stable))
