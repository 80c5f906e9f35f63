"""
workload.py

Job-size distributions, random streams and the system configuration.

ShiftedPareto uses the density alpha * x_m**alpha / (x + x_m)**(alpha + 1) on
x >= 0 (a Lomax law), so its mean is x_m / (alpha - 1); with alpha = 2 and
mean 1 the scale is x_m = 1.
"""
from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field, replace

import numpy as np

from src.speedup import SpeedupFunction


# ---------------- Distributions ----------------


class JobSizeDistribution(ABC):
    """Abstract base class for job-size laws X (single-core seconds of work)."""

    @abstractmethod
    def mean(self) -> float:
        pass

    @abstractmethod
    def second_moment(self) -> float:
        pass

    @abstractmethod
    def sample(self, rng: np.random.Generator, size=None):
        """Draw i.i.d. sizes from a caller-owned generator."""

    def scv(self) -> float:
        """Squared coefficient of variation Var[X] / E[X]^2."""
        m = self.mean()
        return self.second_moment() / (m * m) - 1.0

    def __str__(self) -> str:
        return f"{self.__class__.__name__}(mean={self.mean():.4g})"


class Exponential(JobSizeDistribution):
    """Exponential sizes with rate mu."""

    def __init__(self, rate: float):
        if not rate > 0:
            raise ValueError("rate must be positive")
        self._rate = float(rate)

    @property
    def rate(self) -> float:
        return self._rate

    def mean(self) -> float:
        return 1.0 / self._rate

    def second_moment(self) -> float:
        return 2.0 / self._rate ** 2

    def scv(self) -> float:
        return 1.0

    def sample(self, rng, size=None):
        return rng.exponential(1.0 / self._rate, size)

    def __repr__(self) -> str:
        return f"Exponential(rate={self._rate!r})"


class Hyperexponential2(JobSizeDistribution):
    """Two-phase hyperexponential: rate_a with probability q, else rate_b."""

    def __init__(self, q: float, rate_a: float, rate_b: float):
        if not 0 <= q <= 1:
            raise ValueError("q must lie in [0, 1]")
        if not (rate_a > 0 and rate_b > 0):
            raise ValueError("rates must be positive")
        self._q = float(q)
        self._rate_a = float(rate_a)
        self._rate_b = float(rate_b)

    @property
    def q(self) -> float:
        return self._q

    @property
    def rates(self) -> tuple:
        return self._rate_a, self._rate_b

    def mean(self) -> float:
        return self._q / self._rate_a + (1 - self._q) / self._rate_b

    def second_moment(self) -> float:
        return 2 * self._q / self._rate_a ** 2 + 2 * (1 - self._q) / self._rate_b ** 2

    def sample(self, rng, size=None):
        if size is None:
            rate = self._rate_a if rng.random() < self._q else self._rate_b
            return rng.exponential(1.0 / rate)
        branch = rng.random(size) < self._q
        scale = np.where(branch, 1.0 / self._rate_a, 1.0 / self._rate_b)
        return rng.exponential(1.0, size) * scale

    def __repr__(self) -> str:
        return f"Hyperexponential2(q={self._q!r}, rate_a={self._rate_a!r}, rate_b={self._rate_b!r})"


class ShiftedPareto(JobSizeDistribution):
    """Pareto shifted to start at 0 (Lomax) with shape alpha and scale x_m."""

    def __init__(self, alpha: float, scale: float = 1.0):
        if not alpha > 0:
            raise ValueError("alpha must be positive")
        if not scale > 0:
            raise ValueError("scale must be positive")
        self._alpha = float(alpha)
        self._scale = float(scale)

    @classmethod
    def with_mean(cls, alpha: float, mean: float) -> "ShiftedPareto":
        if not alpha > 1:
            raise ValueError("alpha must exceed 1 for a finite mean")
        return cls(alpha, mean * (alpha - 1))

    @property
    def alpha(self) -> float:
        return self._alpha

    @property
    def scale(self) -> float:
        return self._scale

    def mean(self) -> float:
        if self._alpha <= 1:
            raise ValueError(f"mean undefined for alpha={self._alpha} <= 1")
        return self._scale / (self._alpha - 1)

    def second_moment(self) -> float:
        if self._alpha <= 2:
            raise ValueError(f"variance infinite for alpha={self._alpha} <= 2")
        return 2 * self._scale ** 2 / ((self._alpha - 1) * (self._alpha - 2))

    def scv(self) -> float:
        if self._alpha <= 2:
            raise ValueError(f"scv undefined for alpha={self._alpha} <= 2 (infinite variance)")
        return self._alpha / (self._alpha - 2)

    def sample(self, rng, size=None):
        return self._scale * rng.pareto(self._alpha, size)

    def __repr__(self) -> str:
        return f"ShiftedPareto(alpha={self._alpha!r}, scale={self._scale!r})"


def fit_hyperexp(mean: float, scv: float) -> Hyperexponential2:
    """
    Balanced-means two-phase hyperexponential with the given mean and C^2.

    Balanced means: q/rate_a = (1-q)/rate_b = mean/2.

    Raises:
        ValueError: if mean <= 0 or scv < 1 (infeasible)

    Examples:
        >>> round(fit_hyperexp(1.0, 10.0).q, 4)
        0.9523
    """
    if not mean > 0:
        raise ValueError("mean must be positive")
    if scv < 1:
        raise ValueError(f"scv={scv} < 1 cannot be matched by a hyperexponential")
    q = (1 + math.sqrt((scv - 1) / (scv + 1))) / 2
    return Hyperexponential2(q, 2 * q / mean, 2 * (1 - q) / mean)


class ScaledJobSize(JobSizeDistribution):
    """X_k = X / s(k): the size of a job run on k cores."""

    def __init__(self, base: JobSizeDistribution, divisor: float):
        if not divisor > 0:
            raise ValueError("divisor must be positive")
        self._base = base
        self._divisor = float(divisor)

    @property
    def base(self) -> JobSizeDistribution:
        return self._base

    @property
    def divisor(self) -> float:
        return self._divisor

    def mean(self) -> float:
        return self._base.mean() / self._divisor

    def second_moment(self) -> float:
        return self._base.second_moment() / self._divisor ** 2

    def sample(self, rng, size=None):
        return self._base.sample(rng, size) / self._divisor

    def __repr__(self) -> str:
        return f"ScaledJobSize({self._base!r}, divisor={self._divisor!r})"


def sample(dist: JobSizeDistribution, rng: np.random.Generator, size=None):
    """Draw from dist using the caller's stream."""
    return dist.sample(rng, size)


# ---------------- Random streams ----------------


def replication_streams(seed: int, replication: int, count: int = 3) -> list:
    """
    Independent Philox generators for one replication.

    The streams are derived from SeedSequence(seed, spawn_key=(replication,)),
    so replication r always sees the same numbers whatever order replications
    run in. By convention stream 0 drives arrivals, 1 job sizes and classes,
    2 dispatch decisions; sharing streams 0 and 1 across policies gives
    seed-paired (common random number) runs.
    """
    if seed < 0 or replication < 0:
        raise ValueError("seed and replication must be non-negative")
    root = np.random.SeedSequence(seed, spawn_key=(replication,))
    return [np.random.Generator(np.random.Philox(child)) for child in root.spawn(count)]


# ---------------- System configuration ----------------


@dataclass(frozen=True)
class SystemConfig:
    """
    n cores, a job-size law and one or two job classes.

    class_rates holds the total arrival rate of each class (Λ1, Λ2); the
    matching speedup curves are in speedups. For two classes, class 1 is the
    less parallelizable one (s1(k) <= s2(k)); use two_class() to get the
    ordering done for you.
    """

    n: int
    dist: JobSizeDistribution
    speedups: tuple
    class_rates: tuple
    labels: tuple = field(default=("p",))

    def __post_init__(self):
        if isinstance(self.n, bool) or not isinstance(self.n, int):
            raise TypeError("n must be an integer")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if not isinstance(self.dist, JobSizeDistribution):
            raise TypeError("dist must be a JobSizeDistribution")
        if len(self.speedups) not in (1, 2) or len(self.speedups) != len(self.class_rates):
            raise ValueError("need one or two classes with matching speedups and rates")
        if not all(isinstance(s, SpeedupFunction) for s in self.speedups):
            raise TypeError("speedups must be SpeedupFunction instances")
        if any(r < 0 for r in self.class_rates):
            raise ValueError("arrival rates must be non-negative")
        self.dist.mean()

    # --------- Constructors ---------

    @classmethod
    def single_class(cls, n: int, lam: float, dist: JobSizeDistribution, s: SpeedupFunction) -> "SystemConfig":
        """Config from the per-core arrival rate λ (Λ = λ n)."""
        return cls(n, dist, (s,), (lam * n,))

    @classmethod
    def at_load(cls, n: int, rho: float, dist: JobSizeDistribution, s: SpeedupFunction) -> "SystemConfig":
        """Config whose load Λ E[X] / n equals rho."""
        return cls(n, dist, (s,), (rho * n / dist.mean(),))

    @classmethod
    def two_class(cls, n, lambda1, lambda2, dist, s1, s2, compare_at=None) -> "SystemConfig":
        """
        Two-class config, reordered so that class 1 is less parallelizable.

        The order is decided by comparing the curves at k = n (or compare_at).
        """
        k = float(compare_at if compare_at is not None else max(n, 2))
        if s1.evaluate(k) > s2.evaluate(k):
            s1, s2 = s2, s1
            lambda1, lambda2 = lambda2, lambda1
        return cls(n, dist, (s1, s2), (float(lambda1), float(lambda2)), labels=("p1", "p2"))

    # --------- Derived quantities ---------

    @property
    def num_classes(self) -> int:
        return len(self.speedups)

    @property
    def speedup(self) -> SpeedupFunction:
        """The speedup curve of a single-class config."""
        if self.num_classes != 1:
            raise ValueError("config has two speedup functions")
        return self.speedups[0]

    @property
    def total_rate(self) -> float:
        """Λ, the total arrival rate."""
        return float(sum(self.class_rates))

    @property
    def lambda_per_core(self) -> float:
        """λ = Λ / n."""
        return self.total_rate / self.n

    @property
    def mean_size(self) -> float:
        return self.dist.mean()

    @property
    def mu(self) -> float:
        """Per-core completion rate 1 / E[X]."""
        return 1.0 / self.dist.mean()

    @property
    def load(self) -> float:
        """ρ = Λ E[X] / n."""
        return self.total_rate * self.dist.mean() / self.n

    @property
    def class_probabilities(self) -> tuple:
        total = self.total_rate
        if total == 0:
            return tuple(1.0 / self.num_classes for _ in self.class_rates)
        return tuple(r / total for r in self.class_rates)

    def scaled_size(self, k: float, cls_index: int = 0) -> ScaledJobSize:
        """X_k for the given class."""
        return ScaledJobSize(self.dist, self.speedups[cls_index].evaluate(k))

    def chunk_arrival_rate(self, k: int) -> float:
        """Arrival rate into one width-k chunk, Λ / (n/k) = Λ k / n."""
        return self.total_rate * k / self.n

    def with_load(self, rho: float) -> "SystemConfig":
        """Same config with every class rate scaled so the load equals rho."""
        target = rho * self.n / self.dist.mean()
        total = self.total_rate
        if total == 0:
            rates = tuple(target / self.num_classes for _ in self.class_rates)
        else:
            rates = tuple(r * target / total for r in self.class_rates)
        return replace(self, class_rates=rates)

    def with_dist(self, dist: JobSizeDistribution) -> "SystemConfig":
        return replace(self, dist=dist)

    def __str__(self) -> str:
        curves = ", ".join(str(s) for s in self.speedups)
        return f"SystemConfig(n={self.n}, rho={self.load:.4g}, dist={self.dist}, speedups=[{curves}])"


def divisors(n: int) -> list:
    """Divisors of n in increasing order."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return [k for k in range(1, n + 1) if n % k == 0]
