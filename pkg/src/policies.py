"""
policies.py

Scheduling policies as seen by the simulator.

The machine is modelled as a set of processor-sharing stations. A policy
decides how many stations there are, where the pieces of an arriving job go,
and the per-job service rate at every station given the current population.
A piece placed with divisor d carries work X / d; a job at a station with
per-job rate r therefore depletes its original work X at rate r * d.
"""
from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from typing import Optional

import numpy as np

from src.mdp import PolicyTable, greedy_star_allocation
from src.speedup import SpeedupFunction
from src.workload import SystemConfig

logger = logging.getLogger(__name__)


def jsq_dispatch(counts, rng: np.random.Generator) -> int:
    """
    Index of a least-loaded chunk, ties broken uniformly at random.

    Examples:
        >>> jsq_dispatch([3, 1, 2], np.random.default_rng(0))
        1
    """
    counts = np.asarray(counts)
    if counts.size == 0:
        raise ValueError("need at least one chunk")
    candidates = np.flatnonzero(counts == counts.min())
    if candidates.size == 1:
        return int(candidates[0])
    return int(candidates[rng.integers(candidates.size)])


class SchedulingPolicy(ABC):
    """
    Abstract base class for simulated policies.

    Subclasses are bound to a config with prepare(); the bound copy caches
    the station layout so the event loop does no repeated speedup evaluation.
    """

    def __init__(self):
        self._cfg: Optional[SystemConfig] = None

    @property
    @abstractmethod
    def name(self) -> str:
        pass

    def validate(self, cfg: SystemConfig) -> None:
        """Raise ValueError when the policy cannot run on cfg."""

    def prepare(self, cfg: SystemConfig) -> "SchedulingPolicy":
        """Return a copy of this policy bound to cfg."""
        self.validate(cfg)
        bound = self._copy()
        bound._cfg = cfg
        bound._bind(cfg)
        return bound

    @property
    def config(self) -> SystemConfig:
        if self._cfg is None:
            raise RuntimeError(f"{self.name} is not bound to a config; call prepare() first")
        return self._cfg

    @abstractmethod
    def _copy(self) -> "SchedulingPolicy":
        pass

    def _bind(self, cfg: SystemConfig) -> None:
        pass

    @abstractmethod
    def num_stations(self) -> int:
        pass

    @abstractmethod
    def dispatch(self, job_class: int, counts: np.ndarray, rng: np.random.Generator) -> list:
        """Stations receiving the pieces of a new job."""

    @abstractmethod
    def divisor(self, job_class: int, station: int) -> float:
        """Piece work is X / divisor."""

    @abstractmethod
    def rates(self, counts: np.ndarray, class_counts: np.ndarray) -> np.ndarray:
        """Per-job service rate at every station."""

    def chunk_type(self, station: int) -> int:
        """Label used to group response times (chunk type for mixed widths)."""
        return 0

    def __str__(self) -> str:
        return self.name

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}()"


def _processor_sharing(counts: np.ndarray) -> np.ndarray:
    """1/m at stations holding m > 0 jobs, 0 elsewhere."""
    out = np.zeros(len(counts))
    np.divide(1.0, counts, out=out, where=counts > 0)
    return out


# ---------------- Fixed-width policies ----------------


class _FixedWidthPolicy(SchedulingPolicy):
    def __init__(self, k: int):
        super().__init__()
        if isinstance(k, bool) or not isinstance(k, (int, np.integer)):
            raise TypeError("k must be an integer")
        if k < 1:
            raise ValueError("k must be at least 1")
        self._k = int(k)
        self._speeds = ()

    @property
    def k(self) -> int:
        return self._k

    def validate(self, cfg: SystemConfig) -> None:
        if cfg.n % self._k:
            raise ValueError(f"k={self._k} does not divide n={cfg.n}")

    def _copy(self):
        return self.__class__(self._k)

    def _bind(self, cfg):
        self._speeds = tuple(s.evaluate(self._k) for s in cfg.speedups)

    def divisor(self, job_class, station):
        return self._speeds[job_class]

    def rates(self, counts, class_counts):
        return _processor_sharing(counts)

    def __eq__(self, other):
        return type(other) is type(self) and other.k == self._k

    def __hash__(self):
        return hash((self.name, self._k))

    def __repr__(self):
        return f"{self.__class__.__name__}(k={self._k})"


class RandomChunk(_FixedWidthPolicy):
    """n/k chunks of k cores; each job goes to a uniformly random chunk."""

    @property
    def name(self):
        return "random-chunk"

    def num_stations(self):
        return self.config.n // self._k

    def dispatch(self, job_class, counts, rng):
        return [int(rng.integers(len(counts)))]


class JSQChunk(RandomChunk):
    """n/k chunks; each job joins the chunk serving the fewest jobs."""

    @property
    def name(self):
        return "jsq-chunk"

    def dispatch(self, job_class, counts, rng):
        return [jsq_dispatch(counts, rng)]


class Random(_FixedWidthPolicy):
    """
    Each job is split into k pieces on k distinct cores chosen uniformly at
    random; every core time-shares the pieces it holds.
    """

    @property
    def name(self):
        return "random"

    def validate(self, cfg):
        if self._k > cfg.n:
            raise ValueError(f"k={self._k} exceeds n={cfg.n}")

    def num_stations(self):
        return self.config.n

    def dispatch(self, job_class, counts, rng):
        return [int(c) for c in rng.choice(len(counts), size=self._k, replace=False)]


class MixedRandomChunk(SchedulingPolicy):
    """
    a1 cores cut into width-k1 chunks and n - a1 cores into width-k2 chunks;
    a job lands on a uniformly random core and joins that core's chunk, so a
    chunk is picked with probability width / n.
    """

    def __init__(self, k1: int, k2: int, a1: int):
        super().__init__()
        for label, value in (("k1", k1), ("k2", k2), ("a1", a1)):
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)):
                raise TypeError(f"{label} must be an integer")
        if k1 < 1 or k2 < 1:
            raise ValueError("chunk widths must be at least 1")
        if a1 < 0:
            raise ValueError("a1 must be non-negative")
        self._k1, self._k2, self._a1 = int(k1), int(k2), int(a1)
        self._widths = np.array([])
        self._types = np.array([], dtype=int)
        self._speeds = {}

    @property
    def name(self):
        return "mixed-random-chunk"

    @property
    def widths(self) -> tuple:
        return self._k1, self._k2

    @property
    def a1(self) -> int:
        return self._a1

    def validate(self, cfg):
        a2 = cfg.n - self._a1
        if a2 < 0:
            raise ValueError(f"a1={self._a1} exceeds n={cfg.n}")
        if self._a1 % self._k1 or a2 % self._k2:
            raise ValueError(f"k1={self._k1} must divide a1={self._a1} and k2={self._k2} must divide {a2}")

    def _copy(self):
        return MixedRandomChunk(self._k1, self._k2, self._a1)

    def _bind(self, cfg):
        n1 = self._a1 // self._k1
        n2 = (cfg.n - self._a1) // self._k2
        self._widths = np.array([self._k1] * n1 + [self._k2] * n2, dtype=float)
        self._types = np.array([0] * n1 + [1] * n2, dtype=int)
        self._speeds = {(c, w): s.evaluate(w) for c, s in enumerate(cfg.speedups) for w in (self._k1, self._k2)}

    def num_stations(self):
        return len(self._widths)

    def dispatch(self, job_class, counts, rng):
        return [int(rng.choice(len(self._widths), p=self._widths / self._widths.sum()))]

    def divisor(self, job_class, station):
        return self._speeds[(job_class, self._widths[station])]

    def rates(self, counts, class_counts):
        return _processor_sharing(counts)

    def chunk_type(self, station):
        return int(self._types[station])

    def __repr__(self):
        return f"MixedRandomChunk(k1={self._k1}, k2={self._k2}, a1={self._a1})"


# ---------------- Core-sharing policies ----------------


class Equi(SchedulingPolicy):
    """
    With l jobs present every job runs on n/l cores (a fraction of a core when
    l > n). One station per class so each class keeps its own speedup.
    """

    @property
    def name(self):
        return "equi"

    def _copy(self):
        return Equi()

    def num_stations(self):
        return self.config.num_classes

    def dispatch(self, job_class, counts, rng):
        return [job_class]

    def divisor(self, job_class, station):
        return 1.0

    def rates(self, counts, class_counts):
        total = int(counts.sum())
        if total == 0:
            return np.zeros(len(counts))
        share = self.config.n / total
        return np.array([s.evaluate(share) for s in self.config.speedups])

    def __eq__(self, other):
        return isinstance(other, Equi)

    def __hash__(self):
        return hash("equi")


class _ClassAllocationPolicy(SchedulingPolicy):
    """Two class pools: a1 cores for class 1, n - a1 for class 2, EQUI within each."""

    def validate(self, cfg):
        if cfg.num_classes != 2:
            raise ValueError(f"{self.name} requires a two-class config")

    def num_stations(self):
        return 2

    def dispatch(self, job_class, counts, rng):
        return [job_class]

    def divisor(self, job_class, station):
        return 1.0

    @abstractmethod
    def allocation(self, x1: int, x2: int) -> float:
        pass

    def rates(self, counts, class_counts):
        x1, x2 = int(counts[0]), int(counts[1])
        a1 = self.allocation(x1, x2)
        n = self.config.n
        s1, s2 = self.config.speedups
        r1 = s1.evaluate(a1 / x1) if x1 and a1 > 0 else 0.0
        r2 = s2.evaluate((n - a1) / x2) if x2 and n - a1 > 0 else 0.0
        return np.array([r1, r2])


class GreedyStar(_ClassAllocationPolicy):
    """GREEDY*: maximise the total departure rate, favouring class 1 on ties."""

    def __init__(self):
        super().__init__()
        self._cache = {}

    @property
    def name(self):
        return "greedy-star"

    def _copy(self):
        return GreedyStar()

    def allocation(self, x1, x2):
        key = (x1, x2)
        if key not in self._cache:
            cfg = self.config
            s1, s2 = cfg.speedups
            self._cache[key] = greedy_star_allocation(x1, x2, cfg.n, s1, s2, cfg.mu)
        return self._cache[key]

    def __eq__(self, other):
        return isinstance(other, GreedyStar)

    def __hash__(self):
        return hash("greedy-star")


class FixedAllocTable(_ClassAllocationPolicy):
    """Replays a PolicyTable; states beyond its bound use the boundary entry."""

    def __init__(self, table: PolicyTable):
        super().__init__()
        if not isinstance(table, PolicyTable):
            raise TypeError("table must be a PolicyTable")
        self._table = table

    @property
    def name(self):
        return f"table:{self._table.provenance}"

    @property
    def table(self) -> PolicyTable:
        return self._table

    def validate(self, cfg):
        super().validate(cfg)
        if self._table.n != cfg.n:
            raise ValueError(f"table built for n={self._table.n}, config has n={cfg.n}")

    def _copy(self):
        return FixedAllocTable(self._table)

    def allocation(self, x1, x2):
        return self._table.action(x1, x2)

    def __repr__(self):
        return f"FixedAllocTable({self._table!r})"


# ---------------- Helpers ----------------


def depletion_rates(policy: SchedulingPolicy, cfg: SystemConfig, placements) -> list:
    """
    Rate (work-seconds per second) at which each placed job or piece depletes
    its original work X.

    Args:
        policy: unbound or bound policy
        cfg: the system config
        placements: (job_class, station) pairs, one per job (per piece for Random)

    Examples:
        EQUI with one job on 16 cores and Amdahl p=0.5 runs at s(16) = 1.882...
    """
    bound = policy.prepare(cfg)
    counts = np.zeros(bound.num_stations(), dtype=int)
    class_counts = np.zeros(cfg.num_classes, dtype=int)
    for job_class, station in placements:
        counts[station] += 1
        class_counts[job_class] += 1
    per_job = bound.rates(counts, class_counts)
    return [float(per_job[station] * bound.divisor(job_class, station)) for job_class, station in placements]


def make_policy(name: str, k: Optional[int] = None, **params) -> SchedulingPolicy:
    """
    Build a policy from its CLI name.

    Raises:
        ValueError: for unknown names or missing parameters
    """
    fixed = {"random-chunk": RandomChunk, "jsq-chunk": JSQChunk, "random": Random}
    if name in fixed:
        if k is None:
            raise ValueError(f"{name} needs a chunk width k")
        return fixed[name](k)
    if name == "equi":
        return Equi()
    if name == "greedy-star":
        return GreedyStar()
    if name == "mixed-random-chunk":
        missing = [key for key in ("k1", "k2", "a1") if params.get(key) is None]
        if missing:
            raise ValueError(f"mixed-random-chunk needs {', '.join(missing)}")
        return MixedRandomChunk(params["k1"], params["k2"], params["a1"])
    raise ValueError(f"unknown policy {name!r}")


POLICY_NAMES = ("random-chunk", "jsq-chunk", "random", "mixed-random-chunk", "equi", "greedy-star")
