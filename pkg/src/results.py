"""
results.py

Output record types shared by the runner and the report classes.
"""
from dataclasses import asdict, dataclass, fields
from typing import NamedTuple, Optional

SOURCES = ("analysis", "simulation", "mdp")


@dataclass(frozen=True)
class ResultRow:
    """
    One output record; field order is the CSV column order.

    k holds the chunk width, the mixed-chunk parameters or "" for policies
    without one. Rows without a mean (unstable points) leave mean_T and the
    interval empty. Analysis and MDP rows have a zero-width interval.
    """

    policy: str
    n: int
    k: str
    rho: float
    p1: float
    p2: Optional[float]
    mean_T: Optional[float]
    ci_low: Optional[float]
    ci_high: Optional[float]
    source: str
    stable: bool
    seed: Optional[int]

    def __post_init__(self):
        if self.source not in SOURCES:
            raise ValueError(f"unknown source {self.source!r}")
        if self.mean_T is not None and not self.ci_low <= self.mean_T <= self.ci_high:
            raise ValueError("ci_low <= mean_T <= ci_high must hold")

    @classmethod
    def columns(cls) -> tuple:
        return tuple(f.name for f in fields(cls))

    def as_dict(self) -> dict:
        return asdict(self)


class Difference(NamedTuple):
    """Percentage gap of one policy to a baseline at a heat-map point."""

    p1: float
    p2: float
    policy: str
    baseline: str
    percent: float
