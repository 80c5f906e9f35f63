"""
config.py

Flat key = value configuration files with dotted keys.

The file has no section header; it is parsed with configparser under an
implicit [run] section. Values are kept as strings until a typed accessor
reads them, so an invalid value fails with a ConfigError naming its key.
"""
from __future__ import annotations

import configparser
import logging
import math
from pathlib import Path
from typing import Optional

import numpy as np

from src.errors import ConfigError
from src.speedup import AmdahlSpeedup, load_tabulated
from src.workload import Exponential, ShiftedPareto, SystemConfig, fit_hyperexp

logger = logging.getLogger(__name__)

SECTION = "run"

DEFAULTS = {
    "n": "16",
    "lambda": "0.5",
    "lambda1": "",
    "lambda2": "",
    "dist.kind": "exponential",
    "dist.mean": "1.0",
    "dist.scv": "10.0",
    "dist.alpha": "2.0",
    "speedup.p": "0.5",
    "speedup.p1": "",
    "speedup.p2": "",
    "speedup.table": "",
    "policies": "random-chunk,jsq-chunk,equi",
    "k": "all",
    "mrc.k1": "",
    "mrc.k2": "",
    "mrc.a1": "",
    "rho.grid": "0.05:0.95:0.05",
    "p.grid": "0.0:0.9:0.1",
    "mdp.bound": "60",
    "mdp.refine": "1",
    "simulate": "false",
    "seed": "1",
    "reps": "10",
    "jobs_per_rep": "100000",
}

# heat maps default to Λ1 = Λ2 = 5 n / 16 with E[X] = 1/2
HEATMAP_RATE_PER_16_CORES = 5.0
HEATMAP_MEAN = 0.5


def parse_grid(key: str, text: str) -> tuple:
    """
    Parse "start:stop:step" (stop included) or a comma list.

    Examples:
        >>> parse_grid("rho.grid", "0.1:0.3:0.1")
        (0.1, 0.2, 0.3)
    """
    text = text.strip()
    try:
        if ":" not in text:
            return tuple(float(part) for part in text.split(",") if part.strip())
        start, stop, step = (float(part) for part in text.split(":"))
    except ValueError as exc:
        raise ConfigError(key, f"cannot parse grid {text!r}") from exc
    if step <= 0:
        raise ConfigError(key, "grid step must be positive")
    count = int(math.floor((stop - start) / step + 1e-9)) + 1
    return tuple(round(float(value), 10) for value in start + step * np.arange(max(count, 0)))


class RunConfig:
    """Key-value settings with defaults; unknown keys are rejected."""

    def __init__(self, values: Optional[dict] = None):
        values = dict(values or {})
        unknown = sorted(set(values) - set(DEFAULTS))
        if unknown:
            raise ConfigError(unknown[0], "unknown configuration key")
        self._explicit = set(values)
        self._values = {**DEFAULTS, **{key: str(value).strip() for key, value in values.items()}}

    @classmethod
    def from_text(cls, text: str) -> "RunConfig":
        parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#",))
        parser.optionxform = str
        try:
            parser.read_string(f"[{SECTION}]\n" + text)
        except configparser.Error as exc:
            raise ConfigError("config", f"cannot parse: {exc}") from exc
        return cls(dict(parser.items(SECTION)))

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        """
        Raises:
            ConfigError: if the file cannot be read or holds bad keys
        """
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from exc
        logger.info("loaded configuration from %s", path)
        return cls.from_text(text)

    # --------- Accessors ---------

    def is_set(self, key: str) -> bool:
        return self._values[key] != ""

    def explicit(self, key: str) -> bool:
        return key in self._explicit

    def with_overrides(self, overrides: dict) -> "RunConfig":
        """Copy with the non-None entries of overrides applied."""
        values = {key: self._values[key] for key in self._explicit}
        for key, value in overrides.items():
            if value is not None:
                values[key] = value
        return RunConfig(values)

    def get_str(self, key: str) -> str:
        return self._values[key]

    def get_int(self, key: str) -> int:
        try:
            return int(self._values[key])
        except ValueError:
            raise ConfigError(key, f"expected an integer, got {self._values[key]!r}") from None

    def get_float(self, key: str) -> float:
        try:
            return float(self._values[key])
        except ValueError:
            raise ConfigError(key, f"expected a number, got {self._values[key]!r}") from None

    def get_bool(self, key: str) -> bool:
        text = self._values[key].lower()
        if text in ("1", "true", "yes", "on"):
            return True
        if text in ("0", "false", "no", "off"):
            return False
        raise ConfigError(key, f"expected a boolean, got {self._values[key]!r}")

    # --------- Domain objects ---------

    def distribution(self, mean: Optional[float] = None):
        kind = self.get_str("dist.kind")
        mean = self.get_float("dist.mean") if mean is None else mean
        if not mean > 0:
            raise ConfigError("dist.mean", "mean must be positive")
        try:
            if kind == "exponential":
                return Exponential(1.0 / mean)
            if kind == "hyperexp":
                return fit_hyperexp(mean, self.get_float("dist.scv"))
            if kind == "pareto":
                return ShiftedPareto.with_mean(self.get_float("dist.alpha"), mean)
        except ValueError as exc:
            raise ConfigError(f"dist.{kind}", str(exc)) from exc
        raise ConfigError("dist.kind", f"expected exponential, hyperexp or pareto, got {kind!r}")

    def _amdahl(self, key: str) -> AmdahlSpeedup:
        try:
            return AmdahlSpeedup(self.get_float(key))
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from exc

    def speedup(self):
        if self.is_set("speedup.table"):
            try:
                return load_tabulated(self.get_str("speedup.table"))
            except (RuntimeError, ValueError) as exc:
                raise ConfigError("speedup.table", str(exc)) from exc
        return self._amdahl("speedup.p")

    @property
    def two_class(self) -> bool:
        return any(self.is_set(key) for key in ("lambda1", "lambda2", "speedup.p1", "speedup.p2"))

    def system_config(self, command: str = "sweep") -> SystemConfig:
        """
        Build the SystemConfig. Heat maps always use two classes and default
        to Λ1 = Λ2 = 5 n / 16 with E[X] = 1/2 unless those keys are set.
        """
        n = self.get_int("n")
        if n < 1:
            raise ConfigError("n", "must be at least 1")
        if command == "heatmap" or self.two_class:
            mean = None
            if command == "heatmap" and not self.explicit("dist.mean"):
                mean = HEATMAP_MEAN
            dist = self.distribution(mean)
            default_rate = HEATMAP_RATE_PER_16_CORES * n / 16
            rates = []
            for key in ("lambda1", "lambda2"):
                if self.is_set(key):
                    rates.append(self.get_float(key))
                elif command == "heatmap":
                    rates.append(default_rate)
                else:
                    raise ConfigError(key, "two-class runs need lambda1 and lambda2")
            if any(rate < 0 for rate in rates):
                raise ConfigError("lambda1", "arrival rates must be non-negative")
            p1 = self._amdahl("speedup.p1") if self.is_set("speedup.p1") else self.speedup()
            p2 = self._amdahl("speedup.p2") if self.is_set("speedup.p2") else self.speedup()
            return SystemConfig.two_class(n, rates[0], rates[1], dist, p1, p2)
        lam = self.get_float("lambda")
        if lam < 0:
            raise ConfigError("lambda", "arrival rate must be non-negative")
        return SystemConfig.single_class(n, lam, self.distribution(), self.speedup())

    def policies(self) -> tuple:
        return tuple(name.strip() for name in self.get_str("policies").split(",") if name.strip())

    def widths(self) -> Optional[tuple]:
        text = self.get_str("k").strip().lower()
        if text == "all":
            return None
        try:
            return tuple(int(part) for part in text.split(",") if part.strip())
        except ValueError:
            raise ConfigError("k", f"expected 'all' or integers, got {text!r}") from None

    def mrc(self) -> Optional[tuple]:
        keys = ("mrc.k1", "mrc.k2", "mrc.a1")
        if not any(self.is_set(key) for key in keys):
            return None
        missing = [key for key in keys if not self.is_set(key)]
        if missing:
            raise ConfigError(missing[0], "mixed-random-chunk needs mrc.k1, mrc.k2 and mrc.a1")
        return tuple(self.get_int(key) for key in keys)

    def rho_grid(self) -> tuple:
        return parse_grid("rho.grid", self.get_str("rho.grid"))

    def p_grid(self) -> tuple:
        return parse_grid("p.grid", self.get_str("p.grid"))

    def render(self) -> str:
        """All settings as a config file, defaults included."""
        return "".join(f"{key} = {self._values[key]}\n" for key in DEFAULTS)

    def __str__(self) -> str:
        return f"RunConfig(explicit={sorted(self._explicit)})"

    def __repr__(self) -> str:
        explicit = {key: self._values[key] for key in sorted(self._explicit)}
        return f"RunConfig({explicit!r})"
