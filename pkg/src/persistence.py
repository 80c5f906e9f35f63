"""
persistence.py

Saving and loading result documents and MDP policy tables.
"""
import csv
import json
import logging
from pathlib import Path

import numpy as np

from src.mdp import PolicyTable

logger = logging.getLogger(__name__)

POLICY_COLUMNS = ("x1", "x2", "a1")


class PersistenceManager:
    """File persistence for JSON result documents and (x1, x2, a1) policy tables."""

    @staticmethod
    def save_results(data, path: str) -> str:
        """
        Write a JSON document with sorted keys.

        Raises:
            RuntimeError: if the file cannot be written
        """
        try:
            with open(path, "w", encoding="utf-8") as f:
                json.dump(data, f, indent=2, sort_keys=True)
        except OSError as exc:
            raise RuntimeError(f"cannot write {path}: {exc}") from exc
        return path

    @staticmethod
    def load_results(path: str):
        """
        Read a JSON document.

        Raises:
            RuntimeError: if the file is missing or not valid JSON
        """
        try:
            with open(path, "r", encoding="utf-8") as f:
                return json.load(f)
        except (OSError, json.JSONDecodeError) as exc:
            raise RuntimeError(f"cannot load results from {path}: {exc}") from exc

    @staticmethod
    def save_policy_table(table: PolicyTable, path: str) -> str:
        """Write a policy table as x1,x2,a1 rows."""
        if not isinstance(table, PolicyTable):
            raise TypeError("table must be a PolicyTable")
        try:
            with open(path, "w", newline="", encoding="utf-8") as f:
                writer = csv.writer(f, lineterminator="\n")
                writer.writerow(POLICY_COLUMNS)
                for x1, x2, a1 in table.rows():
                    writer.writerow([x1, x2, repr(a1)])
        except OSError as exc:
            raise RuntimeError(f"cannot write {path}: {exc}") from exc
        logger.info("saved %s to %s", table, path)
        return path

    @staticmethod
    def load_policy_table(path: str, n: int, provenance: str = None) -> PolicyTable:
        """
        Read a policy table written by save_policy_table.

        Raises:
            RuntimeError: if the file is missing or malformed
            ValueError: if the table breaks the PolicyTable invariants
        """
        try:
            with open(path, "r", newline="", encoding="utf-8") as f:
                reader = csv.reader(f)
                header = next(reader)
                entries = [(int(x1), int(x2), float(a1)) for x1, x2, a1 in reader]
        except (OSError, StopIteration, ValueError) as exc:
            raise RuntimeError(f"cannot load policy table from {path}: {exc}") from exc
        if tuple(header) != POLICY_COLUMNS:
            raise RuntimeError(f"{path}: expected columns {POLICY_COLUMNS}, got {tuple(header)}")
        bound = max(max(x1, x2) for x1, x2, _ in entries) if entries else -1
        if bound < 1 or len(entries) != (bound + 1) ** 2:
            raise RuntimeError(f"{path}: table must cover every state of a square grid")
        a1 = np.zeros((bound + 1, bound + 1))
        for x1, x2, value in entries:
            a1[x1, x2] = value
        return PolicyTable(a1, n, provenance or Path(path).stem)
