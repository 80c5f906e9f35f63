"""
base_report.py

Abstract base class for all result report formats.
"""
from abc import ABC, abstractmethod


class BaseReport(ABC):
    """
    Abstract base class for experiment reports.

    A report wraps a list of ResultRow records. Subclasses must implement
    export() and may extend summary() with format-specific fields.
    """

    def __init__(self, rows: list):
        """
        Initialize a BaseReport.

        Args:
            rows (list): ResultRow records in output order
        """
        if not isinstance(rows, list):
            raise TypeError("rows must be a list")
        for row in rows:
            if not hasattr(row, "as_dict"):
                raise TypeError("every row must be a ResultRow")
        self._rows = rows

    # --------- Properties (shared by all reports) ---------

    @property
    def rows(self):
        """Return the result rows."""
        return self._rows

    @property
    def policies(self):
        """Policy names in first-seen order."""
        return list(dict.fromkeys(row.policy for row in self._rows))

    # --------- Abstract Methods ---------

    @abstractmethod
    def export(self, path: str) -> str:
        """
        Export the report to a file.

        Args:
            path (str): Output file path

        Returns:
            str: Path to the exported file
        """
        pass

    # --------- Concrete Methods ---------

    def summary(self):
        """Return a short summary of the rows."""
        return {
            "rows": len(self._rows),
            "policies": self.policies,
            "sources": sorted({row.source for row in self._rows}),
            "unstable": sum(1 for row in self._rows if not row.stable),
        }

    def best_by_load(self, source: str = "analysis") -> dict:
        """Lowest stable mean response time per load for one source."""
        best = {}
        for row in self._rows:
            if row.source != source or row.mean_T is None:
                continue
            current = best.get(row.rho)
            if current is None or row.mean_T < current.mean_T:
                best[row.rho] = row
        return best

    # --------- String Representations ---------

    def __str__(self):
        return f"{self.__class__.__name__}(rows={len(self._rows)})"

    def __repr__(self):
        return f"{self.__class__.__name__}(rows={len(self._rows)}, policies={self.policies})"
