"""
csv_report.py

CSV format report implementation (the canonical output format).
"""
import csv

from src.base_report import BaseReport
from src.results import ResultRow


def format_value(value) -> str:
    """Cell text: empty for None, repr for floats, lower-case booleans."""
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def write_table(records, columns, path: str) -> str:
    """
    Write records (NamedTuples or objects with as_dict) as a CSV table.

    Raises:
        TypeError: if path is not a string
    """
    if not isinstance(path, str):
        raise TypeError("path must be a string")
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for record in records:
            data = record.as_dict() if hasattr(record, "as_dict") else record._asdict()
            writer.writerow([format_value(data[column]) for column in columns])
    return path


class CSVReport(BaseReport):
    """Exports rows as CSV with columns in ResultRow field order."""

    def export(self, path: str = "results.csv") -> str:
        """
        Export all rows to CSV.

        Args:
            path (str): Output CSV file path

        Returns:
            str: Path to the exported CSV file
        """
        return write_table(self._rows, ResultRow.columns(), path)

    def summary(self):
        base_summary = super().summary()
        base_summary["format"] = "CSV"
        return base_summary
