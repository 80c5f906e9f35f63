"""
json_report.py

JSON-lines report implementation.
"""
import json
import math

from src.base_report import BaseReport


def _clean(value):
    # JSON has no NaN
    if isinstance(value, float) and math.isnan(value):
        return None
    return value


class JSONReport(BaseReport):
    """
    Exports one JSON object per row, keys in ResultRow field order.

    Suited to data pipelines that stream rows.
    """

    def export(self, path: str = "results.jsonl") -> str:
        """
        Export all rows as JSON lines.

        Args:
            path (str): Output file path

        Returns:
            str: Path to the exported file
        """
        if not isinstance(path, str):
            raise TypeError("path must be a string")
        with open(path, "w", encoding="utf-8") as f:
            for row in self._rows:
                data = {key: _clean(value) for key, value in row.as_dict().items()}
                f.write(json.dumps(data, allow_nan=False) + "\n")
        return path

    def summary(self):
        base_summary = super().summary()
        base_summary.update({"format": "JSONL", "machine_readable": True})
        return base_summary
