import io
import unittest
from contextlib import redirect_stderr
from pathlib import Path

from src.cli import main
from src.persistence import PersistenceManager
from src.validation import check_golden


class TestMissingFile(unittest.TestCase):
    """System test for handling missing input files."""

    def test_missing_file_raises_error(self):
        missing_file = Path("tests/system/does_not_exist.json")

        with self.assertRaises(RuntimeError):
            PersistenceManager.load_results(str(missing_file))

    def test_missing_policy_table_raises_error(self):
        with self.assertRaises(RuntimeError):
            PersistenceManager.load_policy_table("tests/system/does_not_exist.csv", 4)

    def test_missing_config_exits_with_config_error(self):
        err = io.StringIO()
        with redirect_stderr(err):
            code = main(["analyze", "--config", "tests/system/does_not_exist.cfg"])
        self.assertEqual(code, 2)
        self.assertIn("configuration error: config:", err.getvalue())

    def test_missing_golden_table_fails(self):
        results = check_golden("tests/system/does_not_exist.csv")
        self.assertEqual(len(results), 1)
        self.assertFalse(results[0].passed)


if __name__ == "__main__":
    unittest.main()
