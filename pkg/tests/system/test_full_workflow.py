import io
import json
import unittest
from contextlib import redirect_stderr, redirect_stdout
from pathlib import Path
from unittest.mock import patch

from src.cli import main
from src.errors import DivergenceError
from src.persistence import PersistenceManager


class TestFullWorkflow(unittest.TestCase):
    """System-level test for the command-line workflow: config -> run -> export -> reload."""

    def setUp(self):
        self.config = Path("tests/system/run.cfg")
        self.config.write_text("# small machine\n"
                               "n = 16\n"
                               "lambda = 0.3\n"
                               "policies = random-chunk, jsq-chunk, equi\n"
                               "k = 1, 2, 4\n", encoding="utf-8")
        self.outputs = [Path("tests/system/test_output.csv"), Path("tests/system/test_output_2.csv"),
                        Path("tests/system/test_output.jsonl"), Path("tests/system/test_output.json"),
                        Path("tests/system/mdp_output.csv"), Path("tests/system/mdp_output.policy.csv")]

    def tearDown(self):
        for path in [self.config] + self.outputs:
            if path.exists():
                path.unlink()

    def run_cli(self, *argv):
        out, err = io.StringIO(), io.StringIO()
        with redirect_stdout(out), redirect_stderr(err):
            code = main(list(argv))
        return code, out.getvalue(), err.getvalue()

    def test_analyze_writes_csv(self):
        code, out, _ = self.run_cli("analyze", "--config", str(self.config), "--out", str(self.outputs[0]))
        self.assertEqual(code, 0)
        self.assertTrue(self.outputs[0].exists())
        lines = self.outputs[0].read_text(encoding="utf-8").splitlines()
        self.assertTrue(lines[0].startswith("policy,n,k,rho"))
        # 3 widths for each chunk policy plus EQUI
        self.assertEqual(len(lines), 1 + 3 + 3 + 1)
        self.assertIn("'rows': 7", out)

    def test_runs_are_byte_identical(self):
        for path in self.outputs[:2]:
            self.run_cli("analyze", "--config", str(self.config), "--out", str(path))
        self.assertEqual(self.outputs[0].read_bytes(), self.outputs[1].read_bytes())

    def test_jsonl_output_reloads(self):
        code, _, _ = self.run_cli("analyze", "--config", str(self.config), "--format", "jsonl",
                                  "--out", str(self.outputs[2]))
        self.assertEqual(code, 0)
        rows = [json.loads(line) for line in self.outputs[2].read_text(encoding="utf-8").splitlines()]
        PersistenceManager.save_results(rows, str(self.outputs[3]))
        self.assertEqual(PersistenceManager.load_results(str(self.outputs[3])), rows)
        self.assertEqual({row["source"] for row in rows}, {"analysis"})

    def test_mdp_writes_policy_table(self):
        self.config.write_text("n = 4\nlambda1 = 1.0\nlambda2 = 1.0\nspeedup.p1 = 0.2\nspeedup.p2 = 0.8\n"
                               "mdp.bound = 12\n", encoding="utf-8")
        code, _, _ = self.run_cli("mdp", "--config", str(self.config), "--out", str(self.outputs[4]))
        self.assertEqual(code, 0)
        table = PersistenceManager.load_policy_table(str(self.outputs[5]), 4)
        self.assertEqual(table.bound, 12)

    def test_print_config(self):
        code, out, _ = self.run_cli("analyze", "--config", str(self.config), "--print-config")
        self.assertEqual(code, 0)
        self.assertIn("lambda = 0.3\n", out)
        self.assertIn("seed = 1\n", out)

    def test_bad_value_is_a_config_error(self):
        code, _, err = self.run_cli("sweep", "--config", str(self.config), "--seed", "1")
        self.assertEqual(code, 0)
        self.config.write_text("n = 16\nrho.grid = 0.5:1.5:0.5\n", encoding="utf-8")
        code, _, err = self.run_cli("sweep", "--config", str(self.config))
        self.assertEqual(code, 2)
        self.assertIn("rho.grid", err)

    def test_divergence_fails_without_traceback(self):
        self.config.write_text("n = 4\nlambda1 = 1.0\nlambda2 = 1.0\nspeedup.p1 = 0.2\nspeedup.p2 = 0.8\n"
                               "mdp.bound = 8\n", encoding="utf-8")
        diverged = DivergenceError("OPT: span 0.2 after 3 iterations", [1.0, 0.5, 0.2])
        with patch("src.experiment.value_iteration", side_effect=diverged):
            code, _, err = self.run_cli("mdp", "--config", str(self.config))
        self.assertEqual(code, 1)
        self.assertIn("error: OPT: span 0.2", err)
        self.assertNotIn("Traceback", err)


if __name__ == "__main__":
    unittest.main()
