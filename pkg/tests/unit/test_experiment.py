"""Unit tests for configuration, result rows, reports and the experiment runner."""
import json
from dataclasses import replace

import pytest

from src.config import RunConfig, parse_grid
from src.csv_report import CSVReport, format_value
from src.errors import ConfigError
from src.experiment import ExperimentRunner, ExperimentSpec, diagonal_trend
from src.json_report import JSONReport
from src.results import ResultRow
from src.speedup import AmdahlSpeedup
from src.workload import Exponential, SystemConfig


def single_config(n=16, rho=0.3):
    return SystemConfig.at_load(n, rho, Exponential(1.0), AmdahlSpeedup(0.5))


def row(policy="equi", rho=0.5, mean=2.0, source="analysis", stable=True):
    return ResultRow(policy, 4, "", rho, 0.5, None, mean, mean, mean, source, stable, None)


class TestParseGrid:
    def test_range_includes_stop(self):
        assert parse_grid("rho.grid", "0.1:0.3:0.1") == (0.1, 0.2, 0.3)

    def test_list(self):
        assert parse_grid("p.grid", "0.5, 0.7") == (0.5, 0.7)

    def test_default_load_grid(self):
        grid = parse_grid("rho.grid", "0.05:0.95:0.05")
        assert len(grid) == 19
        assert grid[-1] == 0.95

    def test_garbage(self):
        with pytest.raises(ConfigError) as info:
            parse_grid("rho.grid", "a:b:c")
        assert info.value.key == "rho.grid"

    def test_zero_step(self):
        with pytest.raises(ConfigError):
            parse_grid("p.grid", "0:1:0")


class TestRunConfig:
    def test_unknown_key(self):
        with pytest.raises(ConfigError) as info:
            RunConfig({"bogus": "1"})
        assert info.value.key == "bogus"

    def test_from_text_with_comment(self):
        settings = RunConfig.from_text("n = 8\nlambda = 0.25  # per core\n")
        cfg = settings.system_config()
        assert cfg.n == 8
        assert cfg.total_rate == pytest.approx(2.0)

    def test_unparseable_text(self):
        with pytest.raises(ConfigError) as info:
            RunConfig.from_text("no delimiter on this line\n")
        assert info.value.key == "config"

    def test_missing_class_rate(self):
        with pytest.raises(ConfigError) as info:
            RunConfig({"lambda1": "1.0"}).system_config()
        assert info.value.key == "lambda2"

    def test_heatmap_defaults(self):
        cfg = RunConfig({"n": "16"}).system_config("heatmap")
        assert cfg.class_rates == (5.0, 5.0)
        assert cfg.mean_size == pytest.approx(0.5)

    def test_heatmap_keeps_explicit_rates(self):
        cfg = RunConfig({"n": "16", "lambda1": "1", "lambda2": "2"}).system_config("heatmap")
        assert cfg.class_rates == (1.0, 2.0)

    def test_bad_integer(self):
        with pytest.raises(ConfigError) as info:
            RunConfig({"n": "many"}).get_int("n")
        assert info.value.key == "n"

    def test_bad_distribution(self):
        with pytest.raises(ConfigError) as info:
            RunConfig({"dist.kind": "weibull"}).distribution()
        assert info.value.key == "dist.kind"

    def test_hyperexponential(self):
        dist = RunConfig({"dist.kind": "hyperexp", "dist.scv": "10"}).distribution()
        assert dist.mean() == pytest.approx(1.0)
        assert dist.scv() == pytest.approx(10.0)

    def test_partial_mixed_chunk(self):
        with pytest.raises(ConfigError) as info:
            RunConfig({"mrc.k1": "2"}).mrc()
        assert info.value.key == "mrc.k2"

    def test_widths(self):
        assert RunConfig().widths() is None
        assert RunConfig({"k": "1, 4"}).widths() == (1, 4)

    def test_overrides_skip_none(self):
        settings = RunConfig().with_overrides({"seed": 7, "reps": None})
        assert settings.get_int("seed") == 7
        assert settings.get_int("reps") == 10
        assert settings.explicit("seed")
        assert not settings.explicit("reps")

    def test_render_lists_defaults(self):
        text = RunConfig({"n": "4"}).render()
        assert "mdp.bound = 60\n" in text
        assert "n = 4\n" in text


class TestResultRow:
    def test_columns(self):
        assert ResultRow.columns()[:3] == ("policy", "n", "k")
        assert ResultRow.columns()[-3:] == ("source", "stable", "seed")

    def test_unknown_source(self):
        with pytest.raises(ValueError):
            row(source="guess")

    def test_interval_must_contain_mean(self):
        with pytest.raises(ValueError):
            ResultRow("equi", 4, "", 0.5, 0.5, None, 2.0, 2.1, 2.5, "simulation", True, 1)

    def test_unstable_row(self):
        unstable = ResultRow("random-chunk", 4, "4", 0.9, 0.5, None, None, None, None, "analysis", False, None)
        assert unstable.as_dict()["mean_T"] is None


class TestReports:
    def test_rows_must_be_a_list(self):
        with pytest.raises(TypeError):
            CSVReport(tuple())

    def test_rows_must_be_records(self):
        with pytest.raises(TypeError):
            JSONReport([{"policy": "equi"}])

    def test_format_value(self):
        assert format_value(None) == ""
        assert format_value(True) == "true"
        assert format_value(0.1) == "0.1"

    def test_csv_export(self, tmp_path):
        path = str(tmp_path / "rows.csv")
        CSVReport([row(), row(policy="random-chunk", mean=None, stable=False)]).export(path)
        lines = (tmp_path / "rows.csv").read_text().splitlines()
        assert lines[0] == ",".join(ResultRow.columns())
        assert lines[1].startswith("equi,4,,0.5,0.5,,2.0,2.0,2.0,analysis,true,")
        assert ",,,,analysis,false," in lines[2]

    def test_jsonl_export(self, tmp_path):
        path = str(tmp_path / "rows.jsonl")
        JSONReport([row(), row(mean=None, stable=False)]).export(path)
        records = [json.loads(line) for line in (tmp_path / "rows.jsonl").read_text().splitlines()]
        assert list(records[0]) == list(ResultRow.columns())
        assert records[1]["mean_T"] is None

    def test_summary(self):
        report = JSONReport([row(), row(policy="random", stable=False, mean=None)])
        summary = report.summary()
        assert summary["rows"] == 2
        assert summary["unstable"] == 1
        assert summary["format"] == "JSONL"
        assert report.policies == ["equi", "random"]

    def test_best_by_load(self):
        report = CSVReport([row(mean=2.0), row(policy="random-chunk", mean=1.5), row(rho=0.7, mean=3.0)])
        best = report.best_by_load()
        assert best[0.5].policy == "random-chunk"
        assert best[0.7].mean_T == 3.0


class TestExperimentSpec:
    def test_unknown_policy(self):
        with pytest.raises(ValueError, match="^policies:"):
            ExperimentSpec("analyze", single_config(), policies=("fifo",))

    def test_unknown_command(self):
        with pytest.raises(ValueError):
            ExperimentSpec("plot", single_config())

    def test_sweep_needs_loads(self):
        with pytest.raises(ValueError, match="^rho.grid:"):
            ExperimentSpec("sweep", single_config())

    def test_load_range(self):
        with pytest.raises(ValueError, match="^rho.grid:"):
            ExperimentSpec("sweep", single_config(), rho_grid=(0.5, 1.2))

    def test_width_must_divide(self):
        with pytest.raises(ValueError, match="^k:"):
            ExperimentSpec("analyze", single_config(), widths=(3,))

    def test_mixed_needs_parameters(self):
        with pytest.raises(ValueError, match="^mrc.k1:"):
            ExperimentSpec("analyze", single_config(), policies=("mixed-random-chunk",))

    def test_all_widths(self):
        assert ExperimentSpec("analyze", single_config(12)).chunk_widths == (1, 2, 3, 4, 6, 12)


class TestExperimentRunner:
    def test_analyze_rows(self):
        spec = ExperimentSpec("analyze", single_config(), policies=("random-chunk",), widths=(2, 16))
        rows = ExperimentRunner().analyze(spec)
        assert [r.k for r in rows] == ["2", "16"]
        assert rows[0].mean_T == pytest.approx(15 / 11)
        assert rows[0].stable
        assert rows[1].mean_T is None
        assert not rows[1].stable

    def test_no_formula_for_random(self):
        spec = ExperimentSpec("analyze", single_config(), policies=("random",), widths=(2,))
        assert ExperimentRunner().analyze(spec) == []

    def test_mixed_width_label(self):
        spec = ExperimentSpec("analyze", single_config(), policies=("mixed-random-chunk",), mrc=(2, 4, 8))
        rows = ExperimentRunner().analyze(spec)
        assert rows[0].k == "k1=2;k2=4;a1=8"

    def test_sweep_adds_equi(self):
        spec = ExperimentSpec("sweep", single_config(4, 0.5), policies=("random-chunk",), widths=(1,),
                              rho_grid=(0.25, 0.5))
        rows = ExperimentRunner().sweep_rho(spec)
        assert [r.policy for r in rows] == ["random-chunk", "equi", "random-chunk", "equi"]
        assert rows[2].mean_T == pytest.approx(2.0)
        assert rows[3].mean_T < rows[2].mean_T

    def test_mdp_point(self):
        cfg = SystemConfig.two_class(4, 1.0, 1.0, Exponential(1.0), AmdahlSpeedup(0.2), AmdahlSpeedup(0.8))
        spec = ExperimentSpec("mdp", cfg, mdp_bound=16)
        rows, table = ExperimentRunner().mdp_point(spec)
        means = {r.policy: r.mean_T for r in rows}
        assert set(means) == {"opt", "greedy-star", "greedy-min", "equi"}
        assert means["opt"] <= min(means.values()) * (1 + 1e-7)
        assert table.provenance == "OPT"
        assert all(r.source == "mdp" for r in rows)

    def test_tiny_heatmap(self):
        cfg = RunConfig({"n": "4"}).system_config("heatmap")
        spec = ExperimentSpec("heatmap", cfg, p_grid=(0.5,), mdp_bound=20)
        result = ExperimentRunner().heatmap(spec)
        assert {r.policy for r in result.rows} == {"opt", "greedy-star", "equi", "jsq-chunk"}
        assert {d.policy for d in result.differences} == {"greedy-star", "equi", "jsq-chunk"}
        assert all(d.percent > -1e-4 for d in result.differences)
        assert result.diagonal_trend == [(1.0, 1, True)]

    def test_heatmap_needs_two_classes(self):
        spec = ExperimentSpec("heatmap", single_config(4), p_grid=(0.5,), mdp_bound=8)
        with pytest.raises(ValueError):
            ExperimentRunner().heatmap(spec)

    def test_report_injection(self):
        runner = ExperimentRunner()
        assert isinstance(runner.build_report([row()]), CSVReport)
        runner.set_report_format(JSONReport)
        assert isinstance(runner.build_report([row()]), JSONReport)
        assert len(runner.reports) == 2

    def test_exports_are_deterministic(self, tmp_path):
        spec = ExperimentSpec("sweep", single_config(8, 0.5), rho_grid=(0.2, 0.6))
        paths = []
        for name in ("a.csv", "b.csv"):
            runner = ExperimentRunner()
            paths.append(runner.build_report(runner.sweep_rho(spec)).export(str(tmp_path / name)))
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()

    @pytest.mark.parametrize("workers", [2, 3])
    def test_sweep_output_independent_of_workers(self, tmp_path, workers):
        spec = ExperimentSpec("sweep", single_config(4, 0.5), policies=("random-chunk", "jsq-chunk"),
                              widths=(1, 2), rho_grid=(0.2, 0.4, 0.6), simulate=True, reps=2,
                              jobs_per_rep=400)
        serial = ExperimentRunner().build_report(ExperimentRunner().sweep_rho(spec))
        pooled = ExperimentRunner().build_report(ExperimentRunner().sweep_rho(replace(spec, workers=workers)))
        serial.export(str(tmp_path / "serial.csv"))
        pooled.export(str(tmp_path / "pooled.csv"))
        assert (tmp_path / "serial.csv").read_bytes() == (tmp_path / "pooled.csv").read_bytes()

    def test_heatmap_output_independent_of_workers(self, tmp_path):
        cfg = RunConfig({"n": "4"}).system_config("heatmap")
        spec = ExperimentSpec("heatmap", cfg, p_grid=(0.2, 0.5, 0.8), mdp_bound=12)
        serial = ExperimentRunner().heatmap(spec)
        pooled = ExperimentRunner().heatmap(replace(spec, workers=2))
        ExperimentRunner().build_report(serial.rows).export(str(tmp_path / "serial.csv"))
        ExperimentRunner().build_report(pooled.rows).export(str(tmp_path / "pooled.csv"))
        assert (tmp_path / "serial.csv").read_bytes() == (tmp_path / "pooled.csv").read_bytes()
        assert serial.differences == pooled.differences
        assert [(r.p1, r.p2) for r in serial.rows][::4] == [(0.2, 0.2), (0.2, 0.5), (0.2, 0.8), (0.5, 0.5),
                                                             (0.5, 0.8), (0.8, 0.8)]


class TestEqualSumDiagonal:
    """Points with p1 + p2 = 1 and equal class rates."""

    POINTS = ((0.5, 0.5), (0.4, 0.6), (0.3, 0.7))

    @pytest.fixture(scope="class")
    def values(self):
        cfg = RunConfig({"n": "4"}).system_config("heatmap")
        spec = ExperimentSpec("heatmap", cfg, p_grid=(0.5,), mdp_bound=24)
        runner = ExperimentRunner()
        return [runner.heatmap_point(spec, p1, p2)[1] for p1, p2 in self.POINTS]

    def test_jsq_chunk_constant(self, values):
        first = values[0]["jsq-chunk"]
        for point in values[1:]:
            assert point["jsq-chunk"] == pytest.approx(first, rel=1e-10, abs=0)

    def test_jsq_chunk_gap_grows_with_spread(self, values):
        gaps = [(v["jsq-chunk"] - v["opt"]) / v["opt"] for v in values]
        assert gaps[0] < gaps[1] < gaps[2]


class TestDiagonalTrend:
    def test_ordered(self):
        assert diagonal_trend({(0.4, 0.4): 2.0, (0.2, 0.6): 1.9, (0.0, 0.8): 1.8}) == [(0.8, 3, True)]

    def test_not_ordered(self):
        assert diagonal_trend({(0.4, 0.4): 2.0, (0.0, 0.8): 2.5}) == [(0.8, 2, False)]
