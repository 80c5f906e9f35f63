"""Unit tests for the simulated policies and the event-driven simulator."""
import math

import numpy as np
import pytest

from src.analytic import equi_mrt, jsq_chunk_mrt, mixed_random_chunk_var, stability_load
from src.mdp import MdpModel, PolicyTable, mean_response, policy_evaluation
from src.policies import (
    Equi,
    FixedAllocTable,
    GreedyStar,
    JSQChunk,
    MixedRandomChunk,
    Random,
    RandomChunk,
    depletion_rates,
    jsq_dispatch,
    make_policy,
)
from src.simulator import paired_difference, random_piece_response, simulate
from src.speedup import AmdahlSpeedup
from src.workload import Exponential, ShiftedPareto, SystemConfig, divisors, fit_hyperexp


def amdahl_config(n, rho, p):
    return SystemConfig.at_load(n, rho, Exponential(1.0), AmdahlSpeedup(p))


def two_class_config(n=4):
    return SystemConfig.two_class(n, 1.0, 1.0, Exponential(1.0), AmdahlSpeedup(0.2), AmdahlSpeedup(0.8))


class TestJsqDispatch:
    def test_unique_minimum(self):
        assert jsq_dispatch([3, 1, 2], np.random.default_rng(0)) == 1

    def test_ties_stay_among_minimisers(self):
        rng = np.random.default_rng(1)
        assert {jsq_dispatch([2, 2, 5], rng) for _ in range(200)} == {0, 1}

    def test_ties_are_uniform(self):
        rng = np.random.default_rng(9)
        picks = np.array([jsq_dispatch([0, 0], rng) for _ in range(100_000)])
        assert abs(np.sum(picks == 0) - 50_000) < 5 * math.sqrt(100_000 * 0.25)

    def test_seeded_choice_is_reproducible(self):
        a = jsq_dispatch([2, 2, 5], np.random.default_rng(42))
        b = jsq_dispatch([2, 2, 5], np.random.default_rng(42))
        assert a == b

    def test_needs_a_chunk(self):
        with pytest.raises(ValueError):
            jsq_dispatch([], np.random.default_rng(0))


class TestDepletionRates:
    def test_equi_single_job(self):
        rates = depletion_rates(Equi(), amdahl_config(16, 0.5, 0.5), [(0, 0)])
        assert rates == [pytest.approx(1.8823529411764706)]

    def test_equi_more_jobs_than_cores(self):
        rates = depletion_rates(Equi(), amdahl_config(16, 0.5, 0.5), [(0, 0)] * 32)
        assert rates == [pytest.approx(0.5)] * 32

    def test_equi_is_work_conserving_at_saturation(self):
        rates = depletion_rates(Equi(), amdahl_config(16, 0.5, 0.5), [(0, 0)] * 20)
        assert sum(rates) == pytest.approx(16.0)

    def test_shared_chunk(self):
        rates = depletion_rates(RandomChunk(5), amdahl_config(10, 0.3, 0.5), [(0, 0), (0, 0)])
        assert rates == [pytest.approx(AmdahlSpeedup(0.5)(5) / 2)] * 2

    def test_two_class_equi_uses_class_curves(self):
        cfg = two_class_config(4)
        rates = depletion_rates(Equi(), cfg, [(0, 0), (1, 1)])
        assert rates[0] == pytest.approx(AmdahlSpeedup(0.2)(2))
        assert rates[1] == pytest.approx(AmdahlSpeedup(0.8)(2))

    def test_greedy_star_gives_all_cores_to_lone_class(self):
        cfg = two_class_config(4)
        rates = depletion_rates(GreedyStar(), cfg, [(0, 0)])
        assert rates[0] == pytest.approx(AmdahlSpeedup(0.2)(4))


class TestPolicies:
    def test_chunk_width_must_divide(self):
        with pytest.raises(ValueError):
            RandomChunk(3).validate(amdahl_config(16, 0.3, 0.5))

    def test_random_width_at_most_n(self):
        with pytest.raises(ValueError):
            Random(32).validate(amdahl_config(16, 0.3, 0.5))

    def test_greedy_star_needs_two_classes(self):
        with pytest.raises(ValueError):
            GreedyStar().validate(amdahl_config(16, 0.3, 0.5))

    def test_mixed_chunk_layout(self):
        bound = MixedRandomChunk(2, 4, 8).prepare(amdahl_config(16, 0.3, 0.5))
        assert bound.num_stations() == 6
        assert [bound.chunk_type(i) for i in range(6)] == [0, 0, 0, 0, 1, 1]

    def test_random_uses_distinct_cores(self):
        bound = Random(4).prepare(amdahl_config(16, 0.3, 0.5))
        cores = bound.dispatch(0, np.zeros(16, dtype=int), np.random.default_rng(3))
        assert len(set(cores)) == 4

    def test_unbound_policy_has_no_config(self):
        with pytest.raises(RuntimeError):
            RandomChunk(2).config

    def test_make_policy(self):
        assert make_policy("jsq-chunk", 4) == JSQChunk(4)
        assert isinstance(make_policy("equi"), Equi)
        with pytest.raises(ValueError):
            make_policy("random-chunk")
        with pytest.raises(ValueError):
            make_policy("fifo")

    def test_table_must_match_cores(self):
        table = PolicyTable(np.array([[0.0, 0.0], [8.0, 4.0]]), 8)
        with pytest.raises(ValueError):
            FixedAllocTable(table).validate(two_class_config(4))


class TestPieceResponse:
    def test_last_piece_decides(self):
        assert random_piece_response(1.0, [2.0, 3.5]) == pytest.approx(2.5)

    def test_piece_cannot_precede_arrival(self):
        with pytest.raises(ValueError):
            random_piece_response(1.0, [0.5])

    def test_needs_pieces(self):
        with pytest.raises(ValueError):
            random_piece_response(1.0, [])


class TestSimulate:
    def test_same_seed_same_result(self):
        cfg = amdahl_config(4, 0.5, 0.5)
        a = simulate(cfg, JSQChunk(2), 2_000, seed=5, replications=2)
        b = simulate(cfg, JSQChunk(2), 2_000, seed=5, replications=2)
        assert a.mean_response == b.mean_response
        assert a.mean_number == b.mean_number

    def test_single_replication_has_no_interval(self):
        result = simulate(amdahl_config(4, 0.5, 0.5), RandomChunk(1), 1_000, replications=1)
        assert math.isinf(result.half_width)

    def test_lone_job_runs_on_its_chunk(self):
        # one measured job at negligible load never shares its chunk
        cfg = amdahl_config(4, 1e-6, 0.5)
        result = simulate(cfg, RandomChunk(4), 1, replications=2, warmup_jobs=0)
        assert result.mean_response > 0

    def test_flags_unstable_runs(self):
        result = simulate(amdahl_config(16, 0.9, 0.5), RandomChunk(16), 2_000, replications=2,
                          max_population=200)
        assert result.unstable

    def test_paired_difference_needs_matching_runs(self):
        cfg = amdahl_config(4, 0.5, 0.5)
        a = simulate(cfg, RandomChunk(1), 500, seed=1, replications=2)
        b = simulate(cfg, RandomChunk(1), 500, seed=2, replications=2)
        with pytest.raises(ValueError):
            paired_difference(a, b)

    @pytest.mark.slow
    def test_random_chunk_matches_closed_form(self):
        result = simulate(amdahl_config(4, 0.5, 0.5), RandomChunk(1), 20_000, seed=1, replications=10)
        assert result.mean_response == pytest.approx(2.0, rel=0.05)
        assert result.littles_law_gap(2.0) < 0.05

    @pytest.mark.slow
    def test_equi_matches_birth_death(self):
        cfg = amdahl_config(16, 0.5, 0.5)
        result = simulate(cfg, Equi(), 20_000, seed=2, replications=10)
        assert result.mean_response == pytest.approx(equi_mrt(cfg), rel=0.05)

    @pytest.mark.slow
    def test_random_slower_than_random_chunk(self):
        cfg = amdahl_config(16, 0.6, 0.5)
        split = simulate(cfg, Random(2), 20_000, seed=3, replications=10)
        chunk = simulate(cfg, RandomChunk(2), 20_000, seed=3, replications=10)
        diff, p_value = paired_difference(split, chunk)
        assert split.mean_response >= chunk.mean_response
        assert diff > 0
        assert p_value < 0.05

    @pytest.mark.slow
    def test_mixed_chunk_moments(self):
        cfg = amdahl_config(16, 0.3, 0.5)
        result = simulate(cfg, MixedRandomChunk(2, 4, 8), 10_000, seed=4, replications=5)
        assert set(result.chunk_moments) == {0, 1}
        variance = mixed_random_chunk_var(16, 8, result.chunk_moments[0], result.chunk_moments[1])
        assert variance > 0
        assert result.chunk_moments[1].m1 > result.chunk_moments[0].m1

    @pytest.mark.slow
    def test_littles_law_in_every_replication(self):
        cfg = amdahl_config(16, 0.5, 0.5)
        result = simulate(cfg, RandomChunk(2), 20_000, seed=5, replications=10)
        for record in result.records:
            gap = abs(record.mean_number - cfg.total_rate * record.mean_response) / record.mean_number
            assert gap < 0.05, record.replication

    @pytest.mark.slow
    @pytest.mark.parametrize("rho", [0.3, 0.6])
    @pytest.mark.parametrize("policy", [Equi(), RandomChunk(2)], ids=["equi", "random-chunk-2"])
    def test_size_law_does_not_move_the_mean(self, policy, rho):
        dists = (Exponential(1.0), fit_hyperexp(1.0, 10.0), ShiftedPareto.with_mean(2.0, 1.0))
        intervals = [simulate(SystemConfig.at_load(16, rho, dist, AmdahlSpeedup(0.5)), policy, 20_000, seed=6,
                              replications=10).ci for dist in dists]
        assert max(low for low, _ in intervals) <= min(high for _, high in intervals), intervals

    @pytest.mark.slow
    @pytest.mark.parametrize("fraction", [0.2, 0.5, 0.9])
    @pytest.mark.parametrize("k", divisors(16))
    def test_jsq_chunk_close_to_approximation(self, k, fraction):
        s = AmdahlSpeedup(0.5)
        cfg = amdahl_config(16, fraction * min(stability_load(s, k), 1.0), 0.5)
        result = simulate(cfg, JSQChunk(k), 40_000, seed=7, replications=10)
        assert result.mean_response == pytest.approx(jsq_chunk_mrt(cfg, k), rel=0.05)

    @pytest.mark.slow
    def test_greedy_star_matches_policy_evaluation(self):
        cfg = SystemConfig.two_class(8, 1.5, 1.5, Exponential(1.0), AmdahlSpeedup(0.2), AmdahlSpeedup(0.8))
        model = MdpModel.from_config(cfg, 30)
        expected = mean_response(model, policy_evaluation(model, "GREEDY*")[0])
        result = simulate(cfg, GreedyStar(), 20_000, seed=8, replications=10)
        assert result.contains(expected), (result.ci, expected)
