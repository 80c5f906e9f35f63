"""Unit tests for speedup curves and the EQUI aggregate rate."""
import numpy as np
import pytest

from src.speedup import (
    AmdahlSpeedup,
    TabulatedSpeedup,
    amdahl_harmonic_merge,
    check_midpoint_concavity,
    equi_total_rate,
    evaluate,
    load_tabulated,
)


class TestAmdahl:
    def test_value_at_sixteen_cores(self):
        assert evaluate(AmdahlSpeedup(0.5), 16) == pytest.approx(1.8823529411764706)

    def test_fractional_core_is_linear(self):
        s = AmdahlSpeedup(0.9)
        assert s(0.5) == 0.5
        assert s(1) == 1.0

    def test_upper_bound(self):
        assert AmdahlSpeedup(0.5).upper_bound == pytest.approx(2.0)

    def test_rejects_non_positive_k(self):
        with pytest.raises(ValueError):
            AmdahlSpeedup(0.5).evaluate(0)

    def test_rejects_non_numeric_k(self):
        with pytest.raises(TypeError):
            AmdahlSpeedup(0.5).evaluate("4")

    @pytest.mark.parametrize("p", [-0.1, 1.0, 1.5])
    def test_rejects_out_of_range_p(self, p):
        with pytest.raises(ValueError):
            AmdahlSpeedup(p)

    def test_vectorised_matches_scalar(self):
        s = AmdahlSpeedup(0.7)
        ks = [0.0, 0.25, 1.0, 3.0, 64.0]
        values = s.evaluate_array(ks)
        assert values[0] == 0.0
        for k, value in zip(ks[1:], values[1:]):
            assert value == pytest.approx(s.evaluate(k))

    def test_no_midpoint_concavity_failures(self):
        assert check_midpoint_concavity(AmdahlSpeedup(0.7), [1, 2, 4, 8, 16]) == []

    @pytest.mark.parametrize("p", [0.1, 0.5, 0.9, 0.99])
    def test_rises_toward_upper_bound(self, p):
        s = AmdahlSpeedup(p)
        values = s.evaluate_array(np.arange(1.0, 1025.0))
        assert np.all(np.diff(values) > 0)
        assert np.all(values < 1 / (1 - p))
        assert s(1e9) == pytest.approx(1 / (1 - p), rel=1e-6)


class TestTabulated:
    def test_interpolates_and_stays_flat(self):
        s = TabulatedSpeedup([(2, 1.5), (4, 2.0)])
        assert s(3) == pytest.approx(1.75)
        assert s(10) == pytest.approx(2.0)
        assert s.upper_bound == pytest.approx(2.0)

    def test_adds_unit_point(self):
        assert TabulatedSpeedup([(2, 1.5)]).points[0] == (1.0, 1.0)

    def test_rejects_convex_curve(self):
        with pytest.raises(ValueError):
            TabulatedSpeedup([(2, 1.2), (4, 2.2)])

    def test_rejects_linear_speedup(self):
        with pytest.raises(ValueError):
            TabulatedSpeedup([(2, 2.0)])

    def test_rejects_decreasing_curve(self):
        with pytest.raises(ValueError):
            TabulatedSpeedup([(2, 1.5), (4, 1.4)])

    def test_load_from_file(self, tmp_path):
        path = tmp_path / "curve.csv"
        path.write_text("k,s\n1,1\n2,1.5\n4,2\n", encoding="utf-8")
        assert load_tabulated(path)(2) == pytest.approx(1.5)

    def test_missing_file(self, tmp_path):
        with pytest.raises(RuntimeError):
            load_tabulated(tmp_path / "absent.csv")


class TestEquiTotalRate:
    def test_partial_occupancy(self):
        assert equi_total_rate(4, 16, AmdahlSpeedup(0.5), 1.0) == pytest.approx(6.4)

    def test_empty_system(self):
        assert equi_total_rate(0, 16, AmdahlSpeedup(0.5), 1.0) == 0.0

    def test_saturated_system_is_work_conserving(self):
        assert equi_total_rate(40, 16, AmdahlSpeedup(0.5), 2.0) == 32.0

    def test_rejects_negative_count(self):
        with pytest.raises(ValueError):
            equi_total_rate(-1, 16, AmdahlSpeedup(0.5), 1.0)

    def test_increasing_until_saturation_for_random_amdahl(self):
        rng = np.random.default_rng(11)
        for _ in range(50):
            n = int(rng.integers(2, 129))
            s = AmdahlSpeedup(float(rng.uniform(0.0, 0.99)))
            rates = [equi_total_rate(i, n, s, 1.0) for i in range(1, 3 * n + 1)]
            assert all(b > a for a, b in zip(rates[:n], rates[1:n])), (n, s.p)
            assert rates[n - 1:] == pytest.approx([float(n)] * (2 * n + 1))

    @pytest.mark.parametrize("points", [[(2, 1.5), (4, 2.0)], [(2, 1.9), (8, 4.0), (16, 5.0)]])
    def test_increasing_until_saturation_for_tabulated(self, points):
        s = TabulatedSpeedup(points)
        for n in (4, 16, 48):
            rates = [equi_total_rate(i, n, s, 1.0) for i in range(1, 2 * n + 1)]
            assert all(b > a for a, b in zip(rates[:n], rates[1:n]))
            assert rates[n - 1:] == pytest.approx([float(n)] * (n + 1))


class TestHarmonicMerge:
    def test_average_reciprocal(self):
        p3 = amdahl_harmonic_merge(0.2, 0.8)
        s1, s2, s3 = AmdahlSpeedup(0.2), AmdahlSpeedup(0.8), AmdahlSpeedup(p3)
        for k in (1.0, 2.0, 7.0, 32.0):
            assert 1 / (2 * s1(k)) + 1 / (2 * s2(k)) == pytest.approx(1 / s3(k))

    def test_rejects_invalid_parameter(self):
        with pytest.raises(ValueError):
            amdahl_harmonic_merge(0.2, 1.0)
