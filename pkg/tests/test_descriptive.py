import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import build_dataset
from sixday.descriptive import (
    DistanceHistogram,
    YearHistogram,
    debut_and_repeat_analysis,
    distance_histogram,
    exceptional_by_age_group,
    exceptional_counts,
    fit_growth,
    fit_lognormal_truncated,
    lognormal_arith_moments,
    lognormal_log_params,
    record_progression,
    summary_stats,
    yearly_participation,
)
from sixday.errors import DegenerateData, EmptyDataset, InsufficientBins
from sixday.racedata import AgeBand, AgeGroup, Gender
from sixday.synth import lognormal_histogram


def years_hist(counts, start=1981):
    return YearHistogram(tuple((start + i, c) for i, c in enumerate(counts)))


class TestYearly:
    def test_zero_filled(self):
        ds = build_dataset([("a", 1985, "x", "M", None, 300), ("b", 1988, "y", "W", None, 300),
                            ("b", 1988, "z", "W", None, 310)])
        h = yearly_participation(ds)
        assert h.bins == ((1985, 1), (1986, 0), (1987, 0), (1988, 2))

    def test_empty(self):
        with pytest.raises(EmptyDataset):
            yearly_participation(build_dataset([("a", 1985, "x", "M", None, 300)]).replace_records(()))


class TestGrowth:
    def test_noiseless_recovery(self):
        t = np.arange(1981, 2001) + 0.5
        fit = fit_growth(years_hist(10 * np.exp(0.1 * (t - 1981.5))))
        assert fit.N0 == pytest.approx(10, rel=1e-6)
        assert fit.r == pytest.approx(0.1, rel=1e-6)

    def test_constant_series(self):
        fit = fit_growth(years_hist([50.0] * 30))
        assert abs(fit.r) < 1e-9
        assert fit.N0 == pytest.approx(50, rel=1e-9)

    def test_custom_origin(self):
        t = np.arange(1981, 2001) + 0.5
        fit = fit_growth(years_hist(4 * np.exp(0.05 * (t - 1990))), t0=1990)
        assert (fit.N0, fit.r) == (pytest.approx(4, rel=1e-6), pytest.approx(0.05, rel=1e-6))

    def test_degenerate(self):
        with pytest.raises(DegenerateData):
            fit_growth(years_hist([0, 0, 0, 0]))
        with pytest.raises(InsufficientBins):
            fit_growth(years_hist([0, 3, 0, 4, 0]))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**32 - 1))
    def test_sse_not_worse_than_random_candidates(self, seed):
        rng = np.random.default_rng(seed)
        t = np.arange(1981, 2019) + 0.5
        y = rng.poisson(25 * np.exp(0.08 * (t - 1981.5))).astype(float)
        fit = fit_growth(years_hist(y))
        for _ in range(100):
            n0 = fit.N0 * rng.uniform(0.8, 1.2)
            r = fit.r + rng.uniform(-0.01, 0.01)
            sse = np.sum((y - n0 * np.exp(r * (t - 1981.5))) ** 2)
            assert fit.sse <= sse * (1 + 1e-12)


class TestSummary:
    def test_small_sample(self):
        s = summary_stats([100.0, 200.0, 600.0])
        assert (s.n, s.median, s.mean) == (3, 200.0, 300.0)
        assert s.std == pytest.approx(264.575131106459059, rel=1e-12)  # sqrt(70000), mpmath

    def test_single_value(self):
        assert summary_stats([321.0]).std == 0.0

    def test_from_dataset(self):
        ds = build_dataset([("a", 1990, "x", "M", None, 100), ("a", 1990, "y", "M", None, 200)])
        assert summary_stats(ds).mean == 150.0


class TestHistogram:
    def test_left_closed_bins(self):
        h = distance_histogram([239.9, 240.0])
        assert h.bins == ((220.0, 1), (240.0, 1))

    @given(st.lists(st.floats(1.0, 999.0), min_size=1, max_size=200), st.sampled_from([1.0, 5.0, 20.0, 50.0]))
    def test_total_invariant_to_width(self, values, width):
        assert distance_histogram(values, width).total == len(values)

    def test_bad_width(self):
        with pytest.raises(ValueError):
            distance_histogram([1.0], 0.0)


def synthetic_hist(mean, std, norm, mode):
    edges, counts = lognormal_histogram(mean, std, norm, 20.0, 0.0, 1000.0, mode=mode)
    return DistanceHistogram(20.0, tuple(zip(edges.tolist(), counts.tolist())))


class TestLogNormal:
    def test_moment_conversion_round_trip(self):
        m, s = lognormal_log_params(331.0, 95.0)
        mean, std = lognormal_arith_moments(m, s)
        assert (mean, std) == (pytest.approx(331.0, rel=1e-12), pytest.approx(95.0, rel=1e-12))

    @pytest.mark.parametrize("mode", ["center", "mass"])
    def test_noise_free_recovery(self, mode):
        fit = fit_lognormal_truncated(synthetic_hist(331.0, 95.0, 4000.0, mode), threshold=240.0, mode=mode)
        assert fit.arith_mean == pytest.approx(331.0, rel=1e-4)
        assert fit.arith_std == pytest.approx(95.0, rel=1e-4)
        assert fit.norm == pytest.approx(4000.0, rel=1e-4)
        assert fit.chi2 < 1e-6
        assert fit.dof == int(np.sum(synthetic_hist(331.0, 95.0, 4000.0, mode).lower_edges >= 240)) - 3

    def test_threshold_too_high(self):
        h = distance_histogram([250.0, 260.0, 270.0, 300.0, 900.0])
        with pytest.raises(InsufficientBins):
            fit_lognormal_truncated(h, threshold=800.0)

    def test_poisson_sample_and_error_bars(self):
        rng = np.random.default_rng(1)
        m, s = lognormal_log_params(331.0, 95.0)
        fit = fit_lognormal_truncated(distance_histogram(np.exp(rng.normal(m, s, 6000)).clip(1, 999)))
        assert abs(fit.arith_mean - 331.0) < 4 * fit.stderr_mean + 3
        assert abs(fit.arith_std - 95.0) < 4 * fit.stderr_std + 3
        assert 0.0 <= fit.p_value <= 1.0

    def test_p_value_drops_with_misfit(self):
        base = synthetic_hist(331.0, 95.0, 4000.0, "center")
        rng = np.random.default_rng(0)
        noise = rng.normal(0, 1, len(base.bins))
        pvals = []
        for amp in (1.0, 4.0, 16.0):
            counts = np.clip(base.counts + amp * noise * np.sqrt(base.counts), 0, None)
            h = DistanceHistogram(20.0, tuple(zip(base.lower_edges.tolist(), counts.tolist())))
            pvals.append(fit_lognormal_truncated(h).p_value)
        assert pvals[0] >= pvals[1] >= pvals[2]


class TestExceptional:
    def test_repeat_athlete(self):
        ds = build_dataset([(f"r{i}", 1990 + i, "Kim", "M", 1960, 510.0) for i in range(3)])
        out = exceptional_counts(ds)
        assert out.totals == (3, 3, 0)
        assert out.unique_totals == (1, 1, 0)
        assert [row[1] for row in out.per_year] == [1, 1, 1]

    def test_gender_thresholds(self):
        ds = build_dataset([("a", 1990, "A", "M", None, 499.9), ("a", 1990, "B", "W", None, 450.0),
                            ("a", 1990, "C", "M", None, 500.0)])
        assert exceptional_counts(ds).totals == (2, 1, 1)
        assert exceptional_counts(ds, threshold_m=400, threshold_w=460).totals == (2, 2, 0)

    def test_by_age_group(self):
        ds = build_dataset([("a", 1990, "Kim", "M", 1950, 510.0), ("b", 1991, "Kim", "M", 1950, 520.0),
                            ("b", 1991, "Lee", "M", None, 520.0)])
        table = exceptional_by_age_group(ds)
        assert table[AgeGroup(Gender.M, AgeBand.A40)] == (2, 1)
        assert sum(v[0] for v in table.values()) == 2


class TestDebut:
    def test_single_debut(self):
        ds = build_dataset([("a", 1990, "Kim", "M", 1960, 510.0)])
        rep = debut_and_repeat_analysis(ds)
        assert rep.debut_exceptional.total == 1 and rep.exceptional_ladder[1].total == 1
        assert rep.debut_fraction == 1.0

    def test_attempt_rows(self):
        ds = build_dataset([
            ("a", 1990, "Kim", "M", 1960, 400.0), ("b", 1991, "Kim", "M", 1960, 510.0),
            ("a", 1990, "Sue", "W", 1960, 455.0), ("b", 1991, "Sue", "W", 1960, 300.0),
            ("c", 1992, "Sue", "W", 1960, 460.0), ("a", 1990, "Joe", "M", 1960, 200.0),
        ])
        rep = debut_and_repeat_analysis(ds)
        assert rep.participation_ladder[2].total == 2
        assert rep.debut_fraction == 0.5
        first, second, third = rep.attempts[:3]
        assert first.exceptional.total == 1 and first.repeat_cohort.total == 2
        assert second.exceptional == (1, 1, 0)
        assert third.exceptional == (1, 0, 1) and third.repeat_cohort.total == 1


class TestProgression:
    def test_running_max(self):
        ds = build_dataset([("a", 1990, "x", "M", None, 300), ("b", 1991, "y", "M", None, 250),
                            ("c", 1992, "z", "M", None, 350), ("c", 1992, "q", "W", None, 400)])
        assert record_progression(ds, "M").distances == [300, 350]
        assert record_progression(ds).distances == [300, 400]

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.tuples(st.integers(1981, 2018), st.floats(1.0, 999.0)), min_size=1, max_size=30))
    def test_prefix_closed(self, marks):
        rows = [(f"r{year}", year, f"p{i}", "M", None, d) for i, (year, d) in enumerate(marks)]
        ds = build_dataset(rows)
        full = record_progression(ds)
        assert full.distances == sorted(full.distances)
        assert len(set(full.distances)) == len(full.distances)
        cutoff = sorted({y for y, _ in marks})[0]
        early = build_dataset([r for r in rows if r[1] <= cutoff])
        prefix = record_progression(early).entries
        assert full.entries[:len(prefix)] == prefix

    def test_empty_gender(self):
        with pytest.raises(EmptyDataset):
            record_progression(build_dataset([("a", 1990, "x", "M", None, 300)]), "W")
