import math

import numpy as np
import pytest
from scipy import stats as sps

from geigertree.geiger import simulate_batch
from geigertree.stats import (SampleSummary, chi2_critical, chi2_independence,
                              empirical_law, exp_characterization_check, ks_null_band,
                              ks_statistic, split_asymptote, split_probability_profile,
                              tv_distance)


def test_ks_matches_scipy(rng):
    x = rng.normal(size=500)
    ref = sps.kstest(x, sps.norm.cdf).statistic
    assert ks_statistic(x, sps.norm.cdf) == pytest.approx(ref, abs=1e-15)


def test_ks_single_point_at_median():
    assert ks_statistic([0.5], lambda x: np.clip(x, 0, 1)) == pytest.approx(0.5)


def test_ks_invariant_under_monotone_transform(rng):
    x = rng.exponential(size=2000)
    d1 = ks_statistic(x, sps.expon.cdf)
    d2 = ks_statistic(np.log(x), lambda y: sps.expon.cdf(np.exp(y)))
    assert d1 == pytest.approx(d2, abs=1e-12)


def test_ks_accepts_summary(rng):
    x = rng.random(300)
    s = SampleSummary.from_values(x)
    assert ks_statistic(s, lambda v: np.clip(v, 0, 1)) == ks_statistic(x, lambda v: np.clip(v, 0, 1))
    assert s.mean == pytest.approx(x.mean())
    assert np.all(np.diff(s.values) >= 0)


def test_summary_rejects_empty():
    with pytest.raises(ValueError):
        SampleSummary.from_values([])


def test_null_band():
    assert ks_null_band(10**4) == pytest.approx(0.0195)


def test_null_band_coverage(rng):
    # uniform samples exceed the band in roughly 0.1% of runs
    band = ks_null_band(2000)
    exceed = sum(ks_statistic(rng.random(2000), lambda v: np.clip(v, 0, 1)) > band
                 for _ in range(200))
    assert exceed <= 3


def test_tv_examples():
    assert tv_distance({1: 0.3, 2: 0.7}, {1: 0.3, 2: 0.7}) == 0.0
    assert tv_distance({1: 1.0}, {2: 1.0}) == 1.0
    assert tv_distance({1: 0.5, 2: 0.5}, {1: 1.0}) == pytest.approx(0.5)


def test_empirical_law_scalar_and_pairs():
    assert empirical_law([1, 1, 2, 3]) == {1: 0.5, 2: 0.25, 3: 0.25}
    law = empirical_law(np.array([[1, 2], [1, 2], [0, 1], [1, 3]]))
    assert law == {(0, 1): 0.25, (1, 2): 0.5, (1, 3): 0.25}


def test_chi2_independent_uniforms(rng):
    pairs = rng.random((20000, 2))
    stat, dof = chi2_independence(pairs, 4)
    assert dof == 9
    assert stat <= chi2_critical(dof)


def test_chi2_detects_correlation(rng):
    x = rng.random(20000)
    pairs = np.column_stack([x, x + 0.3 * rng.random(20000)])
    stat, dof = chi2_independence(pairs, 4)
    assert stat > 10 * chi2_critical(dof)


def test_chi2_matches_scipy_on_binned_table(rng):
    pairs = rng.random((4000, 2))
    stat, dof = chi2_independence(pairs, 4)
    edges_x = np.quantile(pairs[:, 0], [0.25, 0.5, 0.75])
    edges_y = np.quantile(pairs[:, 1], [0.25, 0.5, 0.75])
    table = np.zeros((4, 4))
    np.add.at(table, (np.searchsorted(edges_x, pairs[:, 0], side="right"),
                      np.searchsorted(edges_y, pairs[:, 1], side="right")), 1)
    assert stat == pytest.approx(sps.chi2_contingency(table, correction=False).statistic)


def test_chi2_needs_enough_pairs(rng):
    with pytest.raises(ValueError):
        chi2_independence(rng.random((399, 2)), 4)
    with pytest.raises(ValueError):
        chi2_independence(rng.random((1000, 3)), 4)


def test_chi2_discrete_ties_drop_bins(rng):
    pairs = np.column_stack([rng.integers(0, 2, 5000), rng.random(5000)])
    stat, dof = chi2_independence(pairs, 4)
    assert dof == 3


def test_chi2_critical_value():
    assert chi2_critical(9) == pytest.approx(27.877, abs=1e-3)


def test_exp_characterization_holds(rng):
    assert exp_characterization_check(2.5, 10**5, rng) <= 0.006


def test_exp_characterization_negative_control(rng):
    assert exp_characterization_check(2.5, 10**5, rng, base="uniform") >= 0.05


def test_exp_characterization_rate_invariant():
    d1 = exp_characterization_check(1.0, 10**4, np.random.default_rng(7))
    d2 = exp_characterization_check(40.0, 10**4, np.random.default_rng(7))
    assert d1 == pytest.approx(d2, abs=1e-12)


def test_exp_characterization_rejects_small_n(rng):
    with pytest.raises(ValueError):
        exp_characterization_check(1.0, 100, rng)
    with pytest.raises(ValueError):
        exp_characterization_check(1.0, 10**4, rng, base="gamma")


def test_split_asymptote_values():
    assert split_asymptote("right", 10, 5, 4) == pytest.approx(0.25)
    assert split_asymptote("left", 10, 5, 5) == pytest.approx(0.2 - 0.1)
    with pytest.raises(ValueError):
        split_asymptote("up", 10, 5, 1)


def test_split_profile_counts(cache_factory):
    cache = cache_factory("geometric", 200)
    traces = list(simulate_batch(cache, 200, 0.5, 3000, seed=11))
    prof = split_probability_profile(traces, "right")
    assert prof.count == 3000 and prof.estimate.shape == (100,)
    manual = sum(int((np.diff(t.right_running, axis=-1) > 0)[:, 50].sum()) for t in traces)
    assert prof.estimate[50] == pytest.approx(manual / 3000)
    assert math.isinf(prof.asymptote[0])


def test_split_profile_rejects_mixed(cache_factory):
    a = next(simulate_batch(cache_factory("binary", 50), 50, 0.5, 10, seed=1))
    b = next(simulate_batch(cache_factory("binary", 60), 60, 0.5, 10, seed=1))
    with pytest.raises(ValueError):
        split_probability_profile([a, b], "left")
    with pytest.raises(ValueError):
        split_probability_profile([], "left")
