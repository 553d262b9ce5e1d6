import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from trendfit import fitting, models
from trendfit.dataset import PreparedSeries
from trendfit.fitting import (
    DegenerateError,
    FitConfig,
    FitError,
    FitResult,
    bin_probabilities,
    chi2_survival,
    fit,
    fit_all,
    merge_bins,
    pearson_statistic,
    select_best,
)
from trendfit.models import BassParams, Family, ShiftedGompertzParams, WeibullParams
from trendfit.synthetic import expected_series, quantile, sample_series

TRUE = {
    Family.BASS: BassParams(0.01, 0.09),
    Family.SHIFTED_GOMPERTZ: ShiftedGompertzParams(0.03, 8.0),
    Family.WEIBULL: WeibullParams(2.0, 80.0),
}


# -- bin probabilities --------------------------------------------------------------


def test_single_huge_bin_is_certain():
    probs, mass = bin_probabilities(WeibullParams(1.0, 1.0), [0.0, 1e6])
    np.testing.assert_array_equal(probs, [1.0])
    assert mass == pytest.approx(1.0)


def test_weekly_bins_sum_to_one():
    probs, _ = bin_probabilities(BassParams(0.01, 0.2), np.arange(481.0))
    assert probs.sum() == pytest.approx(1.0, abs=1e-12)


def test_truncated_bins_match_quadrature():
    prm = ShiftedGompertzParams(0.05, 10.0)
    edges = [0.0, 10.0, 20.0, 30.0]
    probs, mass = bin_probabilities(prm, edges)
    f = lambda t: models.sgompertz_pdf(t, prm)
    total = integrate.quad(f, 0, 30, epsabs=1e-14)[0]
    assert mass == pytest.approx(total, abs=1e-10)
    for i in range(3):
        piece = integrate.quad(f, edges[i], edges[i + 1], epsabs=1e-14)[0]
        assert probs[i] == pytest.approx(piece / total, abs=1e-8)


def test_empty_window_is_degenerate():
    with pytest.raises(DegenerateError):
        bin_probabilities(WeibullParams(5.0, 1.0), [100.0, 101.0, 102.0])


@settings(max_examples=80, deadline=None)
@given(
    st.one_of(
        st.builds(BassParams, st.floats(1e-4, 0.5), st.floats(0, 2)),
        st.builds(ShiftedGompertzParams, st.floats(1e-3, 0.5), st.floats(0, 100)),
        st.builds(WeibullParams, st.floats(0.3, 6), st.floats(1, 1000)),
    ),
    st.integers(0, 300),
    st.integers(1, 400),
)
def test_probabilities_nonnegative_and_normalised(prm, start, m):
    edges = start + np.arange(m + 1.0)
    try:
        probs, mass = bin_probabilities(prm, edges)
    except DegenerateError:
        return
    assert np.all(probs >= 0)
    assert probs.sum() == pytest.approx(1.0, abs=1e-10)
    assert 0 < mass <= 1 + 1e-12


# -- chi-squared ----------------------------------------------------------------------


def chi2_density(x, k):
    return x ** (k / 2 - 1) * math.exp(-x / 2) / (2 ** (k / 2) * math.gamma(k / 2))


def test_chi2_survival_values():
    assert chi2_survival(0.0, 5) == 1.0
    assert chi2_survival(2.0, 2) == pytest.approx(math.exp(-1), abs=1e-12)
    tail = integrate.quad(chi2_density, 10, np.inf, args=(10,), epsabs=1e-13)[0]
    assert chi2_survival(10.0, 10) == pytest.approx(tail, abs=1e-8)


def test_chi2_survival_domain():
    with pytest.raises(ValueError):
        chi2_survival(-1.0, 3)
    with pytest.raises(ValueError):
        chi2_survival(1.0, 0)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 500), st.floats(0, 50), st.integers(1, 400))
def test_chi2_survival_monotone(x, dx, dof):
    assert chi2_survival(x + dx, dof) <= chi2_survival(x, dof)


def test_merge_bins_pools_until_threshold():
    obs, exp = merge_bins([1, 0, 3, 5, 0], [0.4, 0.7, 3.0, 0.5, 0.2], 1.0)
    np.testing.assert_allclose(exp, [1.1, 3.7])
    np.testing.assert_allclose(obs, [1, 8])


def test_pearson_statistic_by_hand():
    stat, k = pearson_statistic([10, 20, 30, 40], [0.1, 0.2, 0.3, 0.4])
    assert (stat, k) == (0.0, 4)
    stat, _ = pearson_statistic([12, 18, 30, 40], [0.1, 0.2, 0.3, 0.4])
    assert stat == pytest.approx(4 / 10 + 4 / 20)


# -- fitting -------------------------------------------------------------------------


def test_exact_weibull_counts_recovered():
    series = expected_series(WeibullParams(2.0, 80.0), 10000, 300)
    res = fit(series, Family.WEIBULL)
    assert res.converged
    assert res.params.kappa == pytest.approx(2.0, rel=1e-2)
    assert res.params.lam == pytest.approx(80.0, rel=1e-2)
    assert res.rss_weighted < 1e-8


@pytest.mark.parametrize("family", list(TRUE))
def test_exact_counts_all_families(family):
    res = fit(expected_series(TRUE[family], 5000, 300), family)
    np.testing.assert_allclose(res.theta, TRUE[family].as_tuple(), rtol=1e-6)
    assert res.p_value == pytest.approx(1.0)


def test_result_fields_and_dof():
    rng = np.random.default_rng(5)
    series = sample_series(TRUE[Family.BASS], 5000, 120, rng)
    res = fit(series, Family.BASS)
    assert 0 <= res.p_value <= 1
    assert 1 <= res.dof <= series.m - 3
    assert 0 < res.truncation_mass <= 1
    assert res.service == series.service and res.region == series.region


def test_dof_is_bins_minus_three_without_pooling():
    series = expected_series(WeibullParams(2.0, 20.0), 1e6, 30)
    res = fit(series, Family.WEIBULL)
    assert res.dof == 30 - 3


@pytest.mark.parametrize("family", list(TRUE))
def test_multinomial_recovery_smoke(family):
    rng = np.random.default_rng(11)
    hits = 0
    for _ in range(20):
        res = fit(sample_series(TRUE[family], 5000, 300, rng), family)
        err = np.abs(np.array(res.theta) / np.array(TRUE[family].as_tuple()) - 1)
        hits += bool(np.all(err < 0.1))
    assert hits >= 18


def test_right_truncated_sg_scale():
    prm = TRUE[Family.SHIFTED_GOMPERTZ]
    m = int(quantile(prm, 0.4))
    errs = []
    for seed in range(20):
        res = fit(sample_series(prm, 5000, m, np.random.default_rng(seed)), Family.SHIFTED_GOMPERTZ)
        errs.append(abs(res.params.beta / prm.beta - 1))
    assert np.median(errs) < 0.15


def test_degenerate_inputs():
    one_bin = PreparedSeries("s", "WW", np.array([0, 5.0, 0, 0, 0]), np.arange(6.0))
    with pytest.raises(DegenerateError):
        fit(one_bin, Family.BASS)
    short = PreparedSeries("s", "WW", np.array([1.0, 2, 3]), np.arange(4.0))
    with pytest.raises(DegenerateError):
        fit(short, Family.SHIFTED_GOMPERTZ)
    with pytest.raises(FitError):
        fit_all(one_bin)


def test_unconverged_is_not_an_error():
    rng = np.random.default_rng(2)
    series = sample_series(TRUE[Family.BASS], 5000, 200, rng)
    res = fit(series, Family.BASS, FitConfig(max_iterations=1))
    assert res.iterations == 1
    assert not res.converged
    assert np.all(np.isfinite(res.theta))


def test_fit_from_explicit_start():
    series = expected_series(TRUE[Family.WEIBULL], 5000, 300)
    res = fit(series, Family.WEIBULL, start=(1.2, 150.0))
    np.testing.assert_allclose(res.theta, (2.0, 80.0), rtol=1e-6)


def test_damping_reaches_same_optimum():
    rng = np.random.default_rng(8)
    series = sample_series(TRUE[Family.SHIFTED_GOMPERTZ], 5000, 300, rng)
    plain = fit(series, Family.SHIFTED_GOMPERTZ)
    damped = fit(series, Family.SHIFTED_GOMPERTZ, FitConfig(damping=0.1))
    np.testing.assert_allclose(damped.theta, plain.theta, rtol=1e-5)


def test_config_validation():
    with pytest.raises(ValueError):
        FitConfig(max_iterations=0)
    with pytest.raises(ValueError):
        FitConfig(param_tolerance=0)
    with pytest.raises(ValueError):
        FitConfig(weight_floor=0)
    with pytest.raises(ValueError):
        FitConfig(damping=-1)
    with pytest.raises(ValueError):
        FitConfig(initializer_grid={Family.BASS: ((), (1.0,))})
    cfg = FitConfig.from_dict({"damping": 0.5, "initializer_grid": {"sg": [[0.01], [1.0, 2.0]]}})
    assert cfg.damping == 0.5 and cfg.initializer_grid[Family.SHIFTED_GOMPERTZ] == ((0.01,), (1.0, 2.0))


@pytest.mark.parametrize("family", list(TRUE))
def test_objective_descends_over_final_steps(family):
    for seed in range(10):
        series = sample_series(TRUE[family], 5000, 300, np.random.default_rng(seed))
        res = fit(series, family)
        problem = fitting._Problem(family, series.counts, series.bin_edges, FitConfig().weight_floor)
        w = problem.weights(problem.probs(res.path[-1]))
        tail = [problem.objective(problem.probs(x), w) for x in res.path[-4:]]
        assert all(b <= a * (1 + 1e-12) for a, b in zip(tail, tail[1:]))


@settings(max_examples=25, deadline=None)
@given(st.sampled_from(list(TRUE)), st.integers(0, 10_000), st.floats(0.01, 1000.0))
def test_scale_invariance(family, seed, c):
    series = sample_series(TRUE[family], 3000, 200, np.random.default_rng(seed))
    a = fit(series, family)
    b = fit(series.scaled(c), family)
    np.testing.assert_allclose(np.log(b.theta), np.log(a.theta), atol=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.sampled_from(list(TRUE)), st.integers(0, 10_000))
def test_fit_deterministic(family, seed):
    series = sample_series(TRUE[family], 3000, 150, np.random.default_rng(seed))
    a, b = fit(series, family), fit(series, family)
    assert a.theta == b.theta and a.rss_weighted == b.rss_weighted and a.iterations == b.iterations


# -- model selection -----------------------------------------------------------------


def fake(family, p, rss):
    prm = TRUE[family]
    return FitResult(family, prm, rss, 10, p, 5, True, 1.0)


def test_select_best_rules():
    a = fake(Family.BASS, 0.4, 10.0)
    b = fake(Family.WEIBULL, 0.6, 12.0)
    assert select_best([a, b]) is b
    c = fake(Family.BASS, 0.6, 11.0)
    assert select_best([b, c]) is c
    d = fake(Family.SHIFTED_GOMPERTZ, 0.6, 11.0)
    assert select_best([c, d]) is d
    with pytest.raises(FitError):
        select_best([])


def test_fit_all_picks_weibull_on_weibull_data():
    rng = np.random.default_rng(21)
    picks = [fit_all(sample_series(TRUE[Family.WEIBULL], 5000, 300, rng)).best_family for _ in range(20)]
    assert picks.count(Family.WEIBULL) >= 18


def test_fit_all_reports_partial_failures():
    # a window far in the Weibull tail: the other families can still fit
    series = sample_series(WeibullParams(2.0, 80.0), 5000, 60, np.random.default_rng(1))
    out = fit_all(series)
    assert set(out.results) == set(fitting.FAMILIES)
    assert out.best is out.results[out.best_family]


@pytest.mark.parametrize("sigma", [0.5, 2.0])
def test_compounded_bass_data_fits_bass_and_sg_alike(sigma):
    bp = models.compound_bass_from_sg(models.CompoundLink(0.1, sigma))
    rng = np.random.default_rng(4)
    pb, ps = [], []
    for _ in range(40):
        out = fit_all(sample_series(bp, 5000, 300, rng))
        pb.append(out.results[Family.BASS].p_value)
        ps.append(out.results[Family.SHIFTED_GOMPERTZ].p_value)
    assert abs(np.mean(pb) - np.mean(ps)) < 0.2


def test_strong_imitation_separates_bass_from_sg():
    bp = models.compound_bass_from_sg(models.CompoundLink(0.2, 19.0))
    rng = np.random.default_rng(4)
    out = [fit_all(sample_series(bp, 5000, 300, rng)) for _ in range(10)]
    assert np.mean([o.results[Family.BASS].p_value for o in out]) > 0.2
    assert np.mean([o.results[Family.SHIFTED_GOMPERTZ].p_value for o in out]) < 0.01


def test_result_json_round_trip():
    res = fit(expected_series(TRUE[Family.BASS], 5000, 100, service="x", region="US"), Family.BASS)
    back = FitResult.from_json(res.to_json())
    assert back.theta == res.theta and back.p_value == res.p_value
    assert (back.service, back.region, back.family) == ("x", "US", Family.BASS)
    assert set(res.to_dict()) >= {
        "service", "region", "family", "theta1", "theta2", "rss", "dof", "p_value", "converged", "truncation_mass"
    }
