import datetime as dt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from trendfit import analytics
from trendfit.analytics import GroupGofSummary, adoption_delays, adoption_stats, embed, group_gof
from trendfit.fitting import FitResult, fit
from trendfit.models import Family, ShiftedGompertzParams, WeibullParams, make_params
from trendfit.synthetic import sample_series

D0 = dt.date(2006, 1, 1)


def day(n):
    return D0 + dt.timedelta(days=n)


def result(p, region="WW", family=Family.SHIFTED_GOMPERTZ, service="s", converged=True, theta=(0.03, 8.0)):
    return FitResult(family, make_params(family, *theta), 1.0, 10, p, 3, converged, 1.0, service, region)


# -- adoption delays -------------------------------------------------------------------


def test_single_service_delay():
    (s,) = adoption_stats({("a", "WW"): D0, ("a", "DE"): day(7)})
    assert (s.region, s.mean_days, s.median_days, s.count) == ("DE", 7.0, 7.0, 1)


def test_mean_and_median_with_outlier():
    onsets = {("a", "WW"): D0, ("b", "WW"): D0, ("c", "WW"): D0}
    onsets.update({("a", "JP"): day(0), ("b", "JP"): day(10), ("c", "JP"): day(1000)})
    (s,) = adoption_stats(onsets)
    assert s.mean_days == pytest.approx(336.67, abs=0.005)
    assert s.median_days == 10


def test_even_count_median_is_midpoint():
    onsets = {("a", "WW"): D0, ("b", "WW"): D0, ("a", "FR"): day(4), ("b", "FR"): day(10)}
    assert adoption_stats(onsets)[0].median_days == 7.0


def test_dominant_region_ranks_first():
    onsets = {}
    for i, svc in enumerate("abcd"):
        onsets[(svc, "WW")] = D0
        onsets[(svc, "US")] = day(i)
        onsets[(svc, "BR")] = day(i + 30)
        onsets[(svc, "IN")] = day(5 * i + 10)
    stats = {s.region: s for s in adoption_stats(onsets)}
    assert stats["US"].rank_mu == 1 and stats["US"].rank_m == 1


def test_negative_delay_clamped_and_flagged():
    (d,) = adoption_delays({("a", "WW"): day(10), ("a", "US"): D0})
    assert d.delta_days == 0 and d.clamped


def test_missing_global_onset_warns():
    with pytest.warns(UserWarning, match="no global onset"):
        assert adoption_delays({("a", "US"): D0}) == []


def test_region_without_services_warns():
    with pytest.warns(UserWarning, match="excluded"):
        stats = adoption_stats({("a", "WW"): D0, ("a", "US"): day(3)}, regions=["US", "NZ"])
    assert [s.region for s in stats] == ["US"]


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 3000), min_size=3, max_size=25), st.randoms())
def test_median_permutation_invariant_and_robust(delays, rnd):
    def stats(ds):
        onsets = {}
        for i, d in enumerate(ds):
            onsets[(f"s{i}", "WW")] = D0
            onsets[(f"s{i}", "XX")] = day(d)
        return adoption_stats(onsets)[0].median_days

    base = stats(delays)
    shuffled = list(delays)
    rnd.shuffle(shuffled)
    assert stats(shuffled) == base

    bumped = list(delays)
    i = rnd.randrange(len(delays))
    bumped[i] = 10 * delays[i]
    order = sorted(delays)
    n = len(order)
    if n % 2:
        # the median can move at most up to the next order statistic
        bound = order[n // 2 + 1] - order[n // 2]
    elif n >= 4:
        # midpoint median: both central statistics shift by at most one rank
        bound = (order[n // 2 + 1] - order[n // 2 - 1]) / 2
    else:
        return
    assert 0 <= stats(bumped) - base <= bound


# -- grouped goodness of fit ---------------------------------------------------------


def test_single_result_summary():
    (s,) = group_gof([result(0.59)])
    assert (s.group, s.mean_p, s.frac_significant, s.count) == ("WW", 0.59, 1.0, 1)


def test_two_results_summary():
    (s,) = group_gof([result(0.01, "DE"), result(0.99, "FR")], {"DE": "Europe", "FR": "Europe"})
    assert s.group == "Europe"
    assert s.mean_p == pytest.approx(0.5) and s.frac_significant == 0.5


def test_unmapped_region_is_its_own_group():
    out = group_gof([result(0.3, "DE"), result(0.4, "XX")], {"DE": "Europe"})
    assert {s.group for s in out} == {"Europe", "XX"}


p_lists = st.lists(st.floats(0, 1), min_size=1, max_size=20)


@settings(max_examples=100, deadline=None)
@given(p_lists, p_lists)
def test_pooling_commutes_with_concatenation(left, right):
    a = [result(p, "DE") for p in left]
    b = [result(p, "DE") for p in right]
    (pooled,) = analytics.pool_summaries(group_gof(a), group_gof(b))
    (union,) = group_gof(a + b)
    assert pooled.count == union.count
    assert pooled.mean_p == pytest.approx(union.mean_p, abs=1e-12)
    assert pooled.frac_significant == pytest.approx(union.frac_significant, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(p_lists)
def test_summary_bounds(ps):
    for s in group_gof([result(p) for p in ps]):
        assert 0 <= s.mean_p <= 1 and 0 <= s.frac_significant <= 1


def test_gof_table_layout(tmp_path):
    summaries = [
        GroupGofSummary("WW", Family.SHIFTED_GOMPERTZ, 0.59, 0.64, 10),
        GroupGofSummary("WW", Family.BASS, 0.5, 0.5, 10),
        GroupGofSummary("Europe", Family.WEIBULL, 0.123, 0.3333, 3),
    ]
    analytics.write_gof_table(summaries, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "group,sg_mean_p,sg_frac_sig,bass_mean_p,bass_frac_sig,weibull_mean_p,weibull_frac_sig"
    assert lines[1] == "Europe,,,,,0.12,33%"
    assert lines[2] == "WW,0.59,64%,0.50,50%,,"


def test_group_csv(tmp_path):
    analytics.write_group_csv([GroupGofSummary("WW", Family.BASS, 0.7, 1.0, 1)], tmp_path / "g.csv")
    assert (tmp_path / "g.csv").read_text().splitlines() == [
        "group,family,mean_p,frac_sig,count",
        "WW,bass,0.700000,1.000000,1",
    ]


def test_read_group_map(tmp_path):
    path = tmp_path / "map.csv"
    path.write_text("region,continent,language\nDE,Europe,de\nAT,Europe,de\nUS,North America,en\n")
    assert analytics.read_group_map(path, "language") == {"DE": "de", "AT": "de", "US": "en"}
    with pytest.raises(ValueError, match="'dialect'"):
        analytics.read_group_map(path, "dialect")


# -- embedding ----------------------------------------------------------------------


def test_one_point_per_included_result():
    rs = [result(0.5, service="a"), result(0.5, service="b", converged=False), result(0.1, service="c")]
    assert [p.service for p in embed(rs)] == ["a", "c"]
    assert len(embed(rs, include_unconverged=True)) == 3


def test_identical_series_coincide():
    series = sample_series(ShiftedGompertzParams(0.03, 8.0), 4000, 200, np.random.default_rng(3))
    a, b = embed([fit(series, Family.SHIFTED_GOMPERTZ), fit(series, Family.SHIFTED_GOMPERTZ)])
    assert (a.theta1, a.theta2) == (b.theta1, b.theta2)


def test_still_rising_series_has_later_scale():
    rng = np.random.default_rng(9)
    early = sample_series(WeibullParams(2.0, 40.0), 5000, 300, rng)
    rising = sample_series(WeibullParams(2.0, 400.0), 5000, 300, rng)
    e, r = embed([fit(early, Family.WEIBULL), fit(rising, Family.WEIBULL)])
    assert r.theta2 > e.theta2


def test_log_axes():
    (pt,) = embed([result(0.5, theta=(0.01, 100.0))], log_axes=(True, True))
    assert (pt.theta1, pt.theta2) == pytest.approx((-2.0, 2.0))


def test_embedding_csv_round_trip(tmp_path):
    pts = embed([result(0.5, service="a", theta=(0.1234567890123, 7.0)), result(0.2, service="b")])
    analytics.write_embedding_csv(pts, tmp_path / "e.csv")
    assert analytics.read_embedding_csv(tmp_path / "e.csv") == pts


def test_rankings_csv(tmp_path):
    stats = adoption_stats({("a", "WW"): D0, ("a", "US"): day(7)})
    analytics.write_rankings_csv(stats, tmp_path / "r.csv")
    assert (tmp_path / "r.csv").read_text().splitlines() == [
        "region,mean_days,median_days,rank_mu,rank_m",
        "US,7.00,7.0,1,1",
    ]
