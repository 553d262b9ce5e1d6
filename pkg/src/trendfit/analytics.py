"""Corpus-level summaries built from onset dates and fit results."""

from __future__ import annotations

import csv
import datetime as dt
import math
import warnings
from dataclasses import dataclass
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .dataset import WORLDWIDE
from .fitting import FitResult
from .models import Family

SIGNIFICANCE = 0.05


@dataclass(frozen=True)
class AdoptionDelay:
    service: str
    region: str
    delta_days: int
    clamped: bool = False


@dataclass(frozen=True)
class RegionDelayStats:
    region: str
    mean_days: float
    median_days: float
    count: int
    rank_mu: int = 0
    rank_m: int = 0


def adoption_delays(
    onsets: Mapping[tuple[str, str], dt.date], global_region: str = WORLDWIDE
) -> list[AdoptionDelay]:
    """Delay in days between each regional onset and the service's global onset.

    Regional onsets that precede the global one are clamped to zero and
    flagged.  Services without a global onset are skipped with a warning.
    """
    out = []
    missing = set()
    for (service, region), date in sorted(onsets.items()):
        if region == global_region:
            continue
        ref = onsets.get((service, global_region))
        if ref is None:
            missing.add(service)
            continue
        days = (date - ref).days
        out.append(AdoptionDelay(service, region, max(days, 0), days < 0))
    if missing:
        warnings.warn(f"no global onset for {sorted(missing)}; skipped", stacklevel=2)
    return out


def _ranks(values: Sequence[float], names: Sequence[str]) -> list[int]:
    order = sorted(range(len(values)), key=lambda i: (values[i], names[i]))
    ranks = [0] * len(values)
    for rank, i in enumerate(order, start=1):
        ranks[i] = rank
    return ranks


def adoption_stats(
    onsets: Mapping[tuple[str, str], dt.date],
    global_region: str = WORLDWIDE,
    regions: Optional[Iterable[str]] = None,
) -> list[RegionDelayStats]:
    """Mean and median adoption delay per region, ranked ascending (1 = fastest).

    ``regions`` may list regions to report; any without observed services is
    dropped with a warning.  Output is ordered by region name.
    """
    per_region: dict[str, list[int]] = {}
    for d in adoption_delays(onsets, global_region):
        per_region.setdefault(d.region, []).append(d.delta_days)
    if regions is not None:
        empty = sorted(set(regions) - set(per_region) - {global_region})
        if empty:
            warnings.warn(f"regions without services excluded: {empty}", stacklevel=2)
    names = sorted(per_region)
    means = [float(np.mean(per_region[r])) for r in names]
    medians = [float(np.median(per_region[r])) for r in names]
    rank_mu = _ranks(means, names)
    rank_m = _ranks(medians, names)
    return [
        RegionDelayStats(r, means[i], medians[i], len(per_region[r]), rank_mu[i], rank_m[i])
        for i, r in enumerate(names)
    ]


@dataclass(frozen=True)
class GroupGofSummary:
    group: str
    family: Family
    mean_p: float
    frac_significant: float
    count: int


def group_gof(
    results: Iterable[FitResult], grouping: Optional[Mapping[str, str]] = None
) -> list[GroupGofSummary]:
    """Average p-value and share of fits with ``p > 0.05`` per (group, family).

    Regions absent from ``grouping`` form their own group.
    """
    grouping = grouping or {}
    buckets: dict[tuple[str, Family], list[float]] = {}
    for r in results:
        group = grouping.get(r.region, r.region)
        buckets.setdefault((group, r.family), []).append(r.p_value)
    out = []
    for (group, family), ps in sorted(buckets.items(), key=lambda kv: (kv[0][0], kv[0][1].value)):
        arr = np.asarray(ps)
        out.append(GroupGofSummary(group, family, float(arr.mean()), float(np.mean(arr > SIGNIFICANCE)), len(ps)))
    return out


def pool_summaries(*batches: Iterable[GroupGofSummary]) -> list[GroupGofSummary]:
    """Combine summaries of disjoint batches with count-weighted means."""
    acc: dict[tuple[str, Family], list[float]] = {}
    for batch in batches:
        for s in batch:
            a = acc.setdefault((s.group, s.family), [0.0, 0.0, 0])
            a[0] += s.mean_p * s.count
            a[1] += s.frac_significant * s.count
            a[2] += s.count
    return [
        GroupGofSummary(g, f, sp / n, sf / n, n)
        for (g, f), (sp, sf, n) in sorted(acc.items(), key=lambda kv: (kv[0][0], kv[0][1].value))
    ]


@dataclass(frozen=True)
class EmbeddingPoint:
    service: str
    region: str
    family: Family
    theta1: float
    theta2: float


def embed(
    results: Iterable[FitResult],
    include_unconverged: bool = False,
    log_axes: tuple[bool, bool] = (False, False),
) -> list[EmbeddingPoint]:
    """One point per fit at its fitted parameters (optionally log10 per axis)."""
    points = []
    for r in results:
        if not (r.converged or include_unconverged):
            continue
        t1, t2 = r.theta
        if log_axes[0]:
            t1 = math.log10(t1)
        if log_axes[1]:
            t2 = math.log10(t2)
        if not (math.isfinite(t1) and math.isfinite(t2)):
            raise ValueError(f"non-finite coordinates for {r.service}/{r.region}")
        points.append(EmbeddingPoint(r.service, r.region, r.family, t1, t2))
    return points


# -- CSV exports ---------------------------------------------------------------------


def _write_rows(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_embedding_csv(points: Iterable[EmbeddingPoint], path) -> None:
    _write_rows(
        path,
        ["service", "region", "family", "theta1", "theta2"],
        ([p.service, p.region, p.family.value, repr(p.theta1), repr(p.theta2)] for p in points),
    )


def read_embedding_csv(path) -> list[EmbeddingPoint]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [
            EmbeddingPoint(r["service"], r["region"], Family.parse(r["family"]), float(r["theta1"]), float(r["theta2"]))
            for r in csv.DictReader(fh)
        ]


def write_rankings_csv(stats: Iterable[RegionDelayStats], path) -> None:
    _write_rows(
        path,
        ["region", "mean_days", "median_days", "rank_mu", "rank_m"],
        ([s.region, f"{s.mean_days:.2f}", f"{s.median_days:.1f}", s.rank_mu, s.rank_m] for s in stats),
    )


def write_group_csv(summaries: Iterable[GroupGofSummary], path) -> None:
    _write_rows(
        path,
        ["group", "family", "mean_p", "frac_sig", "count"],
        ([s.group, s.family.value, f"{s.mean_p:.6f}", f"{s.frac_significant:.6f}", s.count] for s in summaries),
    )


TABLE_FAMILIES = (Family.SHIFTED_GOMPERTZ, Family.BASS, Family.WEIBULL)


def write_gof_table(summaries: Iterable[GroupGofSummary], path) -> None:
    """Wide layout with one row per group and, per family, ``<p>`` next to the share with ``p > 0.05``."""
    by_group: dict[str, dict[Family, GroupGofSummary]] = {}
    for s in summaries:
        by_group.setdefault(s.group, {})[s.family] = s
    header = ["group"]
    for f in TABLE_FAMILIES:
        header += [f"{f.value}_mean_p", f"{f.value}_frac_sig"]
    rows = []
    for group in sorted(by_group):
        row = [group]
        for f in TABLE_FAMILIES:
            s = by_group[group].get(f)
            row += [f"{s.mean_p:.2f}", f"{100 * s.frac_significant:.0f}%"] if s else ["", ""]
        rows.append(row)
    _write_rows(path, header, rows)


def read_group_map(path, column: str) -> dict[str, str]:
    """Region -> group from a CSV with a ``region`` column and ``column``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        fields = reader.fieldnames or []
        for needed in ("region", column):
            if needed not in fields:
                raise ValueError(f"{path}: missing required column {needed!r}")
        return {r["region"].strip(): r[column].strip() for r in reader if r[column].strip()}
