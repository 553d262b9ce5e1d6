"""Extrapolating fitted curves forward (forecasts) and backward (reconstructed pasts).

Curves are sampled once per week at the middle of each weekly bin and scaled
so that the fitted curve's maximum over the observed window equals 100, the
convention of relative search-volume exports.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import models
from .dataset import PreparedSeries
from .fitting import FitResult

PEAK = 100.0
# share of the peak a reconstructed curve must exceed to count as begun
ONSET_FRACTION = 0.01


class ForecastError(ValueError):
    pass


@dataclass(frozen=True)
class PastReconstruction:
    weeks: np.ndarray
    values: np.ndarray
    implied_onset_week: Optional[int]


@dataclass(frozen=True)
class Forecast:
    family: models.Family
    params: models.Params
    horizon_weeks: int
    weeks: np.ndarray
    values: np.ndarray
    segments: tuple[str, ...]
    scale_factor: float
    past: Optional[PastReconstruction] = None

    def rows(self):
        """``(week, value, segment)`` rows, past first."""
        if self.past is not None:
            for w, v in zip(self.past.weeks, self.past.values):
                yield int(w), float(v), "past"
        for w, v, s in zip(self.weeks, self.values, self.segments):
            yield int(w), float(v), s


def _week_points(weeks: np.ndarray) -> np.ndarray:
    return weeks.astype(float) + 0.5


def _scale(params: models.Params, series: PreparedSeries) -> float:
    observed = np.arange(int(series.bin_edges[0]), int(series.bin_edges[-1]))
    curve = np.asarray(models.pdf(params, _week_points(observed)))
    peak = float(curve.max()) if curve.size else 0.0
    if not (np.isfinite(peak) and peak > 1e-300):
        raise ForecastError(f"{series.service}/{series.region}: fitted curve vanishes on the observed window")
    return PEAK / peak


def forecast(result: FitResult, series: PreparedSeries, horizon_weeks: int, force: bool = False) -> Forecast:
    """Scaled fitted curve over the observed window plus ``horizon_weeks`` ahead.

    When the series starts after the launch (``offset > 0``) the unobserved
    past is reconstructed as well.

    Raises:
        ForecastError: for unconverged fits (unless ``force``) or a curve that
            is numerically zero over the observed window.
    """
    if horizon_weeks < 0:
        raise ValueError("horizon_weeks must be >= 0")
    if not (result.converged or force):
        raise ForecastError(f"{result.service}/{result.region}: fit did not converge")
    scale = _scale(result.params, series)
    first, last = int(series.bin_edges[0]), int(series.bin_edges[-1])
    weeks = np.arange(first, last + horizon_weeks)
    values = scale * np.asarray(models.pdf(result.params, _week_points(weeks)))
    segments = tuple("observed_fit" if w < last else "forecast" for w in weeks)
    past = _past(result.params, series, scale) if series.offset > 0 else None
    return Forecast(result.family, result.params, horizon_weeks, weeks, values, segments, scale, past)


def _past(params: models.Params, series: PreparedSeries, scale: float) -> PastReconstruction:
    weeks = np.arange(0, series.offset)
    values = scale * np.asarray(models.pdf(params, _week_points(weeks)))
    observed = scale * np.asarray(
        models.pdf(params, _week_points(np.arange(series.offset, int(series.bin_edges[-1]))))
    )
    everything = np.concatenate([values, observed])
    above = np.flatnonzero(everything > ONSET_FRACTION * everything.max())
    onset = int(above[0]) if above.size else None
    return PastReconstruction(weeks, values, onset)


def reconstruct_past(result: FitResult, series: PreparedSeries) -> PastReconstruction:
    """Scaled fitted curve on the unobserved weeks ``0 .. offset-1``.

    The implied onset is the first week at which the curve exceeds 1% of its
    peak over the past and the observed window.
    """
    if series.offset <= 0:
        raise ForecastError(f"{series.service}/{series.region}: no unobserved past (offset is 0)")
    return _past(result.params, series, _scale(result.params, series))


def write_forecast_csv(fc: Forecast, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["week", "value", "segment"])
        for week, value, segment in fc.rows():
            w.writerow([week, f"{value:.6f}", segment])
