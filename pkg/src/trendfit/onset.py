"""One-sided CUSUM onset detection for attention time series."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

# Default operating point, in units of the baseline standard deviation.
DEFAULT_WINDOW = 16
DEFAULT_DRIFT_SIGMAS = 2.5
DEFAULT_THRESHOLD_SIGMAS = 10.0
# Scale used when the baseline window carries no variation (e.g. all zeros).
SCALE_FLOOR = 1.0


@dataclass(frozen=True)
class OnsetConfig:
    """CUSUM allowance ``drift`` and decision level ``threshold`` (series units).

    ``drift`` / ``threshold`` left as ``None`` are derived from the baseline
    window of each series; see :func:`resolve_config`.
    """

    drift: Optional[float] = None
    threshold: Optional[float] = None
    baseline_window: int = DEFAULT_WINDOW
    drift_sigmas: float = DEFAULT_DRIFT_SIGMAS
    threshold_sigmas: float = DEFAULT_THRESHOLD_SIGMAS

    def __post_init__(self):
        if self.baseline_window < 4:
            raise ValueError("baseline_window must be >= 4")
        if self.drift is not None and self.drift < 0:
            raise ValueError("drift must be >= 0")
        if self.threshold is not None and self.threshold <= 0:
            raise ValueError("threshold must be > 0")
        if self.drift is not None and self.threshold is not None and not self.threshold > self.drift:
            raise ValueError("threshold must exceed drift")
        if not (0 <= self.drift_sigmas < self.threshold_sigmas):
            raise ValueError("need 0 <= drift_sigmas < threshold_sigmas")


@dataclass(frozen=True)
class OnsetReport:
    onset_index: Optional[int]
    cusum_trace: np.ndarray
    triggered: bool
    detection_index: Optional[int] = None
    drift: float = 0.0
    threshold: float = 0.0


def resolve_config(series: np.ndarray, config: OnsetConfig) -> tuple[float, float, float]:
    """Return ``(baseline_mean, drift, threshold)`` for ``series``."""
    base = series[: config.baseline_window]
    mu = float(base.mean())
    scale = float(base.std(ddof=1))
    if scale <= 0:
        scale = SCALE_FLOOR
    drift = config.drift if config.drift is not None else config.drift_sigmas * scale
    threshold = (
        config.threshold if config.threshold is not None else config.threshold_sigmas * scale
    )
    if threshold <= drift:
        raise ValueError(f"threshold {threshold} must exceed drift {drift}")
    return mu, drift, threshold


def cusum_trace(series: Sequence[float], mean: float, drift: float) -> np.ndarray:
    """Upward CUSUM ``S_k = max(0, S_{k-1} + z_k - mean - drift)`` with ``S_0 = 0``."""
    z = np.asarray(series, dtype=float)
    out = np.empty_like(z)
    s = 0.0
    for k, x in enumerate(z - mean - drift):
        s = s + x
        if s < 0:
            s = 0.0
        out[k] = s
    return out


def detect_onset(series: Sequence[float], config: Optional[OnsetConfig] = None) -> OnsetReport:
    """Locate the start of sustained activity in ``series``.

    Detection happens at the first ``k`` with ``S_k >= threshold``.  The onset
    is the sample right after the trace's last reset to zero before ``k``
    (the classical CUSUM change-point estimate), so it does not carry the
    detection delay.

    Raises:
        ValueError: if the series is shorter than the baseline window.
    """
    config = config or OnsetConfig()
    z = np.asarray(series, dtype=float)
    if z.ndim != 1 or len(z) < config.baseline_window:
        raise ValueError(
            f"series of length {len(z)} is shorter than baseline_window={config.baseline_window}"
        )
    mu, drift, threshold = resolve_config(z, config)
    trace = cusum_trace(z, mu, drift)
    hits = np.flatnonzero(trace >= threshold)
    if hits.size == 0:
        return OnsetReport(None, trace, False, None, drift, threshold)
    k = int(hits[0])
    zeros = np.flatnonzero(trace[:k] == 0)
    onset = int(zeros[-1]) + 1 if zeros.size else 0
    return OnsetReport(onset, trace, True, k, drift, threshold)


def shift_to_onset(series: Sequence[float], onset_index: int, pre_period_weeks: int = 0):
    """Drop everything before ``onset_index``.

    Returns ``(values, offset)`` where ``offset`` is the number of weeks
    between the true start of the process and the first retained sample; the
    retained samples occupy weeks ``offset, offset + 1, ...``.
    """
    z = np.asarray(series, dtype=float)
    if not 0 <= onset_index < len(z):
        raise IndexError(f"onset_index {onset_index} out of range for length {len(z)}")
    if pre_period_weeks < 0:
        raise ValueError("pre_period_weeks must be >= 0")
    return z[onset_index:].copy(), int(pre_period_weeks)
