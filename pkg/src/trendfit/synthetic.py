"""Synthetic binned series drawn from the diffusion families (test and demo data)."""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import models
from .dataset import PreparedSeries
from .fitting import bin_probabilities
from .models import Params


def quantile(params: Params, prob: float, hi: float = 1e7) -> float:
    """Time at which the cdf reaches ``prob`` (bisection)."""
    lo, up = 0.0, 1.0
    while models.cdf(params, up) < prob:
        up *= 2
        if up > hi:
            raise ValueError(f"quantile {prob} beyond t={hi}")
    lo = up / 2 if up > 1 else 0.0
    for _ in range(200):
        mid = 0.5 * (lo + up)
        if models.cdf(params, mid) < prob:
            lo = mid
        else:
            up = mid
    return 0.5 * (lo + up)


def expected_series(params: Params, n: float, m: int, offset: int = 0, **meta) -> PreparedSeries:
    """Exact expected counts ``n p_i`` on ``m`` weekly bins starting at ``offset``."""
    edges = offset + np.arange(m + 1, dtype=float)
    probs, _ = bin_probabilities(params, edges)
    return PreparedSeries(meta.get("service", "synthetic"), meta.get("region", "WW"), n * probs, edges, offset)


def sample_series(
    params: Params,
    n: int,
    m: int,
    rng: np.random.Generator,
    offset: int = 0,
    edges: Optional[np.ndarray] = None,
    **meta,
) -> PreparedSeries:
    """Multinomial counts with total ``n`` on weekly bins (or explicit ``edges``)."""
    if edges is None:
        edges = offset + np.arange(m + 1, dtype=float)
    edges = np.asarray(edges, dtype=float)
    probs, _ = bin_probabilities(params, edges)
    counts = rng.multinomial(n, probs / probs.sum()).astype(float)
    return PreparedSeries(
        meta.get("service", "synthetic"), meta.get("region", "WW"), counts, edges, int(edges[0])
    )
