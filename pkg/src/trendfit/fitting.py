"""Multinomial maximum-likelihood fitting of binned, truncated series.

The estimator regresses the observed bin counts ``y_i`` onto their
expectations ``n p_i(theta)`` with weights ``w_i = 1 / (n p_i)``.  Each
iteration freezes the weights, takes one damped Gauss-Newton step on the
weighted residual sum of squares and then refreshes the weights.  At a
fixed point the weighted normal equations reduce to the multinomial score
equations, so the fixed point is the maximum-likelihood estimate.

Parameters are optimized on a log scale, which keeps them positive and
makes ``param_tolerance`` a relative tolerance.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
from scipy import special

from . import models
from .dataset import PreparedSeries
from .models import Family, Params

FAMILIES = (Family.BASS, Family.SHIFTED_GOMPERTZ, Family.WEIBULL)
# tie-break order for fit_all: earlier wins
_TIE_PREFERENCE = (Family.SHIFTED_GOMPERTZ, Family.BASS, Family.WEIBULL)

_LOG_MIN = math.log(1e-10)
_LOG_MAX = math.log(1e6)
_MIN_MASS = 1e-12
_BOUND_SLACK = 1e-9


class FitError(RuntimeError):
    pass


class DegenerateError(FitError):
    """The data or the parameters leave nothing to fit."""


def default_initializer_grid() -> dict[Family, tuple[tuple[float, ...], tuple[float, ...]]]:
    """Starting grids for each family.

    Axis meanings: Bass ``(p, q/p)``; shifted Gompertz ``(beta, eta)``;
    Weibull ``(kappa, lambda / t_m)`` with ``t_m`` the last bin edge.
    """
    g = lambda lo, hi, k: tuple(np.geomspace(lo, hi, k).tolist())  # noqa: E731
    return {
        Family.BASS: (g(1e-4, 1e-1, 7), g(1.0, 100.0, 5)),
        Family.SHIFTED_GOMPERTZ: (g(1e-3, 0.3, 7), g(0.1, 100.0, 5)),
        Family.WEIBULL: (tuple(np.linspace(0.5, 4.0, 6).tolist()), g(0.1, 2.0, 5)),
    }


@dataclass(frozen=True)
class FitConfig:
    max_iterations: int = 200
    param_tolerance: float = 1e-8
    objective_tolerance: float = 1e-12
    # minimum n*p_i in the weights, in units of the smallest positive count
    weight_floor: float = 0.5
    damping: float = 0.0
    max_halvings: int = 20
    # adjacent bins are pooled until every expected count reaches this before scoring
    min_expected: float = 1.0
    initializer_grid: Mapping[Family, tuple[Sequence[float], Sequence[float]]] = field(
        default_factory=default_initializer_grid
    )

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not (self.param_tolerance > 0 and self.objective_tolerance > 0):
            raise ValueError("tolerances must be > 0")
        if not self.weight_floor > 0:
            raise ValueError("weight_floor must be > 0")
        if self.damping < 0:
            raise ValueError("damping must be >= 0")
        for fam, (a, b) in self.initializer_grid.items():
            if len(a) == 0 or len(b) == 0:
                raise ValueError(f"empty initializer grid for {fam}")

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FitConfig":
        doc = dict(doc)
        if "initializer_grid" in doc:
            doc["initializer_grid"] = {
                Family.parse(k): (tuple(v[0]), tuple(v[1])) for k, v in doc["initializer_grid"].items()
            }
        return cls(**doc)


@dataclass
class FitResult:
    family: Family
    params: Params
    rss_weighted: float
    dof: int
    p_value: float
    iterations: int
    converged: bool
    truncation_mass: float
    service: str = ""
    region: str = ""
    # IRLS objective at the final iterate (all bins, fitting weights)
    objective: float = float("nan")
    # log-parameter iterates, starting point first
    path: list = field(default_factory=list, repr=False)

    @property
    def theta(self) -> tuple[float, float]:
        return self.params.as_tuple()

    def to_dict(self) -> dict:
        t1, t2 = self.theta
        return {
            "service": self.service,
            "region": self.region,
            "family": self.family.value,
            "theta1": t1,
            "theta2": t2,
            "rss": self.rss_weighted,
            "dof": self.dof,
            "p_value": self.p_value,
            "converged": self.converged,
            "truncation_mass": self.truncation_mass,
            "iterations": self.iterations,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FitResult":
        family = Family.parse(doc["family"])
        return cls(
            family=family,
            params=models.make_params(family, doc["theta1"], doc["theta2"]),
            rss_weighted=float(doc["rss"]),
            dof=int(doc["dof"]),
            p_value=float(doc["p_value"]),
            iterations=int(doc.get("iterations", 0)),
            converged=bool(doc["converged"]),
            truncation_mass=float(doc["truncation_mass"]),
            service=doc.get("service", ""),
            region=doc.get("region", ""),
        )

    @classmethod
    def from_json(cls, text: str) -> "FitResult":
        return cls.from_dict(json.loads(text))


def bin_probabilities(params: Params, bin_edges) -> tuple[np.ndarray, float]:
    """Probabilities of the bins ``(t_{i-1}, t_i]`` conditional on ``[t_0, t_m]``.

    Returns ``(probs, truncation_mass)`` where ``probs`` sums to one and
    ``truncation_mass = F(t_m) - F(t_0)``.

    Raises:
        DegenerateError: if the window holds (numerically) no probability mass.
    """
    edges = np.asarray(bin_edges, dtype=float)
    F = np.asarray(models.cdf(params, edges))
    S = np.asarray(models.sf(params, edges))
    # cdf differences lose precision in the upper tail, survival differences in the lower
    raw = np.where(F[1:] <= 0.5, np.diff(F), -np.diff(S))
    raw = np.clip(raw, 0.0, None)
    mass = float(raw.sum())
    if not mass >= _MIN_MASS:
        raise DegenerateError(f"window [{edges[0]:g}, {edges[-1]:g}] holds mass {mass:.3g} under {params}")
    return raw / mass, mass


def chi2_survival(x: float, dof: int) -> float:
    """Upper tail ``P(X > x)`` of a chi-squared variable with ``dof`` degrees of freedom."""
    if dof < 1:
        raise ValueError("dof must be >= 1")
    if not x >= 0:
        raise ValueError("x must be >= 0")
    return float(special.gammaincc(dof / 2.0, x / 2.0))


def merge_bins(observed, expected, min_expected: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Pool adjacent bins left to right until each pooled expectation reaches
    ``min_expected``; a short remainder is folded into the last pooled bin."""
    obs_out, exp_out = [], []
    acc_o = acc_e = 0.0
    for o, e in zip(observed, expected):
        acc_o += o
        acc_e += e
        if acc_e >= min_expected:
            obs_out.append(acc_o)
            exp_out.append(acc_e)
            acc_o = acc_e = 0.0
    if acc_e > 0 or acc_o > 0:
        if exp_out:
            obs_out[-1] += acc_o
            exp_out[-1] += acc_e
        else:
            obs_out.append(acc_o)
            exp_out.append(acc_e)
    return np.array(obs_out), np.array(exp_out)


def pearson_statistic(counts, probs, min_expected: float = 1.0) -> tuple[float, int]:
    """Pearson chi-squared on pooled bins; returns ``(statistic, bins_used)``."""
    counts = np.asarray(counts, dtype=float)
    obs, exp = merge_bins(counts, counts.sum() * np.asarray(probs), min_expected)
    keep = exp > 0
    stat = float(np.sum((obs[keep] - exp[keep]) ** 2 / exp[keep]))
    return stat, int(keep.sum())


# -- IRLS --------------------------------------------------------------------------


class _Problem:
    """Binned data of one series paired with a log-parameter map for one family."""

    def __init__(self, family: Family, counts: np.ndarray, edges: np.ndarray, floor: float):
        self.family = family
        self.y = counts
        self.n = float(counts.sum())
        self.edges = edges
        # the floor is in units of the data's resolution so rescaled counts fit identically
        self.floor = floor * float(counts[counts > 0].min())

    def params(self, x) -> Params:
        return models.make_params(self.family, math.exp(x[0]), math.exp(x[1]))

    def probs(self, x) -> Optional[np.ndarray]:
        try:
            p, _ = bin_probabilities(self.params(x), self.edges)
        except (ValueError, DegenerateError, FloatingPointError, OverflowError):
            return None
        if not np.all(np.isfinite(p)):
            return None
        return p

    def weights(self, p: np.ndarray) -> np.ndarray:
        return 1.0 / np.maximum(self.n * p, self.floor)

    def objective(self, p: Optional[np.ndarray], w: np.ndarray) -> float:
        if p is None:
            return math.inf
        return float(np.sum(w * (self.y - self.n * p) ** 2))

    def jacobian(self, x: np.ndarray, p0: np.ndarray) -> np.ndarray:
        """d(n p)/d(log theta), including the renormalization by the window mass."""
        G = models.cdf_log_gradient(self.params(x), self.edges)
        dD = np.diff(G, axis=0)
        _, mass = bin_probabilities(self.params(x), self.edges)
        dM = dD.sum(axis=0)
        return self.n * (dD - p0[:, None] * dM[None, :]) / mass


def _projected_step(A: np.ndarray, b: np.ndarray, x: np.ndarray) -> tuple[np.ndarray, float]:
    """Least-squares direction within the log-parameter box, and the largest
    step length (capped at 1) that keeps the iterate inside the box.

    Coordinates already on a bound whose step points outward are held fixed
    and the remaining coordinates are re-solved.
    """
    delta = np.linalg.lstsq(A, b, rcond=None)[0]
    pinned = ((x <= _LOG_MIN + _BOUND_SLACK) & (delta < 0)) | (
        (x >= _LOG_MAX - _BOUND_SLACK) & (delta > 0)
    )
    if pinned.any():
        delta = np.zeros_like(x)
        free = ~pinned
        if free.any():
            delta[free] = np.linalg.lstsq(A[:, free], b, rcond=None)[0]
    room = np.where(delta < 0, (_LOG_MIN - x) / np.where(delta < 0, delta, 1.0), np.inf)
    room = np.minimum(room, np.where(delta > 0, (_LOG_MAX - x) / np.where(delta > 0, delta, 1.0), np.inf))
    return delta, float(min(1.0, room.min()))


def _grid_points(family: Family, grid, span: float):
    a, b = grid
    for u in a:
        for v in b:
            if family is Family.BASS:
                yield (u, u * v)
            elif family is Family.WEIBULL:
                yield (u, v * span)
            else:
                yield (u, v)


def _initial_point(problem: _Problem, config: FitConfig) -> np.ndarray:
    grid = config.initializer_grid[problem.family]
    best, best_obj = None, math.inf
    for theta in _grid_points(problem.family, grid, float(problem.edges[-1])):
        x = np.log(np.asarray(theta, dtype=float))
        p = problem.probs(x)
        if p is None:
            continue
        obj = problem.objective(p, problem.weights(p))
        if obj < best_obj:
            best, best_obj = x, obj
    if best is None:
        raise DegenerateError(f"no {problem.family.label} grid point has mass on the window")
    return best


def fit(
    series: PreparedSeries,
    family: Family,
    config: Optional[FitConfig] = None,
    start: Optional[Sequence[float]] = None,
) -> FitResult:
    """Fit one diffusion family to ``series``.

    Starts from the lowest weighted RSS point of the initializer grid (or
    from ``start`` given as ``(theta1, theta2)``).  Non-convergence is
    reported through ``converged=False`` with the best iterate found.

    Raises:
        DegenerateError: fewer than four bins, or fewer than two non-empty bins.
    """
    config = config or FitConfig()
    family = Family(family)
    y = np.asarray(series.counts, dtype=float)
    if len(y) < 4:
        raise DegenerateError(f"need at least 4 bins, got {len(y)}")
    if np.count_nonzero(y) < 2:
        raise DegenerateError("need at least two non-empty bins")
    problem = _Problem(family, y, np.asarray(series.bin_edges, dtype=float), config.weight_floor)

    x = np.log(np.asarray(start, dtype=float)) if start is not None else _initial_point(problem, config)
    x = np.clip(x, _LOG_MIN, _LOG_MAX)
    p = problem.probs(x)
    if p is None:
        raise DegenerateError("starting point has no mass on the window")
    w = problem.weights(p)
    obj = problem.objective(p, w)
    path = [x.copy()]
    converged = False
    iterations = 0

    for iterations in range(1, config.max_iterations + 1):
        J = problem.jacobian(x, p)
        r = y - problem.n * p
        sw = np.sqrt(w)
        A = sw[:, None] * J
        b = sw * r
        if config.damping > 0:
            reg = np.sqrt(config.damping * np.sum(A * A, axis=0))
            A = np.vstack([A, np.diag(reg)])
            b = np.concatenate([b, np.zeros(2)])
        delta, step = _projected_step(A, b, x)
        # Gauss-Newton model reduction, relative to the objective (scale-free)
        predicted = float(np.sum((A[: len(y)] @ delta) ** 2))
        if predicted <= config.objective_tolerance * obj:
            converged = True
            break

        accepted = None
        for _ in range(config.max_halvings + 1):
            x_try = np.clip(x + step * delta, _LOG_MIN, _LOG_MAX)
            p_try = problem.probs(x_try)
            obj_try = problem.objective(p_try, w)
            if obj_try < obj:
                accepted = (x_try, p_try)
                break
            step *= 0.5
        if accepted is None:
            # no realizable descent: accept as stationary if the model gain is negligible
            converged = predicted <= math.sqrt(config.objective_tolerance) * obj
            break

        x_new, p = accepted
        dx = float(np.max(np.abs(x_new - x)))
        x = x_new
        path.append(x.copy())
        w = problem.weights(p)
        obj_new = problem.objective(p, w)
        dobj = abs(obj_new - obj)
        obj = obj_new
        if dx < config.param_tolerance or dobj <= config.objective_tolerance * obj:
            converged = True
            break

    params = problem.params(x)
    probs, mass = bin_probabilities(params, problem.edges)
    stat, bins_used = pearson_statistic(y, probs, config.min_expected)
    dof = max(1, bins_used - 3)
    return FitResult(
        family=family,
        params=params,
        rss_weighted=stat,
        dof=dof,
        p_value=chi2_survival(stat, dof),
        iterations=iterations,
        converged=converged,
        truncation_mass=mass,
        service=series.service,
        region=series.region,
        objective=obj,
        path=path,
    )


@dataclass
class FitAllResult:
    results: dict
    best_family: Family
    errors: dict = field(default_factory=dict)

    @property
    def best(self) -> FitResult:
        return self.results[self.best_family]


def select_best(results: Sequence[FitResult]) -> FitResult:
    """Highest p-value; ties go to lower RSS, then to the shifted Gompertz."""
    if not results:
        raise FitError("no results to choose from")
    return min(
        results,
        key=lambda r: (-r.p_value, r.rss_weighted, _TIE_PREFERENCE.index(r.family)),
    )


def fit_all(series: PreparedSeries, config: Optional[FitConfig] = None) -> FitAllResult:
    """Fit every family; fails only if all three fail."""
    results, errors = {}, {}
    for family in FAMILIES:
        try:
            results[family] = fit(series, family, config)
        except FitError as exc:
            errors[family] = exc
    if not results:
        detail = "; ".join(f"{f.label}: {e}" for f, e in errors.items())
        raise FitError(f"{series.service}/{series.region}: every family failed ({detail})")
    best = select_best(list(results.values()))
    return FitAllResult(results, best.family, errors)
