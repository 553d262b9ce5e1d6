"""Closed-form densities of the Bass, shifted Gompertz and Weibull diffusion families.

All functions accept a scalar or an array of times (in weeks) and return the
same shape.  Parameters are validated once, when the parameter object is
built; the evaluation functions only check the time domain.

Survival functions (``*_sf``) are provided alongside every cdf because binned
fitting needs accurate upper-tail masses, which ``1 - cdf`` loses to
cancellation.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Union

import numpy as np

ArrayLike = Union[float, np.ndarray]


class DomainError(ValueError):
    """Raised when a density is evaluated outside its support."""


class Family(str, enum.Enum):
    BASS = "bass"
    SHIFTED_GOMPERTZ = "sg"
    WEIBULL = "weibull"

    @property
    def label(self) -> str:
        return {"bass": "Bass", "sg": "ShiftedGompertz", "weibull": "Weibull"}[self.value]

    @classmethod
    def parse(cls, name: str) -> "Family":
        key = name.strip().lower().replace("-", "_")
        aliases = {
            "bass": cls.BASS,
            "ba": cls.BASS,
            "sg": cls.SHIFTED_GOMPERTZ,
            "shiftedgompertz": cls.SHIFTED_GOMPERTZ,
            "shifted_gompertz": cls.SHIFTED_GOMPERTZ,
            "weibull": cls.WEIBULL,
            "wb": cls.WEIBULL,
        }
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown model family {name!r}") from None


def _finite_positive(name: str, value: float) -> None:
    if not (math.isfinite(value) and value > 0):
        raise ValueError(f"{name} must be finite and > 0, got {value!r}")


@dataclass(frozen=True)
class BassParams:
    """Innovation rate ``p`` and imitation rate ``q``, both per week."""

    p: float
    q: float

    def __post_init__(self):
        _finite_positive("p", self.p)
        if not (math.isfinite(self.q) and self.q >= 0):
            raise ValueError(f"q must be finite and >= 0, got {self.q!r}")

    family = Family.BASS

    def as_tuple(self) -> tuple[float, float]:
        return (self.p, self.q)


@dataclass(frozen=True)
class ShiftedGompertzParams:
    """Scale rate ``beta`` (per week) and dimensionless shape ``eta``."""

    beta: float
    eta: float

    def __post_init__(self):
        _finite_positive("beta", self.beta)
        if not (math.isfinite(self.eta) and self.eta >= 0):
            raise ValueError(f"eta must be finite and >= 0, got {self.eta!r}")

    family = Family.SHIFTED_GOMPERTZ

    def as_tuple(self) -> tuple[float, float]:
        return (self.beta, self.eta)


@dataclass(frozen=True)
class WeibullParams:
    """Shape ``kappa`` and scale ``lam`` (weeks)."""

    kappa: float
    lam: float

    def __post_init__(self):
        _finite_positive("kappa", self.kappa)
        _finite_positive("lambda", self.lam)
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise ValueError(
                f"derived rate (1/lambda)**kappa is not finite and positive "
                f"for kappa={self.kappa!r}, lambda={self.lam!r}"
            )

    family = Family.WEIBULL

    @property
    def alpha(self) -> float:
        with np.errstate(over="ignore", under="ignore"):
            return float(np.power(1.0 / self.lam, self.kappa))

    def as_tuple(self) -> tuple[float, float]:
        return (self.kappa, self.lam)


@dataclass(frozen=True)
class CompoundLink:
    """Shifted Gompertz scale ``beta`` mixed over ``eta ~ Exponential(sigma)``."""

    beta: float
    sigma: float

    def __post_init__(self):
        _finite_positive("beta", self.beta)
        _finite_positive("sigma", self.sigma)


Params = Union[BassParams, ShiftedGompertzParams, WeibullParams]

_PARAM_TYPES = {
    Family.BASS: BassParams,
    Family.SHIFTED_GOMPERTZ: ShiftedGompertzParams,
    Family.WEIBULL: WeibullParams,
}


def make_params(family: Family, theta1: float, theta2: float) -> Params:
    return _PARAM_TYPES[Family(family)](float(theta1), float(theta2))


def _times(t: ArrayLike) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if np.any(np.isnan(arr)):
        raise DomainError("time must not be NaN")
    if np.any(arr < 0):
        raise DomainError("time must be >= 0")
    return arr


def _out(arr: np.ndarray, like: ArrayLike):
    return float(arr) if np.ndim(like) == 0 else arr


# -- Bass ---------------------------------------------------------------------


def bass_pdf(t: ArrayLike, params: BassParams):
    tt = _times(t)
    p, q = params.p, params.q
    e = np.exp(-(p + q) * tt)
    return _out((p + q) ** 2 / p * e / (1.0 + (q / p) * e) ** 2, t)


def bass_cdf(t: ArrayLike, params: BassParams):
    tt = _times(t)
    p, q = params.p, params.q
    e = np.exp(-(p + q) * tt)
    return _out(-np.expm1(-(p + q) * tt) / (1.0 + (q / p) * e), t)


def bass_sf(t: ArrayLike, params: BassParams):
    tt = _times(t)
    p, q = params.p, params.q
    e = np.exp(-(p + q) * tt)
    return _out((p + q) * e / (p + q * e), t)


def bass_hazard(t: ArrayLike, params: BassParams):
    """Adoption hazard ``p + q F(t)``."""
    return _out(params.p + params.q * np.asarray(bass_cdf(t, params)), t)


def bass_peak_time(params: BassParams) -> float:
    """Mode of the Bass density; 0 when imitation does not exceed innovation."""
    if params.q <= params.p:
        return 0.0
    return math.log(params.q / params.p) / (params.p + params.q)


# -- shifted Gompertz -----------------------------------------------------------


def sgompertz_pdf(t: ArrayLike, params: ShiftedGompertzParams):
    tt = _times(t)
    b, eta = params.beta, params.eta
    u = np.exp(-b * tt)
    return _out(b * u * np.exp(-eta * u) * (1.0 + eta * (1.0 - u)), t)


def sgompertz_cdf(t: ArrayLike, params: ShiftedGompertzParams):
    tt = _times(t)
    b, eta = params.beta, params.eta
    u = np.exp(-b * tt)
    return _out(-np.expm1(-b * tt) * np.exp(-eta * u), t)


def sgompertz_sf(t: ArrayLike, params: ShiftedGompertzParams):
    tt = _times(t)
    b, eta = params.beta, params.eta
    u = np.exp(-b * tt)
    # 1 - (1 - u) e^{-eta u} = (1 - e^{-eta u}) + u e^{-eta u}
    return _out(-np.expm1(-eta * u) + u * np.exp(-eta * u), t)


# -- Weibull ----------------------------------------------------------------------


def weibull_pdf(t: ArrayLike, params: WeibullParams):
    tt = _times(t)
    k, lam = params.kappa, params.lam
    if k < 1 and np.any(tt == 0):
        raise DomainError("Weibull density is unbounded at t=0 when kappa < 1")
    z = tt / lam
    with np.errstate(divide="ignore", invalid="ignore"):
        # log-space keeps (t/lam)^(k-1) finite for large t and small k
        logz = np.log(z)
        val = (k / lam) * np.exp((k - 1.0) * logz - np.exp(k * logz))
    if k == 1:
        val = np.where(tt == 0, 1.0 / lam, val)
    return _out(val, t)


def weibull_cdf(t: ArrayLike, params: WeibullParams):
    tt = _times(t)
    return _out(-np.expm1(-np.power(tt / params.lam, params.kappa)), t)


def weibull_sf(t: ArrayLike, params: WeibullParams):
    tt = _times(t)
    return _out(np.exp(-np.power(tt / params.lam, params.kappa)), t)


# -- relations and dispatch -------------------------------------------------------


def compound_bass_from_sg(link: CompoundLink) -> BassParams:
    """Bass parameters obtained by mixing the shifted Gompertz shape over an
    Exponential with scale ``sigma``: ``p = beta/(1+sigma)``, ``q = p*sigma``."""
    p = link.beta / (1.0 + link.sigma)
    return BassParams(p=p, q=p * link.sigma)


def cdf_log_gradient(params: Params, t: ArrayLike) -> np.ndarray:
    """Gradient of the cdf with respect to ``(log theta1, log theta2)``.

    Returns an array of shape ``t.shape + (2,)``.  Every expression is
    proportional to the survival-type factor, so it stays accurate in the
    upper tail where ``1 - F`` underflows.
    """
    tt = _times(t)
    fam = params.family
    if fam is Family.BASS:
        p, q = params.p, params.q
        e = np.exp(-(p + q) * tt)
        r = q / p
        den = (1.0 + r * e) ** 2
        one_minus_e = -np.expm1(-(p + q) * tt)
        common = tt * e * (1.0 + r)
        d_p = (common + one_minus_e * e * q / p**2) / den
        d_q = (common - one_minus_e * e / p) / den
        return np.stack([p * d_p, q * d_q], axis=-1)
    if fam is Family.SHIFTED_GOMPERTZ:
        b, eta = params.beta, params.eta
        u = np.exp(-b * tt)
        g = np.exp(-eta * u)
        d_b = tt * u * g * (1.0 + eta * (1.0 - u))
        d_eta = -(-np.expm1(-b * tt)) * u * g
        return np.stack([b * d_b, eta * d_eta], axis=-1)
    k, lam = params.kappa, params.lam
    z = np.power(tt / lam, k)
    with np.errstate(divide="ignore", invalid="ignore"):
        zlog = np.where(tt > 0, z * np.log(tt / lam), 0.0)
    s = np.exp(-z)
    return np.stack([s * k * zlog, -s * k * z], axis=-1)


_PDF = {Family.BASS: bass_pdf, Family.SHIFTED_GOMPERTZ: sgompertz_pdf, Family.WEIBULL: weibull_pdf}
_CDF = {Family.BASS: bass_cdf, Family.SHIFTED_GOMPERTZ: sgompertz_cdf, Family.WEIBULL: weibull_cdf}
_SF = {Family.BASS: bass_sf, Family.SHIFTED_GOMPERTZ: sgompertz_sf, Family.WEIBULL: weibull_sf}


def pdf(params: Params, t: ArrayLike):
    return _PDF[params.family](t, params)


def cdf(params: Params, t: ArrayLike):
    return _CDF[params.family](t, params)


def sf(params: Params, t: ArrayLike):
    return _SF[params.family](t, params)
