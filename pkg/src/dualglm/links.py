"""Link functions, separation diagnostics and the squashing transform.

Each family provides its CDF ``F`` (the inverse link) together with
numerically stable ``log F``, ``log(1 - F)`` and their first two
derivatives in the linear predictor.  The estimators consume those
directly so that likelihood terms stay finite far into the tails.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy import optimize, special

from .errors import BoundaryDivergenceError, LinkDomainError, StructuralViolationError

__all__ = [
    "FAMILIES",
    "LinkSpec",
    "SeparationReport",
    "link_eval",
    "inverse_link",
    "squash",
    "diagnose_separation",
    "check_symmetry",
    "SQUASH_EPS",
    "SEPARATION_THRESHOLD",
]

FAMILIES = ("logit", "probit", "cloglog", "identity")
SQUASH_EPS = 1e-12
SEPARATION_THRESHOLD = 30.0
_BOUNDARY_TOL = 1e-8
_FD_STEP = 1e-5


def _scalar_or_array(x, like):
    return float(x) if np.ndim(like) == 0 else x


# ---------------------------------------------------------------- families

def _logit_parts(eta):
    F = special.expit(eta)
    Fm = special.expit(-eta)
    return {
        "cdf": F,
        "pdf": F * Fm,
        "log_cdf": special.log_expit(eta),
        "log_sf": special.log_expit(-eta),
        "dlog_cdf": Fm,
        "dlog_sf": -F,
        "d2log_cdf": -F * Fm,
        "d2log_sf": -F * Fm,
    }


def _probit_parts(eta):
    log_pdf = -0.5 * eta * eta - 0.5 * np.log(2 * np.pi)
    log_cdf = special.log_ndtr(eta)
    log_sf = special.log_ndtr(-eta)
    # inverse Mills ratios phi/Phi and phi/(1 - Phi)
    m1 = np.exp(log_pdf - log_cdf)
    m0 = np.exp(log_pdf - log_sf)
    return {
        "cdf": special.ndtr(eta),
        "pdf": np.exp(log_pdf),
        "log_cdf": log_cdf,
        "log_sf": log_sf,
        "dlog_cdf": m1,
        "dlog_sf": -m0,
        "d2log_cdf": -m1 * (eta + m1),
        "d2log_sf": -m0 * (m0 - eta),
    }


def _cloglog_parts(eta):
    with np.errstate(over="ignore"):
        u = np.exp(eta)
    log_sf = -u
    F = -np.expm1(-u)
    # log(1 - exp(-u)): log of expm1 for small u, log1p for large u
    with np.errstate(divide="ignore"):
        log_cdf = np.where(u < math.log(2.0), np.log(F), np.log1p(-np.exp(-u)))
    # log F = log(1 - exp(-u)); for tiny u use log(u) - u/2 to avoid log(0)
    small = u < 1e-8
    log_cdf = np.where(small, eta - 0.5 * u, log_cdf)

    # dlogF/deta = u * g(u) with g(u) = 1/expm1(u)
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        em1 = np.expm1(u)
        g = np.where(u > 700.0, 0.0, 1.0 / em1)
        dlog_cdf = np.where(u < 1e-3, 1.0 - u / 2 + u * u / 12, u * g)
        # d/du [u / expm1(u)] = (expm1(u) - u e^u) / expm1(u)^2
        dg = np.where(
            u > 700.0,
            0.0,
            (em1 - u * np.exp(np.minimum(u, 700.0))) * g * g,
        )
        dg = np.where(u < 1e-3, -0.5 + u / 6 - u**3 / 180, dg)
    d2log_cdf = u * dg
    return {
        "cdf": F,
        "pdf": np.exp(eta - u),
        "log_cdf": log_cdf,
        "log_sf": log_sf,
        "dlog_cdf": dlog_cdf,
        "dlog_sf": -u,
        "d2log_cdf": d2log_cdf,
        "d2log_sf": -u,
    }


_PARTS = {"logit": _logit_parts, "probit": _probit_parts, "cloglog": _cloglog_parts}

_PPF = {
    "logit": special.logit,
    "probit": special.ndtri,
    "cloglog": lambda p: np.log(-np.log1p(-p)),
}


@dataclass(frozen=True)
class LinkSpec:
    """A link family, optionally composed with a monotone map ``h`` on (0, 1).

    With ``transform`` set, the inverse link is ``h(F(eta))``.  A missing
    ``transform_inverse`` is handled by bracketed root finding, and the
    derivatives used by the estimators fall back to central differences.
    """

    family: str = "logit"
    transform: Optional[Callable] = field(default=None, compare=False)
    transform_inverse: Optional[Callable] = field(default=None, compare=False)

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise LinkDomainError(f"unknown link family {self.family!r}; expected one of {FAMILIES}")
        if self.transform_inverse is not None and self.transform is None:
            raise LinkDomainError("transform_inverse given without transform")

    @property
    def is_binary(self) -> bool:
        return self.family != "identity"

    # vectorised pieces ---------------------------------------------------
    def base_cdf(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.family == "identity":
            return eta
        return _PARTS[self.family](eta)["cdf"]

    def cdf(self, eta):
        F = self.base_cdf(eta)
        return F if self.transform is None else np.asarray(self.transform(F), dtype=float)

    def pdf(self, eta):
        eta = np.asarray(eta, dtype=float)
        if self.transform is None:
            if self.family == "identity":
                return np.ones_like(eta)
            return _PARTS[self.family](eta)["pdf"]
        return (self.cdf(eta + _FD_STEP) - self.cdf(eta - _FD_STEP)) / (2 * _FD_STEP)

    def ppf(self, p):
        p = np.asarray(p, dtype=float)
        if self.transform is not None:
            if self.transform_inverse is not None:
                p = np.asarray(self.transform_inverse(p), dtype=float)
            else:
                return np.vectorize(self._numeric_ppf, otypes=[float])(p)
        if self.family == "identity":
            return p
        return _PPF[self.family](p)

    def _numeric_ppf(self, p):
        f = lambda e: float(self.cdf(e)) - p
        lo, hi = -1.0, 1.0
        while f(lo) > 0:
            lo *= 2
            if lo < -1e6:
                raise LinkDomainError(f"cannot invert transformed link at p={p}")
        while f(hi) < 0:
            hi *= 2
            if hi > 1e6:
                raise LinkDomainError(f"cannot invert transformed link at p={p}")
        return optimize.brentq(f, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps)

    def log_parts(self, eta) -> dict:
        """``log F``, ``log(1-F)`` and their first two eta-derivatives (plus cdf/pdf)."""
        if not self.is_binary:
            raise LinkDomainError("the identity link has no binary likelihood")
        eta = np.asarray(eta, dtype=float)
        if self.transform is None:
            return _PARTS[self.family](eta)

        def logs(e):
            p = np.clip(self.cdf(e), np.finfo(float).tiny, None)
            return np.log(p), np.log1p(-np.minimum(p, 1 - np.finfo(float).epsneg))

        h = _FD_STEP
        (a0, b0), (ap, bp), (am, bm) = logs(eta), logs(eta + h), logs(eta - h)
        return {
            "cdf": self.cdf(eta),
            "pdf": self.pdf(eta),
            "log_cdf": a0,
            "log_sf": b0,
            "dlog_cdf": (ap - am) / (2 * h),
            "dlog_sf": (bp - bm) / (2 * h),
            "d2log_cdf": (ap - 2 * a0 + am) / (h * h),
            "d2log_sf": (bp - 2 * b0 + bm) / (h * h),
        }


def _as_spec(spec) -> LinkSpec:
    return spec if isinstance(spec, LinkSpec) else LinkSpec(str(spec))


def link_eval(spec, p):
    """``eta = g(p)``.  Raises at p in {0, 1}, where binary links diverge."""
    spec = _as_spec(spec)
    arr = np.asarray(p, dtype=float)
    if spec.family != "identity" or spec.transform is not None:
        if np.any((arr == 0.0) | (arr == 1.0)):
            raise BoundaryDivergenceError(
                "link is unbounded at p in {0, 1}; no finite linear predictor exists"
            )
        if np.any(~((arr > 0.0) & (arr < 1.0))):
            raise LinkDomainError("probabilities must lie strictly inside (0, 1)")
    elif not np.all(np.isfinite(arr)):
        raise LinkDomainError("identity link needs finite input")
    return _scalar_or_array(spec.ppf(arr), p)


def inverse_link(spec, eta):
    spec = _as_spec(spec)
    arr = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise LinkDomainError("linear predictor must be finite")
    return _scalar_or_array(spec.cdf(arr), eta)


def squash(spec, eta):
    """Inverse link clamped to ``[SQUASH_EPS, 1 - SQUASH_EPS]``."""
    spec = _as_spec(spec)
    arr = np.asarray(eta, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise LinkDomainError("linear predictor must be finite")
    return _scalar_or_array(np.clip(spec.cdf(arr), SQUASH_EPS, 1.0 - SQUASH_EPS), eta)


@dataclass(frozen=True)
class SeparationReport:
    separated: bool
    max_abs_eta: float
    offending_indices: list[int]
    fitted_prob_extremes: tuple[float, float]

    def to_dict(self) -> dict:
        return {
            "separated": bool(self.separated),
            "max_abs_eta": float(self.max_abs_eta),
            "offending_indices": [int(i) for i in self.offending_indices],
            "fitted_prob_extremes": [float(v) for v in self.fitted_prob_extremes],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SeparationReport":
        return cls(
            bool(d["separated"]),
            float(d["max_abs_eta"]),
            [int(i) for i in d["offending_indices"]],
            tuple(float(v) for v in d["fitted_prob_extremes"]),
        )


def diagnose_separation(etas, probs, threshold: float = SEPARATION_THRESHOLD) -> SeparationReport:
    etas = np.asarray(etas, dtype=float).ravel()
    probs = np.asarray(probs, dtype=float).ravel()
    if etas.size == 0 or etas.shape != probs.shape:
        raise StructuralViolationError(
            f"etas and probs must be nonempty and equal length (got {etas.size}, {probs.size})"
        )
    if not threshold > 0:
        raise ValueError("threshold must be positive")
    abs_eta = np.abs(etas)
    bad = (abs_eta > threshold) | (probs <= _BOUNDARY_TOL) | (probs >= 1.0 - _BOUNDARY_TOL)
    bad |= ~np.isfinite(etas)
    idx = np.flatnonzero(bad)
    return SeparationReport(
        separated=bool(idx.size),
        max_abs_eta=float(np.max(abs_eta)),
        offending_indices=idx.tolist(),
        fitted_prob_extremes=(float(np.min(probs)), float(np.max(probs))),
    )


def check_symmetry(spec, grid_size: int = 201, tol: float = 1e-12, span: float = 8.0) -> bool:
    """True iff ``F(-x) == 1 - F(x)`` on a grid over ``[0, span]`` up to ``tol``."""
    spec = _as_spec(spec)
    if grid_size < 3:
        raise ValueError("grid_size must be at least 3")
    x = np.linspace(0.0, span, grid_size)
    gap = np.abs(spec.cdf(-x) - (1.0 - spec.cdf(x)))
    return bool(np.max(gap) <= tol)
