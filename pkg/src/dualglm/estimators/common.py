"""Shared pieces: solver config, fit results, the weighted binary likelihood."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..dgp import Dataset
from ..errors import LinkDomainError, SingularDesignError
from ..links import SEPARATION_THRESHOLD, SQUASH_EPS, LinkSpec, SeparationReport

ESTIMATORS = ("mle", "latent_em", "dual_measure")
CUTOFF_RULES = ("zero", "median")

_DEFAULT_CAPS = {"mle": 100, "latent_em": 5000, "dual_measure": 500}


@dataclass(frozen=True)
class SolverConfig:
    """Tolerances and knobs shared by the three estimators.

    ``max_iter=None`` picks the estimator's own cap (100 Newton steps for
    the MLE, 5000 EM sweeps, 500 fixed-point passes for the dual fit).
    """

    max_iter: Optional[int] = None
    grad_tol: float = 1e-8
    step_tol: float = 1e-8
    max_halvings: int = 50
    separation_threshold: float = SEPARATION_THRESHOLD
    cutoff_rule: str = "zero"
    alpha_bracket: tuple[float, float] = (1e-3, 1e3)
    calibration_tol: float = 1e-10
    pin_alpha: Optional[tuple[float, float]] = None
    dual_update: str = "profiled"
    beta_init: Optional[tuple[float, ...]] = None

    def __post_init__(self):
        for name in ("grad_tol", "step_tol", "separation_threshold", "calibration_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.cutoff_rule not in CUTOFF_RULES:
            raise ValueError(f"cutoff_rule must be one of {CUTOFF_RULES}")
        if self.dual_update not in ("profiled", "alternating"):
            raise ValueError("dual_update must be 'profiled' or 'alternating'")
        lo, hi = self.alpha_bracket
        if not 0 < lo < hi < math.inf:
            raise ValueError("alpha_bracket must satisfy 0 < lo < hi < inf")
        if self.max_iter is not None and self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")

    def cap(self, estimator: str) -> int:
        return self.max_iter if self.max_iter is not None else _DEFAULT_CAPS[estimator]

    def with_(self, **kw) -> "SolverConfig":
        return replace(self, **kw)


@dataclass(frozen=True, eq=False)
class FitResult:
    estimator_tag: str
    beta_hat: np.ndarray
    alpha_hat: Optional[tuple[float, float]]
    loglik: float
    iterations: int
    converged: bool
    grad_norm: float
    separation: SeparationReport
    link: str = "logit"
    dataset_fingerprint: str = ""
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        b = np.array(self.beta_hat, dtype=float)
        b.setflags(write=False)
        object.__setattr__(self, "beta_hat", b)

    def to_json_dict(self) -> dict:
        return {
            "estimator": self.estimator_tag,
            "beta": [float(v) for v in self.beta_hat],
            "alpha": None if self.alpha_hat is None else [float(a) for a in self.alpha_hat],
            "loglik": float(self.loglik),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "grad_norm": float(self.grad_norm),
            "separation": self.separation.to_dict(),
        }


def as_link(link) -> LinkSpec:
    spec = link if isinstance(link, LinkSpec) else LinkSpec(str(link))
    if not spec.is_binary:
        raise LinkDomainError("binary estimators need a link with values in (0, 1); identity is not one")
    return spec


def check_binary_design(d: Dataset) -> None:
    if d.outcome != "binary" or not np.all((d.y == 0) | (d.y == 1)):
        raise ValueError("estimator requires binary 0/1 outcomes")
    if np.linalg.matrix_rank(d.X) < d.p:
        raise SingularDesignError(f"design matrix is rank deficient (rank < {d.p})")


@dataclass
class BinaryTerms:
    """Per-row log success/failure terms and their eta-derivatives."""

    eta: np.ndarray
    prob: np.ndarray
    pdf: np.ndarray
    l1: np.ndarray
    l0: np.ndarray
    d1: np.ndarray
    d0: np.ndarray
    dd1: np.ndarray
    dd0: np.ndarray


def binary_terms(X, beta, link: LinkSpec, clamp: bool) -> BinaryTerms:
    """Evaluate ``log p``, ``log(1-p)`` and derivatives at ``eta = X beta``.

    With ``clamp`` the probability ``prob`` is the squashed value clipped to
    ``[SQUASH_EPS, 1 - SQUASH_EPS]`` and ``pdf`` is its derivative (zero on
    clipped rows).  The log terms keep the exact stable values, which agree
    with ``log prob`` off the clip region; only rows whose exact log term
    overflows fall back to the clipped value with zero derivative.
    """
    eta = X @ beta
    parts = link.log_parts(eta)
    F = parts["cdf"]
    l1, l0 = parts["log_cdf"], parts["log_sf"]
    d1, d0 = parts["dlog_cdf"], parts["dlog_sf"]
    dd1, dd0 = parts["d2log_cdf"], parts["d2log_sf"]
    pdf = parts["pdf"]
    if clamp:
        low = F < SQUASH_EPS
        high = F > 1.0 - SQUASH_EPS
        hit = low | high
        if np.any(hit):
            pdf = np.where(hit, 0.0, pdf)
            bad = ~(np.isfinite(l1) & np.isfinite(l0) & np.isfinite(d1) & np.isfinite(d0)
                    & np.isfinite(dd1) & np.isfinite(dd0))
            if np.any(bad):
                log_eps, log_1m = math.log(SQUASH_EPS), math.log1p(-SQUASH_EPS)
                l1 = np.where(bad, np.where(low, log_eps, log_1m), l1)
                l0 = np.where(bad, np.where(low, log_1m, log_eps), l0)
                d1, d0 = np.where(bad, 0.0, d1), np.where(bad, 0.0, d0)
                dd1, dd0 = np.where(bad, 0.0, dd1), np.where(bad, 0.0, dd0)
        F = np.clip(F, SQUASH_EPS, 1.0 - SQUASH_EPS)
    return BinaryTerms(eta, F, pdf, l1, l0, d1, d0, dd1, dd0)


def weighted_loglik(X, y, t: BinaryTerms, w1: float = 1.0, w0: float = 1.0, hessian: bool = True):
    """``sum_{y=1} w1 log p + sum_{y=0} w0 log(1-p)`` with gradient and Hessian."""
    succ = y == 1
    ll = w1 * math.fsum(t.l1[succ]) + w0 * math.fsum(t.l0[~succ])
    score = np.where(succ, w1 * t.d1, w0 * t.d0)
    grad = X.T @ score
    if not hessian:
        return ll, grad
    curv = np.where(succ, w1 * t.dd1, w0 * t.dd0)
    H = (X * curv[:, None]).T @ X
    return ll, grad, H


def glm_loglik(X, y, beta, link) -> float:
    """Standard Bernoulli log-likelihood (no clamping)."""
    t = binary_terms(X, np.asarray(beta, dtype=float), as_link(link), clamp=False)
    return weighted_loglik(X, y, t, hessian=False)[0]


def newton_direction(H, grad):
    """Solve ``-H step = grad``; raises SingularDesignError if ``H`` is singular."""
    try:
        step = np.linalg.solve(-H, grad)
    except np.linalg.LinAlgError as exc:
        raise SingularDesignError("Hessian is singular") from exc
    if not np.all(np.isfinite(step)):
        raise SingularDesignError("Hessian is numerically singular")
    return step


def accepts(new: float, old: float) -> bool:
    # allow roundoff-level decreases once the ascent has stalled at the optimum
    return math.isfinite(new) and new >= old - 1e-12 * (1.0 + abs(old))


def norm_growing(history, window: int = 3) -> bool:
    if len(history) < window + 1:
        return len(history) >= 2 and history[-1] > history[0]
    tail = history[-(window + 1):]
    return all(b > a for a, b in zip(tail, tail[1:]))
