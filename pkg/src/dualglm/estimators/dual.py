"""Dual-measure estimator with per-side calibration exponents.

The success and failure probabilities are modelled by two separate
measures tied to the squashed linear predictor ``lam`` through

    nu_plus ** alpha_plus  = lam        (success side)
    nu_minus ** alpha_minus = 1 - lam   (failure side)

and the likelihood is ``prod nu_plus^{y} nu_minus^{1-y}``, i.e.

    l(beta) = sum_{y=1} log(lam)/alpha_plus + sum_{y=0} log(1-lam)/alpha_minus.

The exponents are re-solved from moment conditions at every iterate, and
with both exponents equal to one the model is the ordinary binary GLM.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import optimize

from ..dgp import Dataset
from ..errors import (
    CalibrationInfeasibleError,
    CalibrationPreconditionError,
    LinkDomainError,
    NewtonFailureError,
    SeparationSuspectedError,
    SingularDesignError,
)
from ..links import LinkSpec, diagnose_separation
from .common import (
    CUTOFF_RULES,
    BinaryTerms,
    FitResult,
    SolverConfig,
    accepts,
    as_link,
    binary_terms,
    check_binary_design,
    norm_growing,
    weighted_loglik,
)
from .mle import fit_mle

__all__ = [
    "DualMeasureModel",
    "CalibrationSides",
    "calibrate_alpha",
    "calibration_map",
    "calibration_sides",
    "solve_side_alpha",
    "dual_loglik",
    "fit_dual",
]


@dataclass(frozen=True, eq=False)
class DualMeasureModel:
    beta: np.ndarray
    alpha_plus: float
    alpha_minus: float
    link: LinkSpec
    cutoff_rule: str = "zero"

    def __post_init__(self):
        object.__setattr__(self, "beta", np.asarray(self.beta, dtype=float))
        object.__setattr__(self, "link", as_link(self.link))
        for name in ("alpha_plus", "alpha_minus"):
            a = float(getattr(self, name))
            if not math.isfinite(a) or a == 0.0:
                raise ValueError(f"{name} must be finite and nonzero, got {a}")
            object.__setattr__(self, name, a)
        if self.cutoff_rule not in CUTOFF_RULES:
            raise ValueError(f"cutoff_rule must be one of {CUTOFF_RULES}")


def calibrate_alpha(nu, lambda_tilde):
    """The unique real ``alpha`` with ``nu ** alpha == lambda_tilde``."""
    nu_a = np.asarray(nu, dtype=float)
    lam_a = np.asarray(lambda_tilde, dtype=float)
    for name, v in (("nu", nu_a), ("lambda_tilde", lam_a)):
        if np.any(~((v > 0.0) & (v < 1.0))):
            raise CalibrationPreconditionError(
                f"{name} must lie strictly inside (0, 1); boundary values admit no finite exponent"
            )
    alpha = np.log(lam_a) / np.log(nu_a)
    return float(alpha) if alpha.ndim == 0 else alpha


def calibration_map(values, alpha: float) -> float:
    """Mean calibrated probability ``mean(values ** (1/alpha))``; increasing in alpha."""
    values = np.asarray(values, dtype=float)
    return float(np.mean(values ** (1.0 / alpha)))


def solve_side_alpha(values, target: float, side: str, bracket=(1e-3, 1e3)) -> float:
    """Root of ``calibration_map(values, alpha) = target`` on ``bracket``."""
    values = np.asarray(values, dtype=float)
    if values.size == 0:
        raise CalibrationInfeasibleError("no observations on this side", side)
    lo, hi = bracket
    f = lambda a: calibration_map(values, a) - target
    f_lo, f_hi = f(lo), f(hi)
    if not (f_lo < 0.0 < f_hi):
        if f_lo == 0.0:
            return float(lo)
        if f_hi == 0.0:
            return float(hi)
        raise CalibrationInfeasibleError(
            f"target {target:.6g} outside the attainable range "
            f"[{f_lo + target:.6g}, {f_hi + target:.6g}] for alpha in [{lo:g}, {hi:g}]",
            side,
        )
    return float(optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500))


@dataclass(frozen=True)
class CalibrationSides:
    """Rows entering each calibration equation and the rate each must match.

    Rule ``zero``: every row enters both equations; the success measure is
    matched to ``k/n`` and the failure measure to ``(n-k)/n``.
    Rule ``median``: rows with ``lam`` above its median form the success
    side, the rest the failure side, each matched to its own empirical rate.
    ``side_of_row`` marks which measure governs each observation.
    """

    plus_rows: np.ndarray
    minus_rows: np.ndarray
    plus_target: float
    minus_target: float
    side_of_row: np.ndarray


def calibration_sides(lam, y, rule: str) -> CalibrationSides:
    lam = np.asarray(lam, dtype=float)
    y = np.asarray(y, dtype=float)
    if rule == "zero":
        every = np.ones(lam.shape, dtype=bool)
        k_rate = float(np.mean(y))
        return CalibrationSides(every, every, k_rate, 1.0 - k_rate, y == 1)
    if rule == "median":
        upper = lam > np.median(lam)
        lower = ~upper
        t_plus = float(np.mean(y[upper])) if upper.any() else math.nan
        t_minus = float(np.mean(1.0 - y[lower])) if lower.any() else math.nan
        return CalibrationSides(upper, lower, t_plus, t_minus, upper)
    raise ValueError(f"unknown cutoff rule {rule!r}")


def _solve_alphas(lam, y, cfg: SolverConfig):
    sides = calibration_sides(lam, y, cfg.cutoff_rule)
    if cfg.pin_alpha is not None:
        return tuple(float(a) for a in cfg.pin_alpha), sides
    a1 = solve_side_alpha(lam[sides.plus_rows], sides.plus_target, "nu_plus", cfg.alpha_bracket)
    a2 = solve_side_alpha(1.0 - lam[sides.minus_rows], sides.minus_target, "nu_minus", cfg.alpha_bracket)
    return (a1, a2), sides


def dual_loglik(d: Dataset, m: DualMeasureModel):
    """Dual-measure log-likelihood and its analytic gradient in beta."""
    beta = np.asarray(m.beta, dtype=float)
    if beta.shape != (d.p,) or not np.all(np.isfinite(beta)):
        raise LinkDomainError("beta must be a finite vector with one entry per column")
    t = binary_terms(d.X, beta, m.link, clamp=True)
    return weighted_loglik(d.X, d.y, t, 1.0 / m.alpha_plus, 1.0 / m.alpha_minus, hessian=False)


@dataclass
class _State:
    beta: np.ndarray
    terms: BinaryTerms
    alphas: tuple[float, float]
    sides: CalibrationSides
    ll: float
    grad: np.ndarray
    H: np.ndarray


def _evaluate(X, y, beta, spec, cfg, alphas=None) -> _State:
    t = binary_terms(X, beta, spec, clamp=True)
    sides = calibration_sides(t.prob, y, cfg.cutoff_rule)
    if alphas is None:
        alphas, sides = _solve_alphas(t.prob, y, cfg)
    a1, a2 = alphas
    ll, g, H = weighted_loglik(X, y, t, 1.0 / a1, 1.0 / a2)
    return _State(beta, t, alphas, sides, ll, g, H)


def _profiled_jacobian(X, y, s: _State) -> np.ndarray:
    """d/dbeta of grad l(beta; alpha(beta)), with alpha(beta) from the calibration equations.

    Works with ``a = 1/alpha``; each calibration equation
    ``mean(v ** a) = target`` is differentiated implicitly.
    """
    t, sides = s.terms, s.sides
    a1, a2 = 1.0 / s.alphas[0], 1.0 / s.alphas[1]
    succ = y == 1
    g1 = X[succ].T @ t.d1[succ]
    g0 = X[~succ].T @ t.d0[~succ]

    lam = t.prob[sides.plus_rows]
    dm_da = np.mean(lam**a1 * np.log(lam))
    dm_db = X[sides.plus_rows].T @ (a1 * lam ** (a1 - 1.0) * t.pdf[sides.plus_rows]) / lam.size
    da1 = -dm_db / dm_da

    mu = 1.0 - t.prob[sides.minus_rows]
    dm_da = np.mean(mu**a2 * np.log(mu))
    dm_db = X[sides.minus_rows].T @ (-a2 * mu ** (a2 - 1.0) * t.pdf[sides.minus_rows]) / mu.size
    da2 = -dm_db / dm_da
    return s.H + np.outer(g1, da1) + np.outer(g0, da2)


def _solve(J, grad):
    try:
        step = np.linalg.solve(J, -grad)
    except np.linalg.LinAlgError:
        return None
    return step if np.all(np.isfinite(step)) else None


def _per_row_calibration(s: _State, y) -> dict:
    """Per-observation exponents and link residuals under the fitted side exponents."""
    lam = s.terms.prob
    plus = s.sides.side_of_row
    a_side = np.where(plus, s.alphas[0], s.alphas[1])
    target = np.where(plus, lam, 1.0 - lam)
    nu = target ** (1.0 / a_side)
    resid = np.abs(nu**a_side - target)
    ok = (nu > 0.0) & (nu < 1.0)
    alpha_i = calibrate_alpha(nu[ok], target[ok]) if ok.any() else np.empty(0)
    return {
        "max_link_residual": float(np.max(resid)),
        "max_exponent_gap": float(np.max(np.abs(alpha_i - a_side[ok]))) if ok.any() else 0.0,
        "rows_at_boundary": int(np.count_nonzero(~ok)),
    }


def fit_dual(d: Dataset, link="logit", cfg: SolverConfig | None = None) -> FitResult:
    """Fixed-point fit of the dual-measure model.

    Each pass squashes ``x'beta`` into ``lam``, re-solves the two side
    exponents by bracketed root finding, and takes a Newton step in beta.
    The default ``dual_update="profiled"`` step differentiates through the
    exponents' dependence on beta.  ``"alternating"`` holds them fixed
    during the step.  Pinning the exponents gives plain Newton on the
    GLM likelihood.
    """
    cfg = cfg or SolverConfig()
    spec = as_link(link)
    check_binary_design(d)
    X, y = d.X, d.y
    cap = cfg.cap("dual_measure")

    if cfg.beta_init is not None:
        beta = np.array(cfg.beta_init, dtype=float)
        init = "given"
    else:
        try:
            beta = np.array(fit_mle(d, spec, cfg.with_(max_iter=None, beta_init=None)).beta_hat)
            init = "mle"
        except (SeparationSuspectedError, NewtonFailureError, SingularDesignError):
            beta = np.zeros(d.p)
            init = "zeros"

    profiled = cfg.dual_update == "profiled" and cfg.pin_alpha is None
    s = _evaluate(X, y, beta, spec, cfg)
    prev_alphas: Optional[tuple] = None
    last_step = math.inf
    norms = [float(np.max(np.abs(beta)))]
    alpha_path = []
    beta_path = [beta.copy()]
    converged = False
    it = 0
    while True:
        d_alpha = (
            math.inf if prev_alphas is None else max(abs(a - b) for a, b in zip(s.alphas, prev_alphas))
        )
        if cfg.pin_alpha is not None:
            d_alpha = 0.0
        gnorm = float(np.max(np.abs(s.grad)))
        if last_step <= cfg.step_tol and d_alpha <= cfg.step_tol and gnorm <= cfg.grad_tol:
            converged = True
            break
        if it >= cap:
            break

        step = None
        use_profile = profiled
        if profiled:
            step = _solve(_profiled_jacobian(X, y, s), s.grad)
            # degenerate profile (e.g. symmetric separated data): take the fixed-alpha step
            use_profile = step is not None
        if step is None:
            step = _solve(s.H, s.grad)
        if step is None:
            report = diagnose_separation(s.terms.eta, s.terms.prob, cfg.separation_threshold)
            if report.separated:
                raise SeparationSuspectedError(
                    "dual likelihood is flat: fitted probabilities sit on the clamp boundary",
                    report,
                    beta=s.beta.copy(),
                    iterations=it,
                )
            raise SingularDesignError("dual Newton system is singular")

        merit = float(np.linalg.norm(s.grad))
        scale = 1.0
        infeasible = None
        for _ in range(cfg.max_halvings + 1):
            cand = s.beta + scale * step
            # a trial point whose exponents cannot be calibrated counts as a rejected step
            try:
                if use_profile:
                    new = _evaluate(X, y, cand, spec, cfg)
                    new_g = float(np.linalg.norm(new.grad))
                    if new_g < merit or float(np.max(np.abs(new.grad))) <= cfg.grad_tol:
                        break
                else:
                    fixed = _evaluate(X, y, cand, spec, cfg, alphas=s.alphas)
                    if accepts(fixed.ll, s.ll):
                        new = _evaluate(X, y, cand, spec, cfg)
                        break
            except CalibrationInfeasibleError as exc:
                infeasible = exc
            scale *= 0.5
        else:
            if infeasible is not None:
                report = diagnose_separation(s.terms.eta, s.terms.prob, cfg.separation_threshold)
                if report.separated:
                    raise SeparationSuspectedError(
                        "dual fit stalled: no trial step admits calibrated exponents",
                        report,
                        beta=s.beta.copy(),
                        iterations=it,
                    ) from infeasible
                raise infeasible
            raise NewtonFailureError(f"dual Newton step failed after {cfg.max_halvings} halvings")

        alpha_path.append(s.alphas)
        last_step = float(np.max(np.abs(new.beta - s.beta)))
        prev_alphas = s.alphas
        s = new
        beta_path.append(s.beta.copy())
        norms.append(float(np.max(np.abs(s.beta))))
        it += 1

    report = diagnose_separation(s.terms.eta, s.terms.prob, cfg.separation_threshold)
    # a growing norm alone is not enough here: the alternating update can drift on regular data
    if not converged and norm_growing(norms) and report.separated:
        raise SeparationSuspectedError(
            f"dual fit diverges (|beta|_inf={norms[-1]:.3g} after {it} passes)",
            report,
            beta=s.beta.copy(),
            iterations=it,
        )

    lam = s.terms.prob
    m1 = calibration_map(lam[s.sides.plus_rows], s.alphas[0]) - s.sides.plus_target
    m2 = calibration_map(1.0 - lam[s.sides.minus_rows], s.alphas[1]) - s.sides.minus_target
    diagnostics = {
        "init": init,
        "update": "pinned" if cfg.pin_alpha is not None else cfg.dual_update,
        "cutoff_rule": cfg.cutoff_rule,
        "moment_residuals": (float(m1), float(m2)),
        "alpha_path": alpha_path,
        "beta_path": beta_path,
        **_per_row_calibration(s, y),
    }
    return FitResult(
        estimator_tag="dual_measure",
        beta_hat=s.beta,
        alpha_hat=(float(s.alphas[0]), float(s.alphas[1])),
        loglik=s.ll,
        iterations=it,
        converged=converged,
        grad_norm=float(np.max(np.abs(s.grad))),
        separation=report,
        link=spec.family,
        dataset_fingerprint=d.fingerprint,
        diagnostics=diagnostics,
    )
