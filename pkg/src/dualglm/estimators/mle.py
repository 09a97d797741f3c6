"""Baseline Bernoulli maximum likelihood by damped Newton."""
from __future__ import annotations

import numpy as np

from ..dgp import Dataset
from ..errors import NewtonFailureError, SeparationSuspectedError
from ..links import diagnose_separation
from .common import (
    FitResult,
    SolverConfig,
    accepts,
    as_link,
    binary_terms,
    check_binary_design,
    newton_direction,
    norm_growing,
    weighted_loglik,
)

# a converged fit whose final step is still this large is walking off to infinity
_STILL_MOVING = 1e-3


def fit_mle(d: Dataset, link="logit", cfg: SolverConfig | None = None) -> FitResult:
    """Maximise ``sum y log p + (1-y) log(1-p)`` with ``p = F(x'beta)``.

    Newton steps are halved until the log-likelihood does not decrease.
    Raises ``SeparationSuspectedError`` when the iterates run away (cap hit
    with a growing norm, or a gradient-converged point that is still moving
    and sits on the probability boundary).
    """
    cfg = cfg or SolverConfig()
    spec = as_link(link)
    check_binary_design(d)
    X, y = d.X, d.y
    cap = cfg.cap("mle")

    beta = np.zeros(d.p) if cfg.beta_init is None else np.array(cfg.beta_init, dtype=float)
    t = binary_terms(X, beta, spec, clamp=False)
    ll, grad, H = weighted_loglik(X, y, t)
    norms = [float(np.max(np.abs(beta)))]
    last_step = np.inf
    converged = False
    it = 0
    while True:
        gnorm = float(np.max(np.abs(grad)))
        if gnorm <= cfg.grad_tol:
            converged = True
            break
        if it >= cap:
            break
        step = newton_direction(H, grad)
        scale = 1.0
        for _ in range(cfg.max_halvings + 1):
            cand = beta + scale * step
            t_new = binary_terms(X, cand, spec, clamp=False)
            ll_new = weighted_loglik(X, y, t_new, hessian=False)[0]
            if accepts(ll_new, ll):
                break
            scale *= 0.5
        else:
            raise NewtonFailureError(f"no ascent after {cfg.max_halvings} step halvings")
        last_step = float(np.max(np.abs(cand - beta)))
        beta, t = cand, t_new
        ll, grad, H = weighted_loglik(X, y, t)
        norms.append(float(np.max(np.abs(beta))))
        it += 1

    report = diagnose_separation(t.eta, t.prob, cfg.separation_threshold)
    runaway = (not converged and norm_growing(norms)) or (
        converged and report.separated and last_step > _STILL_MOVING
    )
    if runaway:
        raise SeparationSuspectedError(
            f"MLE diverges (|beta|_inf={norms[-1]:.3g} after {it} iterations); "
            "the data look (quasi-)separated",
            report,
            beta=beta.copy(),
            iterations=it,
        )
    return FitResult(
        estimator_tag="mle",
        beta_hat=beta,
        alpha_hat=None,
        loglik=ll,
        iterations=it,
        converged=converged,
        grad_norm=float(np.max(np.abs(grad))),
        separation=report,
        link=spec.family,
        dataset_fingerprint=d.fingerprint,
    )
