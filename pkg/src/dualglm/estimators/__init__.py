"""Baseline MLE, latent-threshold EM and the dual-measure estimator."""
from .common import ESTIMATORS, FitResult, SolverConfig, glm_loglik
from .dual import (
    CalibrationSides,
    DualMeasureModel,
    calibrate_alpha,
    calibration_map,
    calibration_sides,
    dual_loglik,
    fit_dual,
    solve_side_alpha,
)
from .equivalence import EquivalenceReport, compare_equivalence
from .latent import conditional_latent_mean, fit_latent_em
from .mle import fit_mle

FITTERS = {"mle": fit_mle, "latent_em": fit_latent_em, "dual_measure": fit_dual}


def fit(tag: str, d, link, cfg: SolverConfig | None = None) -> FitResult:
    """Dispatch to the estimator named by ``tag``."""
    try:
        fitter = FITTERS[tag]
    except KeyError:
        raise ValueError(f"unknown estimator {tag!r}; expected one of {ESTIMATORS}") from None
    return fitter(d, link, cfg)


__all__ = [
    "ESTIMATORS",
    "FITTERS",
    "CalibrationSides",
    "DualMeasureModel",
    "EquivalenceReport",
    "FitResult",
    "SolverConfig",
    "calibrate_alpha",
    "calibration_map",
    "calibration_sides",
    "compare_equivalence",
    "conditional_latent_mean",
    "dual_loglik",
    "fit",
    "fit_dual",
    "fit_latent_em",
    "fit_mle",
    "glm_loglik",
    "solve_side_alpha",
]
