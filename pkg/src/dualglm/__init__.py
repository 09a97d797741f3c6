"""Dual-measure GLM M-estimation and nested-path convergence studies."""
from .dgp import Dataset, DgpSpec, extend, generate, generate_path, load_csv, write_csv
from .estimators import (
    DualMeasureModel,
    FitResult,
    SolverConfig,
    calibrate_alpha,
    compare_equivalence,
    dual_loglik,
    fit_dual,
    fit_latent_em,
    fit_mle,
)
from .links import LinkSpec, check_symmetry, diagnose_separation, inverse_link, link_eval, squash
from .measure import (
    SignedMeasure,
    finite_subcover,
    hahn_decompose,
    jordan_decompose,
    normalize,
    total_variation,
)

__version__ = "0.1.0"
