"""Binary-vs-latent fit comparison."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..dgp import Dataset
from ..errors import ComparisonInvalidError
from ..links import LinkSpec
from .common import FitResult


@dataclass(frozen=True)
class EquivalenceReport:
    beta_binary: tuple[float, ...]
    beta_latent: tuple[float, ...]
    max_abs_diff: float
    prob_path_sup_diff: float
    equivalent_at_tol: bool
    tol: float

    def to_dict(self) -> dict:
        return {
            "beta_binary": list(self.beta_binary),
            "beta_latent": list(self.beta_latent),
            "max_abs_diff": self.max_abs_diff,
            "prob_path_sup_diff": self.prob_path_sup_diff,
            "equivalent_at_tol": self.equivalent_at_tol,
            "tol": self.tol,
        }


def compare_equivalence(fb: FitResult, fl: FitResult, d: Dataset, tol: float = 0.05) -> EquivalenceReport:
    """Coefficient and fitted-probability gaps between two fits of ``d``."""
    fp = d.fingerprint
    if fb.dataset_fingerprint != fp or fl.dataset_fingerprint != fp:
        raise ComparisonInvalidError("both fits must come from the dataset being compared")
    if fb.link != fl.link:
        raise ComparisonInvalidError(f"link families differ ({fb.link} vs {fl.link})")
    bb, bl = np.asarray(fb.beta_hat), np.asarray(fl.beta_hat)
    spec = LinkSpec(fb.link)
    diff = float(np.max(np.abs(bb - bl)))
    sup = float(np.max(np.abs(spec.cdf(d.X @ bb) - spec.cdf(d.X @ bl))))
    return EquivalenceReport(
        tuple(float(v) for v in bb),
        tuple(float(v) for v in bl),
        diff,
        sup,
        diff <= tol,
        float(tol),
    )
