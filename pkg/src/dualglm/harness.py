"""Nested-path convergence studies and the equivalence / scaling experiments.

Almost-sure convergence cannot be observed in finite samples.  The proxy
used here follows one nested data path through increasing sample sizes
and records the tail supremum of the coefficient error, then reports the
fraction of independent paths whose tail supremum is below a tolerance.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dgp import DgpSpec, default_link, extend, generate
from .errors import DualGLMError
from .estimators import ESTIMATORS, SolverConfig, compare_equivalence, fit, fit_latent_em, fit_mle
from .estimators.equivalence import EquivalenceReport

log = logging.getLogger(__name__)

STUDY_CSV_COLUMNS = ("dgp_id", "estimator", "n", "error", "sup_tail", "seed", "converged")


def path_seed(base_seed: int, dgp_id: str, replication: int) -> int:
    """Seed of one data path; a pure function of the grid point and replication."""
    ss = np.random.SeedSequence([int(base_seed), int(dgp_id, 16), int(replication)])
    return int(ss.generate_state(1, np.uint64)[0] >> np.uint64(1))


def _coef_error(beta_hat, beta_true, norm: str) -> float:
    diff = np.asarray(beta_hat) - np.asarray(beta_true)
    if norm == "inf":
        return float(np.max(np.abs(diff)))
    if norm == "2":
        return float(np.linalg.norm(diff))
    raise ValueError(f"norm must be 'inf' or '2', got {norm!r}")


def _tail_sup(errors: Sequence[float]) -> list[float]:
    out = [0.0] * len(errors)
    running = -math.inf
    for i in range(len(errors) - 1, -1, -1):
        e = errors[i]
        running = math.inf if math.isnan(e) else max(running, e)
        out[i] = running
    return out


def _num(v: float):
    return v if math.isfinite(v) else repr(float(v))


def _unnum(v) -> float:
    return float(v)


@dataclass(frozen=True)
class ConvergenceTrace:
    sample_sizes: tuple[int, ...]
    errors: tuple[float, ...]
    sup_tail: tuple[float, ...]
    converged: tuple[bool, ...]
    estimator_tag: str
    dgp_id: str
    seed: int
    link: str = ""
    replication: int = 0
    failures: dict = field(default_factory=dict)

    def sup_tail_at(self, n: int) -> float:
        try:
            return self.sup_tail[self.sample_sizes.index(n)]
        except ValueError:
            raise ValueError(f"sample size {n} is not on this trace") from None

    def to_dict(self) -> dict:
        return {
            "sample_sizes": list(self.sample_sizes),
            "errors": [_num(e) for e in self.errors],
            "sup_tail": [_num(e) for e in self.sup_tail],
            "converged": list(self.converged),
            "estimator": self.estimator_tag,
            "dgp_id": self.dgp_id,
            "seed": self.seed,
            "link": self.link,
            "replication": self.replication,
            "failures": {str(k): v for k, v in sorted(self.failures.items())},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ConvergenceTrace":
        return cls(
            tuple(d["sample_sizes"]),
            tuple(_unnum(e) for e in d["errors"]),
            tuple(_unnum(e) for e in d["sup_tail"]),
            tuple(bool(c) for c in d["converged"]),
            d["estimator"],
            d["dgp_id"],
            int(d["seed"]),
            d.get("link", ""),
            int(d.get("replication", 0)),
            {int(k): v for k, v in d.get("failures", {}).items()},
        )


def run_path(
    dgp: DgpSpec,
    estimator_tag: str,
    sizes: Sequence[int],
    seed: int,
    link: Optional[str] = None,
    cfg: Optional[SolverConfig] = None,
    norm: str = "inf",
    replication: int = 0,
) -> ConvergenceTrace:
    """Fit ``estimator_tag`` along one nested path; failed fits become NaN errors."""
    sizes = [int(n) for n in sizes]
    if not sizes or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ValueError("sizes must be a nonempty strictly increasing list")
    if estimator_tag not in ESTIMATORS:
        raise ValueError(f"unknown estimator {estimator_tag!r}")
    if dgp.outcome != "binary":
        raise ValueError("the convergence harness fits binary outcomes only")
    link = link or default_link(dgp)

    errors, converged, failures = [], [], {}
    d = None
    for n in sizes:
        d = generate(dgp, n, seed) if d is None else extend(d, n - d.n, seed)
        try:
            res = fit(estimator_tag, d, link, cfg)
        except (DualGLMError, np.linalg.LinAlgError) as exc:
            errors.append(math.nan)
            converged.append(False)
            failures[n] = f"{type(exc).__name__}: {exc}"
            continue
        errors.append(_coef_error(res.beta_hat, dgp.beta_true, norm))
        converged.append(bool(res.converged))
    return ConvergenceTrace(
        tuple(sizes),
        tuple(errors),
        tuple(_tail_sup(errors)),
        tuple(converged),
        estimator_tag,
        dgp.dgp_id,
        int(seed),
        link,
        int(replication),
        failures,
    )


@dataclass
class StudyResult:
    traces: list[ConvergenceTrace]
    metadata: dict = field(default_factory=dict)

    def select(self, dgp_id: Optional[str] = None, estimator: Optional[str] = None):
        return [
            t
            for t in self.traces
            if (dgp_id is None or t.dgp_id == dgp_id) and (estimator is None or t.estimator_tag == estimator)
        ]

    def convergence_fraction(
        self, n: int, eps: float, dgp_id: Optional[str] = None, estimator: Optional[str] = None
    ) -> float:
        """Share of selected paths whose tail-sup error from size ``n`` on is at most ``eps``."""
        traces = self.select(dgp_id, estimator)
        if not traces:
            raise ValueError("no traces match the selection")
        hits = sum(t.sup_tail_at(n) <= eps for t in traces)
        return hits / len(traces)

    def content(self) -> list[dict]:
        """Scientific content without wall-clock metadata."""
        return [t.to_dict() for t in self.traces]


def _run_unit(args):
    dgp, tag, link, sizes, seed, cfg, norm, rep = args
    return run_path(dgp, tag, sizes, seed, link, cfg, norm, rep)


def run_study(
    grid: Sequence[tuple],
    sizes: Sequence[int],
    replications: int,
    base_seed: int,
    cfg: Optional[SolverConfig] = None,
    norm: str = "inf",
    workers: int = 1,
    progress=None,
) -> StudyResult:
    """Run ``replications`` paths per grid point.

    Grid entries are ``(DgpSpec, estimator_tag)`` or ``(DgpSpec, estimator_tag, link)``.
    Path seeds depend only on ``(base_seed, dgp, replication)``, so every
    estimator at a grid point sees the same data.  Results are sorted, so
    grid order and worker count do not change the output.
    """
    if replications < 1:
        raise ValueError("replications must be >= 1")
    units = []
    for entry in grid:
        dgp, tag = entry[0], entry[1]
        link = entry[2] if len(entry) > 2 else default_link(dgp)
        for rep in range(replications):
            seed = path_seed(base_seed, dgp.dgp_id, rep)
            units.append((dgp, tag, link, tuple(sizes), seed, cfg, norm, rep))

    t0 = time.perf_counter()
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            traces = list(pool.map(_run_unit, units, chunksize=max(1, len(units) // (4 * workers))))
    else:
        traces = [_run_unit(u) for u in units]
    if progress is not None:
        for t in traces:
            progress(t)
    traces.sort(key=lambda t: (t.dgp_id, t.estimator_tag, t.link, t.replication))
    meta = {
        "grid": sorted(
            {(e[0].dgp_id, e[1], e[2] if len(e) > 2 else default_link(e[0])) for e in grid}
        ),
        "dgps": {e[0].dgp_id: e[0].to_dict() for e in grid},
        "replications": replications,
        "base_seed": base_seed,
        "sizes": list(sizes),
        "norm": norm,
        "wall_time_s": time.perf_counter() - t0,
    }
    return StudyResult(traces, meta)


def write_study(result: StudyResult, out_dir, csv_name: str = "study.csv") -> list[Path]:
    """One JSON file per trace under ``traces/`` plus the study-level CSV."""
    out = Path(out_dir)
    tdir = out / "traces"
    tdir.mkdir(parents=True, exist_ok=True)
    written = []
    for t in result.traces:
        p = tdir / f"{t.dgp_id}_{t.estimator_tag}_{t.link}_{t.replication:04d}.json"
        p.write_text(json.dumps(t.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
        written.append(p)
    p = out / csv_name
    with open(p, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(STUDY_CSV_COLUMNS)
        for t in result.traces:
            for n, e, s, c in zip(t.sample_sizes, t.errors, t.sup_tail, t.converged):
                w.writerow([t.dgp_id, t.estimator_tag, n, repr(e), repr(s), t.seed, int(c)])
    written.append(p)
    return written


def read_traces(out_dir) -> list[ConvergenceTrace]:
    paths = sorted((Path(out_dir) / "traces").glob("*.json"))
    return [ConvergenceTrace.from_dict(json.loads(p.read_text(encoding="utf-8"))) for p in paths]


# ------------------------------------------------------------ experiments

@dataclass
class EquivalenceStudy:
    error_family: str
    n: int
    reports: list[EquivalenceReport]
    seeds: list[int]
    failures: dict = field(default_factory=dict)

    @property
    def median_max_abs_diff(self) -> float:
        if not self.reports:
            return math.nan
        return float(np.median([r.max_abs_diff for r in self.reports]))

    def to_dict(self) -> dict:
        return {
            "error_family": self.error_family,
            "n": self.n,
            "median_max_abs_diff": _num(self.median_max_abs_diff),
            "reports": [r.to_dict() for r in self.reports],
            "seeds": self.seeds,
            "failures": {str(k): v for k, v in sorted(self.failures.items())},
        }


def equivalence_experiment(
    error_family: str,
    n: int,
    replications: int,
    base_seed: int,
    beta=(0.5, 1.0),
    tol: float = 0.05,
    cfg: Optional[SolverConfig] = None,
) -> EquivalenceStudy:
    """Probit MLE vs probit latent EM on data with ``error_family`` errors."""
    if n < 100:
        raise ValueError("equivalence_experiment needs n >= 100")
    if error_family not in ("normal", "gumbel"):
        raise ValueError("error_family must be 'normal' or 'gumbel'")
    dgp = DgpSpec(tuple(beta), error_family=error_family)
    reports, seeds, failures = [], [], {}
    for rep in range(replications):
        seed = path_seed(base_seed, dgp.dgp_id, rep)
        d = generate(dgp, n, seed)
        try:
            fb = fit_mle(d, "probit", cfg)
            fl = fit_latent_em(d, "probit", cfg)
        except DualGLMError as exc:
            failures[rep] = f"{type(exc).__name__}: {exc}"
            continue
        reports.append(compare_equivalence(fb, fl, d, tol))
        seeds.append(seed)
    return EquivalenceStudy(error_family, n, reports, seeds, failures)


@dataclass
class ScalingSummary:
    n: int
    coefficient: str
    ratios: list[float]
    logit: list[float]
    probit: list[float]
    seeds: list[int]
    failures: dict = field(default_factory=dict)

    @property
    def mean_ratio(self) -> float:
        return float(np.mean(self.ratios)) if self.ratios else math.nan

    @property
    def interval90(self) -> tuple[float, float]:
        if not self.ratios:
            return (math.nan, math.nan)
        lo, hi = np.quantile(self.ratios, [0.05, 0.95])
        return float(lo), float(hi)

    def to_dict(self) -> dict:
        lo, hi = self.interval90
        return {
            "n": self.n,
            "coefficient": self.coefficient,
            "mean_ratio": _num(self.mean_ratio),
            "interval90": [_num(lo), _num(hi)],
            "ratios": self.ratios,
            "seeds": self.seeds,
            "failures": {str(k): v for k, v in sorted(self.failures.items())},
        }


def scaling_experiment(
    n: int,
    replications: int,
    base_seed: int,
    beta=(0.5, 1.0),
    cfg: Optional[SolverConfig] = None,
) -> ScalingSummary:
    """Logit-to-probit coefficient ratio on probit-generated data.

    The first slope is compared; an intercept-only design compares intercepts.
    """
    if n < 1000:
        raise ValueError("scaling_experiment needs n >= 1000")
    dgp = DgpSpec(tuple(beta), error_family="normal")
    j = 1 if dgp.p > 1 else 0
    out = ScalingSummary(n, "slope" if j else "intercept", [], [], [], [])
    for rep in range(replications):
        seed = path_seed(base_seed, dgp.dgp_id, rep)
        d = generate(dgp, n, seed)
        try:
            bl = fit_mle(d, "logit", cfg).beta_hat[j]
            bp = fit_mle(d, "probit", cfg).beta_hat[j]
        except DualGLMError as exc:
            out.failures[rep] = f"{type(exc).__name__}: {exc}"
            continue
        out.logit.append(float(bl))
        out.probit.append(float(bp))
        out.ratios.append(float(bl / bp))
        out.seeds.append(seed)
    return out
