"""Seeded data generation for ``y* = X beta + eps`` with optional dependence.

Randomness is counter based: the path is cut into fixed blocks of
``BLOCK`` rows and block ``b`` of a segment seeded with ``s`` draws from
``SeedSequence([s, b])``.  A row's draws therefore never depend on how
many rows are requested, which is what makes nested paths (``extend``)
bit-identical to one-shot generation.
"""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import CannotExtendError, DataParseError, InsufficientDataError

__all__ = [
    "COVARIATES",
    "ERROR_FAMILIES",
    "DEPENDENCE",
    "DgpSpec",
    "Dataset",
    "generate",
    "generate_path",
    "extend",
    "load_csv",
    "write_csv",
    "default_link",
]

COVARIATES = ("normal", "uniform", "binary")
ERROR_FAMILIES = ("logistic", "normal", "gumbel", "mixture")
DEPENDENCE = ("iid", "ar1", "heteroskedastic")
OUTCOMES = ("binary", "continuous")
BLOCK = 256

_DEFAULT_LINK = {"logistic": "logit", "normal": "probit", "gumbel": "cloglog", "mixture": "probit"}


@dataclass(frozen=True)
class DgpSpec:
    """Generating process for one simulated design.

    ``covariates`` lists one distribution per non-intercept column.  A
    single entry is broadcast to every slope.  The heteroskedastic scale is
    ``hetero_intercept + hetero_slope * x1``, floored at 5% of the intercept.
    The mixture draws ``N(mixture_mean, mixture_scale**2)`` with probability
    ``mixture_weight`` and ``N(0, 1)`` otherwise.
    """

    beta_true: tuple[float, ...]
    covariates: tuple[str, ...] = ("normal",)
    error_family: str = "normal"
    dependence: str = "iid"
    rho: float = 0.0
    hetero_intercept: float = 1.0
    hetero_slope: float = 0.5
    mixture_weight: float = 0.1
    mixture_mean: float = 0.0
    mixture_scale: float = 3.0
    outcome: str = "binary"

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta_true)
        if not beta or not all(math.isfinite(b) for b in beta):
            raise ValueError("beta_true must be a nonempty finite vector")
        object.__setattr__(self, "beta_true", beta)
        cov = tuple(self.covariates)
        n_slopes = len(beta) - 1
        if n_slopes == 0:
            cov = ()
        elif len(cov) == 1 and n_slopes > 1:
            cov = cov * n_slopes
        if len(cov) != n_slopes:
            raise ValueError(f"need {n_slopes} covariate specs, got {len(cov)}")
        for c in cov:
            if c not in COVARIATES:
                raise ValueError(f"unknown covariate distribution {c!r}")
        object.__setattr__(self, "covariates", cov)
        if self.error_family not in ERROR_FAMILIES:
            raise ValueError(f"unknown error family {self.error_family!r}")
        if self.dependence not in DEPENDENCE:
            raise ValueError(f"unknown dependence {self.dependence!r}")
        if self.outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {self.outcome!r}")
        if not -1.0 < self.rho < 1.0:
            raise ValueError("|rho| must be < 1")
        if not 0.0 < self.mixture_weight < 1.0:
            raise ValueError("mixture_weight must be in (0, 1)")
        if self.mixture_scale <= 0 or self.hetero_intercept <= 0:
            raise ValueError("scales must be positive")
        if self.dependence == "heteroskedastic" and n_slopes == 0:
            raise ValueError("heteroskedastic errors need at least one covariate")

    @property
    def p(self) -> int:
        return len(self.beta_true)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["beta_true"] = list(self.beta_true)
        d["covariates"] = list(self.covariates)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DgpSpec":
        d = dict(d)
        d["beta_true"] = tuple(d["beta_true"])
        d["covariates"] = tuple(d.get("covariates", ()) or ("normal",))
        return cls(**d)

    @property
    def dgp_id(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def default_link(dgp: DgpSpec) -> str:
    """Link under which a binary outcome from ``dgp`` is correctly specified (iid case)."""
    return _DEFAULT_LINK[dgp.error_family]


@dataclass(frozen=True, eq=False)
class Dataset:
    X: np.ndarray
    y: np.ndarray
    y_star: Optional[np.ndarray] = None
    seed: Optional[int] = None
    dgp: Optional[DgpSpec] = None
    segments: tuple[tuple[int, int], ...] = field(default=())
    outcome: str = "binary"

    def __post_init__(self):
        for name in ("X", "y", "y_star"):
            arr = getattr(self, name)
            if arr is not None:
                arr = np.array(arr, dtype=float)
                arr.setflags(write=False)
                object.__setattr__(self, name, arr)
        n, p = self.X.shape
        if self.y.shape != (n,):
            raise ValueError("y must have one entry per row of X")
        if n < p:
            raise InsufficientDataError(f"n={n} rows < p={p} columns")
        if self.outcome == "binary" and not np.all((self.y == 0) | (self.y == 1)):
            raise ValueError("binary outcomes must be exactly 0 or 1")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    @property
    def is_external(self) -> bool:
        return self.dgp is None

    @property
    def fingerprint(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.X).tobytes())
        h.update(np.ascontiguousarray(self.y).tobytes())
        return h.hexdigest()[:16]

    def head(self, n: int) -> "Dataset":
        """First ``n`` rows; keeps the generating spec."""
        ys = None if self.y_star is None else self.y_star[:n]
        segs = tuple(s for s in self.segments if s[0] < n)
        return Dataset(self.X[:n], self.y[:n], ys, self.seed, self.dgp, segs, self.outcome)


# ------------------------------------------------------------ generation

def _block_draws(dgp: DgpSpec, seed: int, block: int):
    rng = np.random.default_rng(np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, block]))
    cols = []
    for kind in dgp.covariates:
        if kind == "normal":
            cols.append(rng.standard_normal(BLOCK))
        elif kind == "uniform":
            cols.append(rng.uniform(-1.0, 1.0, BLOCK))
        else:
            cols.append((rng.random(BLOCK) < 0.5).astype(float))
    fam = dgp.error_family
    if fam == "normal":
        u = rng.standard_normal(BLOCK)
    elif fam == "logistic":
        u = rng.logistic(size=BLOCK)
    elif fam == "gumbel":
        u = rng.gumbel(size=BLOCK)
    else:
        z = rng.standard_normal(BLOCK)
        pick = rng.random(BLOCK) < dgp.mixture_weight
        u = np.where(pick, dgp.mixture_mean + dgp.mixture_scale * z, z)
    Z = np.column_stack(cols) if cols else np.empty((BLOCK, 0))
    return Z, u


def _row_draws(dgp: DgpSpec, segments, n: int):
    Z = np.empty((n, dgp.p - 1))
    u = np.empty(n)
    bounds = [s[0] for s in segments] + [n]
    for (start, seed), stop in zip(segments, bounds[1:]):
        if stop <= start:
            continue
        # row r of the path uses offset (r - start) within its segment's stream
        b0, b1 = 0, (stop - start - 1) // BLOCK
        for b in range(b0, b1 + 1):
            zb, ub = _block_draws(dgp, seed, b)
            lo = start + b * BLOCK
            hi = min(lo + BLOCK, stop)
            Z[lo:hi] = zb[: hi - lo]
            u[lo:hi] = ub[: hi - lo]
    return Z, u


def _errors(dgp: DgpSpec, Z: np.ndarray, u: np.ndarray) -> np.ndarray:
    if dgp.dependence == "iid":
        return u
    if dgp.dependence == "heteroskedastic":
        scale = dgp.hetero_intercept + dgp.hetero_slope * Z[:, 0]
        scale = np.maximum(scale, 0.05 * dgp.hetero_intercept)
        return scale * u
    rho = dgp.rho
    c = math.sqrt(1.0 - rho * rho)
    eps = np.empty_like(u)
    prev = 0.0
    for i, ui in enumerate(u):
        prev = ui if i == 0 else rho * prev + c * ui
        eps[i] = prev
    return eps


def generate_path(dgp: DgpSpec, segments: Sequence[tuple[int, int]], n: int) -> Dataset:
    """Rows ``0..n-1`` of the path whose segment ``(start, seed)`` pairs are given.

    Segments must start at 0 and have strictly increasing starts.
    """
    segments = tuple((int(a), int(s)) for a, s in segments)
    if not segments or segments[0][0] != 0:
        raise ValueError("the first segment must start at row 0")
    if any(b[0] <= a[0] for a, b in zip(segments, segments[1:])):
        raise ValueError("segment starts must be strictly increasing")
    if n < dgp.p:
        raise InsufficientDataError(f"n={n} < p={dgp.p}")
    Z, u = _row_draws(dgp, segments, n)
    X = np.column_stack([np.ones(n), Z])
    eps = _errors(dgp, Z, u)
    y_star = X @ np.asarray(dgp.beta_true) + eps
    y = (y_star > 0).astype(float) if dgp.outcome == "binary" else y_star.copy()
    return Dataset(X, y, y_star, segments[0][1], dgp, segments, dgp.outcome)


def generate(dgp: DgpSpec, n: int, seed: int) -> Dataset:
    return generate_path(dgp, [(0, seed)], n)


def extend(d: Dataset, m: int, seed: int) -> Dataset:
    """Append ``m`` rows drawn from ``seed``; the first ``d.n`` rows are unchanged."""
    if d.dgp is None:
        raise CannotExtendError("dataset was loaded from a file and carries no generating spec")
    if m <= 0:
        raise ValueError("m must be positive")
    segs = list(d.segments)
    if segs[-1][1] != seed:
        segs.append((d.n, int(seed)))
    return generate_path(d.dgp, segs, d.n + m)


# ------------------------------------------------------------------- csv

def write_csv(d: Dataset, path) -> None:
    """Write ``intercept, x1.., y[, y_star]`` with round-trip float formatting."""
    header = ["intercept"] + [f"x{j}" for j in range(1, d.p)] + ["y"]
    if d.y_star is not None:
        header.append("y_star")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i in range(d.n):
            row = [repr(float(v)) for v in d.X[i]] + [repr(float(d.y[i]))]
            if d.y_star is not None:
                row.append(repr(float(d.y_star[i])))
            w.writerow(row)


def load_csv(path, outcome: str = "binary") -> Dataset:
    """Load an external dataset; the outcome column must be named ``y``.

    An intercept is prepended unless a column named ``intercept``/``const``
    is present, in which case it becomes column 0.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataParseError("file is empty")
    header = [h.strip() for h in rows[0]]
    if "y" not in header:
        raise DataParseError("no outcome column named 'y'", row=1)
    if len(set(header)) != len(header):
        raise DataParseError("duplicate column names", row=1)
    data = []
    for r, raw in enumerate(rows[1:], start=2):
        if not raw or all(not c.strip() for c in raw):
            continue
        if len(raw) != len(header):
            raise DataParseError(f"expected {len(header)} fields, got {len(raw)}", row=r)
        vals = []
        for col, cell in zip(header, raw):
            try:
                v = float(cell)
            except ValueError:
                raise DataParseError(f"non-numeric value {cell!r}", row=r, column=col)
            if not math.isfinite(v):
                raise DataParseError(f"non-finite value {cell!r}", row=r, column=col)
            vals.append(v)
        if outcome == "binary" and vals[header.index("y")] not in (0.0, 1.0):
            raise DataParseError(
                f"binary outcome must be 0 or 1, got {raw[header.index('y')]!r}", row=r, column="y"
            )
        data.append(vals)
    if not data:
        raise DataParseError("file has a header but no data rows")
    A = np.array(data)
    y = A[:, header.index("y")]
    y_star = A[:, header.index("y_star")] if "y_star" in header else None
    icol = next((j for j, h in enumerate(header) if h.lower() in ("intercept", "const")), None)
    cov = [j for j, h in enumerate(header) if h not in ("y", "y_star") and j != icol]
    if icol is not None:
        X = A[:, [icol] + cov]
        if not np.all(X[:, 0] == 1.0):
            raise DataParseError("intercept column must be all ones", column=header[icol])
    else:
        X = np.column_stack([np.ones(len(A)), A[:, cov]])
    try:
        return Dataset(X, y, y_star, None, None, (), outcome)
    except (ValueError, InsufficientDataError) as exc:
        raise DataParseError(str(exc)) from exc
