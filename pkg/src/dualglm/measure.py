"""Finite atomic signed measures.

A measure here is a finite list of labelled atoms with extended-real
weights.  Every set function is evaluated exactly on the power set of the
atoms, which is what makes the Hahn and Jordan decompositions computable.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

from .errors import DataParseError, NormalizationUndefinedError, StructuralViolationError

__all__ = [
    "SignedMeasure",
    "HahnDecomposition",
    "JordanPair",
    "ProbabilityMeasure",
    "hahn_decompose",
    "jordan_decompose",
    "total_variation",
    "normalize",
    "finite_subcover",
    "positive_fraction",
    "read_measure_file",
    "write_measure_file",
]


def _check_weight(label, w) -> float:
    try:
        w = float(w)
    except (TypeError, ValueError):
        raise StructuralViolationError(f"atom {label!r}: weight {w!r} is not a real number")
    if math.isnan(w):
        raise StructuralViolationError(f"atom {label!r}: weight is NaN")
    return w


@dataclass(frozen=True)
class SignedMeasure:
    """Ordered atoms ``(label, weight)``; weights may be ``±inf`` but not both."""

    atoms: tuple[tuple[str, float], ...]

    def __post_init__(self):
        atoms = tuple((str(lab), _check_weight(lab, w)) for lab, w in self.atoms)
        if not atoms:
            raise StructuralViolationError("a measure needs at least one atom")
        labels = [lab for lab, _ in atoms]
        if len(set(labels)) != len(labels):
            dup = sorted({lab for lab in labels if labels.count(lab) > 1})
            raise StructuralViolationError(f"duplicate atom labels: {dup}")
        weights = [w for _, w in atoms]
        if math.inf in weights and -math.inf in weights:
            raise StructuralViolationError(
                "signed measure takes both +inf and -inf; the Jordan decomposition is undefined"
            )
        object.__setattr__(self, "atoms", atoms)

    @classmethod
    def from_weights(cls, weights: Iterable[float], labels: Iterable[str] | None = None):
        weights = list(weights)
        if labels is None:
            labels = [f"a{i}" for i in range(len(weights))]
        return cls(tuple(zip(labels, weights)))

    @classmethod
    def from_mapping(cls, mapping: Mapping[str, float]):
        return cls(tuple(mapping.items()))

    @property
    def labels(self) -> list[str]:
        return [lab for lab, _ in self.atoms]

    @property
    def weights(self) -> list[float]:
        return [w for _, w in self.atoms]

    def __len__(self):
        return len(self.atoms)

    def measure_of(self, indices: Iterable[int]) -> float:
        """Measure of the set made of the given atom indices."""
        return math.fsum(self.atoms[i][1] for i in indices)


@dataclass(frozen=True)
class HahnDecomposition:
    positive_set: frozenset[int]
    negative_set: frozenset[int]


@dataclass(frozen=True)
class JordanPair:
    """Mutually singular nonnegative parts; only atoms with positive mass are stored."""

    nu_plus: dict[str, float]
    nu_minus: dict[str, float]

    def mass(self, labels: Iterable[str] | None = None) -> tuple[float, float]:
        """Return ``(nu_plus(A), nu_minus(A))``; all atoms when ``labels`` is None."""
        if labels is None:
            return math.fsum(self.nu_plus.values()), math.fsum(self.nu_minus.values())
        labels = list(labels)
        return (
            math.fsum(self.nu_plus.get(lab, 0.0) for lab in labels),
            math.fsum(self.nu_minus.get(lab, 0.0) for lab in labels),
        )


@dataclass(frozen=True)
class ProbabilityMeasure:
    atoms: tuple[tuple[str, float], ...]
    total: float

    def as_dict(self) -> dict[str, float]:
        return dict(self.atoms)


def hahn_decompose(m: SignedMeasure) -> HahnDecomposition:
    """Split atoms into a positive and a negative set.

    Zero-weight atoms go to the positive set.
    """
    pos = frozenset(i for i, (_, w) in enumerate(m.atoms) if w >= 0)
    neg = frozenset(range(len(m))) - pos
    return HahnDecomposition(pos, neg)


def jordan_decompose(m: SignedMeasure) -> JordanPair:
    plus = {lab: w for lab, w in m.atoms if w > 0}
    minus = {lab: -w for lab, w in m.atoms if w < 0}
    return JordanPair(plus, minus)


def total_variation(m: SignedMeasure) -> float:
    if any(math.isinf(w) for w in m.weights):
        return math.inf
    return math.fsum(abs(w) for w in m.weights)


def normalize(m: SignedMeasure) -> ProbabilityMeasure:
    """Probability measure proportional to ``|m|``."""
    tv = total_variation(m)
    if not math.isfinite(tv) or tv <= 0.0:
        raise NormalizationUndefinedError(f"total variation is {tv}; cannot normalise")
    atoms = tuple((lab, abs(w) / tv) for lab, w in m.atoms)
    return ProbabilityMeasure(atoms, math.fsum(w for _, w in atoms))


def positive_fraction(m: SignedMeasure) -> float:
    """Share of the total variation carried by the positive part.

    Finite-algebra form of the bound ``nu_plus / |nu| <= 1``.
    """
    tv = total_variation(m)
    if not math.isfinite(tv) or tv <= 0.0:
        raise NormalizationUndefinedError(f"total variation is {tv}")
    plus, _ = jordan_decompose(m).mass()
    return plus / tv


def finite_subcover(weights: Iterable[float]) -> set[int]:
    """Indices of the finite entries; their union has finite measure."""
    weights = [float(w) for w in weights]
    if not weights:
        raise StructuralViolationError("weight list is empty")
    return {i for i, w in enumerate(weights) if math.isfinite(w)}


def read_measure_file(path) -> SignedMeasure:
    """Parse ``label<TAB>weight`` lines.  Blank lines and ``#`` comments are skipped."""
    atoms = []
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.rstrip("\n").split("\t")
        if len(parts) != 2:
            raise DataParseError("expected 'label<TAB>weight'", row=lineno)
        label, raw = parts[0].strip(), parts[1].strip()
        try:
            w = float(raw)
        except ValueError:
            raise DataParseError(f"weight {raw!r} is not a number", row=lineno, column="weight")
        if math.isnan(w):
            raise DataParseError("NaN weights are not allowed", row=lineno, column="weight")
        atoms.append((label, w))
    if not atoms:
        raise DataParseError("measure file has no atoms")
    try:
        return SignedMeasure(tuple(atoms))
    except StructuralViolationError as exc:
        raise DataParseError(str(exc)) from exc


def write_measure_file(m: SignedMeasure, path) -> None:
    lines = [f"{lab}\t{w!r}" for lab, w in m.atoms]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
