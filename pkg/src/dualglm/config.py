"""Flat ``key = value`` run configuration with dotted section keys.

Precedence is command-line flags over file values over defaults.  The
effective configuration echoes in the same format and re-parses to an
identical ``RunConfig``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from types import MappingProxyType
from typing import Any, Callable, Mapping, Optional

from .dgp import COVARIATES, DEPENDENCE, ERROR_FAMILIES, OUTCOMES
from .errors import ConfigError
from .estimators import ESTIMATORS
from .estimators.common import CUTOFF_RULES
from .links import FAMILIES

COMMANDS = ("generate", "fit", "decompose", "study", "equivalence", "scaling")


def _int(s: str) -> int:
    return int(s.strip())


def _float(s: str) -> float:
    v = float(s.strip())
    if math.isnan(v):
        raise ValueError("nan")
    return v


def _str(s: str) -> str:
    return s.strip()


def _list(item: Callable) -> Callable:
    def parse(s: str):
        parts = [p for p in (x.strip() for x in s.split(",")) if p]
        if not parts:
            raise ValueError("empty list")
        return tuple(item(p) for p in parts)

    parse.__name__ = f"list of {item.__name__.lstrip('_')}"
    return parse


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, tuple):
        return ",".join(_fmt(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


@dataclass(frozen=True)
class _Key:
    parse: Callable[[str], Any]
    default: Any
    choices: Optional[tuple] = None
    positive: bool = False
    optional: bool = False


SCHEMA: dict[str, _Key] = {
    "command": _Key(_str, None, COMMANDS),
    "seed": _Key(_int, 0),
    "out": _Key(_str, "out"),
    "data.path": _Key(_str, None, optional=True),
    "data.outcome": _Key(_str, "binary", OUTCOMES),
    "measure.path": _Key(_str, None, optional=True),
    "fit.estimator": _Key(_str, "mle", ESTIMATORS),
    # "auto" means the DGP's own link for simulations and logit for data files
    "fit.link": _Key(_str, "auto", ("auto",) + FAMILIES),
    "fit.cutoff": _Key(_str, "zero", CUTOFF_RULES),
    "fit.max_iter": _Key(_int, 0),
    "dgp.beta": _Key(_list(_float), (0.5, 1.0)),
    "dgp.covariates": _Key(_list(_str), ("normal",)),
    "dgp.errors": _Key(_str, "normal", ERROR_FAMILIES),
    "dgp.dependence": _Key(_str, "iid", DEPENDENCE),
    "dgp.rho": _Key(_float, 0.0),
    "dgp.hetero_intercept": _Key(_float, 1.0),
    "dgp.hetero_slope": _Key(_float, 0.5),
    "dgp.mixture_weight": _Key(_float, 0.1),
    "dgp.mixture_mean": _Key(_float, 0.0),
    "dgp.mixture_scale": _Key(_float, 3.0),
    "dgp.outcome": _Key(_str, "binary", OUTCOMES),
    "generate.n": _Key(_int, 1000, positive=True),
    "study.sizes": _Key(_list(_int), (128, 256, 512, 1024, 2048, 4096, 8192)),
    "study.reps": _Key(_int, 100, positive=True),
    "study.estimators": _Key(_list(_str), ("mle", "dual_measure")),
    "study.workers": _Key(_int, 1, positive=True),
    "study.norm": _Key(_str, "inf", ("inf", "2")),
    "equivalence.errors": _Key(_str, "normal", ("normal", "gumbel")),
    "equivalence.n": _Key(_int, 20000, positive=True),
    "equivalence.reps": _Key(_int, 20, positive=True),
    "scaling.n": _Key(_int, 10000, positive=True),
    "scaling.reps": _Key(_int, 50, positive=True),
    "tol.gradient": _Key(_float, 1e-8, positive=True),
    "tol.calibration": _Key(_float, 1e-10, positive=True),
    "tol.convergence": _Key(_float, 0.1, positive=True),
    "tol.equivalence": _Key(_float, 0.05, positive=True),
    "separation.threshold": _Key(_float, 30.0, positive=True),
}

# keys a command cannot run without
REQUIRED = {"fit": ("data.path",), "decompose": ("measure.path",)}


@dataclass(frozen=True)
class RunConfig:
    """Fully resolved configuration; index it by dotted key."""

    values: Mapping[str, Any]

    def __post_init__(self):
        object.__setattr__(self, "values", MappingProxyType(dict(self.values)))

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def command(self) -> str:
        return self.values["command"]

    def __eq__(self, other):
        return isinstance(other, RunConfig) and dict(self.values) == dict(other.values)

    def __hash__(self):
        return hash(tuple(sorted((k, _fmt(v)) for k, v in self.values.items())))


def _parse_text(text: str, source: str) -> dict[str, str]:
    raw: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'", key=key or None)
        if key in raw:
            raise ConfigError(f"{source}:{lineno}: duplicate key {key!r}", key=key)
        raw[key] = value.strip()
    return raw


def _coerce(key: str, text: str):
    spec = SCHEMA[key]
    if text == "" and spec.optional:
        return None
    try:
        value = spec.parse(text)
    except ValueError:
        kind = getattr(spec.parse, "__name__", "value").lstrip("_")
        raise ConfigError(f"expected {kind}, got {text!r}", key=key) from None
    if spec.choices is not None:
        items = value if isinstance(value, tuple) else (value,)
        for v in items:
            if v not in spec.choices:
                raise ConfigError(f"{v!r} is not one of {spec.choices}", key=key)
    if spec.positive:
        items = value if isinstance(value, tuple) else (value,)
        if not all(v > 0 for v in items):
            raise ConfigError(f"must be positive, got {text!r}", key=key)
    return value


def _validate(values: dict) -> None:
    if values["command"] is None:
        raise ConfigError("required", key="command")
    for key in REQUIRED.get(values["command"], ()):
        if values[key] is None:
            raise ConfigError(f"required for {values['command']!r}", key=key)
    for key in ("study.estimators",):
        for v in values[key]:
            if v not in ESTIMATORS:
                raise ConfigError(f"{v!r} is not one of {ESTIMATORS}", key=key)
    for key in ("dgp.covariates",):
        for v in values[key]:
            if v not in COVARIATES:
                raise ConfigError(f"{v!r} is not one of {COVARIATES}", key=key)
    sizes = values["study.sizes"]
    if any(n <= 0 for n in sizes) or any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError("must be positive and strictly increasing", key="study.sizes")
    if values["fit.max_iter"] < 0:
        raise ConfigError("must be >= 0 (0 picks the estimator default)", key="fit.max_iter")
    if len(values["dgp.covariates"]) not in (1, len(values["dgp.beta"]) - 1):
        raise ConfigError("need one entry or one per slope", key="dgp.covariates")


def parse_config(
    path=None,
    flags: Optional[Mapping[str, Any]] = None,
    text: Optional[str] = None,
) -> RunConfig:
    """Resolve defaults, then a config file (``path`` or ``text``), then ``flags``.

    Flag values may be strings or already-typed values; ``None`` flags are ignored.
    """
    layers: list[tuple[str, dict[str, str]]] = []
    if path is not None:
        layers.append((str(path), _parse_text(Path(path).read_text(encoding="utf-8"), str(path))))
    if text is not None:
        layers.append(("<text>", _parse_text(text, "<text>")))
    if flags:
        layers.append(("<flags>", {k: _fmt(v) if not isinstance(v, str) else v for k, v in flags.items() if v is not None}))

    values = {k: s.default for k, s in SCHEMA.items()}
    for source, raw in layers:
        for key, txt in raw.items():
            if key not in SCHEMA:
                raise ConfigError(f"unknown key (in {source})", key=key)
            values[key] = _coerce(key, txt)
    _validate(values)
    return RunConfig(values)


def echo_effective_config(cfg: RunConfig) -> str:
    """Every key, defaults included, in re-parseable form."""
    lines = [f"{k} = {_fmt(cfg[k])}" for k in SCHEMA]
    return "\n".join(lines) + "\n"
