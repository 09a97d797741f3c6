"""Command-line entry point.

Exit codes: 0 success, 2 parse or contract error, 3 numerical failure, 4 I/O.
Every run writes ``effective_config.txt`` and ``metadata.json`` beside its
outputs; only ``metadata.json`` carries timestamps.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import platform
import sys
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .config import COMMANDS, RunConfig, echo_effective_config, parse_config
from .dgp import DgpSpec, default_link, generate, load_csv, write_csv
from .errors import (
    ConfigError,
    DualGLMError,
    NormalizationUndefinedError,
    NumericalFailure,
    SeparationSuspectedError,
)
from .estimators import SolverConfig, fit
from .harness import equivalence_experiment, run_study, scaling_experiment, write_study
from .measure import (
    hahn_decompose,
    jordan_decompose,
    normalize,
    read_measure_file,
    total_variation,
)

EXIT_OK, EXIT_PARSE, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


class _Failed(Exception):
    """A unit of work failed after its partial output was written."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _num(v: float):
    return v if math.isfinite(v) else repr(float(v))


def _dump(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def dgp_from_config(cfg: RunConfig) -> DgpSpec:
    return DgpSpec(
        beta_true=cfg["dgp.beta"],
        covariates=cfg["dgp.covariates"],
        error_family=cfg["dgp.errors"],
        dependence=cfg["dgp.dependence"],
        rho=cfg["dgp.rho"],
        hetero_intercept=cfg["dgp.hetero_intercept"],
        hetero_slope=cfg["dgp.hetero_slope"],
        mixture_weight=cfg["dgp.mixture_weight"],
        mixture_mean=cfg["dgp.mixture_mean"],
        mixture_scale=cfg["dgp.mixture_scale"],
        outcome=cfg["dgp.outcome"],
    )


def solver_from_config(cfg: RunConfig) -> SolverConfig:
    return SolverConfig(
        max_iter=cfg["fit.max_iter"] or None,
        grad_tol=cfg["tol.gradient"],
        calibration_tol=cfg["tol.calibration"],
        separation_threshold=cfg["separation.threshold"],
        cutoff_rule=cfg["fit.cutoff"],
    )


def _study_link(cfg: RunConfig, dgp: DgpSpec) -> str:
    return default_link(dgp) if cfg["fit.link"] == "auto" else cfg["fit.link"]


# ------------------------------------------------------------ commands

def _cmd_generate(cfg: RunConfig, out: Path) -> None:
    d = generate(dgp_from_config(cfg), cfg["generate.n"], cfg["seed"])
    path = out / "data.csv"
    write_csv(d, path)
    print(f"generate: n={d.n} p={d.p} mean(y)={float(d.y.mean()):.4f} fingerprint={d.fingerprint} -> {path}")


def _cmd_fit(cfg: RunConfig, out: Path) -> None:
    d = load_csv(cfg["data.path"], cfg["data.outcome"])
    link = "logit" if cfg["fit.link"] == "auto" else cfg["fit.link"]
    tag = cfg["fit.estimator"]
    path = out / "fit.json"
    try:
        res = fit(tag, d, link, solver_from_config(cfg))
    except SeparationSuspectedError as exc:
        _dump(path, {
            "estimator": tag,
            "error": f"{type(exc).__name__}: {exc}",
            "beta": None if exc.beta is None else [float(b) for b in exc.beta],
            "iterations": exc.iterations,
            "separation": exc.report.to_dict(),
        })
        raise _Failed(EXIT_NUMERIC, f"fit {tag}: separation suspected, report in {path}") from exc
    except NumericalFailure as exc:
        _dump(path, {"estimator": tag, "error": f"{type(exc).__name__}: {exc}"})
        raise
    body = res.to_json_dict()
    body["diagnostics"] = {k: v for k, v in res.diagnostics.items() if _jsonable(v)}
    _dump(path, body)
    beta = ", ".join(f"{b:.6g}" for b in res.beta_hat)
    alpha = "" if res.alpha_hat is None else " alpha=(" + ", ".join(f"{a:.6g}" for a in res.alpha_hat) + ")"
    print(f"fit {tag}/{res.link}: beta=({beta}){alpha} loglik={res.loglik:.6f} "
          f"iterations={res.iterations} converged={res.converged}")
    if res.separation.separated:
        raise _Failed(EXIT_NUMERIC, f"fit {tag}: fitted probabilities on the boundary, report in {path}")


def _jsonable(v) -> bool:
    try:
        json.dumps(v, allow_nan=False)
    except (TypeError, ValueError):
        return False
    return True


def _cmd_decompose(cfg: RunConfig, out: Path) -> None:
    m = read_measure_file(cfg["measure.path"])
    labels = m.labels
    hahn = hahn_decompose(m)
    jordan = jordan_decompose(m)
    tv = total_variation(m)
    body = {
        "atoms": [[lab, _num(w)] for lab, w in m.atoms],
        "positive_set": [labels[i] for i in sorted(hahn.positive_set)],
        "negative_set": [labels[i] for i in sorted(hahn.negative_set)],
        "nu_plus": {k: _num(v) for k, v in jordan.nu_plus.items()},
        "nu_minus": {k: _num(v) for k, v in jordan.nu_minus.items()},
        "total_variation": _num(tv),
    }
    try:
        body["normalized"] = normalize(m).as_dict()
    except NormalizationUndefinedError as exc:
        body["normalized"] = None
        body["normalization_error"] = str(exc)
    path = out / "decomposition.json"
    _dump(path, body)
    print(f"decompose: {len(labels)} atoms, |S+|={len(hahn.positive_set)} "
          f"|S-|={len(hahn.negative_set)} tv={tv!r} -> {path}")


def _cmd_study(cfg: RunConfig, out: Path) -> dict:
    dgp = dgp_from_config(cfg)
    link = _study_link(cfg, dgp)
    grid = [(dgp, tag, link) for tag in cfg["study.estimators"]]

    def progress(t):
        ok = sum(not math.isnan(e) for e in t.errors)
        print(f"path {t.estimator_tag} rep={t.replication} seed={t.seed}: "
              f"final error={t.errors[-1]!r} sup_tail[0]={t.sup_tail[0]!r} fits={ok}/{len(t.errors)}")

    result = run_study(
        grid,
        cfg["study.sizes"],
        cfg["study.reps"],
        cfg["seed"],
        cfg=solver_from_config(cfg),
        norm=cfg["study.norm"],
        workers=cfg["study.workers"],
        progress=progress,
    )
    write_study(result, out)
    eps = cfg["tol.convergence"]
    summary = {"eps": eps, "dgp": dgp.to_dict(), "dgp_id": dgp.dgp_id, "link": link, "fractions": {}}
    for tag in cfg["study.estimators"]:
        fr = {str(n): result.convergence_fraction(n, eps, estimator=tag) for n in cfg["study.sizes"]}
        summary["fractions"][tag] = fr
        print(f"study {tag}: convergence_fraction(n={cfg['study.sizes'][-1]}, eps={eps}) = "
              f"{fr[str(cfg['study.sizes'][-1])]:.3f}")
    _dump(out / "study_summary.json", summary)
    return {"wall_time_s": result.metadata["wall_time_s"]}


def _cmd_equivalence(cfg: RunConfig, out: Path) -> None:
    res = equivalence_experiment(
        cfg["equivalence.errors"],
        cfg["equivalence.n"],
        cfg["equivalence.reps"],
        cfg["seed"],
        beta=cfg["dgp.beta"],
        tol=cfg["tol.equivalence"],
        cfg=solver_from_config(cfg),
    )
    _dump(out / "equivalence.json", res.to_dict())
    with open(out / "equivalence.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("seed", "max_abs_diff", "prob_path_sup_diff", "equivalent"))
        for seed, r in zip(res.seeds, res.reports):
            w.writerow((seed, repr(r.max_abs_diff), repr(r.prob_path_sup_diff), int(r.equivalent_at_tol)))
    for seed, r in zip(res.seeds, res.reports):
        print(f"equivalence {res.error_family} seed={seed}: max_abs_diff={r.max_abs_diff:.3e}")
    print(f"equivalence {res.error_family}: median max_abs_diff={res.median_max_abs_diff:.3e} "
          f"over {len(res.reports)} reps, {len(res.failures)} failed")


def _cmd_scaling(cfg: RunConfig, out: Path) -> None:
    res = scaling_experiment(
        cfg["scaling.n"], cfg["scaling.reps"], cfg["seed"], beta=cfg["dgp.beta"], cfg=solver_from_config(cfg)
    )
    _dump(out / "scaling.json", res.to_dict())
    with open(out / "scaling.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("seed", "coef_logit", "coef_probit", "ratio"))
        for row in zip(res.seeds, res.logit, res.probit, res.ratios):
            w.writerow((row[0],) + tuple(repr(v) for v in row[1:]))
    for seed, r in zip(res.seeds, res.ratios):
        print(f"scaling seed={seed}: {res.coefficient} ratio={r:.4f}")
    lo, hi = res.interval90
    print(f"scaling: mean {res.coefficient} ratio={res.mean_ratio:.4f} 90% interval=[{lo:.4f}, {hi:.4f}] "
          f"over {len(res.ratios)} reps, {len(res.failures)} failed")


_DISPATCH = {
    "generate": _cmd_generate,
    "fit": _cmd_fit,
    "decompose": _cmd_decompose,
    "study": _cmd_study,
    "equivalence": _cmd_equivalence,
    "scaling": _cmd_scaling,
}


def run(cfg: RunConfig) -> int:
    """Execute ``cfg`` and return the process exit status."""
    started = datetime.now(timezone.utc)
    try:
        out = Path(cfg["out"])
        out.mkdir(parents=True, exist_ok=True)
        (out / "effective_config.txt").write_text(echo_effective_config(cfg), encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot write output directory: {exc}", file=sys.stderr)
        return EXIT_IO

    code, extra = EXIT_OK, {}
    try:
        extra = _DISPATCH[cfg.command](cfg, out) or {}
    except _Failed as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = exc.code
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        code = EXIT_IO
    except NumericalFailure as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_NUMERIC
    except (DualGLMError, ValueError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        code = EXIT_PARSE

    meta = {
        "command": cfg.command,
        "started": started.isoformat(),
        "finished": datetime.now(timezone.utc).isoformat(),
        "exit_code": code,
        "version": __version__,
        "python": platform.python_version(),
        **extra,
    }
    try:
        _dump(out / "metadata.json", meta)
    except OSError as exc:
        print(f"error: cannot write metadata: {exc}", file=sys.stderr)
        return code or EXIT_IO
    return code


# ------------------------------------------------------------ argv

# flag dest -> config key; "{cmd}" resolves to the active subcommand's section
_FLAG_KEYS = {
    "seed": "seed",
    "out": "out",
    "estimator": "fit.estimator",
    "link": "fit.link",
    "cutoff": "fit.cutoff",
    "sizes": "study.sizes",
    "reps": "{cmd}.reps",
    "n": "{cmd}.n",
    "data": "data.path",
    "measure": "measure.path",
}


_HELP = {
    "generate": "simulate a dataset from the configured DGP",
    "fit": "fit one estimator to a CSV dataset",
    "decompose": "Hahn/Jordan decomposition of a measure file",
    "study": "nested-path convergence study over a DGP x estimator grid",
    "equivalence": "probit MLE against latent EM on shared datasets",
    "scaling": "logit/probit coefficient ratio across replications",
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="key = value config file")
    common.add_argument("--seed", type=int)
    common.add_argument("--out", metavar="DIR")
    common.add_argument("--estimator", help="mle, latent_em or dual_measure")
    common.add_argument("--link", help="logit, probit, cloglog or auto")
    common.add_argument("--cutoff", choices=("zero", "median"))
    common.add_argument("--sizes", metavar="N1,N2,...", help="nested sample sizes for study")
    common.add_argument("--reps", type=int, help="replications (study, equivalence, scaling)")
    common.add_argument("--n", type=int, help="sample size (generate, equivalence, scaling)")
    common.add_argument("--data", metavar="CSV", help="dataset for fit")
    common.add_argument("--measure", metavar="PATH", help="measure file for decompose")
    common.add_argument("--print-config", action="store_true", help="echo the effective config and exit")

    p = argparse.ArgumentParser(prog="dualglm", description="Dual-measure GLM estimation and convergence studies.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="COMMAND")
    for cmd in COMMANDS:
        sub.add_parser(cmd, parents=[common], help=_HELP[cmd])
    return p


def flags_from_args(args: argparse.Namespace) -> dict:
    flags = {"command": args.command}
    for dest, key in _FLAG_KEYS.items():
        v = getattr(args, dest)
        if v is None:
            continue
        key = key.format(cmd=args.command)
        if key in ("generate.reps", "fit.reps", "decompose.reps", "fit.n", "decompose.n", "study.n"):
            raise ConfigError(f"--{dest} does not apply to {args.command!r}", key=key)
        flags[key] = v
    return flags


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config, flags_from_args(args))
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_IO
    if args.print_config:
        sys.stdout.write(echo_effective_config(cfg))
        return EXIT_OK
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
