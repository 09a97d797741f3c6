import math

import mpmath as mp
import numpy as np
import pytest
from scipy import stats
from hypothesis import given
from hypothesis import strategies as st

from dualglm.errors import BoundaryDivergenceError, LinkDomainError, StructuralViolationError
from dualglm.links import (
    SQUASH_EPS,
    LinkSpec,
    SeparationReport,
    check_symmetry,
    diagnose_separation,
    inverse_link,
    link_eval,
    squash,
)

mp.mp.dps = 50

BINARY = ("logit", "probit", "cloglog")


def mp_cdf(family, x):
    x = mp.mpf(x)
    if family == "logit":
        return 1 / (1 + mp.exp(-x))
    if family == "probit":
        return mp.ncdf(x)
    return -mp.expm1(-mp.exp(x))


def mp_sf(family, x):
    # written out directly so the tails do not cancel
    x = mp.mpf(x)
    if family == "logit":
        return 1 / (1 + mp.exp(x))
    if family == "probit":
        return mp.ncdf(-x)
    return mp.exp(-mp.exp(x))


def mp_log_parts(family, x):
    """log F, log(1-F) and their first two derivatives in 50-digit arithmetic."""
    lf = lambda t: mp.log1p(-mp_sf(family, t)) if t > 0 else mp.log(mp_cdf(family, t))
    ls = lambda t: mp.log1p(-mp_cdf(family, t)) if t < 0 else mp.log(mp_sf(family, t))
    return [float(v) for v in (lf(x), ls(x), mp.diff(lf, x), mp.diff(ls, x), mp.diff(lf, x, 2), mp.diff(ls, x, 2))]


@pytest.mark.parametrize("family,p,eta", [("logit", 0.5, 0.0), ("probit", 0.5, 0.0), ("logit", 0.9, math.log(9))])
def test_link_eval_closed_forms(family, p, eta):
    assert link_eval(LinkSpec(family), p) == pytest.approx(eta, abs=1e-15)


def test_inverse_link_closed_forms():
    assert inverse_link(LinkSpec("logit"), 0.0) == 0.5
    assert inverse_link(LinkSpec("cloglog"), 0.0) == pytest.approx(1 - math.exp(-1), abs=1e-15)
    assert inverse_link("identity", 0.3) == 0.3


@pytest.mark.parametrize("family", BINARY)
def test_round_trip(family):
    p = np.linspace(0.001, 0.999, 999)
    spec = LinkSpec(family)
    assert np.max(np.abs(inverse_link(spec, link_eval(spec, p)) - p)) <= 1e-10
    q = np.round(np.arange(0.01, 1.0, 0.01), 2)
    assert np.max(np.abs(inverse_link(spec, link_eval(spec, q)) - q)) <= 1e-10


@pytest.mark.parametrize("family", BINARY)
@pytest.mark.parametrize("p", [0.0, 1.0])
def test_link_diverges_at_boundary(family, p):
    with pytest.raises(BoundaryDivergenceError):
        link_eval(LinkSpec(family), p)


@pytest.mark.parametrize("bad", [math.inf, -math.inf, math.nan])
def test_non_finite_eta_rejected(bad):
    with pytest.raises(LinkDomainError):
        inverse_link(LinkSpec("logit"), bad)
    with pytest.raises(LinkDomainError):
        squash(LinkSpec("logit"), bad)


def test_unknown_family_rejected():
    with pytest.raises(LinkDomainError):
        LinkSpec("tobit")


@pytest.mark.parametrize("family,hi", [("logit", 30.0), ("probit", 7.0), ("cloglog", 3.0)])
def test_inverse_link_strictly_increasing(family, hi):
    # hi is where 1 - F is still resolvable in double precision
    eta = np.linspace(-8, hi, 2001)
    assert np.all(np.diff(inverse_link(LinkSpec(family), eta)) > 0)
    wide = np.linspace(-40, 40, 4001)
    assert np.all(np.diff(inverse_link(LinkSpec(family), wide)) >= 0)


@pytest.mark.parametrize("family", BINARY)
def test_pdf_matches_central_differences(family):
    # five-point stencil on whichever tail (cdf or sf) is small, using scipy's distributions
    dist = {"logit": stats.logistic, "probit": stats.norm, "cloglog": stats.gumbel_l}[family]
    eta = np.linspace(-6, 6, 121)
    # shrink the step where the tail decays fast
    rate = np.exp(eta) if family == "cloglog" else np.abs(eta)
    h = 1e-3 / (1.0 + rate)
    lower = dist.cdf(eta) < 0.5
    tail = lambda e: np.where(lower, dist.cdf(e), -dist.sf(e))
    fd = (-tail(eta + 2 * h) + 8 * tail(eta + h) - 8 * tail(eta - h) + tail(eta - 2 * h)) / (12 * h)
    pdf = LinkSpec(family).pdf(eta)
    keep = pdf > 1e-300
    assert np.max(np.abs(fd[keep] - pdf[keep]) / pdf[keep]) < 1e-6


@pytest.mark.parametrize("family", BINARY)
@pytest.mark.parametrize("x", [-35.0, -12.0, -3.3, -0.4, 0.0, 0.7, 2.5, 6.0, 15.0])
def test_log_parts_match_high_precision(family, x):
    got = LinkSpec(family).log_parts(np.array([x]))
    keys = ("log_cdf", "log_sf", "dlog_cdf", "dlog_sf", "d2log_cdf", "d2log_sf")
    for key, want in zip(keys, mp_log_parts(family, x)):
        assert got[key][0] == pytest.approx(want, rel=1e-9, abs=1e-300), key


@pytest.mark.parametrize("family,expected", [("logit", True), ("probit", True), ("cloglog", False)])
def test_symmetry_classification(family, expected):
    assert check_symmetry(LinkSpec(family)) is expected


def test_symmetry_needs_three_points():
    with pytest.raises(ValueError):
        check_symmetry(LinkSpec("logit"), grid_size=2)


def test_squash_examples():
    assert squash(LinkSpec("logit"), 0.0) == 0.5
    out = squash(LinkSpec("logit"), np.array([-1e6, -50.0, 0.0, 50.0, 1e6]))
    assert np.all((out >= SQUASH_EPS) & (out <= 1 - SQUASH_EPS))


@pytest.mark.parametrize("family", BINARY)
def test_squash_equals_inverse_link_off_the_clamp(family):
    spec = LinkSpec(family)
    eta = np.linspace(-5, 2.5, 301)
    assert np.max(np.abs(squash(spec, eta) - inverse_link(spec, eta))) == 0.0


def test_monotone_transform_hook():
    h = lambda p: p**2
    spec = LinkSpec("logit", transform=h)
    assert inverse_link(spec, 0.0) == pytest.approx(0.25)
    assert link_eval(spec, 0.25) == pytest.approx(0.0, abs=1e-10)
    with_inv = LinkSpec("logit", transform=h, transform_inverse=np.sqrt)
    assert link_eval(with_inv, 0.36) == pytest.approx(link_eval("logit", 0.6), abs=1e-12)


def test_separation_examples():
    r = diagnose_separation([0.1, -0.2], [0.52, 0.45], 30)
    assert not r.separated
    r = diagnose_separation([0.1, 3.0, -0.2], [0.52, 1.0, 0.45], 30)
    assert r.separated and r.offending_indices == [1]
    r = diagnose_separation([31.0, 0.0], [0.6, 0.5], 30)
    assert r.separated and r.max_abs_eta == 31.0


def test_separation_flags_probabilities_near_boundary():
    assert diagnose_separation([0.0], [5e-9], 30).separated
    assert not diagnose_separation([0.0], [2e-8], 30).separated


def test_separation_contract_errors():
    with pytest.raises(StructuralViolationError):
        diagnose_separation([0.1], [0.5, 0.5], 30)
    with pytest.raises(StructuralViolationError):
        diagnose_separation([], [], 30)
    with pytest.raises(ValueError):
        diagnose_separation([0.1], [0.5], 0)


@given(
    st.lists(st.tuples(st.floats(-60, 60), st.floats(0, 1)), min_size=1, max_size=30),
    st.randoms(use_true_random=False),
)
def test_separation_flag_is_permutation_invariant(rows, rnd):
    etas, probs = zip(*rows)
    flag = diagnose_separation(etas, probs).separated
    rnd.shuffle(rows)
    etas, probs = zip(*rows)
    assert diagnose_separation(etas, probs).separated == flag


def test_separation_report_json_round_trip():
    r = diagnose_separation([0.5, 40.0], [0.6, 1.0], 30)
    assert SeparationReport.from_dict(r.to_dict()) == r
