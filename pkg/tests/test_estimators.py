import math

import mpmath as mp
import numpy as np
import pytest
import statsmodels.api as sm
from scipy import integrate, stats

from dualglm.dgp import Dataset, DgpSpec, generate
from dualglm.errors import (
    CalibrationInfeasibleError,
    CalibrationPreconditionError,
    ComparisonInvalidError,
    LinkDomainError,
    SeparationSuspectedError,
    SingularDesignError,
)
from dualglm.estimators import (
    DualMeasureModel,
    SolverConfig,
    calibrate_alpha,
    calibration_map,
    compare_equivalence,
    conditional_latent_mean,
    dual_loglik,
    fit,
    fit_dual,
    fit_latent_em,
    fit_mle,
    solve_side_alpha,
)
from dualglm.estimators.dual import _evaluate, _profiled_jacobian
from dualglm.links import LinkSpec


def toy(X, y):
    return Dataset(np.asarray(X, dtype=float), np.asarray(y, dtype=float))


SEPARATED = toy([[1, 1], [1, -1]], [1, 0])


def sm_fit(d, link):
    if link == "logit":
        return sm.Logit(d.y, d.X).fit(disp=0, tol=1e-12, maxiter=200)
    if link == "probit":
        return sm.Probit(d.y, d.X).fit(disp=0, tol=1e-12, maxiter=200)
    fam = sm.families.Binomial(link=sm.families.links.CLogLog())
    return sm.GLM(d.y, d.X, family=fam).fit(tol=1e-13)


# ------------------------------------------------------------------ MLE

def test_intercept_only_logit_closed_form():
    d = toy(np.ones((8, 1)), [1, 1, 0, 0, 0, 0, 0, 0])
    assert fit_mle(d, "logit").beta_hat[0] == pytest.approx(math.log(0.25 / 0.75), abs=1e-10)


@pytest.mark.parametrize("link,family", [("logit", "logistic"), ("probit", "normal"), ("cloglog", "gumbel")])
def test_mle_matches_statsmodels(link, family):
    d = generate(DgpSpec((0.3, 1.0, -0.5), covariates=("normal", "uniform"), error_family=family), 4000, 12)
    res = fit_mle(d, link)
    assert res.converged and res.grad_norm <= 1e-8
    np.testing.assert_allclose(res.beta_hat, sm_fit(d, link).params, atol=1e-6)
    assert res.loglik == pytest.approx(sm_fit(d, link).llf, rel=1e-10)


def test_mle_within_three_standard_errors():
    d = generate(DgpSpec((0.5, 1.0), error_family="normal"), 10_000, 31)
    ref = sm_fit(d, "probit")
    res = fit_mle(d, "probit")
    assert np.all(np.abs(res.beta_hat - np.array([0.5, 1.0])) <= 3 * ref.bse)


def test_mle_separated_toy_raises():
    with pytest.raises(SeparationSuspectedError) as info:
        fit_mle(SEPARATED, "logit")
    assert info.value.report.separated


def test_mle_eta_grows_with_iteration_cap():
    etas = []
    for cap in (2, 4, 8, 16):
        with pytest.raises(SeparationSuspectedError) as info:
            fit_mle(SEPARATED, "logit", SolverConfig(max_iter=cap))
        etas.append(info.value.report.max_abs_eta)
    assert all(b > a + 1.0 for a, b in zip(etas, etas[1:]))
    with pytest.raises(SeparationSuspectedError) as info:
        fit_mle(SEPARATED, "logit", SolverConfig(max_iter=40))
    assert info.value.report.separated and info.value.report.offending_indices == [0, 1]


def test_rank_deficient_design():
    X = np.column_stack([np.ones(6), np.arange(6.0), 2 * np.arange(6.0)])
    with pytest.raises(SingularDesignError):
        fit_mle(toy(X, [0, 1, 0, 1, 1, 0]), "logit")


def test_identity_link_rejected():
    d = generate(DgpSpec((0.0, 1.0)), 50, 0)
    with pytest.raises(LinkDomainError):
        fit_mle(d, "identity")


def test_rescaling_columns_rescales_coefficients():
    d = generate(DgpSpec((0.2, 1.0, -0.7), covariates=("normal", "uniform"), error_family="logistic"), 3000, 4)
    c = np.array([2.0, 0.1, 7.5])
    scaled = Dataset(d.X * c, d.y)
    np.testing.assert_allclose(fit_mle(scaled, "logit").beta_hat, fit_mle(d, "logit").beta_hat / c, atol=1e-6)


def test_fit_result_json_fields():
    d = generate(DgpSpec((0.0, 1.0)), 200, 0)
    body = fit_mle(d, "probit").to_json_dict()
    assert list(body) == ["estimator", "beta", "alpha", "loglik", "iterations", "converged", "grad_norm", "separation"]
    assert body["alpha"] is None and body["estimator"] == "mle"


@pytest.mark.parametrize("tag", ["mle", "latent_em", "dual_measure"])
def test_converged_implies_small_gradient(tag):
    d = generate(DgpSpec((0.5, 1.0)), 2000, 8)
    cfg = SolverConfig()
    res = fit(tag, d, "probit", cfg)
    assert res.converged
    assert res.grad_norm <= (cfg.step_tol if tag == "latent_em" else cfg.grad_tol)
    assert res.iterations <= cfg.cap(tag)


def test_unknown_estimator_tag():
    with pytest.raises(ValueError):
        fit("ols", generate(DgpSpec((0.0, 1.0)), 20, 0), "logit")


# ------------------------------------------------------------ latent EM

def test_em_intercept_only_symmetric():
    d = toy(np.ones((10, 1)), [1, 0] * 5)
    assert abs(fit_latent_em(d, "probit").beta_hat[0]) <= 1e-10


def test_em_close_to_latent_least_squares():
    d = generate(DgpSpec((0.5, 1.0), error_family="normal"), 20_000, 3)
    ols = np.linalg.lstsq(d.X, d.y_star, rcond=None)[0]
    assert np.max(np.abs(fit_latent_em(d, "probit").beta_hat - ols)) <= 0.1


def test_em_agrees_with_probit_mle():
    d = generate(DgpSpec((0.5, 1.0), error_family="normal"), 10_000, 9)
    diff = fit_latent_em(d, "probit").beta_hat - fit_mle(d, "probit").beta_hat
    assert np.max(np.abs(diff)) <= 1e-3


def test_em_separated_toy_raises():
    with pytest.raises(SeparationSuspectedError):
        fit_latent_em(SEPARATED, "probit")


@pytest.mark.parametrize("link", ["cloglog", "identity"])
def test_em_rejects_other_links(link):
    with pytest.raises(LinkDomainError):
        fit_latent_em(generate(DgpSpec((0.0, 1.0)), 30, 0), link)


@pytest.mark.parametrize("family,dist", [("probit", stats.norm), ("logit", stats.logistic)])
@pytest.mark.parametrize("eta", [-4.0, -0.7, 0.0, 1.3, 5.0])
def test_truncated_latent_mean_matches_quadrature(family, dist, eta):
    # y* = eta + eps; E[y* | y* > 0] and E[y* | y* <= 0] by numerical integration
    dens = lambda t: dist.pdf(t - eta)
    q = lambda a, b: integrate.quad(lambda t: t * dens(t), a, b, epsabs=0, epsrel=1e-12, limit=200)[0]
    up = q(0, max(eta, 0) + 60) / dist.sf(-eta)
    down = q(min(eta, 0) - 60, 0) / dist.cdf(-eta)
    got = conditional_latent_mean(np.array([eta, eta]), np.array([1, 0]), family)
    np.testing.assert_allclose(got, [up, down], rtol=1e-7)


# --------------------------------------------------------- calibration

def test_calibrate_alpha_examples():
    assert calibrate_alpha(0.5, 0.25) == pytest.approx(2.0, abs=1e-15)
    assert calibrate_alpha(0.3, 0.3) == 1.0


@pytest.mark.parametrize("nu,lam", [(0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, 1.0)])
def test_calibrate_alpha_boundary(nu, lam):
    with pytest.raises(CalibrationPreconditionError):
        calibrate_alpha(nu, lam)


def test_calibrate_alpha_residual_on_grid():
    g = np.linspace(0.005, 0.995, 100)
    nu, lam = np.meshgrid(g, g)
    alpha = calibrate_alpha(nu, lam)
    assert np.max(np.abs(nu**alpha - lam)) < 1e-12


def test_calibration_map_increasing_in_alpha():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        v = rng.uniform(1e-6, 1 - 1e-6, rng.integers(1, 40))
        a, b = np.sort(rng.uniform(1e-2, 1e2, 2))
        if a < b:
            assert calibration_map(v, a) < calibration_map(v, b)


def bisect_alpha(values, target, lo=1e-3, hi=1e3):
    f = lambda a: math.fsum(values ** (1 / a)) / len(values) - target
    for _ in range(200):
        mid = math.sqrt(lo * hi)
        lo, hi = (mid, hi) if f(mid) < 0 else (lo, mid)
    return math.sqrt(lo * hi)


def test_side_root_matches_bisection():
    rng = np.random.default_rng(1)
    for _ in range(100):
        v = rng.uniform(0.01, 0.99, 25)
        target = rng.uniform(v.min() ** 2, v.max() ** 0.5)
        a = solve_side_alpha(v, target, "nu_plus")
        assert abs(calibration_map(v, a) - target) <= 1e-10
        assert a == pytest.approx(bisect_alpha(v, target), rel=1e-9)


def test_side_root_infeasible():
    with pytest.raises(CalibrationInfeasibleError) as info:
        solve_side_alpha(np.array([0.2, 0.3]), 0.999, "nu_minus")
    assert info.value.side == "nu_minus"
    with pytest.raises(CalibrationInfeasibleError):
        solve_side_alpha(np.array([]), 0.5, "nu_plus")


# ---------------------------------------------------------- dual loglik

def glm_loglik_oracle(d, beta, family):
    dist = {"logit": stats.logistic, "probit": stats.norm, "cloglog": stats.gumbel_l}[family]
    eta = d.X @ beta
    return math.fsum(np.where(d.y == 1, dist.logcdf(eta), dist.logsf(eta)))


@pytest.mark.parametrize("family", ["logit", "probit", "cloglog"])
def test_dual_loglik_at_unit_alpha_is_glm_loglik(family):
    rng = np.random.default_rng(2)
    for _ in range(10):
        d = generate(DgpSpec((0.5, 1.0, -1.0), covariates=("normal", "binary")), 300, int(rng.integers(1e6)))
        beta = rng.normal(0, 1, 3)
        ll, _ = dual_loglik(d, DualMeasureModel(beta, 1.0, 1.0, LinkSpec(family)))
        assert abs(ll - glm_loglik_oracle(d, beta, family)) <= 1e-10


def test_doubling_alpha_plus_halves_success_block():
    d = generate(DgpSpec((0.5, 1.0)), 400, 3)
    beta = np.array([0.1, 0.8])
    l11 = dual_loglik(d, DualMeasureModel(beta, 1.0, 1.0, LinkSpec("probit")))[0]
    l21 = dual_loglik(d, DualMeasureModel(beta, 2.0, 1.0, LinkSpec("probit")))[0]
    succ = math.fsum(stats.norm.logcdf(d.X[d.y == 1] @ beta))
    assert l11 - l21 == pytest.approx(succ / 2, rel=1e-12)


def test_dual_gradient_matches_finite_differences():
    rng = np.random.default_rng(3)
    d = generate(DgpSpec((0.5, 1.0, -0.5), covariates=("normal", "uniform")), 500, 5)
    h = 1e-6
    for family in ("logit", "probit", "cloglog"):
        for _ in range(10):
            beta = rng.normal(0, 0.7, 3)
            a1, a2 = rng.uniform(0.3, 3.0, 2)
            f = lambda b: dual_loglik(d, DualMeasureModel(b, a1, a2, LinkSpec(family)))[0]
            g = dual_loglik(d, DualMeasureModel(beta, a1, a2, LinkSpec(family)))[1]
            fd = np.array([(f(beta + h * e) - f(beta - h * e)) / (2 * h) for e in np.eye(3)])
            assert np.linalg.norm(fd - g) / np.linalg.norm(g) < 1e-6


def test_dual_loglik_rejects_non_finite_beta():
    d = generate(DgpSpec((0.5, 1.0)), 50, 3)
    with pytest.raises(LinkDomainError):
        dual_loglik(d, DualMeasureModel(np.array([np.nan, 1.0]), 1.0, 1.0, LinkSpec("logit")))


@pytest.mark.parametrize("a", [0.0, math.inf, math.nan])
def test_model_rejects_bad_alpha(a):
    with pytest.raises(ValueError):
        DualMeasureModel(np.zeros(2), a, 1.0, LinkSpec("logit"))


# --------------------------------------------------------------- fit_dual

def test_dual_pinned_alpha_recovers_mle():
    d = generate(DgpSpec((0.5, 1.0, -0.5), covariates=("normal", "uniform")), 3000, 6)
    for link in ("logit", "probit"):
        res = fit_dual(d, link, SolverConfig(pin_alpha=(1.0, 1.0)))
        assert np.max(np.abs(res.beta_hat - fit_mle(d, link).beta_hat)) <= 1e-6


def test_dual_on_correct_link_is_near_mle():
    d = generate(DgpSpec((0.5, 1.0), error_family="normal"), 20_000, 7)
    res = fit_dual(d, "probit")
    assert res.converged
    assert max(abs(a - 1) for a in res.alpha_hat) <= 0.05
    assert np.max(np.abs(res.beta_hat - fit_mle(d, "probit").beta_hat)) <= 1e-2
    assert max(abs(r) for r in res.diagnostics["moment_residuals"]) <= 1e-10
    assert res.diagnostics["max_link_residual"] <= 1e-10


def test_dual_logit_fixed_point_is_the_mle():
    # with an intercept the logit score gives mean(lam) = k/n, so alpha = 1 solves calibration
    d = generate(DgpSpec((0.2, 1.0), error_family="logistic"), 5000, 2)
    res = fit_dual(d, "logit")
    np.testing.assert_allclose(res.alpha_hat, (1.0, 1.0), atol=1e-9)
    np.testing.assert_allclose(res.beta_hat, fit_mle(d, "logit").beta_hat, atol=1e-8)


def test_dual_median_rule_converges():
    d = generate(DgpSpec((0.5, 1.0), error_family="logistic"), 5000, 4)
    res = fit_dual(d, "logit", SolverConfig(cutoff_rule="median"))
    assert res.converged and res.diagnostics["cutoff_rule"] == "median"
    assert max(abs(r) for r in res.diagnostics["moment_residuals"]) <= 1e-10


def test_dual_is_deterministic():
    d = generate(DgpSpec((0.5, 1.0), error_family="gumbel"), 3000, 1)
    a, b = fit_dual(d, "probit"), fit_dual(d, "probit")
    assert a.beta_hat.tobytes() == b.beta_hat.tobytes() and a.alpha_hat == b.alpha_hat
    assert a.loglik == b.loglik and a.iterations == b.iterations


def test_dual_separated_toy_raises():
    with pytest.raises(SeparationSuspectedError):
        fit_dual(SEPARATED, "logit")


def test_dual_separated_toy_probit_raises():
    with pytest.raises(SeparationSuspectedError):
        fit_dual(SEPARATED, "probit")


def test_dual_separated_toy_cloglog_hits_alpha_floor():
    # the failure-side exponent runs into the bracket floor before eta reaches the threshold
    with pytest.raises(CalibrationInfeasibleError, match="nu_minus"):
        fit_dual(SEPARATED, "cloglog")


def test_dual_calibration_infeasible_names_side():
    d = generate(DgpSpec((0.0, 1.0)), 500, 2)
    cfg = SolverConfig(beta_init=(6.0, 0.0), alpha_bracket=(0.5, 2.0))
    with pytest.raises(CalibrationInfeasibleError) as info:
        fit_dual(d, "probit", cfg)
    assert info.value.side == "nu_plus"


def hand_trace(beta0, passes):
    """Alternating dual iteration on X = [[1], [1]], y = (1, 0), probit, in 40-digit arithmetic.

    Both rows share lam = Phi(b); the zero-rule calibration reads
    Phi(b)^(1/a1) = 1/2 and (1 - Phi(b))^(1/a2) = 1/2.
    """
    mp.mp.dps = 40
    alphas = lambda b: (mp.log(mp.ncdf(b)) / mp.log(0.5), mp.log(mp.ncdf(-b)) / mp.log(0.5))
    b = mp.mpf(beta0)
    for _ in range(passes):
        a1, a2 = alphas(b)
        ell = lambda t: mp.log(mp.ncdf(t)) / a1 + mp.log(mp.ncdf(-t)) / a2
        step = -mp.diff(ell, b) / mp.diff(ell, b, 2)
        scale = mp.mpf(1)
        while ell(b + scale * step) < ell(b):
            scale /= 2
        b = b + scale * step
    a1, a2 = alphas(b)
    return float(b), (float(a1), float(a2))


def test_dual_two_pass_hand_trace():
    d = toy(np.ones((2, 1)), [1, 0])
    cfg = SolverConfig(dual_update="alternating", beta_init=(0.3,), max_iter=2)
    res = fit_dual(d, "probit", cfg)
    b2, a2 = hand_trace(0.3, 2)
    assert res.iterations == 2 and not res.converged
    assert res.beta_hat[0] == pytest.approx(b2, rel=1e-12)
    np.testing.assert_allclose(res.alpha_hat, a2, rtol=1e-12)
    b1, a1 = hand_trace(0.3, 1)
    np.testing.assert_allclose(res.diagnostics["alpha_path"][1], a1, rtol=1e-12)


def test_profiled_jacobian_matches_finite_differences():
    d = generate(DgpSpec((0.3, 1.0, -0.4), covariates=("normal", "uniform")), 800, 10)
    cfg = SolverConfig()
    spec = LinkSpec("probit")
    beta = np.array([0.25, 0.9, -0.3])
    J = _profiled_jacobian(d.X, d.y, _evaluate(d.X, d.y, beta, spec, cfg))
    h = 1e-6
    cols = []
    for e in np.eye(3):
        gp = _evaluate(d.X, d.y, beta + h * e, spec, cfg).grad
        gm = _evaluate(d.X, d.y, beta - h * e, spec, cfg).grad
        cols.append((gp - gm) / (2 * h))
    fd = np.column_stack(cols)
    assert np.max(np.abs(J - fd)) / np.max(np.abs(fd)) < 1e-6


# ----------------------------------------------------------- equivalence

def test_compare_same_fit_is_equivalent():
    d = generate(DgpSpec((0.5, 1.0)), 500, 1)
    f = fit_mle(d, "probit")
    r = compare_equivalence(f, f, d, tol=0.05)
    assert r.max_abs_diff == 0 and r.prob_path_sup_diff == 0 and r.equivalent_at_tol


def test_compare_symmetric_case_is_equivalent():
    d = generate(DgpSpec((0.5, 1.0), error_family="normal"), 20_000, 2)
    r = compare_equivalence(fit_mle(d, "probit"), fit_latent_em(d, "probit"), d, tol=0.05)
    assert r.equivalent_at_tol and (r.max_abs_diff <= 0.05)


def test_compare_rejects_other_dataset_or_link():
    d1 = generate(DgpSpec((0.5, 1.0)), 300, 1)
    d2 = generate(DgpSpec((0.5, 1.0)), 300, 2)
    with pytest.raises(ComparisonInvalidError):
        compare_equivalence(fit_mle(d1, "probit"), fit_mle(d2, "probit"), d1)
    with pytest.raises(ComparisonInvalidError):
        compare_equivalence(fit_mle(d1, "probit"), fit_mle(d1, "logit"), d1)
