import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from psychfit.dataset import ScoredMatrix
from psychfit.exceptions import AnalysisError, ConvergenceError
from psychfit.irt import (
    AbilityGrid,
    IrtFit,
    curve_rows,
    fit_irt,
    icc,
    iic,
    information_criteria,
    lrt_compare,
    lrt_statistic,
    quadrature,
    tif,
)
from psychfit.simulate import simulate_2pl


@pytest.fixture(scope="module")
def small_2pl():
    rng = np.random.default_rng(21)
    a = np.array([0.9, 1.4, 1.1, 1.7, 0.8, 1.2])
    b = np.array([-1.5, -0.5, 0.0, 0.4, 1.0, 1.8])
    return ScoredMatrix.from_array(simulate_2pl(800, a, b, rng)), a, b


def loglik_oracle(x, a, b):
    """Marginal log-likelihood by adaptive integration over the ability, pattern by pattern."""
    patterns, counts = np.unique(x, axis=0, return_counts=True)
    total = 0.0
    for pat, c in zip(patterns, counts):

        def f(t):
            p = 1 / (1 + np.exp(-a * (t - b)))
            return np.prod(np.where(pat == 1, p, 1 - p)) * stats.norm.pdf(t)

        val = integrate.quad(f, -12, 12, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
        total += c * math.log(val)
    return total


def test_icc_and_iic_values():
    assert icc(1.3, 0.4, 0.4) == 0.5
    assert icc(1.18, -2.40, 0.0) == pytest.approx(1 / (1 + math.exp(-2.832)), abs=1e-12)
    assert icc(1.18, -2.40, 0.0) == pytest.approx(0.944, abs=5e-4)
    assert icc(1.0, 0.0, 50.0) == pytest.approx(1.0)
    assert iic(1.6, 0.2, 0.2) == pytest.approx(1.6**2 / 4)
    assert np.all(iic(0.0, 0.3, np.linspace(-4, 4, 9)) == 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(-3.5, 3.5))
def test_iic_peak_within_one_grid_step(a, b):
    grid = AbilityGrid()
    peak = grid.theta[np.argmax(iic(a, b, grid.theta))]
    assert abs(peak - b) <= 0.05 + 1e-9


def test_quadrature_weights_normalized():
    x, w = quadrature(49)
    assert w.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.sum(w * x**2) == pytest.approx(1.0, abs=1e-12)


def test_information_criteria_identities():
    aic, bic = information_criteria(-100.0, 5, 200)
    assert aic == 210.0
    assert bic == pytest.approx(200 + 5 * math.log(200), abs=1e-12)


def test_lrt_identity_and_identical_fits(small_2pl):
    assert lrt_statistic(-10.0, -8.0, 3, 5)[:2] == (4.0, 2)
    ds, _, _ = small_2pl
    f = fit_irt(ds, "2PL")
    stat, df, _ = lrt_compare(f, f)
    assert stat == 0 and df == 0


def test_lrt_rejects_non_nested(small_2pl):
    ds, _, _ = small_2pl
    f1 = fit_irt(ds, "1PL")
    f2 = fit_irt(ds, "2PL")
    other = fit_irt(ds.select_items(ds.item_ids[:5]), "2PL")
    with pytest.raises(AnalysisError):
        lrt_compare(f2, f1)
    with pytest.raises(AnalysisError):
        lrt_compare(f1, other)
    stat, df, p = lrt_compare(f1, f2)
    assert df == 5 and stat >= 0 and 0 <= p <= 1


def test_loglik_matches_adaptive_integration(small_2pl):
    ds, _, _ = small_2pl
    f = fit_irt(ds, "2PL")
    assert f.loglik == pytest.approx(loglik_oracle(ds.data, f.a, f.b), abs=1e-6)


def test_estimate_is_a_stationary_point(small_2pl):
    # perturbing any parameter of the MML solution lowers the independently integrated likelihood
    ds, _, _ = small_2pl
    f = fit_irt(ds, "2PL", tol_param=1e-7, tol_ll=1e-10)
    base = loglik_oracle(ds.data, f.a, f.b)
    for j in (0, 3):
        for vec in ("a", "b"):
            for h in (0.02, -0.02):
                a, b = f.a.copy(), f.b.copy()
                (a if vec == "a" else b)[j] += h
                assert loglik_oracle(ds.data, a, b) < base


def test_one_pl_shares_discrimination(small_2pl):
    ds, _, _ = small_2pl
    f = fit_irt(ds, "1PL")
    assert np.all(f.a == f.a[0])
    assert f.n_params == ds.j + 1
    assert f.monotone


def test_em_monotone_and_parameter_counts(small_2pl):
    ds, _, _ = small_2pl
    f = fit_irt(ds, "2PL")
    assert f.monotone
    assert f.n_params == 2 * ds.j
    assert f.aic == pytest.approx(-2 * f.loglik + 2 * f.n_params, abs=1e-9)
    assert f.bic == pytest.approx(-2 * f.loglik + f.n_params * math.log(f.n), abs=1e-9)


def test_quadrature_refinement_is_stable(small_2pl):
    ds, _, _ = small_2pl
    f49 = fit_irt(ds, "2PL", n_quad=49)
    f98 = fit_irt(ds, "2PL", n_quad=98)
    assert abs(f49.loglik - f98.loglik) < 0.1


def test_large_sample_recovery():
    rng = np.random.default_rng(123)
    a = rng.uniform(0.8, 1.8, 25)
    b = rng.uniform(-2.5, 2.5, 25)
    ds = ScoredMatrix.from_array(simulate_2pl(20000, a, b, rng))
    f = fit_irt(ds, "2PL")
    assert np.sqrt(np.mean((f.a - a) ** 2)) < 0.05
    assert np.sqrt(np.mean((f.b - b) ** 2)) < 0.05
    assert f.monotone


def test_difficulty_rank_agrees_with_proportion_correct(small_2pl):
    ds, _, _ = small_2pl
    f = fit_irt(ds, "2PL")
    rho = stats.spearmanr(f.b, ds.data.mean(axis=0)).statistic
    assert rho <= -0.9


def test_degenerate_item_and_convergence_errors(small_2pl):
    x = np.array(small_2pl[0].data)
    x[:, 2] = 1
    with pytest.raises(AnalysisError, match=r"\[3\]"):
        fit_irt(ScoredMatrix.from_array(x), "2PL")
    with pytest.raises(ConvergenceError) as err:
        fit_irt(small_2pl[0], "2PL", max_iter=2)
    assert len(err.value.trace) == 2
    with pytest.raises(ValueError):
        fit_irt(small_2pl[0], "3PL")


def test_tif_properties(small_2pl):
    ds, _, _ = small_2pl
    f = fit_irt(ds, "2PL")
    grid = AbilityGrid()
    total = tif(f, grid)
    each = iic(f.a[:, None], f.b[:, None], grid.theta[None, :])
    assert np.allclose(total, each.sum(axis=0))
    assert np.all(total >= each.max(axis=0))
    one = IrtFit("2PL", (1,), f.a[:1], f.b[:1], 0.0, 1, 49, 1, (0.0,))
    assert np.allclose(tif(one, grid), iic(f.a[0], f.b[0], grid.theta))


def test_curve_rows_long_format(small_2pl):
    ds, _, _ = small_2pl
    f = fit_irt(ds, "2PL")
    items, total = curve_rows(f)
    assert len(items) == ds.j * 161 and len(total) == 161
    assert items[0][:2] == (1, -4.0)
    assert total[-1][0] == 4.0
