import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from psychfit.cfa import (
    CfaModel,
    CfaOptions,
    _Structure,
    bootstrap_gamma,
    cfi,
    factor_correlation_rows,
    factor_correlations,
    fit_cfa,
    fit_cfa_corr,
    fit_indices,
    indices_from_statistics,
    model_df,
    modification_indices,
    refit_with,
    rmsea,
    tli,
)
from psychfit.dataset import FactorSpec, default_factor_spec
from psychfit.latentcorr import tetrachoric_matrix
from psychfit.exceptions import ConvergenceError, ModelIdentificationError
from psychfit.simulate import factor_model_corr

from conftest import sim_binary


def _population(spec, loadings, phi):
    assign = [spec.factor_of(i) for i in spec.items]
    return factor_model_corr(loadings, phi, assign)


def _acov(j, value=1.0):
    a = np.full((j, j), value)
    np.fill_diagonal(a, np.nan)
    return a


def test_model_df_examples():
    spec = default_factor_spec()
    assert model_df(spec) == 260
    assert model_df(spec.without([17])) == 237
    short = spec.without([17, 22, 9, 10, 2, 4, 8, 14, 24, 25])
    assert len(short.items) == 15 and short.n_factors == 5
    assert model_df(short) == 80
    with pytest.raises(ModelIdentificationError, match="not identified"):
        model_df(FactorSpec.from_mapping({"a": [1, 2], "b": [3]}))


def test_parameter_count():
    m = CfaModel(default_factor_spec())
    assert m.n_params == 25 + 15
    assert m.df == 260


def test_implied_matches_brute_force():
    spec = FactorSpec.from_mapping({"a": [1, 2, 3], "b": [4, 5], "c": [6, 7, 8]})
    st_ = _Structure(CfaModel(spec))
    rng = np.random.default_rng(0)
    lam = rng.uniform(0.3, 0.9, 8)
    phi_v = np.array([0.2, -0.3, 0.5])
    theta = np.concatenate([lam, phi_v])
    sigma = st_.full_implied(theta)
    phi = np.array([[1, 0.2, -0.3], [0.2, 1, 0.5], [-0.3, 0.5, 1]])
    for i, a in enumerate(spec.items):
        for j, b in enumerate(spec.items):
            if i == j:
                assert sigma[i, j] == 1
                continue
            want = lam[i] * lam[j] * phi[spec.factor_of(a), spec.factor_of(b)]
            assert sigma[i, j] == pytest.approx(want, abs=1e-14)


def test_jacobians_match_finite_differences():
    spec = FactorSpec.from_mapping({"a": [1, 2, 3], "b": [4, 5, 6], "c": [7, 8]})
    model = CfaModel(spec, cross_loadings=((2, 1),), residual_pairs=((4, 7),))
    st_ = _Structure(model)
    rng = np.random.default_rng(1)
    x = np.concatenate([rng.uniform(0.3, 0.8, st_.n_lambda), rng.normal(0, 0.5, st_.n_phi), [0.1]])
    theta = st_.to_natural(x)
    h = 1e-6
    num = np.column_stack(
        [(st_.implied(theta + h * e) - st_.implied(theta - h * e)) / (2 * h) for e in np.eye(len(theta))]
    )
    assert np.allclose(st_.jacobian(theta), num, atol=1e-8)
    num = np.column_stack(
        [
            (st_.implied(st_.to_natural(x + h * e)) - st_.implied(st_.to_natural(x - h * e))) / (2 * h)
            for e in np.eye(len(x))
        ]
    )
    assert np.allclose(st_.free_jacobian(x), num, atol=1e-7)
    # the transform round-trips through valid correlation matrices
    assert np.allclose(st_.to_natural(st_.to_free(theta)), theta)


def test_perfect_fit_population_matrix():
    spec = default_factor_spec()
    rng = np.random.default_rng(4)
    lam = rng.uniform(0.5, 0.85, 25)
    phi = np.full((6, 6), 0.5) + 0.5 * np.eye(6)
    s = _population(spec, lam, phi)
    fit = fit_cfa_corr(s, _acov(25, 3.0), 1519, CfaModel(spec))
    assert np.allclose(fit.own_loadings, lam, atol=1e-6)
    assert np.allclose(fit.phi, phi, atol=1e-6)
    ind = fit_indices(fit)
    assert ind.cfi == 1 and ind.tli == 1 and ind.rmsea == 0
    assert ind.srmr < 0.005
    mis = modification_indices(fit)
    defined = [m for m in mis if np.isfinite(m.mi)]
    assert max(m.mi for m in defined) < 1e-6
    assert all(m.mi >= 0 for m in defined)
    # a residual between the two items of a two-item factor is not identified
    undefined = [(m.kind, m.item, m.target) for m in mis if not np.isfinite(m.mi)]
    assert undefined == [("residual", 24, 25)]
    assert not np.isfinite(mis[-1].mi)


def test_rmsea_reference():
    assert rmsea(551, 260, 1519) == pytest.approx(0.0272, abs=5e-4)
    assert rmsea(260, 260, 1519) == 0
    assert np.isnan(rmsea(3.0, 0, 100))
    assert cfi(260, 260, 5000, 300) == 1


@settings(max_examples=50, deadline=None)
@given(
    st.floats(0, 2000),
    st.integers(1, 300),
    st.floats(0, 50000),
    st.integers(301, 400),
    st.integers(50, 5000),
    st.floats(0, 0.2),
)
def test_fit_index_invariants_and_scale(chi2, df, chi2_b, df_b, n, s):
    a = indices_from_statistics(chi2, df, chi2_b, df_b, n, s)
    assert 0 <= a.cfi <= 1
    assert a.srmr >= 0
    assert a.rmsea == pytest.approx(np.sqrt(max(chi2 - df, 0) / (df * (n - 1))))
    b = indices_from_statistics(chi2, df, chi2_b, df_b, 2 * n, s)
    assert (b.cfi, b.srmr) == (a.cfi, a.srmr)
    assert b.tli == a.tli or (np.isnan(b.tli) and np.isnan(a.tli))
    assert b.rmsea == pytest.approx(a.rmsea * np.sqrt((n - 1) / (2 * n - 1)))


def test_tli_formula():
    assert tli(300, 100, 3000, 150) == pytest.approx((20 - 3) / (20 - 1))


def test_six_factor_recovery_n5000():
    spec = default_factor_spec()
    rng = np.random.default_rng(7)
    lam = rng.uniform(0.55, 0.85, 25)
    phi = np.full((6, 6), 0.45) + 0.55 * np.eye(6)
    diff = rng.uniform(0.3, 0.85, 25)
    ds = sim_binary(5000, spec, lam, phi, diff, 8)
    fit = fit_cfa(ds, options=CfaOptions(bootstrap=0))
    assert np.max(np.abs(fit.own_loadings - lam)) < 0.05
    assert np.max(np.abs(fit.phi - phi)) < 0.05


def test_single_factor_recovery():
    spec = FactorSpec.from_mapping({"g": list(range(1, 9))})
    ds = sim_binary(5000, spec, [0.7] * 8, np.eye(1), np.linspace(0.3, 0.8, 8), 3)
    fit = fit_cfa(ds, options=CfaOptions(bootstrap=0))
    assert np.all(np.abs(fit.own_loadings - 0.7) < 0.05)


def test_identity_factor_correlations(three_factor):
    spec, _ = three_factor
    ds = sim_binary(5000, spec, [0.7] * 15, np.eye(3), np.linspace(0.3, 0.8, 15), 2)
    fit = fit_cfa(ds, options=CfaOptions(bootstrap=0))
    phi, se, z, p = factor_correlations(fit)
    assert np.allclose(phi, phi.T) and np.allclose(np.diag(phi), 1)
    assert np.max(np.abs(phi - np.eye(3))) < 0.05
    assert len(factor_correlation_rows(fit)) == 3


def test_optimum_beats_generating_parameters(three_factor):
    spec, phi = three_factor
    lam = np.linspace(0.5, 0.8, 15)
    ds = sim_binary(1500, spec, lam, phi, np.linspace(0.3, 0.8, 15), 9)
    fit = fit_cfa(ds, options=CfaOptions(bootstrap=0))
    st_ = _Structure(fit.model)
    true = np.concatenate([lam, phi[st_.fu]])
    r = fit.sample[st_.iu] - st_.implied(true)
    assert fit.fmin <= np.sum(fit.weights * r * r)


def test_omitted_cross_loading_ranks_first_and_refit_matches(three_factor):
    spec, phi = three_factor
    ds = sim_binary(1519, spec, [0.7] * 15, phi, np.linspace(0.3, 0.8, 15), 1, cross={(3, 1): 0.3})
    fit = fit_cfa(ds, options=CfaOptions(bootstrap=0))
    top = modification_indices(fit)[0]
    assert (top.kind, top.item, top.target) == ("cross_loading", 3, "f2")
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        refit = refit_with(fit, top)
    drop = fit.chi2 - refit.chi2
    assert drop == pytest.approx(top.mi, rel=0.25)
    assert refit.df == fit.df - 1


def test_residual_modification_index(three_factor):
    spec, phi = three_factor
    ds = sim_binary(1519, spec, [0.6] * 15, phi, np.linspace(0.3, 0.8, 15), 5, residual={(2, 12): 0.35})
    fit = fit_cfa(ds, options=CfaOptions(bootstrap=0))
    top = modification_indices(fit)[0]
    assert top.kind == "residual" and {top.item, top.target} == {2, 12}
    refit = refit_with(fit, top)
    assert fit.chi2 - refit.chi2 == pytest.approx(top.mi, rel=0.25)


def test_heywood_is_flagged_not_fatal():
    spec = FactorSpec.from_mapping({"a": [1, 2, 3]})
    s = np.array([[1, 0.9, 0.8], [0.9, 1, 0.95], [0.8, 0.95, 1]])
    with pytest.warns(RuntimeWarning, match="Heywood"):
        fit = fit_cfa_corr(s, _acov(3), 500, CfaModel(spec))
    assert fit.heywood


def test_non_convergence_reports_gradient(three_factor):
    spec, phi = three_factor
    ds = sim_binary(600, spec, [0.6] * 15, phi, np.linspace(0.3, 0.8, 15), 4)
    tm = tetrachoric_matrix(ds)
    with pytest.raises(ConvergenceError, match="gradient norm"):
        fit_cfa_corr(tm.rho, tm.acov, ds.n, CfaModel(spec), max_iter=1)


def test_bootstrap_independent_of_thread_count(three_factor):
    spec, phi = three_factor
    ds = sim_binary(300, spec, [0.6] * 15, phi, np.linspace(0.3, 0.8, 15), 6)
    g1 = bootstrap_gamma(ds.data, 12, seed=3, threads=1)
    g4 = bootstrap_gamma(ds.data, 12, seed=3, threads=4)
    assert np.array_equal(g1, g4)
    assert not np.array_equal(g1, bootstrap_gamma(ds.data, 12, seed=4, threads=1))


def test_sandwich_standard_errors_track_sampling_spread():
    spec = FactorSpec.from_mapping({"a": [1, 2, 3], "b": [4, 5, 6]})
    phi = np.array([[1, 0.4], [0.4, 1]])
    est, ses = [], []
    for rep in range(40):
        ds = sim_binary(800, spec, [0.7, 0.6, 0.5, 0.7, 0.6, 0.5], phi, [0.4, 0.5, 0.6, 0.7, 0.5, 0.3], 100 + rep)
        fit = fit_cfa(ds, options=CfaOptions(bootstrap=100, seed=rep))
        est.append(fit.own_loadings)
        ses.append(fit.own_loading_se)
    ratio = np.mean(ses, axis=0) / np.std(est, axis=0, ddof=1)
    assert np.all((ratio > 0.7) & (ratio < 1.4))


def test_robust_statistic_is_near_df_under_correct_model(three_factor):
    spec, phi = three_factor
    stats_ = []
    for rep in range(6):
        ds = sim_binary(1000, spec, [0.65] * 15, phi, np.linspace(0.3, 0.8, 15), 200 + rep)
        fit = fit_cfa(ds, options=CfaOptions(bootstrap=150, seed=rep))
        stats_.append(fit.chi2_scaled)
        assert fit_indices(fit).robust
    # mean of chi2(87) is 87 with SD sqrt(174) / sqrt(6) ~ 5.4 for the average
    assert abs(np.mean(stats_) - fit.df) < 25
