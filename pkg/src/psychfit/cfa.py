"""
Confirmatory factor analysis of binary items by diagonally weighted least
squares (DWLS) on tetrachoric correlations.

The model lives on the correlation metric: factor variances are fixed to 1,
every item loads on its own factor, and residual variances are whatever
keeps the implied diagonal at 1, so only the off-diagonal correlations
enter the discrepancy function

    F(theta) = sum_{i<j} w_ij (s_ij - sigma_ij(theta))^2,

with w_ij the inverse asymptotic variance of s_ij. The robust test
statistic is the mean-and-variance adjusted (scaled-shifted) statistic,
computed from a bootstrap estimate of the asymptotic covariance of the
tetrachoric correlations.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
import warnings

import numpy as np
from scipy import optimize, stats

from .dataset import FactorSpec
from .exceptions import AnalysisError, ConvergenceError, ModelIdentificationError
from .latentcorr import tetrachoric_matrix, tetrachoric_vech

START_LOADING = 0.7
START_PHI = 0.3


def model_df(spec, n_items=None):
    """Degrees of freedom of a simple-structure CFA on the correlation metric.

    Factors with no items left do not count.
    """
    j = len(spec.items) if n_items is None else n_items
    k = sum(1 for _, items in spec.factors if items)
    df = j * (j - 1) // 2 - (j + k * (k - 1) // 2)
    if df < 0:
        raise ModelIdentificationError(f"model not identified: df = {df}")
    return df


@dataclass(frozen=True)
class CfaModel:
    """Factor model: simple structure from ``spec`` plus optional extra parameters.

    ``cross_loadings`` holds (item, factor_index) pairs freed on top of the
    simple structure; ``residual_pairs`` holds (item, item) residual
    correlations.
    """

    spec: FactorSpec
    cross_loadings: tuple = ()
    residual_pairs: tuple = ()

    @property
    def items(self):
        return self.spec.items

    @property
    def n_factors(self):
        return self.spec.n_factors

    def loading_slots(self):
        """(row, factor) positions of free loadings: own factor first, then cross-loadings."""
        items = self.items
        slots = [(r, self.spec.factor_of(i)) for r, i in enumerate(items)]
        slots += [(items.index(i), k) for i, k in self.cross_loadings]
        return slots

    def residual_slots(self):
        items = self.items
        return [tuple(sorted((items.index(a), items.index(b)))) for a, b in self.residual_pairs]

    @property
    def n_params(self):
        k = self.n_factors
        return len(self.loading_slots()) + k * (k - 1) // 2 + len(self.residual_pairs)

    @property
    def df(self):
        j = len(self.items)
        return j * (j - 1) // 2 - self.n_params

    def with_cross_loading(self, item, factor):
        return replace(self, cross_loadings=self.cross_loadings + ((item, factor),))

    def with_residual(self, a, b):
        return replace(self, residual_pairs=self.residual_pairs + ((a, b),))


class _Structure:
    """Maps a parameter vector to implied correlations and their derivatives.

    Natural parameters are (loadings, factor correlations in upper-triangle
    order, residual correlations). The optimizer works on an unconstrained
    vector in which the factor correlations are replaced by the
    off-diagonal entries of a unit-diagonal triangular factor whose rows
    are normalized, which keeps Phi a valid correlation matrix.
    """

    def __init__(self, model):
        self.model = model
        self.j = len(model.items)
        self.k = model.n_factors
        self.lslots = model.loading_slots()
        self.rslots = model.residual_slots()
        self.iu = np.triu_indices(self.j, 1)
        self.fu = np.triu_indices(self.k, 1)
        self.n_lambda = len(self.lslots)
        self.n_phi = len(self.fu[0])
        self.n_resid = len(self.rslots)
        self.n_params = self.n_lambda + self.n_phi + self.n_resid
        rows = {pair: c for c, pair in enumerate(zip(*self.iu))}
        self.resid_index = np.array([rows[p] for p in self.rslots], dtype=int)

    def split(self, theta):
        a = self.n_lambda
        b = a + self.n_phi
        return theta[:a], theta[a:b], theta[b:]

    def unpack(self, theta):
        lam_v, phi_v, res_v = self.split(theta)
        lam = np.zeros((self.j, self.k))
        for (r, f), v in zip(self.lslots, lam_v):
            lam[r, f] = v
        phi = np.eye(self.k)
        phi[self.fu] = phi_v
        phi.T[self.fu] = phi_v
        return lam, phi, res_v

    def implied(self, theta):
        lam, phi, res = self.unpack(theta)
        sigma = lam @ phi @ lam.T
        vech = sigma[self.iu]
        if self.n_resid:
            vech = vech.copy()
            vech[self.resid_index] += res
        return vech

    def full_implied(self, theta):
        lam, phi, res = self.unpack(theta)
        sigma = lam @ phi @ lam.T
        for (a, b), v in zip(self.rslots, res):
            sigma[a, b] += v
            sigma[b, a] += v
        np.fill_diagonal(sigma, 1.0)
        return sigma

    def jacobian(self, theta):
        """d sigma_vech / d theta (natural parameters), shape (p*, q)."""
        lam, phi, _ = self.unpack(theta)
        lp = lam @ phi  # (J, K)
        ii, jj = self.iu
        cols = []
        for r, f in self.lslots:
            d = np.zeros((self.j, self.j))
            d[r, :] += lp[:, f]
            d[:, r] += lp[:, f]
            cols.append(d[ii, jj])
        for a, b in zip(*self.fu):
            cols.append(lam[ii, a] * lam[jj, b] + lam[ii, b] * lam[jj, a])
        for idx in self.resid_index:
            e = np.zeros(len(ii))
            e[idx] = 1.0
            cols.append(e)
        return np.column_stack(cols) if cols else np.zeros((len(ii), 0))

    # -- correlation-preserving transform for Phi --

    def _phi_from_free(self, u):
        k = self.k
        v = np.eye(k)
        v[np.tril_indices(k, -1)] = u
        norms = np.linalg.norm(v, axis=1)
        ell = v / norms[:, None]
        return ell @ ell.T, ell, norms

    def _phi_jacobian(self, u):
        """d Phi_upper / d u, shape (n_phi, n_phi)."""
        k = self.k
        _, ell, norms = self._phi_from_free(u)
        tl = np.tril_indices(k, -1)
        jac = np.zeros((self.n_phi, len(tl[0])))
        for c, (i, m) in enumerate(zip(*tl)):
            # d ell_i / d v_im = (e_m - ell_i ell_im) / |v_i|
            dl = (np.eye(k)[m] - ell[i] * ell[i, m]) / norms[i]
            dphi = np.zeros((k, k))
            dphi[i, :] = ell @ dl
            dphi[:, i] += ell @ dl
            dphi[i, i] = 0.0
            jac[:, c] = dphi[self.fu]
        return jac

    def to_natural(self, x):
        a = self.n_lambda
        b = a + self.n_phi
        phi, _, _ = self._phi_from_free(x[a:b])
        return np.concatenate([x[:a], phi[self.fu], x[b:]])

    def to_free(self, theta):
        a = self.n_lambda
        b = a + self.n_phi
        _, phi_v, _ = self.split(theta)
        phi = np.eye(self.k)
        phi[self.fu] = phi_v
        phi.T[self.fu] = phi_v
        chol = np.linalg.cholesky(phi)
        u = (chol / np.diag(chol)[:, None])[np.tril_indices(self.k, -1)]
        return np.concatenate([theta[:a], u, theta[b:]])

    def free_jacobian(self, x):
        """d sigma_vech / d x for the unconstrained vector."""
        a = self.n_lambda
        b = a + self.n_phi
        theta = self.to_natural(x)
        jn = self.jacobian(theta)
        if self.n_phi:
            jn = jn.copy()
            jn[:, a:b] = jn[:, a:b] @ self._phi_jacobian(x[a:b])
        return jn

    def start(self):
        lam = np.full(self.n_lambda, START_LOADING)
        lam[len(self.model.items):] = 0.0  # cross-loadings start at zero
        phi = np.full(self.n_phi, START_PHI)
        return np.concatenate([lam, phi, np.zeros(self.n_resid)])


@dataclass(frozen=True, eq=False)
class FitIndices:
    chi2: float
    df: int
    chi2_over_df: float
    cfi: float
    tli: float
    rmsea: float
    srmr: float
    p: float
    baseline_chi2: float
    baseline_df: int
    robust: bool = False

    def as_dict(self):
        return {
            "chi2": self.chi2,
            "df": self.df,
            "chi2_over_df": self.chi2_over_df,
            "p": self.p,
            "cfi": self.cfi,
            "tli": self.tli,
            "rmsea": self.rmsea,
            "srmr": self.srmr,
            "baseline_chi2": self.baseline_chi2,
            "baseline_df": self.baseline_df,
            "robust": self.robust,
        }


@dataclass(frozen=True, eq=False)
class ModificationIndex:
    kind: str  # "cross_loading" or "residual"
    item: int
    target: object  # factor name for cross-loadings, other item id for residuals
    mi: float
    epc: float  # expected parameter change

    def involves(self, item):
        return self.item == item or (self.kind == "residual" and self.target == item)


@dataclass(frozen=True, eq=False)
class CfaFit:
    """Estimated CFA on the correlation metric.

    ``loadings`` is J x K with zeros at fixed positions; because factor and
    item variances are both 1, these are the standardized loadings.
    """

    model: CfaModel
    item_ids: tuple
    factor_names: tuple
    loadings: np.ndarray
    loading_se: np.ndarray
    phi: np.ndarray
    phi_se: np.ndarray
    residual_corr: np.ndarray
    implied: np.ndarray
    sample: np.ndarray
    weights: np.ndarray  # DWLS weights on the upper triangle (sqrt(N) scale)
    fmin: float
    n: int
    chi2: float  # unadjusted (N - 1) * F
    df: int
    chi2_scaled: float = None  # scaled-shifted, when a bootstrap covariance was available
    scale: float = None
    shift: float = None
    gradient_norm: float = 0.0
    iterations: int = 0
    theta: np.ndarray = None
    vcov: np.ndarray = None
    gamma: np.ndarray = field(default=None, repr=False)
    warnings: tuple = ()

    @property
    def residuals(self):
        return self.sample - self.implied

    @property
    def heywood(self):
        return bool(np.any(np.abs(self.loadings) > 1))

    @property
    def own_loadings(self):
        """Each item's loading on its own factor, aligned with ``item_ids``."""
        spec = self.model.spec
        return np.array([self.loadings[r, spec.factor_of(i)] for r, i in enumerate(self.item_ids)])

    @property
    def own_loading_se(self):
        spec = self.model.spec
        return np.array([self.loading_se[r, spec.factor_of(i)] for r, i in enumerate(self.item_ids)])

    @property
    def statistic(self):
        """Headline test statistic: scaled-shifted when available."""
        return self.chi2_scaled if self.chi2_scaled is not None else self.chi2

    def loading_rows(self):
        z = self.own_loadings / self.own_loading_se
        p = 2 * stats.norm.sf(np.abs(z))
        for r, item in enumerate(self.item_ids):
            k = self.model.spec.factor_of(item)
            yield {
                "factor": self.factor_names[k],
                "item": item,
                "B": float(self.own_loadings[r]),
                "SE": float(self.own_loading_se[r]),
                "z": float(z[r]),
                "Beta": float(self.own_loadings[r]),
                "p": float(p[r]),
                "sig": _stars(p[r]),
            }


def _stars(p):
    if not np.isfinite(p):
        return ""
    return "***" if p < 0.001 else "**" if p < 0.01 else "*" if p < 0.05 else ""


def bootstrap_gamma(data, n_boot=200, seed=0, threads=None):
    """Asymptotic covariance of the tetrachoric correlations by respondent bootstrap.

    Replicate ``b`` draws its resample from ``default_rng([seed, b])``, so
    the estimate does not depend on the number of threads. Returned on the
    sqrt(N) scale: N times the bootstrap covariance.
    """
    data = np.asarray(data)
    n = data.shape[0]
    threads = threads or _thread_cap()

    def one(b):
        rng = np.random.default_rng([seed, b])
        return tetrachoric_vech(data[rng.integers(0, n, n)])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            reps = list(ex.map(one, range(n_boot)))
    else:
        reps = [one(b) for b in range(n_boot)]
    reps = np.asarray(reps)
    return n * np.cov(reps, rowvar=False)


def _thread_cap():
    try:
        return max(1, int(os.environ.get("PSYCHFIT_THREADS", "1")))
    except ValueError:
        return 1


def _scaled_shifted(t, df, delta, w, gamma):
    """Mean-and-variance adjusted statistic: returns (T_adj, scale, shift)."""
    wd = w[:, None] * delta
    if delta.shape[1]:
        u = np.diag(w) - wd @ np.linalg.solve(delta.T @ wd, wd.T)
    else:
        u = np.diag(w)
    ug = u @ gamma
    tr1 = np.trace(ug)
    tr2 = np.sum(ug * ug.T)
    a = np.sqrt(df / tr2)
    b = df - a * tr1
    return a * t + b, a, b


def fit_cfa_corr(
    sample,
    acov,
    n,
    model,
    gamma=None,
    max_iter=2000,
    gtol=1e-8,
    xtol=1e-10,
):
    """Fit ``model`` to a correlation matrix by DWLS.

    Parameters
    ----------
    sample : (J, J) array
        Observed (tetrachoric) correlations in ``model.items`` order.
    acov : (J, J) array
        Asymptotic variances of the off-diagonal entries on the sqrt(N)
        scale; DWLS weights are their inverses.
    n : int
        Sample size.
    gamma : (p*, p*) array, optional
        Full asymptotic covariance of the upper-triangle correlations on the
        sqrt(N) scale. Enables sandwich standard errors and the robust
        statistic; without it SEs assume Gamma = diag(acov).
    """
    model.spec.check_identified()
    if model.df < 0:
        raise ModelIdentificationError(f"model not identified: df = {model.df}")
    st = _Structure(model)
    s = np.asarray(sample, dtype=float)[st.iu]
    acov_v = np.asarray(acov, dtype=float)[st.iu]
    if not np.all(np.isfinite(acov_v) & (acov_v > 0)):
        raise AnalysisError("asymptotic variances must be finite and positive")
    w = 1.0 / acov_v
    sw = np.sqrt(w)

    def resid(x):
        return sw * (s - st.implied(st.to_natural(x)))

    def jac(x):
        return -sw[:, None] * st.free_jacobian(x)

    x0 = st.to_free(st.start())
    res = optimize.least_squares(
        resid, x0, jac=jac, method="trf", xtol=xtol, ftol=1e-15, gtol=1e-15, max_nfev=max_iter
    )
    x = res.x
    grad = 2 * jac(x).T @ resid(x)
    gnorm = float(np.linalg.norm(grad))
    if not (gnorm < gtol or res.status in (2, 3, 4)):
        raise ConvergenceError(f"DWLS did not converge after {res.nfev} evaluations (gradient norm {gnorm:.3g})")

    theta = st.to_natural(x)
    r = s - st.implied(theta)
    fmin = float(np.sum(w * r * r))
    chi2 = (n - 1) * fmin
    df = model.df
    delta = st.jacobian(theta)
    wd = w[:, None] * delta
    bread = np.linalg.inv(delta.T @ wd)
    if gamma is not None:
        meat = wd.T @ gamma @ wd
        vcov = bread @ meat @ bread / n
    else:
        vcov = bread / n
    se = np.sqrt(np.clip(np.diag(vcov), 0, None))

    lam, phi, res_v = st.unpack(theta)
    lam_se = np.zeros_like(lam)
    for (rr, f), v in zip(st.lslots, se[: st.n_lambda]):
        lam_se[rr, f] = v
    phi_se = np.zeros_like(phi)
    phi_se[st.fu] = se[st.n_lambda : st.n_lambda + st.n_phi]
    phi_se.T[st.fu] = phi_se[st.fu]
    rc = np.zeros((st.j, st.j))
    for (a, b), v in zip(st.rslots, res_v):
        rc[a, b] = rc[b, a] = v

    chi2_scaled = scale = shift = None
    if gamma is not None and df > 0:
        chi2_scaled, scale, shift = _scaled_shifted(chi2, df, delta, w, gamma)

    notes = []
    if np.any(np.abs(lam) > 1):
        bad = [model.items[i] for i in np.unique(np.nonzero(np.abs(lam) > 1)[0])]
        notes.append(f"Heywood case: |loading| > 1 for items {bad}")
        warnings.warn(notes[-1], RuntimeWarning, stacklevel=2)

    full_s = np.array(sample, dtype=float)
    return CfaFit(
        model=model,
        item_ids=model.items,
        factor_names=model.spec.names,
        loadings=lam,
        loading_se=lam_se,
        phi=phi,
        phi_se=phi_se,
        residual_corr=rc,
        implied=st.full_implied(theta),
        sample=full_s,
        weights=w,
        fmin=fmin,
        n=n,
        chi2=chi2,
        df=df,
        chi2_scaled=chi2_scaled,
        scale=scale,
        shift=shift,
        gradient_norm=gnorm,
        iterations=int(res.nfev),
        theta=theta,
        vcov=vcov,
        gamma=gamma,
        warnings=tuple(notes),
    )


@dataclass(frozen=True, eq=False)
class CfaOptions:
    bootstrap: int = 200
    seed: int = 0
    smooth: bool = True
    threads: int = None


def fit_cfa(ds, spec=None, options=None, model=None, gamma=None):
    """Tetrachoric correlations + DWLS CFA for a scored dataset.

    The columns of ``ds`` are reordered to follow the factor structure.
    With ``options.bootstrap > 0`` the asymptotic covariance of the
    correlations is bootstrapped (unless ``gamma`` is passed in, which must
    then be in ``spec.items`` order).
    """
    options = options or CfaOptions()
    spec = spec or ds.spec
    if spec is None:
        raise AnalysisError("a factor structure is required for CFA")
    model = model or CfaModel(spec)
    model.spec.check_identified()
    model_df(model.spec)
    sub = ds.select_items(model.items)
    tm = tetrachoric_matrix(sub, smooth=options.smooth)
    if gamma is None and options.bootstrap > 0:
        gamma = bootstrap_gamma(sub.data, options.bootstrap, options.seed, options.threads)
    fit = fit_cfa_corr(tm.rho, tm.acov, sub.n, model, gamma=gamma)
    if tm.smoothed:
        fit = replace(fit, warnings=fit.warnings + ("tetrachoric matrix smoothed to positive definite",))
    return fit


def factor_correlations(fit):
    """Factor correlation matrix with standard errors, z and two-sided p-values."""
    z = np.divide(fit.phi, fit.phi_se, out=np.full_like(fit.phi, np.nan), where=fit.phi_se > 0)
    p = 2 * stats.norm.sf(np.abs(z))
    np.fill_diagonal(p, np.nan)
    return fit.phi, fit.phi_se, z, p


def factor_correlation_rows(fit):
    _, se, z, p = factor_correlations(fit)
    k = len(fit.factor_names)
    rows = []
    for a in range(k):
        for b in range(a + 1, k):
            rows.append(
                {
                    "factor_1": fit.factor_names[a],
                    "factor_2": fit.factor_names[b],
                    "correlation": float(fit.phi[a, b]),
                    "SE": float(se[a, b]),
                    "z": float(z[a, b]),
                    "p": float(p[a, b]),
                    "sig": _stars(p[a, b]),
                }
            )
    return rows


def baseline_statistic(fit):
    """Independence model on the same weights: all correlations zero, df = J(J-1)/2."""
    iu = np.triu_indices(len(fit.item_ids), 1)
    s = fit.sample[iu]
    fb = float(np.sum(fit.weights * s * s))
    dfb = len(s)
    chi2 = (fit.n - 1) * fb
    scaled = None
    if fit.gamma is not None:
        scaled, _, _ = _scaled_shifted(chi2, dfb, np.zeros((dfb, 0)), fit.weights, fit.gamma)
    return chi2, scaled, dfb


def rmsea(chi2, df, n):
    if df <= 0:
        return float("nan")
    return float(np.sqrt(max(chi2 - df, 0.0) / (df * (n - 1))))


def cfi(chi2, df, chi2_b, df_b):
    num = max(chi2 - df, 0.0)
    den = max(chi2_b - df_b, chi2 - df, 0.0)
    return 1.0 if den == 0 else float(1 - num / den)


def tli(chi2, df, chi2_b, df_b):
    """Tucker-Lewis index, truncated at 1."""
    if df <= 0:
        return float("nan")
    rb = chi2_b / df_b
    if rb == 1:
        return float("nan")
    return float(min(1.0, (rb - chi2 / df) / (rb - 1)))


def srmr(sample, implied):
    s = np.asarray(sample)
    iu = np.triu_indices(s.shape[0], 1)
    r = s[iu] - np.asarray(implied)[iu]
    return float(np.sqrt(np.mean(r * r)))


def indices_from_statistics(chi2, df, chi2_b, df_b, n, srmr_value, robust=False):
    return FitIndices(
        chi2=float(chi2),
        df=int(df),
        chi2_over_df=float(chi2 / df) if df > 0 else float("nan"),
        cfi=cfi(chi2, df, chi2_b, df_b),
        tli=tli(chi2, df, chi2_b, df_b),
        rmsea=rmsea(chi2, df, n),
        srmr=srmr_value,
        p=float(stats.chi2.sf(chi2, df)) if df > 0 else float("nan"),
        baseline_chi2=float(chi2_b),
        baseline_df=int(df_b),
        robust=robust,
    )


def fit_indices(fit, baseline=None, n=None, robust=True):
    """χ², χ²/df, CFI, TLI, RMSEA and SRMR for a fitted model.

    ``baseline`` may be a ``(chi2, df)`` pair; by default the independence
    model is evaluated with the same weights. The robust (scaled-shifted)
    statistics are used for both models when available and ``robust``.
    """
    n = n or fit.n
    chi2_b_raw, chi2_b_scaled, df_b = baseline_statistic(fit)
    use_robust = robust and fit.chi2_scaled is not None and chi2_b_scaled is not None
    chi2 = fit.chi2_scaled if use_robust else fit.chi2
    chi2_b = chi2_b_scaled if use_robust else chi2_b_raw
    if baseline is not None:
        chi2_b, df_b = baseline
    return indices_from_statistics(chi2, fit.df, chi2_b, df_b, n, srmr(fit.sample, fit.implied), use_robust)


def modification_indices(fit, cross_loadings=True, residuals=True):
    """Score-test modification indices for fixed-at-zero parameters, largest first.

    Each index approximates the drop in the unadjusted statistic
    (N - 1) * F when that single parameter is freed. Entries whose
    conditional information is not positive get NaN and sort last.
    """
    model = fit.model
    st = _Structure(model)
    theta = fit.theta
    w = fit.weights
    r = fit.sample[st.iu] - st.implied(theta)
    delta = st.jacobian(theta)
    wd = w[:, None] * delta
    a_inv = np.linalg.inv(delta.T @ wd)
    lam, phi, _ = st.unpack(theta)
    lp = lam @ phi
    ii, jj = st.iu
    items = model.items
    spec = model.spec
    nm1 = fit.n - 1

    def score(d):
        g = d @ (w * r)
        c = d @ (w * d) - (d @ wd) @ a_inv @ (wd.T @ d)
        if not c > 1e-14:
            return float("nan"), float("nan")
        return float(nm1 * g * g / c), float(g / c)

    out = []
    if cross_loadings:
        taken = set(model.loading_slots())
        for row, item in enumerate(items):
            for f, fname in enumerate(spec.names):
                if (row, f) in taken:
                    continue
                d = np.zeros((st.j, st.j))
                d[row, :] += lp[:, f]
                d[:, row] += lp[:, f]
                mi, epc = score(d[ii, jj])
                out.append(ModificationIndex("cross_loading", item, fname, mi, epc))
    if residuals:
        taken = set(st.rslots)
        for c, (a, b) in enumerate(zip(ii, jj)):
            if (a, b) in taken:
                continue
            d = np.zeros(len(ii))
            d[c] = 1.0
            mi, epc = score(d)
            out.append(ModificationIndex("residual", items[a], items[b], mi, epc))
    out.sort(key=lambda m: (-m.mi if np.isfinite(m.mi) else np.inf))
    return out


def refit_with(fit, mi, ds=None):
    """Refit ``fit`` with the parameter behind modification index ``mi`` freed."""
    model = fit.model
    if mi.kind == "cross_loading":
        model = model.with_cross_loading(mi.item, model.spec.names.index(mi.target))
    else:
        model = model.with_residual(mi.item, mi.target)
    acov = np.zeros_like(fit.sample)
    iu = np.triu_indices(len(fit.item_ids), 1)
    acov[iu] = 1.0 / fit.weights
    acov.T[iu] = acov[iu]
    np.fill_diagonal(acov, 1.0)
    return fit_cfa_corr(fit.sample, acov, fit.n, model, gamma=fit.gamma)
