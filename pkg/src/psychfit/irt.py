"""
Logistic item response models fitted by marginal maximum likelihood.

The latent ability is standard normal and integrated out with
Gauss-Hermite quadrature; parameters are estimated with the Bock-Aitkin EM
algorithm. The 1PL model shares a single discrimination across items.
"""

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from scipy import stats
from scipy.special import expit, log_expit, logsumexp, ndtri

from .exceptions import AnalysisError, ConvergenceError

MODELS = ("1PL", "2PL")


@dataclass(frozen=True, eq=False)
class AbilityGrid:
    """Ability values for curve emission plus the quadrature rule used in estimation."""

    theta: np.ndarray = field(default_factory=lambda: np.round(np.arange(-4.0, 4.0 + 1e-9, 0.05), 10))
    n_quad: int = 49

    def quadrature(self):
        return quadrature(self.n_quad)


def quadrature(n_nodes):
    """Gauss-Hermite nodes and weights for a standard normal, weights summing to 1."""
    x, w = hermegauss(n_nodes)
    return x, w / w.sum()


def icc(a, b, theta):
    """Probability of a correct response, 1 / (1 + exp(-a (theta - b)))."""
    return expit(np.multiply(a, np.subtract(theta, b)))


def iic(a, b, theta):
    """Item information a^2 P (1 - P)."""
    p = icc(a, b, theta)
    return np.square(a) * p * (1 - p)


def information_criteria(loglik, n_params, n):
    """(AIC, BIC) for a log-likelihood with ``n_params`` free parameters and ``n`` observations."""
    return -2 * loglik + 2 * n_params, -2 * loglik + n_params * np.log(n)


def n_parameters(model, n_items):
    if model == "1PL":
        return n_items + 1
    if model == "2PL":
        return 2 * n_items
    raise ValueError(f"unknown IRT model {model!r}")


@dataclass(frozen=True, eq=False)
class IrtFit:
    model: str
    item_ids: tuple
    a: np.ndarray
    b: np.ndarray
    loglik: float
    n: int
    n_quad: int
    iterations: int
    trace: tuple  # marginal log-likelihood at each EM iteration

    @property
    def n_params(self):
        return n_parameters(self.model, len(self.item_ids))

    @property
    def aic(self):
        return float(information_criteria(self.loglik, self.n_params, self.n)[0])

    @property
    def bic(self):
        return float(information_criteria(self.loglik, self.n_params, self.n)[1])

    @property
    def monotone(self):
        """True when the log-likelihood never dropped between EM iterations."""
        t = np.asarray(self.trace)
        return bool(np.all(np.diff(t) >= -1e-9 * max(1.0, abs(t[-1]))))

    def rows(self):
        for item, a, b in zip(self.item_ids, self.a, self.b):
            yield {"item": item, "difficulty": float(b), "discrimination": float(a)}


def _marginal(x, slope, intercept, nodes, logw):
    """Per-respondent log joint over nodes (N, Q) and the marginal log-likelihood."""
    z = slope[:, None] * nodes[None, :] + intercept[:, None]  # (J, Q)
    lp, lq = log_expit(z), log_expit(-z)
    joint = x @ (lp - lq) + lq.sum(axis=0)[None, :] + logw[None, :]
    return joint, float(logsumexp(joint, axis=1).sum())


def _mstep_2pl(slope, intercept, nodes, nq, r, iters=25):
    a, c = slope.copy(), intercept.copy()
    for _ in range(iters):
        p = expit(a[:, None] * nodes + c[:, None])
        resid = r - nq * p
        g_a = resid @ nodes
        g_c = resid.sum(axis=1)
        wgt = nq * p * (1 - p)
        h_aa = wgt @ nodes**2
        h_ac = wgt @ nodes
        h_cc = wgt.sum(axis=1)
        det = h_aa * h_cc - h_ac**2
        da = (h_cc * g_a - h_ac * g_c) / det
        dc = (h_aa * g_c - h_ac * g_a) / det
        a, c = a + da, c + dc
        if max(np.abs(da).max(), np.abs(dc).max()) < 1e-10:
            break
    return a, c


def _mstep_1pl(slope, intercept, nodes, nq, r, iters=25):
    a, c = float(slope[0]), intercept.copy()
    j = len(c)
    for _ in range(iters):
        p = expit(a * nodes[None, :] + c[:, None])
        resid = r - nq * p
        wgt = nq * p * (1 - p)
        g = np.concatenate([[np.sum(resid @ nodes)], resid.sum(axis=1)])
        h = np.zeros((j + 1, j + 1))
        h[0, 0] = np.sum(wgt @ nodes**2)
        h[0, 1:] = h[1:, 0] = wgt @ nodes
        h[np.arange(1, j + 1), np.arange(1, j + 1)] = wgt.sum(axis=1)
        step = np.linalg.solve(h, g)
        a += step[0]
        c = c + step[1:]
        if np.abs(step).max() < 1e-10:
            break
    return np.full(j, a), c


def fit_irt(ds, model="2PL", n_quad=49, max_iter=5000, tol_param=1e-4, tol_ll=1e-6):
    """Fit a 1PL or 2PL model by EM over Gauss-Hermite quadrature.

    Convergence requires both the largest change in (a, b) to fall below
    ``tol_param`` and the log-likelihood gain to fall below ``tol_ll``.

    Raises
    ------
    AnalysisError
        If an item is answered correctly by everyone or by no one.
    ConvergenceError
        If ``max_iter`` EM cycles pass without convergence; the
        log-likelihood trace is attached.
    """
    if model not in MODELS:
        raise ValueError(f"unknown IRT model {model!r}; expected one of {MODELS}")
    ds.require_analyzable()
    x = ds.data.astype(float)
    p = x.mean(axis=0)
    bad = [i for i, pi in zip(ds.item_ids, p) if pi <= 0 or pi >= 1]
    if bad:
        raise AnalysisError(f"items without variance cannot be calibrated: {bad}")

    nodes, w = quadrature(n_quad)
    logw = np.log(w)
    j = x.shape[1]
    slope = np.ones(j)
    b0 = -ndtri(p) * np.sqrt(1 + 1.7**2)
    intercept = -slope * b0
    mstep = _mstep_2pl if model == "2PL" else _mstep_1pl

    trace = []
    prev_ll = -np.inf
    for it in range(1, max_iter + 1):
        joint, ll = _marginal(x, slope, intercept, nodes, logw)
        trace.append(ll)
        post = np.exp(joint - logsumexp(joint, axis=1, keepdims=True))
        nq = post.sum(axis=0)
        r = x.T @ post
        new_slope, new_intercept = mstep(slope, intercept, nodes, nq, r)
        change = max(
            np.abs(new_slope - slope).max(),
            np.abs(-new_intercept / new_slope + intercept / slope).max(),
        )
        slope, intercept = new_slope, new_intercept
        if change < tol_param and abs(ll - prev_ll) < tol_ll:
            break
        prev_ll = ll
    else:
        raise ConvergenceError(
            f"EM did not converge in {max_iter} iterations (last change {change:.3g})", trace=tuple(trace)
        )
    _, ll = _marginal(x, slope, intercept, nodes, logw)
    trace.append(ll)
    return IrtFit(model, ds.item_ids, slope, -intercept / slope, ll, ds.n, n_quad, it, tuple(trace))


def lrt_compare(fit_small, fit_big):
    """Likelihood-ratio test of a 1PL fit against a 2PL fit on the same data.

    Returns ``(statistic, df, p)``.
    """
    same_data = fit_small.item_ids == fit_big.item_ids and fit_small.n == fit_big.n
    nested = (fit_small.model, fit_big.model) in (("1PL", "2PL"), ("1PL", "1PL"), ("2PL", "2PL"))
    if not (same_data and nested):
        raise AnalysisError("LRT requires a 1PL fit nested in a 2PL fit on the same items and sample")
    return lrt_statistic(fit_small.loglik, fit_big.loglik, fit_small.n_params, fit_big.n_params)


def lrt_statistic(ll_small, ll_big, k_small, k_big):
    stat = 2 * (ll_big - ll_small)
    df = k_big - k_small
    p = float(stats.chi2.sf(stat, df)) if df > 0 else float("nan")
    return float(stat), int(df), p


def tif(fit, grid=None):
    """Test information over the grid: the sum of the item information curves."""
    theta = (grid or AbilityGrid()).theta
    return iic(fit.a[:, None], fit.b[:, None], theta[None, :]).sum(axis=0)


def curve_rows(fit, grid=None):
    """Long-format (item, theta, icc, iic) rows and (theta, tif) rows."""
    theta = (grid or AbilityGrid()).theta
    items = []
    for item, a, b in zip(fit.item_ids, fit.a, fit.b):
        for t, pc, info in zip(theta, icc(a, b, theta), iic(a, b, theta)):
            items.append((item, float(t), float(pc), float(info)))
    total = [(float(t), float(v)) for t, v in zip(theta, tif(fit, grid))]
    return items, total
