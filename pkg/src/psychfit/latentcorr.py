"""
Bivariate normal probabilities, tetrachoric correlations and factorability
diagnostics (KMO, Bartlett's sphericity test).

The tetrachoric estimator is the usual two-step one: thresholds are fixed
from the item margins, then the latent correlation maximizes the 2x2 table
likelihood with those thresholds held fixed.
"""

import csv
import io
from dataclasses import dataclass

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import stats
from scipy.special import ndtr, ndtri

from .exceptions import AnalysisError

RHO_CAP = 0.999
SMOOTH_FLOOR = 1e-6
_CLIP = 37.0

# 20-point Gauss-Legendre rule shifted to (0, 2), as in Genz's BVNU.
_GL_X, _GL_W = leggauss(20)
_GL_X = _GL_X + 1.0


def _bvnu(dh, dk, r):
    """Upper orthant probability P(X > dh, Y > dk) for correlation r, |r| < 1.

    Vectorized port of Genz's BVNU (Drezner-Wesolowsky reduction to a
    single integral, evaluated with Gauss-Legendre quadrature; a series
    correction handles |r| >= 0.925).
    """
    h, k, r = np.broadcast_arrays(
        np.asarray(dh, dtype=float), np.asarray(dk, dtype=float), np.asarray(r, dtype=float)
    )
    shape = h.shape
    h = np.clip(h, -_CLIP, _CLIP).ravel()
    k = np.clip(k, -_CLIP, _CLIP).ravel()
    r = r.ravel()
    out = np.empty_like(h)
    x, w = _GL_X, _GL_W

    low = np.abs(r) < 0.925
    if low.any():
        hl, kl, rl = h[low], k[low], r[low]
        hk = hl * kl
        hs = (hl * hl + kl * kl) / 2
        asr = np.arcsin(rl)
        sn = np.sin(asr[:, None] * x[None, :] / 2)
        integrand = np.exp((sn * hk[:, None] - hs[:, None]) / (1 - sn * sn))
        out[low] = integrand @ w * asr / (4 * np.pi) + ndtr(-hl) * ndtr(-kl)

    high = ~low
    if high.any():
        hh, kh, rh = h[high], k[high].copy(), r[high]
        neg = rh < 0
        kh[neg] = -kh[neg]
        hk = hh * kh
        a2 = (1 - rh) * (1 + rh)
        a = np.sqrt(a2)
        bs = (hh - kh) ** 2
        c = (4 - hk) / 8
        d = (12 - hk) / 80
        with np.errstate(over="ignore", under="ignore", invalid="ignore", divide="ignore"):
            asr = -(bs / a2 + hk) / 2
            p = np.where(asr > -100, a * np.exp(asr) * (1 - c * (bs - a2) * (1 - d * bs) / 3 + c * d * a2 * a2), 0.0)
            b = np.sqrt(bs)
            tail = np.exp(-hk / 2) * np.sqrt(2 * np.pi) * ndtr(-b / a) * b * (1 - c * bs * (1 - d * bs) / 3)
            p = np.where(hk > -100, p - np.where(np.isfinite(tail), tail, 0.0), p)
            ah = a / 2
            xs = (ah[:, None] * x[None, :]) ** 2
            asr2 = -(bs[:, None] / xs + hk[:, None]) / 2
            sp = 1 + c[:, None] * xs * (1 + 5 * d[:, None] * xs)
            rs = np.sqrt(1 - xs)
            ep = np.exp(-(hk[:, None] / 2) * xs / (1 + rs) ** 2) / rs
            terms = np.where(asr2 > -100, np.exp(asr2) * (sp - ep), 0.0)
        p = (ah * (terms @ w) - p) / (2 * np.pi)
        res = np.empty_like(p)
        pos = ~neg
        res[pos] = p[pos] + ndtr(-np.maximum(hh[pos], kh[pos]))
        # r < 0: k was negated above
        hn, kn, pn = hh[neg], kh[neg], p[neg]
        lower = np.where(hn < 0, ndtr(kn) - ndtr(hn), ndtr(-hn) - ndtr(-kn))
        res[neg] = np.where(hn >= kn, -pn, lower - pn)
        out[high] = res
    return np.clip(out, 0.0, 1.0).reshape(shape)


def bvn_cdf(h, k, rho):
    """P(X <= h, Y <= k) for a standard bivariate normal with correlation ``rho``.

    Accepts scalars or broadcastable arrays; infinite limits are allowed.
    Absolute error is below 1e-10 (verified against high-precision
    quadrature in the test suite).
    """
    rho_arr = np.asarray(rho, dtype=float)
    if np.any(np.abs(rho_arr) >= 1) or np.any(np.isnan(rho_arr)):
        raise ValueError("bvn_cdf requires |rho| < 1")
    h = np.asarray(h, dtype=float)
    k = np.asarray(k, dtype=float)
    out = _bvnu(-h, -k, rho_arr)
    # exact values where a limit is infinite
    hb, kb, _ = np.broadcast_arrays(h, k, rho_arr)
    out = np.where(np.isposinf(hb), ndtr(kb), out)
    out = np.where(np.isposinf(kb), ndtr(hb), out)
    out = np.where(np.isposinf(hb) & np.isposinf(kb), 1.0, out)
    out = np.where(np.isneginf(hb) | np.isneginf(kb), 0.0, out)
    return out[()] if out.ndim == 0 else out


def bvn_pdf(h, k, rho):
    """Standard bivariate normal density."""
    one = 1 - rho * rho
    q = (h * h - 2 * rho * h * k + k * k) / one
    return np.exp(-q / 2) / (2 * np.pi * np.sqrt(one))


def _cell_probs(tau1, tau2, rho):
    """Model probabilities (p11, p10, p01, p00); item = 1 when its latent exceeds tau."""
    p1 = ndtr(-tau1)
    p2 = ndtr(-tau2)
    p11 = _bvnu(tau1, tau2, rho)
    p10 = p1 - p11
    p01 = p2 - p11
    p00 = 1 - p1 - p2 + p11
    tiny = 1e-300
    return (np.maximum(p11, tiny), np.maximum(p10, tiny), np.maximum(p01, tiny), np.maximum(p00, tiny))


def _corrected_tables(counts):
    """Add 0.5 to every cell of any table that has an empty cell."""
    counts = np.asarray(counts, dtype=float)
    has_zero = (counts <= 0).any(axis=-1, keepdims=True)
    return np.where(has_zero, counts + 0.5, counts), has_zero[..., 0]


def tetrachoric_tables(counts, cap=RHO_CAP, tol=1e-12):
    """Vectorized tetrachoric estimation for a stack of 2x2 tables.

    Parameters
    ----------
    counts : array-like, shape (..., 4)
        Cell counts ordered (n11, n10, n01, n00), where the first index is
        the first item's score and the second index the second item's.
    cap : float
        Estimates are confined to [-cap, cap].

    Returns
    -------
    rho, var, tau1, tau2 : ndarrays
        Estimates, their variance from the observed information (with the
        thresholds treated as known), and the margin-implied thresholds.
        Tables with an empty margin yield NaN.
    """
    # an empty margin carries no information even after the cell correction
    r11, r10, r01, r00 = np.moveaxis(np.asarray(counts, dtype=float), -1, 0)
    bad = (r11 + r10 == 0) | (r01 + r00 == 0) | (r11 + r01 == 0) | (r10 + r00 == 0)
    tab, _ = _corrected_tables(counts)
    n11, n10, n01, n00 = np.moveaxis(tab, -1, 0)
    n = n11 + n10 + n01 + n00
    p1 = (n11 + n10) / n
    p2 = (n11 + n01) / n
    with np.errstate(divide="ignore", invalid="ignore"):
        tau1 = ndtri(1 - p1)
        tau2 = ndtri(1 - p2)
    t1 = np.where(bad, 0.0, tau1)
    t2 = np.where(bad, 0.0, tau2)

    # the score is phi2(t1, t2, rho) times this bracket; phi2 > 0, so the
    # bracket alone carries the sign and stays finite when phi2 underflows
    def score(rho):
        q11, q10, q01, q00 = _cell_probs(t1, t2, rho)
        return n11 / q11 - n10 / q10 - n01 / q01 + n00 / q00

    lo = np.full(t1.shape, -cap)
    hi = np.full(t1.shape, cap)
    s_lo = score(lo)
    s_hi = score(hi)
    # log-likelihood is unimodal in rho; bisection on the score sign
    rho = np.where(s_hi >= 0, hi, np.where(s_lo <= 0, lo, 0.0))
    interior = (s_lo > 0) & (s_hi < 0)
    if interior.any():
        a, b = lo[interior], hi[interior]
        sub = lambda r: _score_subset(r, interior, t1, t2, n11, n10, n01, n00)  # noqa: E731
        for _ in range(60):
            mid = (a + b) / 2
            s = sub(mid)
            a = np.where(s > 0, mid, a)
            b = np.where(s > 0, b, mid)
            if np.max(b - a) < tol:
                break
        rho = rho.copy()
        rho[interior] = (a + b) / 2

    q11, q10, q01, q00 = _cell_probs(t1, t2, rho)
    info = bvn_pdf(t1, t2, rho) ** 2 * (n11 / q11**2 + n10 / q10**2 + n01 / q01**2 + n00 / q00**2)
    var = 1.0 / info
    rho = np.where(bad, np.nan, rho)
    var = np.where(bad, np.nan, var)
    return rho, var, np.where(bad, np.nan, tau1), np.where(bad, np.nan, tau2)


def _score_subset(rho, mask, t1, t2, n11, n10, n01, n00):
    a1, a2 = t1[mask], t2[mask]
    q11, q10, q01, q00 = _cell_probs(a1, a2, rho)
    return n11[mask] / q11 - n10[mask] / q10 - n01[mask] / q01 + n00[mask] / q00


def tetrachoric_from_table(counts):
    """Tetrachoric correlation of one 2x2 table.

    ``counts`` is either a 2x2 array ``[[n11, n10], [n01, n00]]`` (rows: first
    item 1/0, columns: second item 1/0) or the flat ``(n11, n10, n01, n00)``.
    Returns ``(rho, variance)``; both are NaN when a margin is empty.
    """
    flat = np.asarray(counts, dtype=float).reshape(4)
    if (flat < 0).any():
        raise ValueError("cell counts must be nonnegative")
    rho, var, _, _ = tetrachoric_tables(flat[None, :])
    return float(rho[0]), float(var[0])


def table_loglik(counts, rho):
    """Log-likelihood of a (corrected) 2x2 table at ``rho``, thresholds from margins."""
    tab, _ = _corrected_tables(np.asarray(counts, dtype=float).reshape(4))
    n11, n10, n01, n00 = tab
    n = tab.sum()
    tau1 = ndtri(1 - (n11 + n10) / n)
    tau2 = ndtri(1 - (n11 + n01) / n)
    q = _cell_probs(tau1, tau2, np.asarray(rho, dtype=float))
    return sum(c * np.log(p) for c, p in zip(tab, q))


def pair_tables(data):
    """All 2x2 tables of a binary matrix: array (J, J, 4) of (n11, n10, n01, n00)."""
    x = np.asarray(data, dtype=float)
    y = 1 - x
    n11 = x.T @ x
    n10 = x.T @ y
    n01 = y.T @ x
    n00 = y.T @ y
    return np.stack([n11, n10, n01, n00], axis=-1)


@dataclass(frozen=True, eq=False)
class TetraMatrix:
    """Tetrachoric correlation matrix of a set of binary items."""

    rho: np.ndarray
    var: np.ndarray  # sampling variance of each off-diagonal estimate
    thresholds: np.ndarray
    item_ids: tuple
    n: int
    smoothed: bool = False
    raw_rho: np.ndarray = None  # before smoothing

    @property
    def acov(self):
        """Asymptotic variances on the sqrt(N) scale (N times the sampling variance)."""
        return self.var * self.n

    def to_csv(self, digits=6):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["item"] + [f"q{i}" for i in self.item_ids])
        for i, row in zip(self.item_ids, self.rho):
            w.writerow([f"q{i}"] + [f"{v:.{digits}g}" for v in row])
        return buf.getvalue()


def read_matrix_csv(text):
    """Parse the square CSV written by :meth:`TetraMatrix.to_csv`."""
    rows = list(csv.reader(io.StringIO(text)))
    items = tuple(int(h[1:]) for h in rows[0][1:])
    return items, np.array([[float(v) for v in r[1:]] for r in rows[1:]])


def smooth_psd(corr, floor=SMOOTH_FLOOR):
    """Clip eigenvalues at ``floor`` and rescale to unit diagonal.

    Returns ``(matrix, changed)``; the input comes back untouched when its
    smallest eigenvalue is already at least ``floor``.
    """
    corr = np.asarray(corr, dtype=float)
    vals, vecs = np.linalg.eigh(corr)
    if vals.min() >= floor:
        return corr, False
    fixed = (vecs * np.maximum(vals, floor)) @ vecs.T
    d = np.sqrt(np.diag(fixed))
    fixed = fixed / np.outer(d, d)
    fixed = (fixed + fixed.T) / 2
    np.fill_diagonal(fixed, 1.0)
    return fixed, True


def _degenerate_items(ds):
    p = ds.data.mean(axis=0)
    return [i for i, pi in zip(ds.item_ids, p) if pi <= 0 or pi >= 1]


def tetrachoric_matrix(ds, smooth=True):
    """Pairwise tetrachoric correlations of every item pair in ``ds``."""
    bad = _degenerate_items(ds)
    if bad:
        raise AnalysisError(f"items with no variance cannot enter a tetrachoric matrix: {bad}")
    rho_raw, var = _tetra_core(ds.data)
    p = ds.data.mean(axis=0)
    thresholds = ndtri(1 - p)
    rho = rho_raw
    changed = False
    if smooth:
        rho, changed = smooth_psd(rho_raw)
    return TetraMatrix(rho, var, thresholds, ds.item_ids, ds.n, changed, rho_raw)


def _tetra_core(data):
    """(rho, var) matrices, unit diagonal and NaN variance on the diagonal."""
    j = data.shape[1]
    iu = np.triu_indices(j, 1)
    tables = pair_tables(data)[iu]
    r, v, _, _ = tetrachoric_tables(tables)
    rho = np.eye(j)
    rho[iu] = r
    rho.T[iu] = r
    var = np.full((j, j), np.nan)
    var[iu] = v
    var.T[iu] = v
    return rho, var


def tetrachoric_vech(data):
    """Upper-triangle tetrachoric estimates (row-major order), unsmoothed."""
    j = data.shape[1]
    r, _, _, _ = tetrachoric_tables(pair_tables(data)[np.triu_indices(j, 1)])
    return r


def phi_matrix(ds):
    """Pearson (phi) correlations of the binary items."""
    bad = _degenerate_items(ds)
    if bad:
        raise AnalysisError(f"items with no variance: {bad}")
    return np.corrcoef(ds.data, rowvar=False)


def _require_invertible(corr):
    corr = np.asarray(corr, dtype=float)
    try:
        np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        raise AnalysisError(
            "correlation matrix is not positive definite; apply eigenvalue smoothing first"
        ) from None
    return corr


def kmo(corr):
    """Kaiser-Meyer-Olkin sampling adequacy.

    Returns ``(overall, per_item)`` computed from the anti-image partial
    correlations.
    """
    r = _require_invertible(corr)
    inv = np.linalg.inv(r)
    d = 1.0 / np.sqrt(np.diag(inv))
    partial = -inv * np.outer(d, d)
    off = ~np.eye(r.shape[0], dtype=bool)
    r2 = np.where(off, r**2, 0.0)
    q2 = np.where(off, partial**2, 0.0)
    per_item = r2.sum(axis=0) / (r2.sum(axis=0) + q2.sum(axis=0))
    overall = r2.sum() / (r2.sum() + q2.sum())
    return float(overall), per_item


def bartlett(corr, n):
    """Bartlett's sphericity test. Returns ``(chi2, df, p)``."""
    r = _require_invertible(corr)
    p = r.shape[0]
    _, logdet = np.linalg.slogdet(r)
    chi2 = -(n - 1 - (2 * p + 5) / 6) * logdet
    df = p * (p - 1) // 2
    return float(chi2), df, float(stats.chi2.sf(chi2, df))
