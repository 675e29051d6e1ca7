"""
Synthetic response generators for tests and demonstrations.

All generators take a ``numpy.random.Generator`` so that results are
reproducible from a single seed.
"""

import json
from importlib import resources

import numpy as np
from scipy.special import expit, ndtri

from .dataset import OPTIONS, RawResponseTable, ScoredMatrix, default_factor_spec


def reference_values():
    """Published full-sample estimates for the 25-item test (loadings, difficulties, IRT, fit)."""
    text = resources.files("psychfit").joinpath("data", "cctt_reference.json").read_text()
    return json.loads(text)


def simulate_2pl(n, a, b, rng):
    """Binary responses from a 2PL model with standard normal abilities."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    theta = rng.standard_normal(n)
    p = expit(a[None, :] * (theta[:, None] - b[None, :]))
    return (rng.random(p.shape) < p).astype(np.int8)


def factor_model_corr(loadings, phi, assign, residual=None):
    """Model-implied latent correlation matrix with unit diagonal.

    ``loadings`` is either a vector (one loading per item on factor
    ``assign[i]``) or a full J x K pattern matrix; ``residual`` optionally
    adds residual correlations as {(i, j): value} with 0-based indices.
    """
    loadings = np.asarray(loadings, dtype=float)
    phi = np.asarray(phi, dtype=float)
    if loadings.ndim == 1:
        lam = np.zeros((len(loadings), phi.shape[0]))
        lam[np.arange(len(loadings)), assign] = loadings
    else:
        lam = loadings
    sigma = lam @ phi @ lam.T
    for (i, j), v in (residual or {}).items():
        sigma[i, j] += v
        sigma[j, i] += v
    np.fill_diagonal(sigma, 1.0)
    return sigma


def simulate_thresholded(n, sigma, thresholds, rng):
    """Dichotomize multivariate normal draws: item = 1 where the latent exceeds its threshold."""
    chol = np.linalg.cholesky(sigma)
    z = rng.standard_normal((n, sigma.shape[0])) @ chol.T
    return (z > np.asarray(thresholds)[None, :]).astype(np.int8)


def simulate_factor_binary(n, spec, loadings, phi, difficulty, rng, residual=None, cross=None):
    """Binary data from a thresholded multi-factor normal model.

    Parameters
    ----------
    spec : FactorSpec
        Item-to-factor assignment; items are laid out in ``spec.items`` order.
    loadings : sequence of float
        Standardized loading of each item on its own factor.
    phi : (K, K) array
        Factor correlation matrix.
    difficulty : sequence of float
        Target proportion correct of each item.
    residual : dict, optional
        {(item_a, item_b): correlation} added between item residuals.
    cross : dict, optional
        {(item, factor_index): loading} extra loadings.
    """
    items = spec.items
    index = {it: c for c, it in enumerate(items)}
    assign = np.array([spec.factor_of(i) for i in items])
    lam = np.zeros((len(items), spec.n_factors))
    lam[np.arange(len(items)), assign] = loadings
    for (item, k), v in (cross or {}).items():
        lam[index[item], k] = v
    res = {(index[a], index[b]): v for (a, b), v in (residual or {}).items()}
    sigma = factor_model_corr(lam, phi, assign, res)
    tau = ndtri(1 - np.asarray(difficulty, dtype=float))
    data = simulate_thresholded(n, sigma, tau, rng)
    return ScoredMatrix.from_array(data, items, spec)


def _demographics(n, rng):
    counts = reference_values()["demographics"]
    labels, weights = [], []
    for grade, by_gender in counts.items():
        for gender, c in by_gender.items():
            labels.append((grade, gender))
            weights.append(c)
    weights = np.asarray(weights, dtype=float) / sum(weights)
    picks = rng.choice(len(labels), size=n, p=weights)
    return tuple(labels[p][0] for p in picks), tuple(labels[p][1] for p in picks)


def simulate_cctt_like(n=1519, rng=None, grade_shift=0.55):
    """Synthetic 25-item data shaped like the published full-sample estimates.

    Latent responses follow the published six-factor structure; grade 4
    students get every latent shifted up by ``grade_shift`` relative to
    grade 3 (mixed classes sit in between). Demographic proportions follow
    the published student counts.
    """
    rng = rng or np.random.default_rng(0)
    ref = reference_values()
    spec = default_factor_spec()
    names = spec.names
    phi = np.eye(len(names))
    for pair, v in ref["factor_correlations"].items():
        a, b = (names.index(x) for x in pair.split("-"))
        phi[a, b] = phi[b, a] = v
    items = spec.items
    loadings = np.array([ref["standardized_loadings"][str(i)] for i in items])
    diff = np.array([ref["difficulty"]["all"][i - 1] for i in items])
    assign = np.array([spec.factor_of(i) for i in items])
    sigma = factor_model_corr(loadings, phi, assign)
    tau = ndtri(1 - diff)
    grades, genders = _demographics(n, rng)
    shift = np.array([{"G3": -0.5, "G4": 0.5, "MIXED": 0.0}[g] for g in grades]) * grade_shift
    chol = np.linalg.cholesky(sigma)
    z = rng.standard_normal((n, len(items))) @ chol.T
    # shift along the common direction of the loadings so the factor structure is kept
    z = z + shift[:, None] * loadings[None, :]
    data = (z > tau[None, :]).astype(np.int8)
    ids = tuple(f"s{r + 1:04d}" for r in range(n))
    return ScoredMatrix(data, ids, items, grades, genders, spec)


def random_answer_sheets(ds, key, rng, idk_rate=0.03, blank_rate=0.02, multi_rate=0.01):
    """Turn a scored matrix back into option symbols consistent with ``key``.

    Correct cells get the keyed option; incorrect cells get a wrong option,
    IDK, BLANK or MULTI at the given rates.
    """
    n, j = ds.data.shape
    answers = np.empty((n, j), dtype=object)
    u = rng.random((n, j))
    for c, item in enumerate(ds.item_ids):
        keyed = key.correct[item]
        wrong = [o for o in OPTIONS if o != keyed]
        picks = rng.integers(0, 3, size=n)
        for r in range(n):
            if ds.data[r, c]:
                answers[r, c] = keyed
            elif u[r, c] < idk_rate:
                answers[r, c] = "IDK"
            elif u[r, c] < idk_rate + blank_rate:
                answers[r, c] = "BLANK"
            elif u[r, c] < idk_rate + blank_rate + multi_rate:
                answers[r, c] = "MULTI"
            else:
                answers[r, c] = wrong[picks[r]]
    return RawResponseTable(ds.student_ids, ds.grades, ds.genders, answers, ds.item_ids)


__all__ = [
    "factor_model_corr",
    "random_answer_sheets",
    "reference_values",
    "simulate_2pl",
    "simulate_cctt_like",
    "simulate_factor_binary",
    "simulate_thresholded",
]
