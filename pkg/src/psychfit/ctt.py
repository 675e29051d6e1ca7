"""
Classical test theory: item difficulty and discrimination, Cronbach's
alpha, score summaries and two-group comparisons.

Variances use the sample (N - 1) convention throughout.
"""

from dataclasses import dataclass

import numpy as np
from scipy import stats

from .dataset import subset
from .exceptions import AnalysisError


@dataclass(frozen=True, eq=False)
class CttItemStats:
    """Per-item CTT statistics; arrays are aligned with ``item_ids``.

    ``point_biserial`` is NaN for items with no variance.
    """

    item_ids: tuple
    difficulty: np.ndarray
    sd: np.ndarray
    point_biserial: np.ndarray
    point_biserial_corrected: np.ndarray
    drop_alpha: np.ndarray
    corrected: bool = False

    @property
    def discrimination(self):
        """The point-biserial variant selected by ``corrected``."""
        return self.point_biserial_corrected if self.corrected else self.point_biserial

    def rows(self):
        for k, item in enumerate(self.item_ids):
            yield {
                "item": item,
                "difficulty": float(self.difficulty[k]),
                "sd": float(self.sd[k]),
                "point_biserial": float(self.point_biserial[k]),
                "point_biserial_corrected": float(self.point_biserial_corrected[k]),
                "drop_alpha": float(self.drop_alpha[k]),
            }


@dataclass(frozen=True, eq=False)
class ScoreSummary:
    mean: float
    sd: float
    histogram: np.ndarray  # counts of total scores 0..J
    below_chance_fraction: float
    n: int


@dataclass(frozen=True)
class GroupComparison:
    labels: tuple  # (reference, focal); differences are focal - reference
    n: tuple
    means: tuple
    mean_difference: float
    t: float
    df: float
    p: float
    cohens_d: float


def _pearson(x, y):
    xc = x - x.mean()
    yc = y - y.mean()
    den = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if den == 0:
        return np.nan
    return float((xc * yc).sum() / den)


def _alpha(data):
    k = data.shape[1]
    if k < 2:
        raise AnalysisError("Cronbach's alpha needs at least 2 items")
    total_var = data.sum(axis=1).var(ddof=1)
    if not total_var > 0:
        raise AnalysisError("total score has zero variance; alpha is undefined")
    return k / (k - 1) * (1 - data.var(axis=0, ddof=1).sum() / total_var)


def cronbach_alpha(ds, items=None):
    """Cronbach's alpha over ``items`` (all items when omitted)."""
    x = ds.data if items is None else ds.select_items(items).data
    return float(_alpha(x.astype(float)))


def item_analysis(ds, corrected=False):
    """Difficulty, SD, point-biserial and alpha-if-deleted for every item.

    Both the uncorrected (item included in the total) and corrected
    (item removed from the total) point-biserials are computed;
    ``corrected`` only chooses which one :attr:`CttItemStats.discrimination`
    reports.
    """
    ds.require_analyzable()
    x = ds.data.astype(float)
    if not (x.var(axis=0) > 0).any():
        raise AnalysisError("every item has zero variance")
    total = x.sum(axis=1)
    p = x.mean(axis=0)
    sd = x.std(axis=0, ddof=1)
    j = x.shape[1]
    rpb = np.array([_pearson(x[:, c], total) for c in range(j)])
    rpb_c = np.array([_pearson(x[:, c], total - x[:, c]) for c in range(j)])
    drop = np.full(j, np.nan)
    if j > 2:
        for c in range(j):
            rest = np.delete(x, c, axis=1)
            try:
                drop[c] = _alpha(rest)
            except AnalysisError:
                pass
    return CttItemStats(ds.item_ids, p, sd, rpb, rpb_c, drop, corrected)


def block_alphas(ds, spec=None):
    """Alpha of each factor block, keyed by factor name."""
    spec = spec or ds.spec
    return {name: cronbach_alpha(ds, items) for name, items in spec.factors}


def score_summary(ds):
    """Mean and SD of total scores, score histogram and share of scores below J/4."""
    if ds.n < 1:
        raise AnalysisError("score summary needs at least one respondent")
    total = ds.totals.astype(float)
    hist = np.bincount(ds.totals.astype(int), minlength=ds.j + 1)
    sd = float(total.std(ddof=1)) if ds.n > 1 else 0.0
    below = float(np.mean(total < ds.j / 4))
    return ScoreSummary(float(total.mean()), sd, hist, below, ds.n)


def cohens_d(x, y):
    """Standardized mean difference (mean(y) - mean(x)) over the pooled SD."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    nx, ny = len(x), len(y)
    pooled = ((nx - 1) * x.var(ddof=1) + (ny - 1) * y.var(ddof=1)) / (nx + ny - 2)
    diff = y.mean() - x.mean()
    if pooled == 0:
        return 0.0 if diff == 0 else float(np.sign(diff) * np.inf)
    return float(diff / np.sqrt(pooled))


_GROUPINGS = {
    "grade": (("G3", lambda g, s: g == "G3"), ("G4", lambda g, s: g == "G4")),
    "gender": (("F", lambda g, s: s == "F"), ("M", lambda g, s: s == "M")),
}


def compare_scores(x, y, labels=("x", "y")):
    """Welch t-test and Cohen's D between two score vectors (y relative to x)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if len(x) < 2 or len(y) < 2:
        raise AnalysisError("each group needs at least 2 members")
    if x.var() == 0 and y.var() == 0:
        raise AnalysisError("both groups have zero variance")
    res = stats.ttest_ind(y, x, equal_var=False)
    vx, vy = x.var(ddof=1) / len(x), y.var(ddof=1) / len(y)
    df = (vx + vy) ** 2 / (vx**2 / (len(x) - 1) + vy**2 / (len(y) - 1))
    return GroupComparison(
        labels=tuple(labels),
        n=(len(x), len(y)),
        means=(float(x.mean()), float(y.mean())),
        mean_difference=float(y.mean() - x.mean()),
        t=float(res.statistic),
        df=float(df),
        p=float(res.pvalue),
        cohens_d=cohens_d(x, y),
    )


def group_compare(ds, grouping):
    """Compare total scores between grades (G4 vs G3) or genders (M vs F).

    Mixed-grade classes and undisclosed genders are left out.
    """
    if grouping not in _GROUPINGS:
        raise AnalysisError(f"unknown grouping {grouping!r}; expected one of {sorted(_GROUPINGS)}")
    (ref_label, ref_pred), (focal_label, focal_pred) = _GROUPINGS[grouping]
    try:
        ref = subset(ds, ref_pred)
        focal = subset(ds, focal_pred)
    except AnalysisError as exc:
        raise AnalysisError(f"{grouping} comparison: group missing or too small ({exc})") from None
    return compare_scores(ref.totals, focal.totals, (ref_label, focal_label))


def emit_item_curves(stats_by_subset):
    """Long-format rows (subset, item, metric, value) for difficulty and point-biserial."""
    rows = []
    for name, st in stats_by_subset.items():
        for k, item in enumerate(st.item_ids):
            rows.append((name, item, "difficulty", float(st.difficulty[k])))
            rows.append((name, item, "point_biserial", float(st.discrimination[k])))
    return rows
