"""
End-to-end analysis pipeline and its on-disk report.

``run_pipeline`` computes everything in memory first and only then writes
``report.json`` and the CSV sidecars, staging them in a temporary directory
so that a failure never leaves a half-written output directory behind.
"""

import csv
import hashlib
import io
import json
import math
import os
import shutil
import tempfile
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .cfa import CfaOptions, factor_correlation_rows, fit_cfa, fit_indices
from .ctt import block_alphas, cronbach_alpha, emit_item_curves, group_compare, item_analysis, score_summary
from .dataset import (
    SUBSET_FILTERS,
    ScoredMatrix,
    build_dataset,
    default_factor_spec,
    default_key,
    read_factors,
    read_key,
    read_responses,
    subset,
)
from .exceptions import AnalysisError, ConfigurationError, PsychfitError
from .irt import AbilityGrid, curve_rows, fit_irt, lrt_compare
from .latentcorr import bartlett, kmo, phi_matrix, tetrachoric_matrix
from .shorten import df_sequence, load_plan, replay_shortening

STAGES = ("score", "ctt", "corr", "cfa", "irt", "shorten")
FORMATS = ("json", "csv")
MODES = {"raw": "raw_options", "prescored": "prescored", None: None}


class StageError(PsychfitError):
    """A pipeline stage failed; ``stage`` names it."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"stage '{stage}' failed: {cause}")


@dataclass(frozen=True)
class PipelineConfig:
    input: str
    key: str = None  # default: the built-in 25-item key
    factors: str = None  # default: the built-in six-factor structure
    mode: str = None  # raw | prescored | None (auto)
    subsets: tuple = ("all", "g3", "g4")
    bootstrap: int = 200
    quadrature: int = 49
    seed: int = 0
    out: str = None
    formats: tuple = FORMATS
    plan: str = "builtin:cctt"
    stages: tuple = STAGES

    def options(self):
        return {
            "mode": self.mode,
            "subsets": list(self.subsets),
            "bootstrap": self.bootstrap,
            "quadrature": self.quadrature,
            "seed": self.seed,
            "plan": self.plan,
            "stages": list(self.stages),
        }


@dataclass
class AnalysisReport:
    """Nested plain-data report plus the flat tables written as CSV sidecars."""

    data: dict
    tables: dict = field(default_factory=dict)  # name -> (header, rows)

    def to_json(self):
        return json.dumps(_clean(self.data), indent=2, allow_nan=False) + "\n"

    def table_csv(self, name):
        header, rows = self.tables[name]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([format_value(v) for v in row])
        return buf.getvalue()


def format_value(v):
    """CSV cell text: floats at 6 significant digits, NaN as an empty cell."""
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "" if not math.isfinite(v) else f"{float(v):.6g}"
    if isinstance(v, (list, tuple)):
        return " ".join(str(x) for x in v)
    return str(v)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to null."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _digest(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _threads():
    try:
        return max(1, int(os.environ.get("PSYCHFIT_THREADS", "1")))
    except ValueError:
        return 1


def load_dataset(config):
    key = read_key(config.key) if config.key else default_key()
    spec = read_factors(config.factors) if config.factors else default_factor_spec()
    if config.mode not in MODES:
        raise ConfigurationError(f"unknown mode {config.mode!r}; expected raw or prescored")
    raw = read_responses(config.input, MODES[config.mode])
    if isinstance(raw, ScoredMatrix):
        return build_dataset(raw, key, spec), None
    return build_dataset(raw, key, spec), raw


def _subsets(ds, names):
    out = {}
    for name in names:
        if name not in SUBSET_FILTERS:
            raise ConfigurationError(f"unknown subset {name!r}; expected one of {sorted(SUBSET_FILTERS)}")
        out[name] = ds if name == "all" else subset(ds, SUBSET_FILTERS[name])
    return out


def _stage(name, fn, *args):
    try:
        return fn(*args)
    except StageError:
        raise
    except (PsychfitError, ValueError, np.linalg.LinAlgError) as exc:
        raise StageError(name, exc) from exc


def _ctt_block(ds):
    st = item_analysis(ds)
    return {
        "alpha": cronbach_alpha(ds),
        "block_alpha": block_alphas(ds),
        "items": list(st.rows()),
    }, st


def _corr_block(ds):
    tm = tetrachoric_matrix(ds)
    ph = phi_matrix(ds)
    k_t, k_items = kmo(tm.rho)
    b_t = bartlett(tm.rho, ds.n)
    k_p, _ = kmo(ph)
    b_p = bartlett(ph, ds.n)
    block = {
        "kmo": k_t,
        "kmo_items": dict(zip(ds.item_ids, k_items)),
        "bartlett": {"chi2": b_t[0], "df": b_t[1], "p": b_t[2]},
        "kmo_phi": k_p,
        "bartlett_phi": {"chi2": b_p[0], "df": b_p[1], "p": b_p[2]},
        "smoothed": tm.smoothed,
    }
    return block, tm


def _cfa_block(ds, config):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        fit = fit_cfa(ds, options=CfaOptions(config.bootstrap, config.seed))
    ind = fit_indices(fit)
    raw = fit_indices(fit, robust=False)
    return {
        "fit_indices": ind.as_dict(),
        "fit_indices_unadjusted": raw.as_dict(),
        "chi2_unadjusted": fit.chi2,
        "scale": fit.scale,
        "shift": fit.shift,
        "loadings": list(fit.loading_rows()),
        "factor_correlations": factor_correlation_rows(fit),
        "heywood": fit.heywood,
        "warnings": list(fit.warnings),
    }


def _subset_analysis(name, ds, config):
    out = {"n": ds.n}
    st = None
    if "score" in config.stages or "ctt" in config.stages:
        s = _stage("score", score_summary, ds)
        out["score_summary"] = {
            "n": s.n,
            "mean": s.mean,
            "sd": s.sd,
            "below_chance_fraction": s.below_chance_fraction,
            "histogram": s.histogram,
        }
    if "ctt" in config.stages:
        out["ctt"], st = _stage("ctt", _ctt_block, ds)
    if "corr" in config.stages:
        out["corr"], tm = _stage("corr", _corr_block, ds)
        out["_tetra"] = tm
    if "cfa" in config.stages:
        out["cfa"] = _stage("cfa", _cfa_block, ds, config)
    out["_ctt_stats"] = st
    return out


def _irt_block(ds, config):
    fits = {m: fit_irt(ds, m, n_quad=config.quadrature) for m in ("1PL", "2PL")}
    stat, df, p = lrt_compare(fits["1PL"], fits["2PL"])
    block = {
        m: {
            "loglik": f.loglik,
            "n_params": f.n_params,
            "aic": f.aic,
            "bic": f.bic,
            "iterations": f.iterations,
            "monotone": f.monotone,
            "items": list(f.rows()),
        }
        for m, f in fits.items()
    }
    block["lrt"] = {"statistic": stat, "df": df, "p": p}
    block["n_quadrature"] = config.quadrature
    return block, fits


def _shorten_block(ds, config):
    plan = load_plan(config.plan)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        stages = replay_shortening(ds, plan, CfaOptions(config.bootstrap, config.seed))
    variants = plan.variants(ds.spec)
    return {
        "plan": config.plan,
        "df_sequence": df_sequence(plan, ds.spec),
        "stages": [s.row() for s in stages],
        "variants": {k: list(v) for k, v in variants.items()},
    }


def run_pipeline(config):
    """Run the configured stages and write the outputs (when ``config.out`` is set).

    Raises
    ------
    StageError
        Naming the stage that failed; nothing is written in that case.
    """
    for s in config.stages:
        if s not in STAGES:
            raise ConfigurationError(f"unknown stage {s!r}")
    ds, raw = _stage("score", load_dataset, config)
    subsets = _stage("score", _subsets, ds, config.subsets)

    names = list(subsets)
    threads = min(_threads(), len(names))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            futures = [ex.submit(_subset_analysis, n, subsets[n], config) for n in names]
            results = [f.result() for f in futures]
    else:
        results = [_subset_analysis(n, subsets[n], config) for n in names]
    per_subset = dict(zip(names, results))

    meta = {
        "version": __version__,
        "inputs": {"input": _digest(config.input)},
        "options": config.options(),
        "n": ds.n,
        "items": list(ds.item_ids),
        "factors": ds.spec.to_mapping(),
    }
    for k in ("key", "factors"):
        path = getattr(config, k)
        meta["inputs"][k] = _digest(path) if path else "builtin"
    notes = []
    if "g3" in names or "g4" in names:
        notes.append("mixed-grade classes are excluded from the g3 and g4 subsets")

    data = {"metadata": meta, "subsets": {}}
    tables = {}
    for name, res in per_subset.items():
        entry = {k: v for k, v in res.items() if not k.startswith("_")}
        data["subsets"][name] = entry
        if "corr" in res and res["corr"]["smoothed"]:
            notes.append(f"{name}: tetrachoric matrix smoothed to positive definite")
        if "cfa" in res:
            notes += [f"{name}: {w}" for w in res["cfa"]["warnings"] if "Heywood" in w]

    if "ctt" in config.stages:
        try:
            data["group_differences"] = {g: _group_dict(group_compare(ds, g)) for g in ("grade", "gender")}
        except AnalysisError as exc:
            notes.append(f"group comparison skipped: {exc}")
    if "irt" in config.stages:
        data["irt"], irt_fits = _stage("irt", _irt_block, ds, config)
    if "shorten" in config.stages:
        data["shortening"] = _stage("shorten", _shorten_block, ds, config)
    data["warnings"] = notes

    tables = _tables(data, per_subset, ds, irt_fits if "irt" in config.stages else None)
    report = AnalysisReport(data, tables)
    if config.out:
        write_report(report, config.out, config.formats, per_subset, ds)
    return report


def _group_dict(g):
    return {
        "labels": list(g.labels),
        "n": list(g.n),
        "means": list(g.means),
        "mean_difference": g.mean_difference,
        "t": g.t,
        "df": g.df,
        "p": g.p,
        "cohens_d": g.cohens_d,
    }


def _tables(data, per_subset, ds, irt_fits):
    t = {}
    subs = data["subsets"]
    if any("score_summary" in s for s in subs.values()):
        rows = []
        for name, s in subs.items():
            if "score_summary" in s:
                rows += [(name, k, int(c)) for k, c in enumerate(s["score_summary"]["histogram"])]
        t["score_histogram"] = (["subset", "score", "count"], rows)
    if any("ctt" in s for s in subs.values()):
        cols = ["difficulty", "sd", "point_biserial", "point_biserial_corrected", "drop_alpha"]
        rows = [
            [name, r["item"]] + [r[c] for c in cols]
            for name, s in subs.items()
            if "ctt" in s
            for r in s["ctt"]["items"]
        ]
        t["item_stats"] = (["subset", "item"] + cols, rows)
        curves = emit_item_curves({n: r["_ctt_stats"] for n, r in per_subset.items() if r["_ctt_stats"]})
        t["item_curves"] = (["subset", "item", "metric", "value"], curves)
    if any("cfa" in s or "corr" in s for s in subs.values()):
        cols = ["chi2", "df", "chi2_over_df", "p", "cfi", "tli", "rmsea", "srmr", "baseline_chi2", "baseline_df"]
        rows = []
        for name, s in subs.items():
            row = [name, s["n"]]
            c = s.get("corr")
            row += [c["kmo"], c["bartlett"]["chi2"], c["bartlett"]["df"]] if c else [None] * 3
            f = s.get("cfa")
            row += [f["fit_indices"][k] for k in cols] + [f["chi2_unadjusted"]] if f else [None] * (len(cols) + 1)
            rows.append(row)
        t["fit_indices"] = (["subset", "n", "kmo", "bartlett_chi2", "bartlett_df"] + cols + ["chi2_unadjusted"], rows)
    if any("cfa" in s for s in subs.values()):
        cols = ["factor", "item", "B", "SE", "z", "Beta", "p", "sig"]
        rows = [[name] + [r[c] for c in cols] for name, s in subs.items() if "cfa" in s for r in s["cfa"]["loadings"]]
        t["loadings"] = (["subset"] + cols, rows)
        cols = ["factor_1", "factor_2", "correlation", "SE", "z", "p", "sig"]
        rows = [
            [name] + [r[c] for c in cols]
            for name, s in subs.items()
            if "cfa" in s
            for r in s["cfa"]["factor_correlations"]
        ]
        t["factor_correlations"] = (["subset"] + cols, rows)
    if irt_fits:
        irt = data["irt"]
        rows = [[m, r["item"], r["difficulty"], r["discrimination"]] for m in ("1PL", "2PL") for r in irt[m]["items"]]
        t["irt_parameters"] = (["model", "item", "difficulty", "discrimination"], rows)
        rows = [[m, irt[m]["loglik"], irt[m]["n_params"], irt[m]["aic"], irt[m]["bic"]] for m in ("1PL", "2PL")]
        t["irt_comparison"] = (["model", "loglik", "n_params", "aic", "bic"], rows)
        grid = AbilityGrid(n_quad=irt["n_quadrature"])
        crow, trow = [], []
        for m, f in irt_fits.items():
            items, total = curve_rows(f, grid)
            crow += [(m,) + r for r in items]
            trow += [(m,) + r for r in total]
        t["irt_curves"] = (["model", "item", "theta", "icc", "iic"], crow)
        t["irt_tif"] = (["model", "theta", "tif"], trow)
    if "shortening" in data:
        sh = data["shortening"]
        cols = ["step", "removed", "n_items", "chi2", "df", "cfi", "tli", "rmsea", "srmr", "variant"]
        t["shortening"] = (cols, [[s[c] for c in cols] for s in sh["stages"]])
        items = list(ds.item_ids)
        rows = [[name] + [int(i in set(v)) for i in items] for name, v in sh["variants"].items()]
        t["variants"] = (["variant"] + [f"q{i}" for i in items], rows)
    return t


def write_report(report, out, formats, per_subset=None, ds=None):
    """Stage every output file in a temporary directory, then move them into ``out``."""
    for f in formats:
        if f not in FORMATS:
            raise ConfigurationError(f"unknown format {f!r}; expected json and/or csv")
    files = {}
    if "json" in formats:
        files["report.json"] = report.to_json()
    if "csv" in formats:
        for name in report.tables:
            files[f"{name}.csv"] = report.table_csv(name)
        for name, res in (per_subset or {}).items():
            if "_tetra" in res:
                files[f"tetrachoric_{name}.csv"] = res["_tetra"].to_csv()
    os.makedirs(out, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".psychfit-", dir=out)
    try:
        for name, text in files.items():
            with open(os.path.join(tmp, name), "w", newline="") as fh:
                fh.write(text)
        for name in files:
            os.replace(os.path.join(tmp, name), os.path.join(out, name))
    finally:
        shutil.rmtree(tmp, ignore_errors=True)
    return sorted(files)


def write_scored(ds, path):
    """Write a prescored responses CSV readable by the ``prescored`` mode."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["student_id", "grade", "gender"] + [f"q{i}" for i in ds.item_ids])
    grade_tok = {"G3": "3", "G4": "4", "MIXED": "mixed"}
    gender_tok = {"F": "f", "M": "m", "UNDISCLOSED": "na"}
    for sid, g, s, row in zip(ds.student_ids, ds.grades, ds.genders, ds.data):
        w.writerow([sid, grade_tok[g], gender_tok[s]] + [int(v) for v in row])
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())
