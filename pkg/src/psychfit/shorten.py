"""
CFA-guided shortening of a test: replay a removal plan stage by stage, or
ask for the next item to drop based on modification indices.
"""

import json
from dataclasses import dataclass
from importlib import resources

from .cfa import CfaOptions, fit_cfa, fit_indices, model_df, modification_indices
from .exceptions import ConfigurationError, ParseError, PsychfitError

BUILTIN_PLANS = {"builtin:cctt": "cctt_plan.json"}


@dataclass(frozen=True)
class RemovalStep:
    items: tuple  # usually one item; the last built-in step drops a pair
    reason: str
    variant: str = None  # name given to the item set left after this step


@dataclass(frozen=True)
class ShorteningPlan:
    steps: tuple
    name: str = "custom"

    def __post_init__(self):
        seen = set()
        for step in self.steps:
            for i in step.items:
                if i in seen:
                    raise ConfigurationError(f"item {i} is removed more than once")
                seen.add(i)

    @classmethod
    def from_records(cls, records, name="custom"):
        """Build a plan from a list of ``{"item": id or [ids], "reason": str}`` records."""
        if not isinstance(records, list):
            raise ParseError("plan must be a JSON list of {item, reason} records")
        steps = []
        for k, rec in enumerate(records, 1):
            if not isinstance(rec, dict) or "item" not in rec:
                raise ParseError(f"plan step {k} lacks an 'item' field")
            items = rec["item"] if isinstance(rec["item"], list) else [rec["item"]]
            try:
                items = tuple(int(i) for i in items)
            except (TypeError, ValueError):
                raise ParseError(f"plan step {k}: item ids must be integers") from None
            steps.append(RemovalStep(items, str(rec.get("reason", "")), rec.get("variant")))
        return cls(tuple(steps), name)

    def stages(self, spec):
        """Item sets and factor specs after 0, 1, ... steps, with the step taken."""
        out = [(None, spec)]
        for step in self.steps:
            missing = [i for i in step.items if i not in spec.items]
            if missing:
                raise ConfigurationError(f"plan removes items not in the test: {missing}")
            spec = spec.without(step.items)
            out.append((step, spec))
        return out

    def variants(self, spec, full_name=None):
        """Named item sets: the full test plus every step tagged with a variant name."""
        full_name = full_name or f"{self.name}-{len(spec.items)}"
        table = {full_name: tuple(sorted(spec.items))}
        for step, sp in self.stages(spec)[1:]:
            if step.variant:
                table[step.variant] = tuple(sorted(sp.items))
        return table


def load_plan(source):
    """Plan from ``builtin:cctt`` or a path to a JSON plan file."""
    if source in BUILTIN_PLANS:
        text = resources.files("psychfit").joinpath("data", BUILTIN_PLANS[source]).read_text()
        return ShorteningPlan.from_records(json.loads(text), name="cCTt")
    if str(source).startswith("builtin:"):
        raise ConfigurationError(f"unknown built-in plan {source!r}; available: {sorted(BUILTIN_PLANS)}")
    try:
        with open(source) as fh:
            records = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"plan file is not valid JSON: {exc.msg}", line=exc.lineno) from None
    return ShorteningPlan.from_records(records)


def variant_table(plan, items_universe):
    """Membership matrix rows (variant, item, included) over ``items_universe``."""
    rows = []
    for name, items in plan.items():
        members = set(items)
        rows.append((name, tuple(int(i in members) for i in items_universe)))
    return rows


def df_sequence(plan, spec):
    """Model df at each stage from the item sets alone."""
    return [model_df(sp) for _, sp in plan.stages(spec)]


@dataclass(frozen=True, eq=False)
class StageResult:
    step: int  # 0 is the unshortened test
    removed: tuple
    reason: str
    items: tuple
    spec: object
    fit: object
    indices: object
    variant: str = None

    @property
    def df(self):
        return self.indices.df

    def row(self):
        d = {"step": self.step, "removed": list(self.removed), "n_items": len(self.items), "reason": self.reason}
        d.update(self.indices.as_dict())
        d["variant"] = self.variant
        return d


def replay_shortening(ds, plan, options=None, spec=None):
    """Refit the CFA after every removal in ``plan``; stage 0 is the full model."""
    spec = spec or ds.spec
    if spec is None:
        raise ConfigurationError("shortening needs a factor structure")
    options = options or CfaOptions()
    results = []
    for k, (step, sp) in enumerate(plan.stages(spec)):
        try:
            fit = fit_cfa(ds.select_items(sp.items), sp, options)
            ind = fit_indices(fit)
        except PsychfitError as exc:
            raise type(exc)(f"shortening stage {k}: {exc}") from exc
        if ind.df != model_df(sp):
            raise AssertionError("stage df disagrees with the item-count arithmetic")
        results.append(
            StageResult(
                step=k,
                removed=step.items if step else (),
                reason=step.reason if step else "",
                items=sp.items,
                spec=sp,
                fit=fit,
                indices=ind,
                variant=step.variant if step else None,
            )
        )
    return results


@dataclass(frozen=True)
class Suggestion:
    item: int  # None when nothing may be removed
    score: float
    justification: tuple  # the dominant modification indices involving the item

    def __bool__(self):
        return self.item is not None

    def describe(self):
        if self.item is None:
            return "no suggestion: every candidate is protected or would leave a factor too small"
        parts = [f"{m.kind} {m.item}->{m.target} MI={m.mi:.2f}" for m in self.justification]
        return f"remove item {self.item} (aggregate MI {self.score:.2f}): " + "; ".join(parts)


def suggest_removal(fit, min_items=2, protected=(), top=3):
    """Item with the largest summed modification index over its cross-loadings and residual correlations.

    Items whose removal would leave their factor with fewer than
    ``min_items`` items, and items in ``protected``, are skipped. Ties go to
    the lowest item id.
    """
    mis = [m for m in modification_indices(fit) if m.mi == m.mi]
    spec = fit.model.spec
    sizes = {name: len(items) for name, items in spec.factors}
    protected = set(protected)
    best = None
    for item in sorted(spec.items):
        if item in protected or sizes[spec.names[spec.factor_of(item)]] - 1 < min_items:
            continue
        mine = [m for m in mis if m.involves(item)]
        score = sum(m.mi for m in mine)
        if best is None or score > best[1]:
            best = (item, score, mine)
    if best is None:
        return Suggestion(None, float("nan"), ())
    item, score, mine = best
    mine = sorted(mine, key=lambda m: -m.mi)[:top]
    return Suggestion(item, float(score), tuple(mine))
