import json
import warnings

import numpy as np
import pytest

from psychfit.cfa import CfaOptions, fit_cfa, fit_indices
from psychfit.dataset import default_factor_spec
from psychfit.exceptions import ConfigurationError, ParseError
from psychfit.shorten import ShorteningPlan, df_sequence, load_plan, replay_shortening, suggest_removal, variant_table

from conftest import sim_binary

PUBLISHED_VARIANTS = {
    "cCTt-25": list(range(1, 26)),
    "cCTt-17": [1, 3, 5, 6, 7, 11, 12, 13, 15, 16, 18, 19, 20, 21, 23, 24, 25],
    "cCTt-15": [1, 3, 5, 6, 7, 11, 12, 13, 15, 16, 18, 19, 20, 21, 23],
}


def test_builtin_plan_variants_and_df():
    plan = load_plan("builtin:cctt")
    spec = default_factor_spec()
    variants = plan.variants(spec)
    assert {k: list(v) for k, v in variants.items()} == PUBLISHED_VARIANTS
    assert df_sequence(plan, spec) == [260, 237, 215, 194, 174, 155, 137, 120, 104, 80]
    sizes = [len(sp.items) for _, sp in plan.stages(spec)]
    assert np.diff(sizes).tolist() == [-1] * 8 + [-2]
    assert plan.stages(spec)[-1][1].names == ("f1", "f2", "f3", "f4", "f5")


def test_variant_table_rows():
    plan = load_plan("builtin:cctt")
    rows = variant_table(plan.variants(default_factor_spec()), range(1, 26))
    assert rows[2][0] == "cCTt-15"
    assert sum(rows[2][1]) == 15 and rows[2][1][1] == 0 and rows[2][1][22] == 1


def test_plan_file_and_errors(tmp_path):
    path = tmp_path / "plan.json"
    path.write_text(json.dumps([{"item": 3, "reason": "x"}, {"item": [4, 5], "reason": "pair"}]))
    plan = load_plan(str(path))
    assert [s.items for s in plan.steps] == [(3,), (4, 5)]
    with pytest.raises(ConfigurationError, match="more than once"):
        ShorteningPlan.from_records([{"item": 3}, {"item": 3}])
    with pytest.raises(ParseError):
        ShorteningPlan.from_records({"item": 3})
    with pytest.raises(ParseError):
        ShorteningPlan.from_records([{"reason": "no item"}])
    with pytest.raises(ConfigurationError):
        load_plan("builtin:nope")
    path.write_text("[{")
    with pytest.raises(ParseError):
        load_plan(str(path))
    with pytest.raises(ConfigurationError, match="not in the test"):
        ShorteningPlan.from_records([{"item": 99}]).stages(default_factor_spec())


def test_empty_plan_is_the_full_fit(cctt_like):
    ds = cctt_like.select_items(list(range(1, 9))).with_spec(
        default_factor_spec().restricted_to(range(1, 9))
    )
    opts = CfaOptions(bootstrap=20, seed=1)
    stages = replay_shortening(ds, ShorteningPlan(()), opts)
    assert len(stages) == 1
    full = fit_cfa(ds, options=opts)
    assert stages[0].indices.as_dict() == fit_indices(full).as_dict()
    assert np.array_equal(stages[0].fit.loadings, full.loadings)


def test_replay_builtin_plan_on_synthetic(cctt_like):
    stages = replay_shortening(cctt_like, load_plan("builtin:cctt"), CfaOptions(bootstrap=0))
    assert [s.df for s in stages] == [260, 237, 215, 194, 174, 155, 137, 120, 104, 80]
    assert sorted(stages[-1].items) == PUBLISHED_VARIANTS["cCTt-15"]
    assert stages[-1].variant == "cCTt-15"
    assert stages[1].removed == (17,)
    assert stages[1].row()["removed"] == [17]


def test_stage_errors_are_annotated(cctt_like):
    # removing an item leaves a one-item factor, which cannot be identified
    plan = ShorteningPlan.from_records([{"item": 24, "reason": "test"}])
    with pytest.raises(ConfigurationError, match="shortening stage 1"):
        replay_shortening(cctt_like, plan, CfaOptions(bootstrap=0))


@pytest.fixture(scope="module")
def cross_fit():
    from psychfit.dataset import FactorSpec

    spec = FactorSpec.from_mapping({"f1": [1, 2, 3, 4, 5], "f2": [6, 7, 8, 9, 10], "f3": [11, 12, 13, 14, 15]})
    phi = np.array([[1, 0.3, 0.3], [0.3, 1, 0.3], [0.3, 0.3, 1]])
    ds = sim_binary(1519, spec, [0.7] * 15, phi, np.linspace(0.3, 0.8, 15), 12, cross={(8, 2): 0.45})
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return fit_cfa(ds, options=CfaOptions(bootstrap=0))


def test_suggests_the_double_loading_item(cross_fit):
    s = suggest_removal(cross_fit)
    assert s and s.item == 8
    assert s.justification[0].involves(8)
    assert "remove item 8" in s.describe()


def test_constraints(cross_fit):
    s = suggest_removal(cross_fit, protected=[8])
    assert s.item not in (None, 8)
    nothing = suggest_removal(cross_fit, protected=range(1, 16))
    assert not nothing and nothing.item is None
    assert "no suggestion" in nothing.describe()
    # every factor has five items; requiring five leaves no candidate
    assert suggest_removal(cross_fit, min_items=5).item is None
