"""
Replaying a shortening plan
===========================

Items are dropped one at a time following the built-in removal plan. Each
stage is refitted and its fit indices recorded, which gives the 25-, 17-
and 15-item variants. The last part asks the data for the next removal.
"""

import warnings

import numpy as np

from psychfit.cfa import CfaOptions
from psychfit.dataset import default_factor_spec
from psychfit.shorten import load_plan, replay_shortening, suggest_removal
from psychfit.simulate import simulate_cctt_like

ds = simulate_cctt_like(rng=np.random.default_rng(2))
plan = load_plan("builtin:cctt")

for name, items in plan.variants(default_factor_spec()).items():
    print(f"{name}: {list(items)}")

with warnings.catch_warnings():
    # late stages can hit boundary estimates on synthetic data
    warnings.simplefilter("ignore", RuntimeWarning)
    stages = replay_shortening(ds, plan, CfaOptions(bootstrap=0))

print("\nstage  removed   df    chi2     CFI    RMSEA")
for s in stages:
    r = s.row()
    print(f"{r['step']:5d}  {str(r['removed']):8s} {r['df']:4d}  {r['chi2']:7.1f}  {r['cfi']:.3f}  {r['rmsea']:.3f}")

print("\n" + suggest_removal(stages[0].fit).describe())
