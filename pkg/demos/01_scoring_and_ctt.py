"""
Scoring and classical test theory
=================================

A synthetic cohort of 1519 students shaped like the published 25-item test.
We look at the score distribution, item difficulty and discrimination, and
internal consistency, overall and by grade.
"""

import numpy as np

from psychfit.ctt import block_alphas, cronbach_alpha, group_compare, item_analysis, score_summary
from psychfit.dataset import grade_subset
from psychfit.simulate import simulate_cctt_like

ds = simulate_cctt_like(rng=np.random.default_rng(0))
print(f"{ds.n} students, {ds.j} items")

# total scores
summary = score_summary(ds)
print(f"mean {summary.mean:.2f}  sd {summary.sd:.2f}  below chance {summary.below_chance_fraction:.3f}")
print("histogram:", summary.histogram.tolist())

# item difficulty is the proportion correct, discrimination the point-biserial
stats = item_analysis(ds)
print("\nitem  difficulty  r_pb   alpha if dropped")
for row in stats.rows():
    print(f"{row['item']:4d}  {row['difficulty']:10.3f}  {row['point_biserial']:.3f}  {row['drop_alpha']:.3f}")

print(f"\nalpha, all items: {cronbach_alpha(ds):.3f}")
for name, a in block_alphas(ds).items():
    print(f"  {name}: {a:.3f}")

# grade 3 against grade 4; mixed classes are left out
g3, g4 = grade_subset(ds, "G3"), grade_subset(ds, "G4")
cmp = group_compare(ds, "grade")
print(f"\ngrade 3 n={g3.n}, grade 4 n={g4.n}")
print(f"difference {cmp.mean_difference:.2f}, t {cmp.t:.2f} (df {cmp.df:.0f}), p {cmp.p:.3g}, d {cmp.cohens_d:.2f}")
