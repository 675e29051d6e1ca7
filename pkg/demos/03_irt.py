"""
One- and two-parameter logistic models
======================================

Marginal maximum likelihood by EM over a Gauss-Hermite grid. We check
recovery on simulated 2PL data, compare the nested models and print the
test information function.
"""

import numpy as np

from psychfit.dataset import ScoredMatrix
from psychfit.irt import AbilityGrid, fit_irt, lrt_compare, tif
from psychfit.simulate import simulate_2pl

rng = np.random.default_rng(7)
a = rng.uniform(0.8, 1.8, 25)
b = rng.uniform(-2.5, 2.5, 25)
ds = ScoredMatrix.from_array(simulate_2pl(5000, a, b, rng))

f1 = fit_irt(ds, "1PL")
f2 = fit_irt(ds, "2PL")
for f in (f1, f2):
    print(f"{f.model}: logLik {f.loglik:.1f}  k {f.n_params}  AIC {f.aic:.1f}  BIC {f.bic:.1f}  EM iterations {f.iterations}")

stat, df, p = lrt_compare(f1, f2)
print(f"LRT 1PL vs 2PL: chi2 {stat:.1f} on {df} df, p {p:.3g}")

print(f"\nRMSE a {np.sqrt(np.mean((f2.a - a) ** 2)):.3f}, RMSE b {np.sqrt(np.mean((f2.b - b) ** 2)):.3f}")

grid = AbilityGrid()
info = tif(f2, grid)
print(f"test information peaks at theta={grid.theta[np.argmax(info)]:.2f} ({info.max():.2f})")
for t in (-3, -2, -1, 0, 1, 2, 3):
    k = np.argmin(np.abs(grid.theta - t))
    print(f"  theta {t:+d}: {info[k]:.2f}")
