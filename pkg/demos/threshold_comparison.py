"""Compare the three thresholding rules on one set of training scores.

The maximum-of-training rule (mvt) can never flag its own training data;
the tail-fit rule (pot) extrapolates beyond the observed maximum for small
target rates; the chi-square rule assumes Gaussian data and is shown here
for contrast.

    python3 demos/threshold_comparison.py
"""

import numpy as np

from madkit import (
    ThresholdSpec,
    center,
    chi2_threshold,
    fit_scatter,
    mvt_threshold,
    pot_threshold,
    score_all,
)

rng = np.random.default_rng(42)
m, t = 8, 50000

# Gaussian training block -> Mahalanobis scores
data = rng.standard_normal((m, t))
centered, mu = center(data)
fit = fit_scatter(centered)
scores = score_all(fit, centered)
print(f"{t} training scores, mean MD^2 = {np.mean(scores ** 2):.3f} "
      f"(= {m} by construction)")

# rule 1: maximum of training scores
k_mvt = mvt_threshold(scores)

# rule 2: generalized Pareto fit over the top 1 percent, q = 1e-4
spec = ThresholdSpec(kind="pot", q=1e-4, percentile=0.99)
k_pot, gpd = pot_threshold(scores, spec)

# rule 3: chi-square quantile at alpha = 1e-4
k_chi = chi2_threshold(m, alpha=1e-4)

print(f"mvt  k = {k_mvt:.4f}   (training max, zero self-flags)")
print(f"pot  k = {k_pot:.4f}   (tail fit: gamma={gpd.gamma:+.3f}, "
      f"delta={gpd.delta:.3f}, {gpd.t_l} exceedances)")
print(f"chi2 k = {k_chi:.4f}   (exact for Gaussian data)")

# How often does fresh data from the same law cross each threshold?
fresh = rng.standard_normal((m, 200000))
fresh_scores = score_all(fit, fresh - mu[:, None])
for name, k in (("mvt", k_mvt), ("pot", k_pot), ("chi2", k_chi)):
    rate = float((fresh_scores > k).mean())
    print(f"{name:4s} fresh exceedance rate: {rate:.2e}")

# POT extrapolates: the q = 1e-6 threshold lies beyond every training score
deep = pot_threshold(scores, ThresholdSpec(kind="pot", q=1e-6, percentile=0.99))[0]
print(f"pot q=1e-6 k = {deep:.4f} vs training max {scores.max():.4f}")
