"""The evaluation statistics, checked against independent computations.

Run: python demos/04_statistics.py
"""

import math

import numpy as np

from spinebpd.metrics import anova_oneway, f_survival, pearson_r, regularized_incomplete_beta

# Two small groups by hand: SSB = 1.5 on 1 df, SSW = 4 on 4 df.
f, p = anova_oneway([1, 2, 3], [2, 3, 4])
print(f"F = {f}, p = {p:.6f}")

# With two groups, F is the squared pooled t statistic.
rng = np.random.default_rng(0)
a, b = rng.normal(0, 1, 30), rng.normal(0.4, 1, 25)
sp2 = (((a - a.mean()) ** 2).sum() + ((b - b.mean()) ** 2).sum()) / (a.size + b.size - 2)
t = (a.mean() - b.mean()) / math.sqrt(sp2 * (1 / a.size + 1 / b.size))
print(f"F = {anova_oneway(a, b)[0]:.10f}, t^2 = {t * t:.10f}")

# The p-value is an incomplete beta function; a few reference points.
for x, alpha, beta in ((0.5, 3, 3), (0.2, 1, 1), (0.9, 2.5, 0.5)):
    print(f"I_{x}({alpha}, {beta}) = {regularized_incomplete_beta(x, alpha, beta):.12f}")
print("P(F(1, 98) > 3.94) =", round(f_survival(3.94, 1, 98), 4))

# Pearson r pools every coordinate, so a shifted but well-ordered prediction still scores high.
gt = rng.random(144)
print(f"r(gt, gt + 0.05) = {pearson_r(gt, gt + 0.05):.6f}")
print(f"r(gt, gt + noise) = {pearson_r(gt, gt + rng.normal(0, 0.1, 144)):.4f}")
