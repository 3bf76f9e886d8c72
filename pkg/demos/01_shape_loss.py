"""Why a pairwise-distance term: BPD ignores rigid motion, MSE does not.

Run: python demos/01_shape_loss.py
"""

import numpy as np

from spinebpd.loss import build_bipartite_graph, bpd_loss, mse_loss, total_loss
from spinebpd.synthgen import make_sample

sample = make_sample(seed=0, index=0)
gt = sample.landmarks[None]  # (1, 72, 2), normalized x and y
graph = build_bipartite_graph(18)
print(f"{len(graph.set_a)} left corners, {len(graph.set_b)} right corners, {len(graph.edges)} edges")

# Shift the whole prediction: every point is wrong, the shape is not.
shifted = gt + np.array([0.03, -0.02])
print(f"shifted    mse {mse_loss(shifted, gt)[0]:.6f}   bpd {bpd_loss(shifted, gt, graph)[0]:.6f}")

# Squash one vertebra: pointwise error is small, the shape is off.
squashed = gt.copy()
squashed[0, 40:44, 0] = 0.5 + 0.6 * (squashed[0, 40:44, 0] - 0.5)
print(f"squashed   mse {mse_loss(squashed, gt)[0]:.6f}   bpd {bpd_loss(squashed, gt, graph)[0]:.6f}")

# The training objective mixes both; alpha sets the exchange rate.
for alpha in (0.0, 0.01, 0.1):
    terms = total_loss(squashed, gt, graph, alpha)
    print(f"alpha {alpha:<5} total {terms.value:.6f}  (mse {terms.mse:.6f} + alpha * bpd {terms.bpd:.4f})")
