"""From a labeled vertebra mask to 72 ordered corner landmarks with the FAST segment test.

The synthetic generator knows the exact corners, so the extractor can be scored.

Run: python demos/02_annotate_masks.py [n_samples]
"""

import sys

import numpy as np

from spinebpd.landmarks import box_blur3, extract_vertebra_corners, fast_detect
from spinebpd.synthgen import VERTEBRA_NAMES, make_sample

n = int(sys.argv[1]) if len(sys.argv) > 1 else 20
scale = np.array([64, 128])

# One vertebra up close: the blurred binary region and its raw FAST responses.
sample = make_sample(seed=1, index=0)
region = (sample.mask == 8).astype(float)
raw = fast_detect(box_blur3(np.pad(region, 6)), threshold=0.3)
print(f"{VERTEBRA_NAMES[7]}: {int(region.sum())} pixels, {len(raw)} raw FAST candidates")

# The whole spine: four corners per vertebra, top to bottom.
pts = extract_vertebra_corners(sample.mask)
err = np.hypot(*((pts - sample.landmarks) * scale).T)
for v in (0, 9, 17):
    corners = ", ".join(f"({x:.1f}, {y:.1f})" for x, y in pts[4 * v:4 * v + 4] * scale)
    print(f"{VERTEBRA_NAMES[v]:>3}  TL, TR, BL, BR = {corners}   max err {err[4 * v:4 * v + 4].max():.2f} px")

# Accuracy over many masks at the desk resolution.
errors = []
for i in range(n):
    s = make_sample(seed=2, index=i, severity_range=(0.0, 0.2))
    errors.append(np.hypot(*((extract_vertebra_corners(s.mask) - s.landmarks) * scale).T))
errors = np.concatenate(errors)
print(f"{n} masks: {np.mean(errors <= 2):.1%} of {errors.size} corners within 2 px, "
      f"median {np.median(errors):.2f} px, worst {errors.max():.2f} px")
