"""Vertebra corner annotation from labeled masks via the FAST segment test."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractError, ExtractionError

# Bresenham circle of radius 3, clockwise from 12 o'clock, as (dx, dy)
CIRCLE = (
    (0, -3), (1, -3), (2, -2), (3, -1), (3, 0), (3, 1), (2, 2), (1, 3),
    (0, 3), (-1, 3), (-2, 2), (-3, 1), (-3, 0), (-3, -1), (-2, -2), (-1, -3),
)
RADIUS = 3
CROP_PAD = 6


@dataclass(frozen=True)
class Corner:
    x: int  # column
    y: int  # row
    score: float


def segment_scores(image: np.ndarray, arc_length: int = 9) -> np.ndarray:
    """FAST corner strength of every pixel (zero within 3 px of the border).

    The score is the supremum threshold for which some contiguous arc of
    ``arc_length`` circle pixels is entirely brighter (or entirely darker) than the
    center by more than the threshold.  Non-positive means no arc qualifies at any t.
    """
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 2:
        raise ContractError(f"fast_detect needs a single-channel image, got shape {img.shape}")
    h, w = img.shape
    if h < 7 or w < 7:
        raise ContractError(f"image {h}x{w} is smaller than 7x7")
    if not 1 <= arc_length <= 16:
        raise ContractError(f"arc_length must be in 1..16, got {arc_length}")
    center = img[RADIUS:h - RADIUS, RADIUS:w - RADIUS]
    diff = np.stack([img[RADIUS + dy:h - RADIUS + dy, RADIUS + dx:w - RADIUS + dx] - center for dx, dy in CIRCLE])
    ring = np.concatenate([diff, diff[: arc_length - 1]])
    best = np.zeros(diff.shape[1:])
    for sign in (1.0, -1.0):
        arcmin = sign * ring[:16]
        for i in range(1, arc_length):
            arcmin = np.minimum(arcmin, sign * ring[i:i + 16])
        best = np.maximum(best, arcmin.max(axis=0))
    scores = np.zeros((h, w))
    scores[RADIUS:h - RADIUS, RADIUS:w - RADIUS] = best
    return scores


def fast_detect(image: np.ndarray, threshold: float, arc_length: int = 9) -> list[Corner]:
    """Pixels passing the segment test at ``threshold``, in row-major scan order."""
    if threshold <= 0:
        raise ContractError(f"threshold must be positive, got {threshold}")
    if not 9 <= arc_length <= 12:
        raise ContractError(f"arc_length must be in 9..12, got {arc_length}")
    scores = segment_scores(image, arc_length)
    ys, xs = np.nonzero(scores > threshold)
    return [Corner(int(x), int(y), float(scores[y, x])) for y, x in zip(ys, xs)]


def nonmax_suppress(corners: list[Corner], radius: int = 3) -> list[Corner]:
    """Greedy suppression by descending score; ties resolved in scan order."""
    order = sorted(corners, key=lambda c: (-c.score, c.y, c.x))
    kept: list[Corner] = []
    for c in order:
        if all(max(abs(c.x - k.x), abs(c.y - k.y)) > radius for k in kept):
            kept.append(c)
    return kept


def box_blur3(img: np.ndarray) -> np.ndarray:
    p = np.pad(img, 1)
    rows = (p[:-2, :] + p[1:-1, :] + p[2:, :]) / 3.0
    return (rows[:, :-2] + rows[:, 1:-1] + rows[:, 2:]) / 3.0


def _principal_frame(ys: np.ndarray, xs: np.ndarray):
    pts = np.stack([xs + 0.5, ys + 0.5], axis=1)
    centroid = pts.mean(axis=0)
    cov = np.cov((pts - centroid).T, bias=True)
    evals, evecs = np.linalg.eigh(cov)
    lateral = evecs[:, np.argmax(evals)]
    if lateral[0] < 0 or (lateral[0] == 0 and lateral[1] > 0):
        lateral = -lateral
    longitudinal = np.array([-lateral[1], lateral[0]])  # points down the image
    return centroid, lateral, longitudinal


def vertebra_corners(region: np.ndarray, label: int = 0, threshold: float = 0.3,
                     arc_length: int = 9) -> np.ndarray:
    """Four pixel-center corners (TL, TR, BL, BR) of one binary region, in pixel units.

    The region is blurred once and run through the segment test.  Each quadrant of
    the region's principal-axis frame contributes the candidate reaching farthest
    towards that quadrant's corner, with both axes scaled by the region's half
    extents so thin vertebrae do not trade height for width.  Candidates are not thinned first: suppression
    keeps the strongest response, which sits a pixel inside the true corner, and on
    vertebrae only a few pixels tall it merges top and bottom corners.
    """
    ys, xs = np.nonzero(region)
    if len(ys) == 0:
        raise ExtractionError(f"label {label} is empty")
    y0, y1, x0, x1 = ys.min(), ys.max() + 1, xs.min(), xs.max() + 1
    crop = np.zeros((y1 - y0 + 2 * CROP_PAD, x1 - x0 + 2 * CROP_PAD))
    crop[CROP_PAD:-CROP_PAD, CROP_PAD:-CROP_PAD] = region[y0:y1, x0:x1] != 0
    raw = fast_detect(box_blur3(crop), threshold, arc_length)
    if len(raw) < 4:
        raise ExtractionError(f"label {label}: only {len(raw)} corner candidates")
    cand = np.array([[c.x + x0 - CROP_PAD + 0.5, c.y + y0 - CROP_PAD + 0.5] for c in raw])
    centroid, lateral, longitudinal = _principal_frame(ys, xs)
    rel = cand - centroid
    lat, lon = rel @ lateral, rel @ longitudinal
    # half extents of the region in the principal frame, to pixel edges
    pix = np.stack([xs + 0.5, ys + 0.5], axis=1) - centroid
    half_lat = np.abs(pix @ lateral).max() + 0.5
    half_lon = np.abs(pix @ longitudinal).max() + 0.5
    out = np.empty((4, 2))
    for k, (side, depth) in enumerate(((-1, -1), (1, -1), (-1, 1), (1, 1))):
        sel = ((lat >= 0) == (side > 0)) & ((lon >= 0) == (depth > 0))
        if not sel.any():
            raise ExtractionError(f"label {label}: no corner candidate in quadrant {('TL', 'TR', 'BL', 'BR')[k]}")
        idx = np.flatnonzero(sel)
        reach = side * lat[idx] / half_lat + depth * lon[idx] / half_lon
        out[k] = cand[idx[np.argmax(reach)]]
    return out


def extract_vertebra_corners(mask: np.ndarray, n_vertebrae: int = 18, threshold: float = 0.3,
                             arc_length: int = 9) -> np.ndarray:
    """(4 * n_vertebrae, 2) normalized landmarks from a labeled mask.

    Vertebrae are ordered top to bottom by region centroid; coordinates are pixel
    centers divided by the image width (x) and height (y).
    """
    mask = np.asarray(mask)
    if mask.ndim != 2:
        raise ContractError(f"mask must be 2-D, got shape {mask.shape}")
    labels = np.unique(mask)
    if labels.min() < 0 or labels.max() > n_vertebrae:
        raise ContractError(f"mask labels must lie in 0..{n_vertebrae}, found {labels.min()}..{labels.max()}")
    h, w = mask.shape
    found = []
    for v in range(1, n_vertebrae + 1):
        region = mask == v
        if not region.any():
            raise ExtractionError(f"label {v} is empty")
        corners = vertebra_corners(region, v, threshold, arc_length)
        cy = np.nonzero(region)[0].mean()
        found.append((cy, v, corners))
    found.sort(key=lambda item: (item[0], item[1]))
    pts = np.concatenate([c for _, _, c in found])
    return pts / np.array([w, h])
