"""Overlay rendering of ground-truth and predicted vertebra quadrilaterals."""

from __future__ import annotations

import base64
import io
from dataclasses import dataclass

import numpy as np
from PIL import Image

IMAGE_BAND_MAX = 160  # grayscale image occupies 0..160
GT_VALUE = 255
PRED_VALUE = 208
GT_COLOR = "#00c000"
PRED_COLOR = "#e00000"
_QUAD_CYCLE = (0, 1, 3, 2)  # TL, TR, BR, BL


@dataclass
class Overlay:
    raster: np.ndarray  # uint8 H x W, value-banded
    gt_pixels: np.ndarray  # bool H x W
    pred_pixels: np.ndarray  # bool H x W
    svg: str
    n_gt: int
    n_pred: int


def _line(canvas: np.ndarray, p0, p1) -> None:
    """Bresenham segment between integer pixel positions, clipped to the canvas."""
    h, w = canvas.shape
    x0, y0 = p0
    x1, y1 = p1
    dx, dy = abs(x1 - x0), -abs(y1 - y0)
    sx, sy = (1 if x0 < x1 else -1), (1 if y0 < y1 else -1)
    err = dx + dy
    while True:
        if 0 <= x0 < w and 0 <= y0 < h:
            canvas[y0, x0] = True
        if x0 == x1 and y0 == y1:
            return
        e2 = 2 * err
        if e2 >= dy:
            err += dy
            x0 += sx
        if e2 <= dx:
            err += dx
            y0 += sy


def quad_pixels(landmarks: np.ndarray, height: int, width: int) -> tuple[np.ndarray, int]:
    """Boolean outline raster of every vertebra quadrilateral, plus the count drawn."""
    pts = np.asarray(landmarks, dtype=np.float64).reshape(-1, 4, 2)
    canvas = np.zeros((height, width), dtype=bool)
    pix = np.floor(pts * np.array([width, height])).astype(np.int64)
    for quad in pix:
        for a, b in zip(_QUAD_CYCLE, _QUAD_CYCLE[1:] + _QUAD_CYCLE[:1]):
            _line(canvas, tuple(quad[a]), tuple(quad[b]))
    return canvas, len(pix)


def _svg(image: np.ndarray, gt: np.ndarray, pred: np.ndarray) -> str:
    h, w = image.shape
    buf = io.BytesIO()
    Image.fromarray(np.round(np.clip(image, 0, 1) * 255).astype(np.uint8)).save(buf, format="PNG")
    href = "data:image/png;base64," + base64.b64encode(buf.getvalue()).decode("ascii")
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{w * 4}" height="{h * 4}" viewBox="0 0 {w} {h}">',
        f'<image x="0" y="0" width="{w}" height="{h}" href="{href}" style="image-rendering:pixelated"/>',
    ]
    for cls, color, pts in (("gt", GT_COLOR, gt), ("pred", PRED_COLOR, pred)):
        for quad in np.asarray(pts).reshape(-1, 4, 2):
            coords = " ".join(f"{quad[k, 0] * w:.3f},{quad[k, 1] * h:.3f}" for k in _QUAD_CYCLE)
            out.append(f'<polygon class="{cls}" points="{coords}" fill="none" stroke="{color}" stroke-width="0.4"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_overlay(image: np.ndarray, gt: np.ndarray, pred: np.ndarray) -> Overlay:
    """Grayscale image in the low value band, ground truth at 255, predictions at 208.

    Predicted outlines are drawn last, so they win on shared pixels.  The SVG carries
    the same outlines in green (ground truth) and red (prediction).
    """
    image = np.asarray(image, dtype=np.float64)
    h, w = image.shape
    gt_pix, n_gt = quad_pixels(gt, h, w)
    pred_pix, n_pred = quad_pixels(pred, h, w)
    raster = np.round(np.clip(image, 0, 1) * IMAGE_BAND_MAX).astype(np.uint8)
    raster[gt_pix] = GT_VALUE
    raster[pred_pix] = PRED_VALUE
    return Overlay(raster, gt_pix, pred_pix, _svg(image, gt, pred), n_gt, n_pred)
