"""Synthetic scoliotic-spine samples: pseudo X-ray, labeled vertebra mask, exact corners.

Geometry lives in a width-normalized frame where one image width is 1 in both
directions, so rotated rectangles stay rectangles in pixel space for any resolution
with the spec's aspect ratio.  Landmarks are reported normalized per axis: x across
the width, y down the height.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, GenerationError
from .pgm import write_pgm

N_VERTEBRAE = 18
VERTEBRA_NAMES = ("C7",) + tuple(f"T{i}" for i in range(1, 13)) + tuple(f"L{i}" for i in range(1, 6))
SCHEMA_VERSION = 1

MAX_SEVERITY = 0.25
WAVELENGTH_RANGE = (0.5, 1.5)
GAP_RANGE = (0.2, 0.35)
TILT_JITTER = 0.1
SPINE_MARGIN = 0.05  # fraction of height left free above C7 and below L5
BORDER_MARGIN = 0.02  # corners must stay this far inside the image (normalized)

VERTEBRA_INTENSITY = 0.8
BACKGROUND_INTENSITY = 0.2
NOISE_SIGMA = 0.05
BLUR_KERNEL = (0.25, 0.5, 0.25)
BLUR_PASSES = 2


@dataclass(frozen=True)
class SpineSpec:
    severity: float
    wavelength_count: float
    phase: float
    vertebra_heights: tuple[float, ...]  # fraction of image height
    vertebra_widths: tuple[float, ...]  # fraction of image width
    gap_fraction: float
    per_vertebra_tilt: tuple[float, ...]  # radians, clockwise from vertical in image space
    aspect: float = 2.0  # image height / width

    def centerline(self, t):
        """Width-normalized centerline (u, s) at parameter t in [0, 1], top to bottom."""
        t = np.asarray(t, dtype=np.float64)
        u = 0.5 + self.severity * np.sin(2 * np.pi * self.wavelength_count * t + self.phase)
        s = self.aspect * (SPINE_MARGIN + (1 - 2 * SPINE_MARGIN) * t)
        return u, s

    def centerline_tangent(self, t):
        t = np.asarray(t, dtype=np.float64)
        omega = 2 * np.pi * self.wavelength_count
        du = self.severity * omega * np.cos(omega * t + self.phase)
        ds = np.full_like(t, self.aspect * (1 - 2 * SPINE_MARGIN))
        return du, ds

    def vertebra_params(self) -> np.ndarray:
        """Equal-arc-length positions t of the 18 vertebra centers."""
        return _equal_arc_params(self)

    def corners(self) -> np.ndarray:
        """(18, 4, 2) normalized (x, y) corners ordered TL, TR, BL, BR."""
        return _corners_width_frame(self) * np.array([1.0, 1.0 / self.aspect])

    def to_dict(self) -> dict:
        d = asdict(self)
        for k in ("vertebra_heights", "vertebra_widths", "per_vertebra_tilt"):
            d[k] = list(d[k])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "SpineSpec":
        d = dict(d)
        for k in ("vertebra_heights", "vertebra_widths", "per_vertebra_tilt"):
            d[k] = tuple(d[k])
        return cls(**d)


@dataclass
class SpineSample:
    image: np.ndarray  # H x W float in [0, 1]
    mask: np.ndarray  # H x W uint8 labels 0..18
    landmarks: np.ndarray  # (72, 2) normalized (x, y)
    spec: SpineSpec
    sample_id: str = ""


def _arc_table(spec: SpineSpec, samples: int = 4001):
    t = np.linspace(0.0, 1.0, samples)
    du, ds = spec.centerline_tangent(t)
    speed = np.hypot(du, ds)
    arc = np.concatenate([[0.0], np.cumsum(0.5 * (speed[1:] + speed[:-1]) * np.diff(t))])
    return t, arc


def _equal_arc_params(spec: SpineSpec) -> np.ndarray:
    t, arc = _arc_table(spec)
    targets = (np.arange(N_VERTEBRAE) + 0.5) * arc[-1] / N_VERTEBRAE
    return np.interp(targets, arc, t)


def _corners_width_frame(spec: SpineSpec) -> np.ndarray:
    u, s = spec.centerline(spec.vertebra_params())
    theta = np.asarray(spec.per_vertebra_tilt)
    half_w = 0.5 * np.asarray(spec.vertebra_widths)
    half_h = 0.5 * np.asarray(spec.vertebra_heights) * spec.aspect
    e_long = np.stack([np.sin(theta), np.cos(theta)], axis=-1)  # down the spine
    e_lat = np.stack([np.cos(theta), -np.sin(theta)], axis=-1)  # towards image right
    center = np.stack([u, s], axis=-1)
    signs = ((-1, -1), (1, -1), (-1, 1), (1, 1))  # TL, TR, BL, BR as (lateral, longitudinal)
    out = np.empty((N_VERTEBRAE, 4, 2))
    for k, (a, b) in enumerate(signs):
        out[:, k] = center + (a * half_w)[:, None] * e_lat + (b * half_h)[:, None] * e_long
    return out


def _quad_separation(p: np.ndarray, q: np.ndarray) -> float:
    """Largest separating gap between two convex quads (negative when they overlap)."""
    best = -np.inf
    for poly in (p, q):
        for i in range(4):
            edge = poly[(i + 1) % 4] - poly[i]
            normal = np.array([-edge[1], edge[0]]) / np.hypot(*edge)
            pa, qa = p @ normal, q @ normal
            best = max(best, qa.min() - pa.max(), pa.min() - qa.max())
    return best


_CYCLE = [0, 1, 3, 2]  # TL, TR, BR, BL walks the rectangle boundary


def _geometry_problem(spec: SpineSpec) -> str | None:
    corners = _corners_width_frame(spec)
    norm = corners * np.array([1.0, 1.0 / spec.aspect])
    if norm.min() < BORDER_MARGIN or norm.max() > 1 - BORDER_MARGIN:
        return "vertebra escapes the image bounds"
    quads = corners[:, _CYCLE]
    for v in range(N_VERTEBRAE - 1):
        if _quad_separation(quads[v], quads[v + 1]) <= 0:
            return f"vertebrae {v + 1} and {v + 2} overlap"
    ys = norm[..., 1]
    for v in range(N_VERTEBRAE - 2):
        if ys[v].max() >= ys[v + 2].min():
            return f"vertebra {v + 1} does not lie above vertebra {v + 3}"
    return None


def sample_spine_spec(
    rng: np.random.Generator,
    severity_range=(0.0, MAX_SEVERITY),
    aspect: float = 2.0,
    tilt_jitter: float = TILT_JITTER,
    max_tries: int = 1000,
) -> SpineSpec:
    """Draw a valid spine geometry, redrawing until vertebrae are in bounds and disjoint."""
    lo, hi = (float(x) for x in severity_range)
    if not 0.0 <= lo <= hi <= MAX_SEVERITY:
        raise ContractError(f"severity_range must lie within [0, {MAX_SEVERITY}], got {severity_range}")
    if not 0.0 <= tilt_jitter <= TILT_JITTER:
        raise ContractError(f"tilt_jitter must lie within [0, {TILT_JITTER}], got {tilt_jitter}")
    last = None
    for _ in range(max_tries):
        severity = rng.uniform(lo, hi) if hi > lo else lo
        wavelength = rng.uniform(*WAVELENGTH_RANGE)
        phase = rng.uniform(0.0, 2 * np.pi)
        gap = rng.uniform(*GAP_RANGE)
        base_width = rng.uniform(0.13, 0.17)
        idx = np.arange(N_VERTEBRAE)
        widths = base_width * (1 + 0.3 * idx / (N_VERTEBRAE - 1)) * rng.uniform(0.95, 1.05, N_VERTEBRAE)
        height_shape = (1 + 0.25 * idx / (N_VERTEBRAE - 1)) / 1.25 * rng.uniform(0.9, 1.0, N_VERTEBRAE)
        jitter = rng.uniform(-tilt_jitter, tilt_jitter, N_VERTEBRAE) if tilt_jitter > 0 else np.zeros(N_VERTEBRAE)
        draft = SpineSpec(severity, wavelength, phase, (0.0,) * N_VERTEBRAE, tuple(widths), gap,
                          (0.0,) * N_VERTEBRAE, aspect)
        t_centers = draft.vertebra_params()
        _, arc = _arc_table(draft)
        pitch = arc[-1] / N_VERTEBRAE  # width units
        heights = pitch * (1 - gap) * height_shape / aspect
        du, ds = draft.centerline_tangent(t_centers)
        tilt = np.arctan2(du, ds) + jitter
        spec = SpineSpec(
            severity=float(severity),
            wavelength_count=float(wavelength),
            phase=float(phase),
            vertebra_heights=tuple(float(h) for h in heights),
            vertebra_widths=tuple(float(w) for w in widths),
            gap_fraction=float(gap),
            per_vertebra_tilt=tuple(float(a) for a in tilt),
            aspect=float(aspect),
        )
        last = _geometry_problem(spec)
        if last is None:
            return spec
    raise GenerationError(f"no valid spine geometry after {max_tries} draws ({last})")


def rasterize_mask(spec: SpineSpec, height: int, width: int) -> np.ndarray:
    """Label every pixel whose center falls inside a vertebra rectangle (1..18, top to bottom)."""
    corners = spec.corners() * np.array([width, height])  # pixel units
    mask = np.zeros((height, width), dtype=np.uint8)
    theta = np.asarray(spec.per_vertebra_tilt)
    for v in range(N_VERTEBRAE):
        quad = corners[v]
        if quad[:, 0].min() < 0 or quad[:, 0].max() > width or quad[:, 1].min() < 0 or quad[:, 1].max() > height:
            raise GenerationError(f"vertebra {v + 1} escapes the {height}x{width} image")
        x0, x1 = int(np.floor(quad[:, 0].min())), int(np.ceil(quad[:, 0].max()))
        y0, y1 = int(np.floor(quad[:, 1].min())), int(np.ceil(quad[:, 1].max()))
        ys, xs = np.mgrid[y0:y1, x0:x1]
        px, py = xs + 0.5 - quad.mean(axis=0)[0], ys + 0.5 - quad.mean(axis=0)[1]
        lateral = px * np.cos(theta[v]) - py * np.sin(theta[v])
        longitudinal = px * np.sin(theta[v]) + py * np.cos(theta[v])
        half_w = 0.5 * spec.vertebra_widths[v] * width
        half_h = 0.5 * spec.vertebra_heights[v] * height
        inside = (np.abs(lateral) <= half_w) & (np.abs(longitudinal) <= half_h)
        region = mask[y0:y1, x0:x1]
        region[inside] = v + 1
    return mask


def blur3(img: np.ndarray, kernel=BLUR_KERNEL) -> np.ndarray:
    """Separable 3-tap blur with edge replication."""
    k0, k1, k2 = kernel
    p = np.pad(img, 1, mode="edge")
    rows = k0 * p[:-2, :] + k1 * p[1:-1, :] + k2 * p[2:, :]
    return k0 * rows[:, :-2] + k1 * rows[:, 1:-1] + k2 * rows[:, 2:]


def render_sample(spec: SpineSpec, height: int, width: int, rng: np.random.Generator, sample_id: str = "") -> SpineSample:
    if height % 32 or width % 32 or height <= 0 or width <= 0:
        raise ContractError(f"image dims must be positive multiples of 32, got {height}x{width}")
    if not math.isclose(height / width, spec.aspect, rel_tol=1e-12):
        raise ContractError(f"{height}x{width} does not match the spec aspect ratio {spec.aspect}")
    mask = rasterize_mask(spec, height, width)
    img = np.where(mask > 0, VERTEBRA_INTENSITY, BACKGROUND_INTENSITY)
    for _ in range(BLUR_PASSES):
        img = blur3(img)
    img = np.clip(img + rng.normal(0.0, NOISE_SIGMA, img.shape), 0.0, 1.0)
    landmarks = spec.corners().reshape(-1, 2)
    return SpineSample(image=img, mask=mask, landmarks=landmarks, spec=spec, sample_id=sample_id)


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream per sample, so output does not depend on generation order."""
    return np.random.default_rng([seed, index])


def make_sample(seed: int, index: int, height: int = 128, width: int = 64,
                severity_range=(0.0, MAX_SEVERITY), sample_id: str = "") -> SpineSample:
    rng = sample_rng(seed, index)
    spec = sample_spine_spec(rng, severity_range, aspect=height / width)
    return render_sample(spec, height, width, rng, sample_id=sample_id)


def image_to_bytes(img: np.ndarray) -> np.ndarray:
    return np.round(np.clip(img, 0.0, 1.0) * 255.0).astype(np.uint8)


def generate_dataset(
    seed: int,
    out_dir: str | os.PathLike,
    counts: dict[str, int] | None = None,
    height: int = 128,
    width: int = 64,
    severity_range=(0.0, MAX_SEVERITY),
) -> dict:
    """Write a dataset directory and return its manifest.

    Layout: ``images/<id>.pgm``, ``masks/<id>.pgm``, ``landmarks/<id>.json`` and
    ``manifest.json``.  Splits take consecutive sample ids in train, test, val order.
    """
    counts = dict(counts or {"train": 80, "test": 15, "val": 5})
    for split in ("train", "test", "val"):
        if counts.get(split, 0) < 1:
            raise ContractError(f"split {split!r} needs a positive count, got {counts.get(split)}")
    out = Path(out_dir)
    try:
        for sub in ("images", "masks", "landmarks"):
            (out / sub).mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create dataset directory {out}: {exc.strerror}") from exc
    total = counts["train"] + counts["test"] + counts["val"]
    ids = [f"{i:04d}" for i in range(total)]
    splits = {
        "train": ids[: counts["train"]],
        "test": ids[counts["train"]: counts["train"] + counts["test"]],
        "val": ids[counts["train"] + counts["test"]:],
    }
    samples = {}
    for i, sid in enumerate(ids):
        s = make_sample(seed, i, height, width, severity_range, sample_id=sid)
        write_pgm(out / "images" / f"{sid}.pgm", image_to_bytes(s.image))
        write_pgm(out / "masks" / f"{sid}.pgm", s.mask)
        with open(out / "landmarks" / f"{sid}.json", "w") as f:
            json.dump(s.landmarks.tolist(), f)
        samples[sid] = s.spec.to_dict()
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "seed": seed,
        "generator": {
            "height": height,
            "width": width,
            "severity_range": [float(severity_range[0]), float(severity_range[1])],
            "n_vertebrae": N_VERTEBRAE,
            "vertebra_intensity": VERTEBRA_INTENSITY,
            "background_intensity": BACKGROUND_INTENSITY,
            "noise_sigma": NOISE_SIGMA,
            "blur_kernel": list(BLUR_KERNEL),
            "blur_passes": BLUR_PASSES,
            "tilt_jitter": TILT_JITTER,
        },
        "splits": splits,
        "samples": samples,
    }
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return manifest
