"""Reading dataset directories written by :func:`spinebpd.synthgen.generate_dataset`."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ContractError, DataFormatError
from .pgm import read_pgm
from .synthgen import SCHEMA_VERSION

SPLITS = ("train", "val", "test")


@dataclass
class Split:
    ids: list[str]
    images: np.ndarray  # (N, 1, H, W) in [0, 1]
    landmarks: np.ndarray  # (N, 2n)

    @property
    def height(self) -> int:
        return self.images.shape[2]

    @property
    def width(self) -> int:
        return self.images.shape[3]


def read_manifest(data_dir: str | os.PathLike) -> dict:
    path = Path(data_dir) / "manifest.json"
    try:
        with open(path) as f:
            manifest = json.load(f)
    except FileNotFoundError as exc:
        raise DataFormatError(f"no manifest at {path}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"malformed manifest {path}: {exc}") from exc
    if manifest.get("schema_version") != SCHEMA_VERSION:
        raise DataFormatError(f"unsupported manifest schema {manifest.get('schema_version')} in {path}")
    splits = manifest.get("splits", {})
    seen: set[str] = set()
    for name in SPLITS:
        ids = splits.get(name)
        if not isinstance(ids, list):
            raise DataFormatError(f"manifest {path} lacks split {name!r}")
        if seen.intersection(ids):
            raise DataFormatError(f"manifest {path}: split {name!r} overlaps another split")
        seen.update(ids)
    return manifest


def read_landmarks(path: str | os.PathLike) -> np.ndarray:
    try:
        with open(path) as f:
            pts = np.asarray(json.load(f), dtype=np.float64)
    except (json.JSONDecodeError, ValueError, TypeError) as exc:
        raise DataFormatError(f"malformed landmark file {path}: {exc}") from exc
    if pts.ndim != 2 or pts.shape[1] != 2 or not np.isfinite(pts).all():
        raise DataFormatError(f"landmark file {path} must hold finite [x, y] pairs, got shape {pts.shape}")
    return pts


def write_landmarks(path: str | os.PathLike, points: np.ndarray) -> None:
    with open(path, "w") as f:
        json.dump(np.asarray(points, dtype=np.float64).reshape(-1, 2).tolist(), f)


def load_split(data_dir: str | os.PathLike, split: str) -> Split:
    if split not in SPLITS:
        raise ContractError(f"unknown split {split!r}; expected one of {SPLITS}")
    root = Path(data_dir)
    ids = read_manifest(root)["splits"][split]
    if not ids:
        raise ContractError(f"split {split!r} of {root} is empty")
    images, marks = [], []
    for sid in ids:
        images.append(read_pgm(root / "images" / f"{sid}.pgm").astype(np.float64) / 255.0)
        marks.append(read_landmarks(root / "landmarks" / f"{sid}.json").ravel())
    shapes = {im.shape for im in images}
    if len(shapes) != 1:
        raise DataFormatError(f"images in split {split!r} have mixed sizes {sorted(shapes)}")
    return Split(list(ids), np.stack(images)[:, None], np.stack(marks))


def load_sample(data_dir: str | os.PathLike, sample_id: str):
    """(image in [0, 1], mask, landmarks (n, 2)) for one sample id."""
    root = Path(data_dir)
    image = read_pgm(root / "images" / f"{sample_id}.pgm").astype(np.float64) / 255.0
    mask = read_pgm(root / "masks" / f"{sample_id}.pgm")
    return image, mask, read_landmarks(root / "landmarks" / f"{sample_id}.json")
