import json

import numpy as np
import pytest

from spinebpd.dataset import load_sample, load_split, read_landmarks, read_manifest, write_landmarks
from spinebpd.errors import ContractError, DataFormatError


def test_load_split(small_data):
    s = load_split(small_data, "train")
    assert s.images.shape == (6, 1, 64, 32) and s.landmarks.shape == (6, 144)
    assert 0 <= s.images.min() and s.images.max() <= 1
    assert (s.height, s.width) == (64, 32)
    image, mask, lm = load_sample(small_data, s.ids[0])
    assert np.array_equal(image, s.images[0, 0]) and lm.shape == (72, 2) and mask.shape == (64, 32)


def test_unknown_split(small_data):
    with pytest.raises(ContractError):
        load_split(small_data, "holdout")


def test_manifest_errors(tmp_path, small_data):
    with pytest.raises(DataFormatError, match="no manifest"):
        read_manifest(tmp_path)
    m = json.loads((small_data / "manifest.json").read_text())
    m["splits"]["val"] = m["splits"]["train"][:1]
    (tmp_path / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(DataFormatError, match="overlaps"):
        read_manifest(tmp_path)
    m["schema_version"] = 99
    (tmp_path / "manifest.json").write_text(json.dumps(m))
    with pytest.raises(DataFormatError, match="schema"):
        read_manifest(tmp_path)


def test_landmark_files(tmp_path):
    pts = np.random.default_rng(0).random((72, 2))
    write_landmarks(tmp_path / "a.json", pts)
    assert np.array_equal(read_landmarks(tmp_path / "a.json"), pts)
    (tmp_path / "b.json").write_text("[[1, 2, 3]]")
    with pytest.raises(DataFormatError):
        read_landmarks(tmp_path / "b.json")
