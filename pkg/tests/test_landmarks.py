import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from spinebpd.errors import ContractError, ExtractionError
from spinebpd.landmarks import (CIRCLE, Corner, extract_vertebra_corners, fast_detect, nonmax_suppress,
                                segment_scores, vertebra_corners)
from spinebpd.synthgen import make_sample


def _brute_is_corner(img, y, x, t, n):
    ring = [img[y + dy, x + dx] - img[y, x] for dx, dy in CIRCLE]
    for sign in (1, -1):
        flags = [sign * v > t for v in ring]
        for start in range(16):
            if all(flags[(start + i) % 16] for i in range(n)):
                return True
    return False


def _brute_corners(img, t, n=9):
    h, w = img.shape
    return {(x, y) for y in range(3, h - 3) for x in range(3, w - 3) if _brute_is_corner(img, y, x, t, n)}


def _bisect_score(img, y, x, n, iters=60):
    lo, hi = 0.0, 4.0
    if not _brute_is_corner(img, y, x, lo, n):
        return 0.0
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if _brute_is_corner(img, y, x, mid, n) else (lo, mid)
    return lo


def _positions(corners):
    return {(c.x, c.y) for c in corners}


def test_circle_is_radius_three_ring():
    assert len(CIRCLE) == len(set(CIRCLE)) == 16
    assert all(2.5 < math.hypot(dx, dy) < 3.7 for dx, dy in CIRCLE)


def test_uniform_image_has_no_corners():
    assert fast_detect(np.full((20, 20), 0.4), 0.1) == []


def test_square_corners():
    img = np.zeros((40, 40))
    img[10:30, 10:30] = 1.0
    found = _positions(fast_detect(img, 0.3, 9))
    corners = [(10, 10), (29, 10), (10, 29), (29, 29)]
    for cx, cy in corners:
        assert any(max(abs(x - cx), abs(y - cy)) <= 2 for x, y in found)
    for x, y in found:
        assert min(math.hypot(x - cx, y - cy) for cx, cy in corners) <= 2 * math.sqrt(2)


@pytest.mark.parametrize("seed", range(3))
@pytest.mark.parametrize("n", [9, 12])
def test_matches_brute_force_segment_test(seed, n):
    img = np.random.default_rng(seed).random((14, 13))
    for t in (0.05, 0.2, 0.4):
        assert _positions(fast_detect(img, t, n)) == _brute_corners(img, t, n)


def test_score_is_supremum_threshold():
    img = np.random.default_rng(7).random((12, 12))
    scores = segment_scores(img, 9)
    for y in range(3, 9):
        for x in range(3, 9):
            assert scores[y, x] == pytest.approx(_bisect_score(img, y, x, 9), abs=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6), st.floats(0.02, 0.4))
def test_threshold_monotonicity(seed, t):
    img = np.random.default_rng(seed).random((16, 16))
    assert _positions(fast_detect(img, 2 * t)) <= _positions(fast_detect(img, t))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10**6))
def test_negation_symmetry(seed):
    img = np.random.default_rng(seed).random((16, 16))
    assert _positions(fast_detect(img, 0.15)) == _positions(fast_detect(1.0 - img, 0.15))


def test_corners_keep_off_border():
    img = np.random.default_rng(3).random((15, 11))
    for c in fast_detect(img, 0.01):
        assert 3 <= c.x < 11 - 3 and 3 <= c.y < 15 - 3


def test_detect_argument_checks():
    with pytest.raises(ContractError):
        fast_detect(np.zeros((5, 10)), 0.1)
    with pytest.raises(ContractError):
        fast_detect(np.zeros((10, 10)), 0.1, arc_length=8)
    with pytest.raises(ContractError):
        fast_detect(np.zeros((10, 10)), 0.0)


def test_nonmax_suppression_rules():
    one = [Corner(4, 4, 1.0)]
    assert nonmax_suppress(one) == one
    assert nonmax_suppress([Corner(4, 4, 5.0), Corner(5, 4, 7.0)]) == [Corner(5, 4, 7.0)]
    rng = np.random.default_rng(0)
    cands = [Corner(int(x), int(y), float(s)) for x, y, s in zip(rng.integers(0, 30, 80), rng.integers(0, 30, 80),
                                                                  rng.random(80))]
    kept = nonmax_suppress(cands, 3)
    for i, a in enumerate(kept):
        for b in kept[i + 1:]:
            assert max(abs(a.x - b.x), abs(a.y - b.y)) > 3
    # equal scores resolve in scan order
    assert nonmax_suppress([Corner(6, 2, 1.0), Corner(5, 2, 1.0)]) == [Corner(5, 2, 1.0)]


def _rotated_rect(h, w, cx, cy, half_w, half_h, theta):
    ys, xs = np.mgrid[0:h, 0:w]
    px, py = xs + 0.5 - cx, ys + 0.5 - cy
    lat = px * math.cos(theta) - py * math.sin(theta)
    lon = px * math.sin(theta) + py * math.cos(theta)
    region = (np.abs(lat) <= half_w) & (np.abs(lon) <= half_h)
    e_lat = np.array([math.cos(theta), -math.sin(theta)])
    e_lon = np.array([math.sin(theta), math.cos(theta)])
    truth = np.array([[cx, cy] + a * half_w * e_lat + b * half_h * e_lon
                      for a, b in ((-1, -1), (1, -1), (-1, 1), (1, 1))])
    return region, truth


def test_rotated_vertebra_gives_ordered_corners():
    region, truth = _rotated_rect(60, 60, 30, 30, 14, 8, math.radians(15))
    found = vertebra_corners(region)
    assert found.shape == (4, 2)
    assert np.hypot(*(found - truth).T).max() <= 2.0
    tl, tr, bl, br = found
    assert tl[0] < tr[0] and bl[0] < br[0] and tl[1] < bl[1] and tr[1] < br[1]


def test_tiny_region_fails_loudly():
    region = np.zeros((20, 20), dtype=bool)
    region[10, 10] = True
    with pytest.raises(ExtractionError):
        vertebra_corners(region, 3)


@pytest.mark.parametrize("index", range(4))
def test_extraction_on_synthetic_masks(index):
    s = make_sample(11, index, severity_range=(0.0, 0.2))
    pts = extract_vertebra_corners(s.mask)
    assert pts.shape == (72, 2)
    err = np.hypot(*((pts - s.landmarks) * np.array([64, 128])).T)
    assert np.mean(err <= 2.0) >= 0.9
    assert err.max() < 4.0
    centers_y = pts.reshape(18, 4, 2)[..., 1].mean(axis=1)
    assert (np.diff(centers_y) > 0).all()


def test_left_corners_are_lateral_left():
    s = make_sample(12, 0)
    pts = extract_vertebra_corners(s.mask).reshape(18, 4, 2)
    theta = np.asarray(s.spec.per_vertebra_tilt)
    for v in range(18):
        e_lat = np.array([math.cos(theta[v]), -math.sin(theta[v])])
        lat = pts[v] @ (e_lat * np.array([64, 128]))
        assert max(lat[0], lat[2]) < min(lat[1], lat[3])


@pytest.mark.parametrize("dx,dy", [(3, -2), (-1, 5), (0, 1)])
def test_translation_equivariance(dx, dy):
    s = make_sample(13, 1)
    h, w = s.mask.shape
    big = np.zeros((h + 20, w + 20), dtype=s.mask.dtype)
    big[10:10 + h, 10:10 + w] = s.mask
    moved = np.roll(big, (dy, dx), axis=(0, 1))
    base = extract_vertebra_corners(big) * np.array([w + 20, h + 20])
    shifted = extract_vertebra_corners(moved) * np.array([w + 20, h + 20])
    np.testing.assert_allclose(shifted - base, np.broadcast_to([dx, dy], base.shape), atol=1e-9)


def test_mask_label_checks():
    with pytest.raises(ContractError):
        extract_vertebra_corners(np.full((20, 20), 30))
    with pytest.raises(ExtractionError, match="empty"):
        extract_vertebra_corners(np.zeros((20, 20), dtype=np.uint8), n_vertebrae=1)
