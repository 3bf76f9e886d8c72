import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis.extra.numpy import arrays, array_shapes

from spinebpd.errors import DataFormatError
from spinebpd.pgm import decode_pgm, encode_pgm, read_pgm, write_pgm


@settings(max_examples=30, deadline=None)
@given(arrays(np.uint8, array_shapes(min_dims=2, max_dims=2, max_side=20)))
def test_roundtrip(arr):
    assert np.array_equal(decode_pgm(encode_pgm(arr)), arr)


def test_file_roundtrip_and_header(tmp_path):
    arr = np.arange(12, dtype=np.uint8).reshape(3, 4)
    write_pgm(tmp_path / "a.pgm", arr)
    raw = (tmp_path / "a.pgm").read_bytes()
    assert raw.startswith(b"P5\n4 3\n255\n") and len(raw) == 11 + 12
    assert np.array_equal(read_pgm(tmp_path / "a.pgm"), arr)


def test_comments_skipped():
    data = b"P5\n# made by hand\n2 1\n# another\n255\n" + bytes([7, 9])
    assert decode_pgm(data).tolist() == [[7, 9]]


@pytest.mark.parametrize("data,msg", [
    (b"P2\n1 1\n255\n\x00", "magic"),
    (b"P5\n2 2\n255\n\x00", "expected 4"),
    (b"P5\n1 1\n65535\n\x00\x00", "maxval"),
    (b"P5\n1", "truncated"),
])
def test_malformed(data, msg):
    with pytest.raises(DataFormatError, match=msg):
        decode_pgm(data)


def test_encode_range_check():
    with pytest.raises(DataFormatError):
        encode_pgm(np.array([[300]]))
    with pytest.raises(DataFormatError):
        encode_pgm(np.zeros(3, dtype=np.uint8))
