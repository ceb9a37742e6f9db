"""Image file round trips and malformed-input reporting with byte offsets."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dictseg.errors import DataError, FormatError
from dictseg.pnm import (
    colorize,
    default_palette,
    read_pgm,
    read_ppm,
    read_ppm_bytes,
    read_pgm_bytes,
    write_pgm,
    write_ppm,
)
from dictseg.rng import Rng
from dictseg.tensor import Tensor


def test_ppm_uint8_round_trip(tmp_path):
    raw = Rng(0).integers(0, 256, (5, 7, 3)).astype(np.uint8)
    path = str(tmp_path / "img.ppm")
    write_ppm(path, raw)
    back = read_ppm(path)
    np.testing.assert_array_equal(
        np.rint(back.data * 255).astype(np.uint8).transpose(1, 2, 0), raw
    )


def test_ppm_float_round_trip_via_quantization(tmp_path):
    # Floats snap to the 8-bit grid once; a second trip is then exact.
    img = Tensor(Rng(1).uniform((3, 4, 6)))
    path = str(tmp_path / "img.ppm")
    write_ppm(path, img)
    once = read_ppm(path)
    write_ppm(path, once)
    twice = read_ppm(path)
    np.testing.assert_array_equal(once.data, twice.data)


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 10**6), h=st.integers(1, 8), w=st.integers(1, 8))
def test_pgm_bytes_round_trip_any_size(seed, h, w):
    labels = Rng(seed).integers(0, 256, (h, w)).astype(np.int64)
    data = f"P5\n{w} {h}\n255\n".encode() + labels.astype(np.uint8).tobytes()
    np.testing.assert_array_equal(read_pgm_bytes(data), labels)


def test_pgm_file_round_trip(tmp_path):
    labels = Rng(9).integers(0, 256, (6, 3)).astype(np.int64)
    path = str(tmp_path / "lab.pgm")
    write_pgm(path, labels)
    np.testing.assert_array_equal(read_pgm(path), labels)


def test_ppm_header_parsing_with_comments():
    payload = bytes(range(12))
    data = b"P6 # comment\n# another\n 2\t2 \n255\n" + payload
    img = read_ppm_bytes(data)
    np.testing.assert_array_equal(img.reshape(-1), np.frombuffer(payload, np.uint8))


def test_bad_magic_offset_zero():
    with pytest.raises(FormatError) as err:
        read_ppm_bytes(b"P5\n1 1\n255\n\x00\x00\x00")
    assert err.value.offset == 0
    assert "magic" in str(err.value)


def test_unsupported_maxval_reports_offset():
    data = b"P6\n2 2\n65535\n" + bytes(24)
    with pytest.raises(FormatError) as err:
        read_ppm_bytes(data)
    assert err.value.offset == data.index(b"65535")


def test_truncated_payload_reports_need():
    data = b"P6\n2 2\n255\n" + bytes(5)
    with pytest.raises(FormatError, match="need 12 bytes, have 5"):
        read_ppm_bytes(data)


def test_missing_digits_fails():
    with pytest.raises(FormatError, match="width"):
        read_pgm_bytes(b"P5\n\xff\n")


def test_nonpositive_size_fails():
    with pytest.raises(FormatError, match="non-positive"):
        read_pgm_bytes(b"P5\n0 3\n255\n")


def test_write_rejects_bad_shapes(tmp_path):
    with pytest.raises(DataError):
        write_ppm(str(tmp_path / "x.ppm"), np.zeros((4, 4)))
    with pytest.raises(DataError):
        write_pgm(str(tmp_path / "x.pgm"), np.zeros((4, 4, 3)))
    with pytest.raises(DataError):
        write_pgm(str(tmp_path / "x.pgm"), np.full((2, 2), 300))


def test_write_leaves_no_temp_files(tmp_path):
    write_pgm(str(tmp_path / "a.pgm"), np.zeros((2, 2), dtype=np.int64))
    write_ppm(str(tmp_path / "a.ppm"), np.zeros((3, 2, 2)))
    leftovers = [p.name for p in tmp_path.iterdir() if p.name.startswith(".tmp")]
    assert leftovers == []


def test_colorize_and_palette():
    palette = default_palette(3)
    assert palette.shape == (3, 3)
    pred = np.array([[0, 1], [2, 255]])
    out = colorize(pred, palette)
    np.testing.assert_array_equal(out[0, 0], palette[0])
    np.testing.assert_array_equal(out[1, 0], palette[2])
    np.testing.assert_array_equal(out[1, 1], [0, 0, 0])


def test_colorize_unknown_class_fails():
    with pytest.raises(DataError, match="class 5"):
        colorize(np.array([[5]]), default_palette(2))


def test_palette_class_limit():
    with pytest.raises(DataError):
        default_palette(9)
