from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from errors import ContractViolation, ImageFormatError, ImageNotFoundError
from imagecore import (
    BinaryImage,
    GrayImage,
    RasterImage,
    binarize,
    load_binary,
    load_image,
    luminance,
    save_binary,
)


def _raster(*pixels: tuple[int, int, int]) -> RasterImage:
    return RasterImage(np.array([pixels], dtype=np.uint8))


def test_luminance_examples():
    gray = luminance(_raster((0, 0, 0), (255, 255, 255), (128, 128, 128)))
    assert gray.values.tolist() == [[0, 255, 128]]


def test_luminance_rounds_half_up():
    # 0.7152 * 100 = 71.52 -> 72
    assert luminance(_raster((0, 100, 0))).values[0, 0] == 72


def test_binarize_threshold():
    gray = GrayImage(np.array([[0, 127, 128, 255]], dtype=np.uint8))
    assert binarize(gray).bits.tolist() == [[0, 0, 1, 1]]


def test_binarize_default_center():
    img = binarize(GrayImage(np.zeros((4, 6), dtype=np.uint8)))
    assert img.center == (3.0, 2.0)


@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3))))
@settings(max_examples=200)
def test_binarize_alphabet(channels):
    bits = binarize(luminance(RasterImage(channels))).bits
    assert set(np.unique(bits)) <= {0, 1}


@given(arrays(np.uint8, st.tuples(st.integers(1, 6), st.integers(1, 6), st.just(3))))
@settings(max_examples=100)
def test_binarize_luminance_idempotent(channels):
    once = binarize(luminance(RasterImage(channels)))
    twice = binarize(luminance(once.to_raster()))
    assert np.array_equal(once.bits, twice.bits)


def test_binary_image_rejects_other_values():
    with pytest.raises(ContractViolation):
        BinaryImage(np.array([[0, 2]]))


def test_binary_image_rejects_center_outside():
    with pytest.raises(ContractViolation):
        BinaryImage(np.zeros((4, 4), dtype=np.uint8), center=(5.0, 1.0))


def test_binary_image_is_read_only():
    img = BinaryImage(np.zeros((2, 2), dtype=np.uint8))
    with pytest.raises(ValueError):
        img.bits[0, 0] = 1


def test_load_plain_pbm(tmp_path):
    path = tmp_path / "tiny.pbm"
    path.write_bytes(b"P1 2 2 1 0 0 1")
    assert load_binary(path).bits.tolist() == [[1, 0], [0, 1]]


def test_load_pbm_without_separators_and_comments(tmp_path):
    path = tmp_path / "packed.pbm"
    path.write_bytes(b"P1\n# packed raster\n3 2\n101\n010\n")
    assert load_binary(path).bits.tolist() == [[1, 0, 1], [0, 1, 0]]


def test_load_image_pbm_one_is_black(tmp_path):
    path = tmp_path / "tiny.pbm"
    path.write_bytes(b"P1 2 1 1 0")
    assert load_image(path).channels[0].tolist() == [[0, 0, 0], [255, 255, 255]]


def test_all_white_bmp_is_all_ones(tmp_path):
    path = tmp_path / "white.bmp"
    Image.new("RGB", (4, 3), "white").save(path)
    img = load_binary(path)
    assert img.bits.shape == (3, 4)
    assert img.count() == 12


def test_transparent_png_flattens_on_white(tmp_path):
    path = tmp_path / "alpha.png"
    Image.new("RGBA", (2, 2), (0, 0, 0, 0)).save(path)
    assert load_binary(path).count() == 4


def test_plain_graymap(tmp_path):
    path = tmp_path / "gray.pgm"
    path.write_bytes(b"P2\n2 1\n255\n0 200\n")
    assert load_binary(path).bits.tolist() == [[0, 1]]


def test_truncated_pbm_reports_offset(tmp_path):
    path = tmp_path / "short.pbm"
    path.write_bytes(b"P1 3 3 1 0 1")
    with pytest.raises(ImageFormatError) as info:
        load_binary(path)
    assert info.value.offset == len(b"P1 3 3 1 0 1")
    assert str(path) in str(info.value)


def test_bad_pixel_reports_offset(tmp_path):
    path = tmp_path / "bad.pbm"
    path.write_bytes(b"P1 2 1 1 x")
    with pytest.raises(ImageFormatError) as info:
        load_binary(path)
    assert info.value.offset == 9


def test_truncated_png(tmp_path):
    source = tmp_path / "ok.png"
    Image.new("RGB", (8, 8), "white").save(source)
    broken = tmp_path / "broken.png"
    broken.write_bytes(source.read_bytes()[:30])
    with pytest.raises(ImageFormatError):
        load_binary(broken)


def test_missing_file(tmp_path):
    with pytest.raises(ImageNotFoundError):
        load_binary(tmp_path / "nope.png")


@pytest.mark.parametrize("suffix", [".pbm", ".png"])
def test_save_load_round_trip(tmp_path, suffix):
    rng = np.random.default_rng(3)
    img = BinaryImage(rng.integers(0, 2, size=(13, 41), dtype=np.uint8))
    loaded = load_binary(save_binary(img, tmp_path / f"shape{suffix}"))
    assert np.array_equal(loaded.bits, img.bits)


def test_saved_pbm_lines_are_short(tmp_path):
    img = BinaryImage(np.ones((2, 100), dtype=np.uint8))
    path = save_binary(img, tmp_path / "wide.pbm")
    assert max(len(line) for line in path.read_bytes().splitlines()) <= 70
