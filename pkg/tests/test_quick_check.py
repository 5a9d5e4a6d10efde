from pathlib import Path

import numpy as np
import pytest
from PIL import Image

from models.exceptions import RadgateValidationError
from reporting.quick_check import mask_boundary, to_gray, unroll, window_bounds


@pytest.fixture
def square(make_mask):
    voxels = np.zeros((2, 5, 5))
    voxels[:, 1:4, 1:4] = 1
    return make_mask(voxels)


def test_window_maps_onto_eight_bits(make_volume) -> None:
    low, high = window_bounds(make_volume(np.zeros((1, 1, 1))), (40.0, 400.0))

    gray = to_gray(np.array([240.0, -160.0, 40.0, 1000.0, -1000.0]), low, high)

    assert (low, high) == (-160.0, 240.0)
    assert gray.tolist() == [255, 0, 128, 255, 0]


def test_default_window_is_the_volume_range(make_volume) -> None:
    assert window_bounds(make_volume(np.array([[[-5.0, 3.0, 7.0]]]))) == (-5.0, 7.0)


def test_flat_window_is_mid_gray() -> None:
    assert to_gray(np.array([1.0, 2.0]), 3.0, 3.0).tolist() == [128, 128]


def test_boundary_is_in_plane(square) -> None:
    boundary = mask_boundary(square)

    assert int(boundary[0].sum()) == 8
    assert not boundary[0, 2, 2]
    np.testing.assert_array_equal(boundary[0], boundary[1])


def test_grayscale_slices(make_volume, tmp_path: Path) -> None:
    volume = make_volume(np.arange(3 * 4 * 5, dtype=float).reshape(3, 4, 5))

    written = unroll(volume, tmp_path, "P-1")

    assert [p.name for p in written] == ["P-1_slice000.pgm", "P-1_slice001.pgm", "P-1_slice002.pgm"]
    assert written[0].read_bytes().startswith(b"P5")
    first = np.asarray(Image.open(written[0]))
    assert first.shape == (4, 5)
    assert first[0, 0] == 0
    assert np.asarray(Image.open(written[-1]))[-1, -1] == 255


def test_outline_is_painted_red(make_volume, square, tmp_path: Path) -> None:
    volume = make_volume(np.zeros((2, 5, 5)))

    written = unroll(volume, tmp_path, "P-2", square)

    assert written[0].suffix == ".ppm"
    assert written[0].read_bytes().startswith(b"P6")
    pixels = np.asarray(Image.open(written[0]).convert("RGB"))
    assert tuple(pixels[1, 1]) == (255, 0, 0)
    assert tuple(pixels[2, 2]) == (128, 128, 128)
    assert tuple(pixels[0, 0]) == (128, 128, 128)


def test_mask_grid_must_match(make_volume, make_mask, tmp_path: Path) -> None:
    volume = make_volume(np.zeros((2, 5, 5)))

    with pytest.raises(RadgateValidationError):
        unroll(volume, tmp_path, "P-3", make_mask(np.ones((2, 5, 4))))
