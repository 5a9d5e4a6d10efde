import gzip
from pathlib import Path

import numpy as np
import pytest

from business_logic.preprocessing import PreprocessChain
from models.config_models import PreprocessParams, validate_config
from models.exceptions import BadHeader, IoFailure, NonFiniteVoxels, SizeMismatch
from models.imaging_models import Mask, Volume, VolumeGeometry
from storage.nrrd_io import decode_nrrd, encode_nrrd, read_mask, read_nrrd, write_nrrd


@pytest.fixture
def volume() -> Volume:
    geometry = VolumeGeometry(dims=(4, 3, 2), spacing=(0.5, 0.75, 2.0), origin=(-3.0, 4.0, 10.0))
    voxels = (np.arange(24, dtype=np.int16) * 11 - 100).reshape(2, 3, 4)
    return Volume(geometry, voxels, "HU")


def _header(data: bytes) -> list:
    return data[:data.index(b"\n\n")].decode("ascii").split("\n")


def test_header_layout(volume: Volume) -> None:
    lines = _header(encode_nrrd(volume))

    assert lines == [
        "NRRD0004",
        "type: short",
        "dimension: 3",
        "sizes: 4 3 2",
        "space: left-posterior-superior",
        "space directions: (0.5,0.0,0.0) (0.0,0.75,0.0) (0.0,0.0,2.0)",
        "space origin: (-3.0,4.0,10.0)",
        "endian: little",
        "encoding: raw",
    ]


def test_payload_is_x_fastest_little_endian(volume: Volume) -> None:
    data = encode_nrrd(volume)
    payload = data[data.index(b"\n\n") + 2:]

    assert len(payload) == 24 * 2
    assert np.frombuffer(payload, dtype="<i2")[:5].tolist() == [-100, -89, -78, -67, -56]


def test_written_volume_reads_back(volume: Volume, tmp_path: Path) -> None:
    path = write_nrrd(volume, tmp_path / "P1" / "image.nrrd")

    loaded = read_nrrd(path)

    assert loaded.voxels.dtype == np.int16
    np.testing.assert_array_equal(loaded.voxels, volume.voxels)
    assert loaded.geometry.matches(volume.geometry)


def test_oblique_direction_survives(tmp_path: Path) -> None:
    direction = ((0.0, 0.0, -1.0), (1.0, 0.0, 0.0), (0.0, -1.0, 0.0))
    geometry = VolumeGeometry(dims=(2, 2, 3), spacing=(0.8, 0.8, 3.0), origin=(1.0, 2.0, 3.0), direction=direction)
    original = Volume(geometry, np.linspace(-1.0, 1.0, 12).reshape(3, 2, 2))

    loaded = read_nrrd(write_nrrd(original, tmp_path / "oblique.nrrd"))

    assert loaded.voxels.dtype == np.float64
    assert loaded.geometry.matches(geometry)
    np.testing.assert_allclose(loaded.geometry.index_to_world([1, 1, 1]), geometry.index_to_world([1, 1, 1]))


def test_masks_are_stored_as_uchar(volume: Volume, tmp_path: Path) -> None:
    voxels = np.zeros(volume.geometry.shape, dtype=np.uint8)
    voxels[1, 1, 1:3] = 1
    mask = Mask(volume.geometry, voxels, "mask")

    data = encode_nrrd(mask)
    loaded = read_mask(write_nrrd(mask, tmp_path / "mask.nrrd"))

    assert "type: uchar" in _header(data)
    assert "endian: little" in _header(data)
    assert isinstance(loaded, Mask)
    assert loaded.count == 2


def test_non_finite_voxels(volume: Volume) -> None:
    voxels = np.asarray(volume.voxels, dtype=float).copy()
    voxels[0, 0, 0] = np.nan

    with pytest.raises(NonFiniteVoxels):
        encode_nrrd(volume.with_voxels(voxels))


def test_gzip_payload() -> None:
    values = np.arange(8, dtype="<f4")
    header = b"NRRD0005\ntype: float\ndimension: 3\nsizes: 2 2 2\nspacings: 1 1 1\nendian: little\nencoding: gzip\n\n"

    loaded = decode_nrrd(header + gzip.compress(values.tobytes()))

    assert loaded.voxels[1, 1, 1] == pytest.approx(7.0)
    assert loaded.origin == (0.0, 0.0, 0.0)


@pytest.mark.parametrize(
    "data,error",
    [
        (b"NRRD0009\ntype: short\n\n", BadHeader),
        (b"NRRD0004\ntype: short\ndimension: 3\n", BadHeader),
        (b"NRRD0004\ntype: short\ndimension: 2\nsizes: 2 2\nendian: little\nencoding: raw\n\n" + b"\x00" * 8, BadHeader),
        (b"NRRD0004\ntype: short\ndimension: 3\nsizes: 2 2 2\nencoding: raw\n\n" + b"\x00" * 16, BadHeader),
        (b"NRRD0004\ntype: short\ndimension: 3\nsizes: 2 2 2\nendian: little\nencoding: raw\n\n" + b"\x00" * 10, SizeMismatch),
    ],
)
def test_malformed_files(data: bytes, error: type) -> None:
    with pytest.raises(error):
        decode_nrrd(data)


def test_missing_file(tmp_path: Path) -> None:
    with pytest.raises(IoFailure):
        read_nrrd(tmp_path / "absent.nrrd")


def test_preprocessed_volume_round_trips_bit_exactly(tmp_path: Path) -> None:
    rng = np.random.default_rng(5)
    geometry = VolumeGeometry(dims=(9, 7, 5), spacing=(0.7, 0.9, 2.5), origin=(-12.25, 3.5, 40.0))
    image = Volume(geometry, rng.normal(40.0, 300.0, size=geometry.shape), "HU")
    reference = Volume(geometry, rng.normal(0.0, 100.0, size=geometry.shape), "HU")
    core = np.zeros(geometry.shape, dtype=np.uint8)
    core[1:4, 2:6, 2:7] = 1
    params = validate_config(PreprocessParams, {"steps": [
        {"step": "rescale", "out_min": 0, "out_max": 1},
        {"step": "zscore", "scope": "roi"},
        {"step": "hist_match", "reference": "REF"},
        {"step": "hist_equalize", "bins": 64},
        {"step": "intensity_resample", "bin_count": 16},
        {"step": "reshape", "target_spacing": [1.0, 1.0, 2.0]},
    ]})
    result = PreprocessChain(params, lambda _: reference).run(image, Mask(geometry, core, "mask"), "P-1")
    assert result.mask is not None

    loaded = read_nrrd(write_nrrd(result.volume, tmp_path / "image.nrrd"))
    loaded_mask = read_mask(write_nrrd(result.mask, tmp_path / "mask.nrrd"))

    assert loaded.voxels.dtype == np.float64
    assert loaded.voxels.tobytes() == np.asarray(result.volume.voxels, dtype=np.float64).tobytes()
    assert tuple(loaded.geometry.spacing) == tuple(result.volume.geometry.spacing)
    assert tuple(loaded.geometry.origin) == tuple(result.volume.geometry.origin)
    assert encode_nrrd(loaded) == encode_nrrd(result.volume)
    np.testing.assert_array_equal(loaded_mask.voxels, result.mask.voxels)
