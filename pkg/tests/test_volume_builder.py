from dataclasses import replace
from pathlib import Path
from typing import List

import numpy as np
import pytest

from business_logic.volume_builder import build_volume, convert_record, mask_file_name, rasterize
from fixtures.generator import clean_plan, slice_metas
from models.dicom_models import ContourSet
from models.exceptions import NoContours, SingleSlice
from models.imaging_models import DatasetLayout, SeriesRecord, VolumeGeometry
from readers.dicom_dataset_reader import scan_dataset
from readers.dicom_parser import decode_pixels, read_file
from storage.nrrd_io import read_mask, read_nrrd


@pytest.fixture(scope="module")
def rt_records(fixture_tree: Path) -> List[SeriesRecord]:
    return scan_dataset(DatasetLayout(fixture_tree / "rtstruct"))


def _synthetic_record(positions, **plan_changes) -> SeriesRecord:
    plan = replace(clean_plan(0, "SYN"), slice_count=len(positions), rows=3, cols=4, **plan_changes)
    metas = [replace(m, image_position=(1.0, 2.0, float(z))) for m, z in zip(slice_metas(plan, 0), positions)]
    return SeriesRecord("SYN", metas[0].series_uid, "CT", metas)


def _grids(count: int) -> List[np.ndarray]:
    return [np.full((3, 4), 1000 + 10 * k, dtype=np.int16) for k in range(count)]


def test_volume_from_fixture_series(rt_records: List[SeriesRecord]) -> None:
    record = rt_records[0]
    grids = [decode_pixels(read_file(path)) for path in record.slice_paths]

    volume = build_volume(record, grids)

    assert volume.dims == (24, 24, 12)
    assert volume.spacing == pytest.approx((1.0, 1.0, 2.0))
    assert volume.origin == pytest.approx((-12.0, -12.0, 0.0))
    assert volume.intensity_unit == "HU"
    assert volume.voxels.dtype == np.int16
    np.testing.assert_array_equal(volume.voxels, np.stack(grids).astype(np.int16) - 1024)


def test_slices_are_stacked_along_the_normal() -> None:
    record = _synthetic_record([0.0, 2.5, 5.0])
    shuffled = SeriesRecord(record.patient_id, record.series_uid, "CT", [record.slices[k] for k in (2, 0, 1)])
    grids = _grids(3)

    ordered = build_volume(record, grids)
    reordered = build_volume(shuffled, [grids[k] for k in (2, 0, 1)])

    np.testing.assert_array_equal(ordered.voxels, reordered.voxels)
    assert ordered.voxels[:, 0, 0].tolist() == [1000 - 1024, 1010 - 1024, 1020 - 1024]
    assert ordered.origin == pytest.approx((1.0, 2.0, 0.0))


def test_fractional_rescale_gives_floats() -> None:
    record = _synthetic_record([0.0, 2.0])
    record = SeriesRecord(
        record.patient_id,
        record.series_uid,
        "CT",
        [replace(m, rescale_slope=0.5, rescale_intercept=-1.0) for m in record.slices],
    )

    volume = build_volume(record, _grids(2))

    assert volume.voxels.dtype == np.float64
    assert volume.voxels[1, 0, 0] == pytest.approx(1010 * 0.5 - 1.0)


def test_missing_rescale_is_identity() -> None:
    record = _synthetic_record([0.0, 2.0], rescale=False)

    volume = build_volume(record, _grids(2))

    assert volume.intensity_unit == ""
    assert volume.voxels[0, 0, 0] == 1000


def test_uneven_gaps_use_the_median_and_warn() -> None:
    warnings: List[str] = []

    volume = build_volume(_synthetic_record([0.0, 3.0, 6.0, 12.0]), _grids(4), warnings)

    assert volume.spacing[2] == pytest.approx(3.0)
    assert len(warnings) == 1 and "non-uniform" in warnings[0]


def test_single_slice() -> None:
    with pytest.raises(SingleSlice):
        build_volume(_synthetic_record([0.0]), _grids(1))


def _square(x0: float, y0: float, x1: float, y1: float, z: float):
    return ((x0, y0, z), (x1, y0, z), (x1, y1, z), (x0, y1, z))


GRID = VolumeGeometry(dims=(10, 8, 3), spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0))


def test_square_fills_voxel_centers_inside() -> None:
    mask = rasterize(ContourSet("box", "", (_square(1.5, 1.5, 5.5, 4.5, 1.0),)), GRID)

    assert mask.count == 12
    expected = np.zeros(GRID.shape, dtype=np.uint8)
    expected[1, 2:5, 2:6] = 1
    np.testing.assert_array_equal(mask.voxels, expected)


def test_inner_contour_cuts_a_hole() -> None:
    outer = _square(0.5, 0.5, 7.5, 6.5, 2.0)
    inner = _square(2.5, 2.5, 4.5, 4.5, 2.0)

    mask = rasterize(ContourSet("ring", "", (outer, inner)), GRID)

    assert mask.count == 7 * 6 - 4
    assert mask.voxels[2, 3, 3] == 0


def test_contours_outside_the_volume_are_skipped() -> None:
    warnings: List[str] = []
    contours = ContourSet("far", "", (_square(1.5, 1.5, 5.5, 4.5, 40.0),))

    mask = rasterize(contours, GRID, warnings)

    assert mask.count == 0
    assert len(warnings) == 1


def _even_odd(points: np.ndarray, x: float, y: float) -> bool:
    inside = False
    for (x0, y0), (x1, y1) in zip(points, np.roll(points, -1, axis=0)):
        if (y0 > y) != (y1 > y):
            crossing = x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            if crossing > x:
                inside = not inside
    return inside


@pytest.mark.parametrize("seed", range(5))
def test_random_polygon_matches_point_in_polygon_oracle(seed: int) -> None:
    rng = np.random.default_rng(seed)
    geometry = VolumeGeometry(dims=(20, 16, 4), spacing=(0.5, 0.75, 2.0), origin=(-3.0, 4.0, 10.0))
    angles = np.sort(rng.uniform(0.0, 2.0 * np.pi, size=9))
    radii = rng.uniform(1.0, 5.0, size=9)
    world = np.column_stack([1.5 + radii * np.cos(angles), 9.0 + radii * np.sin(angles), np.full(9, 14.0)])

    mask = rasterize(ContourSet("blob", "", (tuple(map(tuple, world)),)), geometry)

    expected = np.zeros(geometry.shape, dtype=np.uint8)
    indices = geometry.world_to_index(world)[:, :2]
    for j in range(16):
        for i in range(20):
            expected[2, j, i] = _even_odd(indices, float(i), float(j))
    np.testing.assert_array_equal(mask.voxels, expected)


@pytest.mark.parametrize("sides", [3, 4, 16], ids=["triangle", "square", "16-gon"])
@pytest.mark.parametrize("seed", range(3))
def test_regular_contours_on_random_grids(sides: int, seed: int) -> None:
    rng = np.random.default_rng(40 + seed)
    nx, ny, nz = (int(n) for n in rng.integers((12, 12, 3), (25, 25, 7)))
    spacing = (float(rng.uniform(0.4, 1.5)), float(rng.uniform(0.4, 1.5)), float(rng.choice([1.0, 2.0, 2.5])))
    origin = tuple(float(o) for o in rng.uniform(-50.0, 50.0, size=3))
    geometry = VolumeGeometry(dims=(nx, ny, nz), spacing=spacing, origin=origin)
    k = int(rng.integers(0, nz))
    cx = origin[0] + spacing[0] * (nx - 1) / 2
    cy = origin[1] + spacing[1] * (ny - 1) / 2
    radius = 0.4 * min(spacing[0] * (nx - 1), spacing[1] * (ny - 1))
    angles = rng.uniform(0.0, 2.0 * np.pi) + 2.0 * np.pi * np.arange(sides) / sides
    world = np.column_stack(
        [cx + radius * np.cos(angles), cy + radius * np.sin(angles), np.full(sides, origin[2] + k * spacing[2])]
    )

    mask = rasterize(ContourSet("shape", "", (tuple(map(tuple, world)),)), geometry)

    expected = np.zeros(geometry.shape, dtype=np.uint8)
    indices = geometry.world_to_index(world)[:, :2]
    for j in range(ny):
        for i in range(nx):
            expected[k, j, i] = _even_odd(indices, float(i), float(j))
    assert mask.count > 0
    np.testing.assert_array_equal(mask.voxels, expected)


def test_convert_writes_image_and_one_mask_per_roi(rt_records: List[SeriesRecord], tmp_path: Path) -> None:
    record = rt_records[0]

    result = convert_record(record, tmp_path / record.patient_id)

    assert set(result.mask_paths) == {"sphere", "square", "triangle"}
    assert result.selected_roi == "sphere"
    image = read_nrrd(result.image_path)
    assert image.dims == (24, 24, 12)
    square = read_mask(result.mask_paths["square"])
    assert square.count == 5 * 5 * 4
    selected = read_mask(tmp_path / record.patient_id / "mask.nrrd")
    assert selected.count == read_mask(result.mask_paths["sphere"]).count > 0
    assert image.geometry.matches(selected.geometry)


def test_convert_selects_the_named_roi(rt_records: List[SeriesRecord], tmp_path: Path) -> None:
    result = convert_record(rt_records[1], tmp_path, roi="square")

    assert result.selected_roi == "square"
    assert read_mask(tmp_path / "mask.nrrd").count == 100


def test_convert_unknown_roi(rt_records: List[SeriesRecord], tmp_path: Path) -> None:
    with pytest.raises(NoContours):
        convert_record(rt_records[2], tmp_path, roi="liver")


def test_mask_file_names_are_filesystem_safe() -> None:
    assert mask_file_name("GTV 1/left") == "mask_GTV_1_left.nrrd"
    assert mask_file_name("???") == "mask_roi.nrrd"
