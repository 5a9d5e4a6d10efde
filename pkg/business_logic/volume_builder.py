"""
Slice stacks to volumes, RT-Structure contours to masks, and the per-series
DICOM to NRRD conversion.
"""
import logging
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from models.dicom_models import ContourSet, SliceMeta
from models.exceptions import InvalidGeometry, MixedSeriesGeometry, NoContours, SingleSlice
from models.imaging_models import Mask, SeriesRecord, Volume, VolumeGeometry
from readers.dicom_parser import decode_pixels, parse_rtstruct, read_file
from storage.nrrd_io import write_nrrd

logger = logging.getLogger(__name__)

SPACING_TOLERANCE = 1e-3


def _rescale_terms(meta: SliceMeta) -> Tuple[float, float]:
    slope = meta.rescale_slope if meta.rescale_slope is not None else 1.0
    intercept = meta.rescale_intercept if meta.rescale_intercept is not None else 0.0
    return slope, intercept


def _rescaled_stack(slices: Sequence[SliceMeta], grids: Sequence[np.ndarray]) -> np.ndarray:
    """Stored values times slope plus intercept, per slice, in the narrowest exact dtype."""
    terms = [_rescale_terms(meta) for meta in slices]
    integral = all(float(s).is_integer() and float(b).is_integer() for s, b in terms)
    if integral:
        stack = np.stack([grid.astype(np.int64) * int(s) + int(b) for grid, (s, b) in zip(grids, terms)])
        for dtype in (np.int16, np.int32):
            info = np.iinfo(dtype)
            if stack.size == 0 or (stack.min() >= info.min and stack.max() <= info.max):
                return stack.astype(dtype)
        return stack.astype(np.float64)
    return np.stack([grid.astype(np.float64) * s + b for grid, (s, b) in zip(grids, terms)])


def build_volume(
    record: SeriesRecord,
    grids: Sequence[np.ndarray],
    warnings: Optional[List[str]] = None,
) -> Volume:
    """
    Stack slices sorted along the slice normal. The slice spacing is the
    median distance between consecutive positions; the origin is the first
    sorted slice's position.
    """
    if len(grids) != len(record.slices):
        raise MixedSeriesGeometry(f"{len(grids)} pixel grids for {len(record.slices)} slices")
    if len(record.slices) < 2:
        raise SingleSlice(f"Series {record.series_uid} has a single slice; cannot infer slice spacing")

    first = record.slices[0]
    normal = first.normal
    pairs = sorted(
        zip(record.slices, grids),
        key=lambda pair: (float(np.dot(normal, np.asarray(pair[0].image_position))), pair[0].sop_uid),
    )
    slices = [meta for meta, _ in pairs]
    ordered_grids = [np.asarray(grid) for _, grid in pairs]
    shape = (first.rows, first.cols)
    for meta, grid in pairs:
        if grid.shape != shape:
            raise MixedSeriesGeometry(f"Pixel grid {grid.shape} of {meta.sop_uid} does not match {shape}")

    positions = np.array([float(np.dot(normal, np.asarray(meta.image_position))) for meta in slices])
    gaps = np.diff(positions)
    spacing_z = float(np.median(gaps))
    if spacing_z <= 0:
        raise InvalidGeometry(f"Series {record.series_uid} has coincident slice positions")
    if np.max(np.abs(gaps - spacing_z)) > SPACING_TOLERANCE:
        message = (
            f"Series {record.series_uid}: non-uniform slice spacing "
            f"(gaps {gaps.min():g}..{gaps.max():g} mm), using median {spacing_z:g} mm"
        )
        logger.warning(message)
        if warnings is not None:
            warnings.append(message)

    orientation = np.asarray(first.orientation, dtype=float)
    axes = np.column_stack([orientation[:3], orientation[3:], normal])
    axes = axes / np.linalg.norm(axes, axis=0)
    assert first.pixel_spacing is not None and first.image_position is not None
    row_spacing, column_spacing = first.pixel_spacing
    geometry = VolumeGeometry.from_affine_columns(
        dims=(first.cols, first.rows, len(slices)),  # type: ignore[arg-type]
        spacing=(column_spacing, row_spacing, spacing_z),
        origin=tuple(slices[0].image_position),  # type: ignore[arg-type]
        axes=axes,
    )
    has_rescale = any(meta.rescale_slope is not None or meta.rescale_intercept is not None for meta in slices)
    unit = "HU" if has_rescale and first.modality == "CT" else ""
    return Volume(geometry, _rescaled_stack(slices, ordered_grids), unit)


def _fill_polygon(plane: np.ndarray, vertices: np.ndarray) -> np.ndarray:
    """
    Even-odd fill at voxel centers. `vertices` are (i, j) continuous indices;
    a center (i, j) is inside when a ray towards +i crosses an odd number of
    edges, with the half-open rule on the edge's j extent.
    """
    ny, nx = plane.shape
    inside = np.zeros_like(plane, dtype=bool)
    xs = vertices[:, 0]
    ys = vertices[:, 1]
    x_next = np.roll(xs, -1)
    y_next = np.roll(ys, -1)
    columns = np.arange(nx, dtype=float)
    row_low = max(int(np.floor(ys.min())), 0)
    row_high = min(int(np.ceil(ys.max())), ny - 1)
    for j in range(row_low, row_high + 1):
        spans = (ys > j) != (y_next > j)
        if not np.any(spans):
            continue
        x0, y0, x1, y1 = xs[spans], ys[spans], x_next[spans], y_next[spans]
        crossings = np.sort(x0 + (j - y0) * (x1 - x0) / (y1 - y0))
        beyond = crossings.size - np.searchsorted(crossings, columns, side="right")
        inside[j] = (beyond % 2) == 1
    return inside


def rasterize(
    contours: ContourSet,
    geometry: VolumeGeometry,
    warnings: Optional[List[str]] = None,
) -> Mask:
    """
    Fill each planar contour on the slice its plane maps to. Polygons on the
    same slice are XOR-combined so inner contours cut holes.
    """
    voxels = np.zeros(geometry.shape, dtype=bool)
    nz = geometry.shape[0]
    skipped = 0
    for polygon in contours.as_arrays():
        indices = geometry.world_to_index(polygon)
        k = int(np.floor(float(np.mean(indices[:, 2])) + 0.5))
        if not 0 <= k < nz:
            skipped += 1
            continue
        voxels[k] ^= _fill_polygon(voxels[k], indices[:, :2])
    if skipped:
        message = f"ROI '{contours.roi_name}': {skipped} contour plane(s) outside the volume were skipped"
        logger.warning(message)
        if warnings is not None:
            warnings.append(message)
    return Mask(geometry, voxels.astype(np.uint8), "mask")


_UNSAFE = re.compile(r"[^A-Za-z0-9._-]+")


def mask_file_name(roi_name: str) -> str:
    return f"mask_{_UNSAFE.sub('_', roi_name).strip('_') or 'roi'}.nrrd"


@dataclass
class ConversionResult:
    patient_id: str
    image_path: Path
    mask_paths: Dict[str, Path] = field(default_factory=dict)
    selected_roi: Optional[str] = None
    warnings: List[str] = field(default_factory=list)


def load_contours(record: SeriesRecord) -> List[ContourSet]:
    """ROIs of the patient's RTSTRUCTs that reference this series (or nothing)."""
    contour_sets: List[ContourSet] = []
    for path in record.rtstruct_paths:
        for contour_set in parse_rtstruct(read_file(path)):
            referenced = contour_set.referenced_series_uid
            if referenced and referenced != record.series_uid:
                logger.debug("ROI '%s' references series %s, skipping", contour_set.roi_name, referenced)
                continue
            contour_sets.append(contour_set)
    return contour_sets


def convert_record(record: SeriesRecord, patient_dir: Path, roi: Optional[str] = None) -> ConversionResult:
    """
    Write image.nrrd, one mask_<ROI>.nrrd per ROI, and mask.nrrd for the
    selected ROI (`roi` by name, else the first one).
    """
    warnings: List[str] = []
    grids = [decode_pixels(read_file(path)) for path in record.slice_paths]
    volume = build_volume(record, grids, warnings)
    result = ConversionResult(record.patient_id, write_nrrd(volume, patient_dir / "image.nrrd"), warnings=warnings)

    contour_sets = load_contours(record) if record.rtstruct_paths else []
    if roi is not None and roi not in {cs.roi_name for cs in contour_sets}:
        raise NoContours(f"Patient {record.patient_id} has no ROI named '{roi}'")
    for contour_set in contour_sets:
        if not contour_set.planar_contours:
            continue
        mask = rasterize(contour_set, volume.geometry, warnings)
        result.mask_paths[contour_set.roi_name] = write_nrrd(mask, patient_dir / mask_file_name(contour_set.roi_name))
        if result.selected_roi is None and (roi is None or contour_set.roi_name == roi):
            write_nrrd(mask, patient_dir / "mask.nrrd")
            result.selected_roi = contour_set.roi_name
    logger.info(
        "Converted %s: %s, %d mask(s)%s",
        record.patient_id,
        "x".join(map(str, volume.dims)),
        len(result.mask_paths),
        f", selected ROI '{result.selected_roi}'" if result.selected_roi else "",
    )
    return result
