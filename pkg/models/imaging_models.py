"""
Imaging data models: dataset layout, series records, volumes, masks and the
quality report. Demonstrates: dataclasses with __post_init__ validation.
"""
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from dataclasses_json import dataclass_json

from models.dicom_models import SliceMeta
from models.exceptions import (
    GeometryMismatch,
    InvalidGeometry,
    MixedSeriesGeometry,
    RadgateValidationError,
)

Vector3 = Tuple[float, float, float]


class DataFormat(Enum):
    DICOM = "dicom"
    NRRD = "nrrd"


@dataclass
class DatasetLayout:
    """Where a dataset lives and how its files are named."""
    root: Path
    data_format: DataFormat = DataFormat.DICOM
    mask_available: bool = False
    mask_name_patterns: List[str] = field(default_factory=lambda: ["mask.nrrd"])
    image_name_patterns: List[str] = field(default_factory=lambda: ["image.nrrd"])

    def __post_init__(self) -> None:
        self.root = Path(self.root)
        if isinstance(self.data_format, str):
            self.data_format = DataFormat(self.data_format)
        if not self.root.exists():
            raise RadgateValidationError(f"Dataset root does not exist: {self.root}")
        if self.data_format is DataFormat.NRRD and not self.image_name_patterns:
            raise RadgateValidationError("An NRRD layout needs at least one image name pattern")


@dataclass
class SeriesRecord:
    """One image series of one patient, slices sorted along the slice normal."""
    patient_id: str
    series_uid: str
    modality: str
    slices: List[SliceMeta]
    slice_paths: List[Path] = field(default_factory=list)
    rtstruct_paths: List[Path] = field(default_factory=list)
    rtstruct_slices: List[SliceMeta] = field(default_factory=list)

    def __post_init__(self) -> None:
        if not self.slices:
            raise MixedSeriesGeometry(f"Series {self.series_uid} has no slices")
        if self.slice_paths and len(self.slice_paths) != len(self.slices):
            raise ValueError("slice_paths must align with slices")
        first = self.slices[0]
        for meta in self.slices:
            if meta.series_uid != self.series_uid:
                raise MixedSeriesGeometry(f"Slice {meta.sop_uid} belongs to series {meta.series_uid}")
            if not meta.is_image or meta.orientation is None or first.orientation is None:
                raise MixedSeriesGeometry(f"Slice {meta.sop_uid} carries no image geometry")
            if (meta.rows, meta.cols) != (first.rows, first.cols):
                raise MixedSeriesGeometry(
                    f"Series {self.series_uid}: {meta.rows}x{meta.cols} differs from {first.rows}x{first.cols}"
                )
            if np.max(np.abs(np.subtract(meta.orientation, first.orientation))) > 1e-3:
                raise MixedSeriesGeometry(f"Series {self.series_uid}: orientation differs between slices")
            if np.max(np.abs(np.subtract(meta.pixel_spacing, first.pixel_spacing))) > 1e-6:
                raise MixedSeriesGeometry(f"Series {self.series_uid}: pixel spacing differs between slices")

    @property
    def positions(self) -> np.ndarray:
        """Slice positions projected onto the series normal, in stored order."""
        return np.array([meta.position_along_normal for meta in self.slices])


@dataclass(frozen=True)
class VolumeGeometry:
    """
    Axis-aligned grid geometry. Index (i, j, k) maps to
    origin + direction @ diag(spacing) @ (i, j, k).
    """
    dims: Tuple[int, int, int]
    spacing: Vector3
    origin: Vector3
    direction: Tuple[Vector3, Vector3, Vector3] = ((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0))

    def __post_init__(self) -> None:
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise InvalidGeometry(f"Dimensions must be three positive counts: {self.dims}")
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise InvalidGeometry(f"Spacing must be positive: {self.spacing}")
        matrix = self.direction_matrix
        if matrix.shape != (3, 3):
            raise InvalidGeometry("Direction must be a 3x3 matrix")
        norms = np.linalg.norm(matrix, axis=0)
        if np.max(np.abs(norms - 1.0)) > 1e-6:
            raise InvalidGeometry(f"Direction columns are not unit-norm: {norms.tolist()}")

    @property
    def direction_matrix(self) -> np.ndarray:
        """Rows of `direction` as stored; columns are the axis directions."""
        return np.asarray(self.direction, dtype=float)

    @property
    def affine(self) -> np.ndarray:
        return self.direction_matrix @ np.diag(self.spacing)

    @property
    def shape(self) -> Tuple[int, int, int]:
        """Array shape (nz, ny, nx) of the voxel grid."""
        nx, ny, nz = self.dims
        return (nz, ny, nx)

    def index_to_world(self, index: Any) -> np.ndarray:
        """Map (..., 3) continuous (i, j, k) indices to patient coordinates."""
        idx = np.asarray(index, dtype=float)
        return np.asarray(self.origin) + idx @ self.affine.T

    def world_to_index(self, points: Any) -> np.ndarray:
        """Inverse of index_to_world."""
        pts = np.asarray(points, dtype=float) - np.asarray(self.origin)
        return pts @ np.linalg.inv(self.affine).T

    def matches(self, other: "VolumeGeometry", tolerance: float = 1e-6) -> bool:
        return (
            tuple(self.dims) == tuple(other.dims)
            and np.allclose(self.spacing, other.spacing, atol=tolerance, rtol=0)
            and np.allclose(self.origin, other.origin, atol=tolerance, rtol=0)
            and np.allclose(self.direction_matrix, other.direction_matrix, atol=tolerance, rtol=0)
        )

    @classmethod
    def from_affine_columns(
        cls,
        dims: Tuple[int, int, int],
        spacing: Vector3,
        origin: Vector3,
        axes: np.ndarray,
    ) -> "VolumeGeometry":
        """Build from a matrix whose columns are unit axis directions."""
        rows = tuple(tuple(float(v) for v in row) for row in np.asarray(axes, dtype=float))
        return cls(
            dims=tuple(int(d) for d in dims),  # type: ignore[arg-type]
            spacing=tuple(float(s) for s in spacing),  # type: ignore[arg-type]
            origin=tuple(float(o) for o in origin),  # type: ignore[arg-type]
            direction=rows,  # type: ignore[arg-type]
        )


@dataclass(frozen=True)
class Volume:
    """
    Scalar voxel grid. `voxels` has shape (nz, ny, nx), so x varies fastest
    in memory. The array is made read-only on construction.
    """
    geometry: VolumeGeometry
    voxels: np.ndarray
    intensity_unit: str = ""

    def __post_init__(self) -> None:
        voxels = np.asarray(self.voxels)
        if voxels.shape != self.geometry.shape:
            raise InvalidGeometry(
                f"Voxel array shape {voxels.shape} does not match dims {self.geometry.dims}"
            )
        if voxels.flags.writeable:
            voxels = voxels.copy()
            voxels.flags.writeable = False
        object.__setattr__(self, "voxels", voxels)

    @property
    def dims(self) -> Tuple[int, int, int]:
        return self.geometry.dims

    @property
    def spacing(self) -> Vector3:
        return self.geometry.spacing

    @property
    def origin(self) -> Vector3:
        return self.geometry.origin

    def with_voxels(self, voxels: np.ndarray, intensity_unit: Optional[str] = None) -> "Volume":
        """Same geometry, new intensities."""
        return Volume(self.geometry, voxels, self.intensity_unit if intensity_unit is None else intensity_unit)

    def require_same_geometry(self, other: "Volume") -> None:
        if not self.geometry.matches(other.geometry):
            raise GeometryMismatch(f"Geometry {self.geometry} does not match {other.geometry}")


@dataclass(frozen=True)
class Mask(Volume):
    """Binary companion grid; voxels are uint8 in {0, 1}."""

    def __post_init__(self) -> None:
        voxels = np.asarray(self.voxels)
        if voxels.size and not np.isin(voxels, (0, 1)).all():
            raise InvalidGeometry("Mask voxels must be 0 or 1")
        object.__setattr__(self, "voxels", voxels.astype(np.uint8))
        super().__post_init__()

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.voxels))

    @classmethod
    def empty(cls, geometry: VolumeGeometry) -> "Mask":
        return cls(geometry, np.zeros(geometry.shape, dtype=np.uint8), "mask")

    @classmethod
    def from_volume(cls, volume: Volume) -> "Mask":
        return cls(volume.geometry, (np.asarray(volume.voxels) != 0).astype(np.uint8), "mask")


AnyVolume = Union[Volume, Mask]


class CheckFlag(Enum):
    """Serialized as 1 / 0 / 'skipped'."""
    PASSED = 1
    FAILED = 0
    SKIPPED = "skipped"


@dataclass
class QualityRow:
    """Quality gate outcome for one series."""
    patient_id: str
    series_uid: str
    flags: Dict[str, CheckFlag]
    note: str = ""

    @property
    def overall(self) -> int:
        enabled = [flag for flag in self.flags.values() if flag is not CheckFlag.SKIPPED]
        return int(all(flag is CheckFlag.PASSED for flag in enabled))

    def failed_checks(self) -> List[str]:
        return [name for name, flag in self.flags.items() if flag is CheckFlag.FAILED]

    def to_dict(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {"patient": self.patient_id, "series_uid": self.series_uid}
        for name, flag in self.flags.items():
            row[name] = flag.value
        row["overall"] = self.overall
        row["note"] = self.note
        return row


@dataclass
class QualityReport:
    """Rows in sorted patient order; check names in fixed order."""
    check_names: List[str]
    rows: List[QualityRow] = field(default_factory=list)

    def row_for(self, patient_id: str) -> QualityRow:
        for row in self.rows:
            if row.patient_id == patient_id:
                return row
        raise KeyError(patient_id)

    def to_records(self) -> List[Dict[str, Any]]:
        return [row.to_dict() for row in self.rows]


@dataclass_json
@dataclass
class IntensityStats:
    minimum: float
    maximum: float
    mean: float
    std: float

    @classmethod
    def of(cls, values: np.ndarray) -> "IntensityStats":
        values = np.asarray(values, dtype=float)
        if values.size == 0:
            nan = float("nan")
            return cls(nan, nan, nan, nan)
        return cls(float(values.min()), float(values.max()), float(values.mean()), float(values.std()))


@dataclass_json
@dataclass
class StepStats:
    """Before/after statistics for one pre-processing step."""
    step: str
    parameters: Dict[str, Any]
    before: IntensityStats
    after: IntensityStats
    patient_id: str = ""
    scope: str = "whole"

    def to_row(self) -> Dict[str, Any]:
        row: Dict[str, Any] = {"patient": self.patient_id, "step": self.step, "scope": self.scope}
        for label, stats in (("in", self.before), ("out", self.after)):
            row[f"{label}_min"] = stats.minimum
            row[f"{label}_max"] = stats.maximum
            row[f"{label}_mean"] = stats.mean
            row[f"{label}_std"] = stats.std
        row["parameters"] = ";".join(f"{k}={v}" for k, v in sorted(self.parameters.items()))
        return row
