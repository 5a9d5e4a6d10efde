"""
DICOM data models using frozen dataclasses and full type hints.
Parsed objects are immutable once built and safe to share between threads.
"""
from dataclasses import dataclass, field, fields
from enum import Enum
from types import MappingProxyType
from typing import Any, Dict, List, Mapping, Optional, Tuple

import numpy as np
from dataclasses_json import dataclass_json

from models.exceptions import ElementOrderError, InvalidGeometry


@dataclass(frozen=True, order=True)
class DicomTag:
    """(group, element) pair, totally ordered by group then element."""
    group: int
    element: int

    def __post_init__(self) -> None:
        if not (0 <= self.group <= 0xFFFF and 0 <= self.element <= 0xFFFF):
            raise ValueError(f"Tag components must be 16-bit: {self.group:#x}, {self.element:#x}")

    def __str__(self) -> str:
        return f"({self.group:04X},{self.element:04X})"


class TransferSyntax(Enum):
    """Transfer syntaxes this toolkit reads."""
    EXPLICIT_VR_LITTLE_ENDIAN = "1.2.840.10008.1.2.1"
    IMPLICIT_VR_LITTLE_ENDIAN = "1.2.840.10008.1.2"

    @property
    def is_implicit(self) -> bool:
        return self is TransferSyntax.IMPLICIT_VR_LITTLE_ENDIAN


DicomDataset = Mapping[DicomTag, "DicomElement"]


@dataclass(frozen=True)
class DicomElement:
    """One data element. `items` is set only for SQ elements."""
    tag: DicomTag
    vr: str
    value: bytes = b""
    items: Optional[Tuple[DicomDataset, ...]] = None

    @property
    def is_sequence(self) -> bool:
        return self.items is not None


def freeze_dataset(elements: List[DicomElement]) -> DicomDataset:
    """Build a read-only dataset, enforcing strictly increasing tags."""
    ordered: Dict[DicomTag, DicomElement] = {}
    previous: Optional[DicomTag] = None
    for element in elements:
        if previous is not None and element.tag <= previous:
            raise ElementOrderError(f"Element {element.tag} does not follow {previous}")
        ordered[element.tag] = element
        previous = element.tag
    return MappingProxyType(ordered)


@dataclass(frozen=True)
class DicomObject:
    """A parsed Part-10 file: file-meta group plus the main dataset."""
    transfer_syntax: TransferSyntax
    file_meta: DicomDataset
    elements: DicomDataset

    def __contains__(self, tag: object) -> bool:
        return tag in self.elements

    def get(self, tag: DicomTag) -> Optional[DicomElement]:
        return self.elements.get(tag)

    def iter_tags(self) -> List[DicomTag]:
        return list(self.elements.keys())


def _check_unit(vector: np.ndarray, name: str) -> None:
    if abs(float(np.linalg.norm(vector)) - 1.0) > 1e-3:
        raise InvalidGeometry(f"{name} cosines are not unit-norm: {vector.tolist()}")


@dataclass_json
@dataclass(frozen=True)
class SliceMeta:
    """
    Per-file metadata. Absent optional attributes stay None (the flag for
    "tag missing"); nothing is defaulted. Geometry fields are None only on
    objects without pixel data (e.g. RTSTRUCT).
    """
    patient_id: str
    sop_uid: str
    series_uid: str
    modality: str
    rows: Optional[int] = None
    cols: Optional[int] = None
    pixel_spacing: Optional[Tuple[float, float]] = None
    image_position: Optional[Tuple[float, float, float]] = None
    orientation: Optional[Tuple[float, float, float, float, float, float]] = None
    slice_thickness: Optional[float] = None
    rescale_slope: Optional[float] = None
    rescale_intercept: Optional[float] = None
    convolution_kernel: Optional[str] = None
    kvp: Optional[float] = None
    exposure: Optional[float] = None
    tube_current: Optional[float] = None
    series_date: Optional[str] = None
    manufacturer: Optional[str] = None
    patient_name: Optional[str] = None
    study_date: Optional[str] = None
    instance_number: Optional[int] = None

    def __post_init__(self) -> None:
        if self.pixel_spacing is not None:
            if len(self.pixel_spacing) != 2 or min(self.pixel_spacing) <= 0:
                raise InvalidGeometry(f"Pixel spacing must be two positive values: {self.pixel_spacing}")
        if self.orientation is not None:
            if len(self.orientation) != 6:
                raise InvalidGeometry(f"Orientation needs 6 cosines, got {len(self.orientation)}")
            row = np.asarray(self.orientation[:3], dtype=float)
            col = np.asarray(self.orientation[3:], dtype=float)
            _check_unit(row, "Row")
            _check_unit(col, "Column")
            if abs(float(np.dot(row, col))) > 1e-3:
                raise InvalidGeometry(f"Row and column cosines are not orthogonal: {self.orientation}")

    @property
    def is_image(self) -> bool:
        return self.rows is not None and self.cols is not None

    @property
    def normal(self) -> np.ndarray:
        """Slice normal: row cosines × column cosines."""
        if self.orientation is None:
            raise InvalidGeometry(f"Slice {self.sop_uid} has no orientation")
        return np.cross(np.asarray(self.orientation[:3]), np.asarray(self.orientation[3:]))

    @property
    def position_along_normal(self) -> float:
        if self.image_position is None:
            raise InvalidGeometry(f"Slice {self.sop_uid} has no position")
        return float(np.dot(self.normal, np.asarray(self.image_position)))

    @property
    def absent_fields(self) -> List[str]:
        """Names of optional attributes whose tags were missing."""
        required = {"patient_id", "sop_uid", "series_uid", "modality"}
        return [f.name for f in fields(self) if f.name not in required and getattr(self, f.name) is None]


Point3 = Tuple[float, float, float]


@dataclass(frozen=True)
class ContourSet:
    """All planar contours of one ROI."""
    roi_name: str
    referenced_series_uid: str
    planar_contours: Tuple[Tuple[Point3, ...], ...] = field(default_factory=tuple)
    roi_number: Optional[int] = None

    def __post_init__(self) -> None:
        for index, polygon in enumerate(self.planar_contours):
            if len(polygon) < 3:
                raise InvalidGeometry(f"ROI '{self.roi_name}' contour {index} has fewer than 3 points")
            zs = [p[2] for p in polygon]
            if max(zs) - min(zs) > 1e-3:
                raise InvalidGeometry(f"ROI '{self.roi_name}' contour {index} is not planar")

    def as_arrays(self) -> List[np.ndarray]:
        return [np.asarray(polygon, dtype=float) for polygon in self.planar_contours]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "roi_name": self.roi_name,
            "referenced_series_uid": self.referenced_series_uid,
            "contours": len(self.planar_contours),
        }
