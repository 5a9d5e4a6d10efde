"""
Acquisition-metadata tables for a scanned dataset.
"""
import logging
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd

from models.dicom_models import SliceMeta
from models.exceptions import EmptyDataset
from models.imaging_models import SeriesRecord

logger = logging.getLogger(__name__)


class DescribeMode(Enum):
    DEFAULT = "default"
    CT = "ct"


DEFAULT_COLUMNS = ["patient", "file", "modality", "slice_thickness", "pixel_spacing", "date", "manufacturer"]
CT_COLUMNS = [
    "patient",
    "series_uid",
    "patient_name",
    "convolution_kernel",
    "slice_thickness",
    "pixel_spacing",
    "kvp",
    "exposure",
    "tube_current",
    "slices",
]


def _spacing_text(meta: SliceMeta) -> Optional[str]:
    if meta.pixel_spacing is None:
        return None
    return "\\".join(f"{v:g}" for v in meta.pixel_spacing)


def _distinct(values: Sequence[Any]) -> Optional[Any]:
    """The common value of a series, '\\'-joined distinct values, or None if all absent."""
    present = [v for v in values if v is not None]
    if not present:
        return None
    unique: List[Any] = []
    for value in present:
        if value not in unique:
            unique.append(value)
    if len(unique) == 1:
        return unique[0]
    return "\\".join(f"{v:g}" if isinstance(v, float) else str(v) for v in unique)


def _default_rows(record: SeriesRecord) -> List[Dict[str, Any]]:
    rows = []
    paths = record.slice_paths or [None] * len(record.slices)
    entries = list(zip(record.slices, paths)) + list(zip(record.rtstruct_slices, record.rtstruct_paths))
    for meta, path in entries:
        rows.append({
            "patient": record.patient_id,
            "file": path.name if path is not None else meta.sop_uid,
            "modality": meta.modality,
            "slice_thickness": meta.slice_thickness,
            "pixel_spacing": _spacing_text(meta),
            "date": meta.series_date or meta.study_date,
            "manufacturer": meta.manufacturer,
        })
    return rows


def _ct_row(record: SeriesRecord) -> Dict[str, Any]:
    slices = record.slices
    return {
        "patient": record.patient_id,
        "series_uid": record.series_uid,
        "patient_name": _distinct([m.patient_name for m in slices]),
        "convolution_kernel": _distinct([m.convolution_kernel for m in slices]),
        "slice_thickness": _distinct([m.slice_thickness for m in slices]),
        "pixel_spacing": _distinct([_spacing_text(m) for m in slices]),
        "kvp": _distinct([m.kvp for m in slices]),
        "exposure": _distinct([m.exposure for m in slices]),
        "tube_current": _distinct([m.tube_current for m in slices]),
        "slices": len(slices),
    }


def describe(records: Sequence[SeriesRecord], mode: DescribeMode = DescribeMode.DEFAULT) -> pd.DataFrame:
    """
    Default mode: one row per file (image slices then RTSTRUCTs).
    CT mode: one row per series. Absent attributes are empty cells.
    """
    if not records:
        raise EmptyDataset("Nothing to describe")
    mode = DescribeMode(mode)
    if mode is DescribeMode.CT:
        frame = pd.DataFrame([_ct_row(r) for r in records], columns=CT_COLUMNS)
    else:
        rows = [row for record in records for row in _default_rows(record)]
        frame = pd.DataFrame(rows, columns=DEFAULT_COLUMNS)
    logger.info("Described %d series in %s mode (%d rows)", len(records), mode.value, len(frame))
    return frame
