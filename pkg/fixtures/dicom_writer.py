"""
Minimal DICOM Part-10 writer for synthetic fixtures.

Encodes datasets given as {keyword: value} in Explicit or Implicit VR Little
Endian, with sequences of defined or undefined length. Only keywords in the
built-in dictionary can be written.
"""
import hashlib
import struct
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np

from models.dicom_models import DicomTag, SliceMeta, TransferSyntax
from readers.dicom_dictionary import (
    BINARY_NUMERIC_VRS,
    ITEM,
    ITEM_DELIMITATION,
    LONG_LENGTH_VRS,
    SEQUENCE_DELIMITATION,
    TAGS,
    UNDEFINED_LENGTH,
    VR_BY_TAG,
)
from storage.atomic_writer import atomic_write

UID_ROOT = "2.25."
IMPLEMENTATION_UID = "2.25.1234567890"
CT_IMAGE_STORAGE = "1.2.840.10008.5.1.4.1.1.2"
MR_IMAGE_STORAGE = "1.2.840.10008.5.1.4.1.1.4"
RT_STRUCTURE_SET_STORAGE = "1.2.840.10008.5.1.4.1.1.481.3"
AXIAL = (1.0, 0.0, 0.0, 0.0, 1.0, 0.0)

Dataset = Mapping[str, Any]


def make_uid(seed: int, *parts: object) -> str:
    """Deterministic UID under the 2.25 root, derived from the seed and parts."""
    digest = hashlib.sha256("/".join(map(str, (seed,) + parts)).encode("utf-8")).digest()
    return UID_ROOT + str(int.from_bytes(digest[:16], "big"))


def format_ds(value: float) -> str:
    """Shortest text that fits a DS value (16 characters)."""
    text = repr(float(value))
    if text.endswith(".0"):
        text = text[:-2]
    precision = 12
    while len(text) > 16 and precision > 1:
        text = f"{float(value):.{precision}g}"
        precision -= 1
    return text


def _as_list(value: Any) -> List[Any]:
    if isinstance(value, (list, tuple)):
        return list(value)
    return [value]


def _padded(raw: bytes, pad: bytes) -> bytes:
    return raw + pad if len(raw) % 2 else raw


def encode_value(vr: str, value: Any) -> bytes:
    if vr == "DS":
        return _padded("\\".join(format_ds(v) for v in _as_list(value)).encode("ascii"), b" ")
    if vr == "IS":
        return _padded("\\".join(str(int(v)) for v in _as_list(value)).encode("ascii"), b" ")
    if vr in BINARY_NUMERIC_VRS:
        code, _ = BINARY_NUMERIC_VRS[vr]
        items = _as_list(value)
        return struct.pack("<" + code[1] * len(items), *items)
    if vr == "UI":
        return _padded(str(value).encode("ascii"), b"\x00")
    if isinstance(value, (bytes, bytearray)):
        return _padded(bytes(value), b"\x00")
    text = "\\".join(str(v) for v in _as_list(value))
    return _padded(text.encode("latin-1"), b" ")


class DicomWriter:
    """Encodes datasets for one transfer syntax."""

    def __init__(self, implicit: bool = False, undefined_length_sequences: bool = False) -> None:
        self.implicit = implicit
        self.undefined_length_sequences = undefined_length_sequences

    @property
    def transfer_syntax(self) -> TransferSyntax:
        return TransferSyntax.IMPLICIT_VR_LITTLE_ENDIAN if self.implicit else TransferSyntax.EXPLICIT_VR_LITTLE_ENDIAN

    def _header(self, dicom_tag: DicomTag, vr: str, length: int, implicit: bool) -> bytes:
        head = struct.pack("<HH", dicom_tag.group, dicom_tag.element)
        if implicit:
            return head + struct.pack("<I", length)
        if vr in LONG_LENGTH_VRS:
            return head + vr.encode("ascii") + b"\x00\x00" + struct.pack("<I", length)
        if length > 0xFFFF:
            raise ValueError(f"{dicom_tag} value of {length} bytes does not fit a {vr} element")
        return head + vr.encode("ascii") + struct.pack("<H", length)

    def _sequence(self, dicom_tag: DicomTag, items: Sequence[Dataset], implicit: bool) -> bytes:
        encoded = []
        for item in items:
            body = self.encode_dataset(item, implicit)
            if self.undefined_length_sequences:
                encoded.append(self._marker(ITEM, UNDEFINED_LENGTH) + body + self._marker(ITEM_DELIMITATION, 0))
            else:
                encoded.append(self._marker(ITEM, len(body)) + body)
        payload = b"".join(encoded)
        if self.undefined_length_sequences:
            return self._header(dicom_tag, "SQ", UNDEFINED_LENGTH, implicit) + payload + self._marker(SEQUENCE_DELIMITATION, 0)
        return self._header(dicom_tag, "SQ", len(payload), implicit) + payload

    @staticmethod
    def _marker(dicom_tag: DicomTag, length: int) -> bytes:
        return struct.pack("<HHI", dicom_tag.group, dicom_tag.element, length)

    def encode_dataset(self, dataset: Dataset, implicit: Optional[bool] = None) -> bytes:
        """Elements in ascending tag order; None values are skipped."""
        implicit = self.implicit if implicit is None else implicit
        entries = sorted(((TAGS[keyword], value) for keyword, value in dataset.items() if value is not None), key=lambda e: e[0])
        chunks = []
        for dicom_tag, value in entries:
            vr = VR_BY_TAG[dicom_tag]
            if vr == "SQ":
                chunks.append(self._sequence(dicom_tag, value, implicit))
                continue
            raw = encode_value(vr, value)
            chunks.append(self._header(dicom_tag, vr, len(raw), implicit) + raw)
        return b"".join(chunks)

    def encode_file(self, dataset: Dataset) -> bytes:
        """128-byte preamble, DICM, explicit-VR file meta group, then the body."""
        meta_body = self.encode_dataset(
            {
                "FileMetaInformationVersion": b"\x00\x01",
                "MediaStorageSOPClassUID": dataset.get("SOPClassUID", CT_IMAGE_STORAGE),
                "MediaStorageSOPInstanceUID": dataset.get("SOPInstanceUID", ""),
                "TransferSyntaxUID": self.transfer_syntax.value,
                "ImplementationClassUID": IMPLEMENTATION_UID,
            },
            implicit=False,
        )
        group_length = self.encode_dataset({"FileMetaInformationGroupLength": len(meta_body)}, implicit=False)
        return b"\x00" * 128 + b"DICM" + group_length + meta_body + self.encode_dataset(dataset)

    def write(self, dataset: Dataset, path: Union[str, Path]) -> Path:
        return atomic_write(path, self.encode_file(dataset))


def slice_dataset(meta: SliceMeta, pixels: np.ndarray, extra: Optional[Dict[str, Any]] = None) -> Dict[str, Any]:
    """Image dataset whose parsed SliceMeta equals `meta`; `pixels` are stored int16 values."""
    grid = np.asarray(pixels, dtype="<i2")
    if meta.rows is not None and grid.shape != (meta.rows, meta.cols):
        raise ValueError(f"Pixel grid {grid.shape} does not match {meta.rows}x{meta.cols}")
    dataset: Dict[str, Any] = {
        "SOPClassUID": MR_IMAGE_STORAGE if meta.modality == "MR" else CT_IMAGE_STORAGE,
        "SOPInstanceUID": meta.sop_uid or None,
        "StudyDate": meta.study_date,
        "SeriesDate": meta.series_date,
        "Modality": meta.modality,
        "Manufacturer": meta.manufacturer,
        "PatientName": meta.patient_name,
        "PatientID": meta.patient_id or None,
        "SliceThickness": meta.slice_thickness,
        "KVP": meta.kvp,
        "XRayTubeCurrent": meta.tube_current,
        "Exposure": meta.exposure,
        "ConvolutionKernel": meta.convolution_kernel,
        "SeriesInstanceUID": meta.series_uid or None,
        "InstanceNumber": meta.instance_number,
        "ImagePositionPatient": meta.image_position,
        "ImageOrientationPatient": meta.orientation,
        "SamplesPerPixel": 1,
        "PhotometricInterpretation": "MONOCHROME2",
        "Rows": meta.rows,
        "Columns": meta.cols,
        "PixelSpacing": meta.pixel_spacing,
        "BitsAllocated": 16,
        "BitsStored": 16,
        "HighBit": 15,
        "PixelRepresentation": 1,
        "RescaleIntercept": meta.rescale_intercept,
        "RescaleSlope": meta.rescale_slope,
        "PixelData": grid.tobytes(),
    }
    dataset.update(extra or {})
    return dataset


def rtstruct_dataset(
    patient_id: str,
    sop_uid: str,
    series_uid: str,
    study_uid: str,
    frame_uid: str,
    referenced_series_uid: str,
    rois: Sequence[Dict[str, Any]],
    study_date: Optional[str] = None,
) -> Dict[str, Any]:
    """
    RT Structure Set referencing one image series. Each ROI is
    {"number", "name", "color", "contours": [[(x, y, z), ...], ...]}.
    """
    return {
        "SOPClassUID": RT_STRUCTURE_SET_STORAGE,
        "SOPInstanceUID": sop_uid,
        "StudyDate": study_date,
        "Modality": "RTSTRUCT",
        "PatientID": patient_id,
        "StudyInstanceUID": study_uid,
        "SeriesInstanceUID": series_uid,
        "StructureSetLabel": "RADGATE",
        "ReferencedFrameOfReferenceSequence": [
            {
                "FrameOfReferenceUID": frame_uid,
                "RTReferencedStudySequence": [
                    {
                        "ReferencedSOPClassUID": "1.2.840.10008.3.1.2.3.1",
                        "ReferencedSOPInstanceUID": study_uid,
                        "RTReferencedSeriesSequence": [{"SeriesInstanceUID": referenced_series_uid}],
                    }
                ],
            }
        ],
        "StructureSetROISequence": [
            {"ROINumber": roi["number"], "ReferencedFrameOfReferenceUID": frame_uid, "ROIName": roi["name"]}
            for roi in rois
        ],
        "ROIContourSequence": [
            {
                "ROIDisplayColor": list(roi.get("color", (255, 0, 0))),
                "ContourSequence": [
                    {
                        "ContourGeometricType": "CLOSED_PLANAR",
                        "NumberOfContourPoints": len(contour),
                        "ContourData": [coordinate for point in contour for coordinate in point],
                    }
                    for contour in roi["contours"]
                ],
                "ReferencedROINumber": roi["number"],
            }
            for roi in rois
        ],
    }
