"""
Parser for uncompressed DICOM Part-10 files.

Supports Explicit VR Little Endian and Implicit VR Little Endian. Sequences
of defined and undefined length are parsed recursively; parsing stops after
PixelData. Every failure is a typed error, never a partial object.
"""
import logging
import math
import struct
from pathlib import Path
from typing import Callable, List, Optional, Sequence, Tuple, TypeVar, Union

import numpy as np

from models.dicom_models import (
    ContourSet,
    DicomDataset,
    DicomElement,
    DicomObject,
    DicomTag,
    SliceMeta,
    TransferSyntax,
    freeze_dataset,
)
from models.exceptions import (
    DicomParseError,
    DicomValueError,
    InvalidGeometry,
    IoFailure,
    MalformedNumeric,
    MalformedSequence,
    MissingGeometry,
    MissingMagic,
    NoContours,
    NotRTStruct,
    OddContourData,
    PixelLengthMismatch,
    TagAbsent,
    TruncatedElement,
    UndefinedLengthElement,
    UnsupportedBitsAllocated,
    UnsupportedTransferSyntax,
)
from readers.dicom_dictionary import (
    BINARY_NUMERIC_VRS,
    ITEM,
    ITEM_DELIMITATION,
    LONG_LENGTH_VRS,
    SEQUENCE_DELIMITATION,
    TEXT_VRS,
    UNDEFINED_LENGTH,
    lookup_vr,
    tag,
)

logger = logging.getLogger(__name__)

PREAMBLE_LENGTH = 128
MAGIC = b"DICM"

DecodedValue = Union[str, List[float], List[int], bytes]
T = TypeVar("T", int, float)


class _ElementReader:
    """Walks a byte buffer element by element for one VR encoding."""

    def __init__(self, data: bytes, implicit: bool) -> None:
        self.data = data
        self.implicit = implicit

    def read_header(self, offset: int) -> Tuple[DicomTag, str, int, int]:
        """Return (tag, vr, value length, header length) at `offset`."""
        data = self.data
        if offset + 8 > len(data):
            raise TruncatedElement(f"Element header at byte {offset} runs past end of data")
        group, element = struct.unpack_from("<HH", data, offset)
        dicom_tag = DicomTag(group, element)
        if group == 0xFFFE:
            (length,) = struct.unpack_from("<I", data, offset + 4)
            return dicom_tag, "", length, 8
        if self.implicit:
            (length,) = struct.unpack_from("<I", data, offset + 4)
            return dicom_tag, lookup_vr(dicom_tag), length, 8
        raw_vr = data[offset + 4:offset + 6]
        if len(raw_vr) != 2 or not raw_vr.isalpha() or not raw_vr.isupper():
            raise DicomParseError(f"Invalid VR {raw_vr!r} for {dicom_tag}")
        vr = raw_vr.decode("ascii")
        if vr in LONG_LENGTH_VRS:
            if offset + 12 > len(data):
                raise TruncatedElement(f"Element header for {dicom_tag} runs past end of data")
            (length,) = struct.unpack_from("<I", data, offset + 8)
            return dicom_tag, vr, length, 12
        (length,) = struct.unpack_from("<H", data, offset + 6)
        return dicom_tag, vr, length, 8

    def read_dataset(
        self,
        offset: int,
        end: int,
        in_undefined_item: bool = False,
        stop_after_pixels: bool = False,
        only_group: Optional[int] = None,
    ) -> Tuple[List[DicomElement], int]:
        elements: List[DicomElement] = []
        while offset < end:
            if only_group is not None:
                if offset + 2 > len(self.data):
                    raise TruncatedElement(f"Element header at byte {offset} runs past end of data")
                (group,) = struct.unpack_from("<H", self.data, offset)
                if group != only_group:
                    break
            dicom_tag, vr, length, header = self.read_header(offset)
            if dicom_tag == ITEM_DELIMITATION:
                if in_undefined_item:
                    return elements, offset + header
                raise MalformedSequence(f"Dangling item delimiter at byte {offset}")
            if dicom_tag in (ITEM, SEQUENCE_DELIMITATION):
                raise MalformedSequence(f"Dangling item marker {dicom_tag} at byte {offset}")
            offset += header

            if vr == "SQ":
                items, offset = self.read_sequence(offset, length)
                elements.append(DicomElement(dicom_tag, "SQ", b"", tuple(items)))
            else:
                if length == UNDEFINED_LENGTH:
                    raise UndefinedLengthElement(f"{dicom_tag} ({vr}) has undefined length")
                if offset + length > end:
                    raise TruncatedElement(
                        f"{dicom_tag} declares {length} bytes but only {end - offset} remain"
                    )
                elements.append(DicomElement(dicom_tag, vr, bytes(self.data[offset:offset + length])))
                offset += length

            if stop_after_pixels and dicom_tag == tag("PixelData"):
                return elements, offset

        if in_undefined_item:
            raise MalformedSequence("Item of undefined length is missing its delimiter")
        return elements, offset

    def read_sequence(self, offset: int, length: int) -> Tuple[List[DicomDataset], int]:
        items: List[DicomDataset] = []
        if length == UNDEFINED_LENGTH:
            while True:
                if offset + 8 > len(self.data):
                    raise MalformedSequence("Sequence of undefined length is missing its delimiter")
                item_tag, _, item_length, header = self.read_header(offset)
                offset += header
                if item_tag == SEQUENCE_DELIMITATION:
                    return items, offset
                if item_tag != ITEM:
                    raise MalformedSequence(f"Expected item tag, found {item_tag}")
                item, offset = self.read_item(offset, item_length)
                items.append(item)

        end = offset + length
        if end > len(self.data):
            raise TruncatedElement(f"Sequence declares {length} bytes but only {len(self.data) - offset} remain")
        while offset < end:
            item_tag, _, item_length, header = self.read_header(offset)
            if item_tag != ITEM:
                raise MalformedSequence(f"Expected item tag, found {item_tag}")
            item, offset = self.read_item(offset + header, item_length)
            items.append(item)
        if offset != end:
            raise MalformedSequence("Sequence items overrun the declared sequence length")
        return items, offset

    def read_item(self, offset: int, length: int) -> Tuple[DicomDataset, int]:
        if length == UNDEFINED_LENGTH:
            elements, offset = self.read_dataset(offset, len(self.data), in_undefined_item=True)
            return freeze_dataset(elements), offset
        end = offset + length
        if end > len(self.data):
            raise TruncatedElement(f"Item declares {length} bytes but only {len(self.data) - offset} remain")
        elements, stop = self.read_dataset(offset, end)
        if stop != end:
            raise MalformedSequence("Item contents do not match the declared item length")
        return freeze_dataset(elements), end


def parse_file(data: bytes) -> DicomObject:
    """Parse a Part-10 byte sequence up to and including PixelData."""
    if len(data) < PREAMBLE_LENGTH + len(MAGIC) or data[PREAMBLE_LENGTH:PREAMBLE_LENGTH + 4] != MAGIC:
        raise MissingMagic("No 'DICM' magic after the 128-byte preamble")

    offset = PREAMBLE_LENGTH + len(MAGIC)
    meta_reader = _ElementReader(data, implicit=False)
    meta_elements, offset = meta_reader.read_dataset(offset, len(data), only_group=0x0002)
    file_meta = freeze_dataset(meta_elements)

    syntax_element = file_meta.get(tag("TransferSyntaxUID"))
    if syntax_element is None:
        raise UnsupportedTransferSyntax("File meta group has no TransferSyntaxUID (0002,0010)")
    uid = syntax_element.value.decode("latin-1").strip(" \x00")
    try:
        transfer_syntax = TransferSyntax(uid)
    except ValueError:
        raise UnsupportedTransferSyntax(f"Transfer syntax {uid} is not supported") from None

    body_reader = _ElementReader(data, implicit=transfer_syntax.is_implicit)
    body, _ = body_reader.read_dataset(offset, len(data), stop_after_pixels=True)
    return DicomObject(transfer_syntax=transfer_syntax, file_meta=file_meta, elements=freeze_dataset(body))


def read_file(path: Union[str, Path]) -> DicomObject:
    try:
        data = Path(path).read_bytes()
    except OSError as e:
        raise IoFailure(f"Cannot read {path}: {e}") from e
    return parse_file(data)


def _dataset(source: Union[DicomObject, DicomDataset]) -> DicomDataset:
    return source.elements if isinstance(source, DicomObject) else source


def _split_numbers(raw: bytes, parse: Callable[[str], T], dicom_tag: DicomTag) -> List[T]:
    text = raw.decode("latin-1").strip(" \x00")
    if not text:
        return []
    values: List[T] = []
    for part in text.split("\\"):
        part = part.strip(" \x00")
        try:
            value = parse(part)
        except ValueError:
            raise MalformedNumeric(f"{dicom_tag}: '{part}' is not a number") from None
        if not math.isfinite(value):
            raise MalformedNumeric(f"{dicom_tag}: '{part}' is not finite")
        values.append(value)
    return values


def decode_value(source: Union[DicomObject, DicomDataset], dicom_tag: DicomTag) -> DecodedValue:
    """
    Decode one element by its VR.
    DS/IS and binary numerics -> lists in file order; text VRs -> str with
    padding stripped; anything else -> raw bytes.
    """
    element = _dataset(source).get(dicom_tag)
    if element is None:
        raise TagAbsent(f"{dicom_tag} is absent")
    if element.is_sequence:
        raise DicomValueError(f"{dicom_tag} is a sequence; use sequence_items()")

    vr = element.vr
    if vr == "DS":
        return _split_numbers(element.value, float, dicom_tag)
    if vr == "IS":
        return _split_numbers(element.value, int, dicom_tag)
    if vr in BINARY_NUMERIC_VRS:
        code, size = BINARY_NUMERIC_VRS[vr]
        count = len(element.value) // size
        return list(struct.unpack("<" + code[1] * count, element.value[:count * size]))
    if vr in TEXT_VRS:
        text = element.value.decode("latin-1").rstrip(" \x00")
        return text if vr in ("LT", "ST", "UT") else text.lstrip(" ")
    return element.value


def sequence_items(source: Union[DicomObject, DicomDataset], dicom_tag: DicomTag) -> Tuple[DicomDataset, ...]:
    element = _dataset(source).get(dicom_tag)
    if element is None:
        raise TagAbsent(f"{dicom_tag} is absent")
    if element.items is None:
        raise DicomValueError(f"{dicom_tag} is not a sequence")
    return element.items


def _optional_text(source: Union[DicomObject, DicomDataset], keyword: str) -> Optional[str]:
    if tag(keyword) not in _dataset(source):
        return None
    value = decode_value(source, tag(keyword))
    if isinstance(value, bytes):
        value = value.decode("latin-1").strip(" \x00")
    return str(value) or None


def _optional_numbers(source: Union[DicomObject, DicomDataset], keyword: str) -> Optional[List[float]]:
    if tag(keyword) not in _dataset(source):
        return None
    value = decode_value(source, tag(keyword))
    if not isinstance(value, list) or not value:
        return None
    return [float(v) for v in value]


def _optional_number(source: Union[DicomObject, DicomDataset], keyword: str) -> Optional[float]:
    values = _optional_numbers(source, keyword)
    return values[0] if values else None


def _fixed(values: Optional[List[float]], count: int, keyword: str) -> Tuple[float, ...]:
    if values is None:
        raise MissingGeometry(f"{keyword} is missing on an image-bearing object")
    if len(values) != count:
        raise InvalidGeometry(f"{keyword} needs {count} values, got {len(values)}")
    return tuple(values)


def extract_slice_meta(obj: DicomObject) -> SliceMeta:
    """Collect the per-slice attributes; optional ones stay None when absent."""
    modality = decode_value(obj, tag("Modality"))
    is_image = tag("PixelData") in obj or tag("Rows") in obj

    rows = cols = None
    pixel_spacing = image_position = orientation = None
    if is_image:
        rows = int(_fixed(_optional_numbers(obj, "Rows"), 1, "Rows")[0])
        cols = int(_fixed(_optional_numbers(obj, "Columns"), 1, "Columns")[0])
        pixel_spacing = _fixed(_optional_numbers(obj, "PixelSpacing"), 2, "PixelSpacing")
        image_position = _fixed(_optional_numbers(obj, "ImagePositionPatient"), 3, "ImagePositionPatient")
        orientation = _fixed(_optional_numbers(obj, "ImageOrientationPatient"), 6, "ImageOrientationPatient")

    instance = _optional_number(obj, "InstanceNumber")
    return SliceMeta(
        patient_id=_optional_text(obj, "PatientID") or "",
        sop_uid=_optional_text(obj, "SOPInstanceUID") or "",
        series_uid=_optional_text(obj, "SeriesInstanceUID") or "",
        modality=str(modality),
        rows=rows,
        cols=cols,
        pixel_spacing=pixel_spacing,  # type: ignore[arg-type]
        image_position=image_position,  # type: ignore[arg-type]
        orientation=orientation,  # type: ignore[arg-type]
        slice_thickness=_optional_number(obj, "SliceThickness"),
        rescale_slope=_optional_number(obj, "RescaleSlope"),
        rescale_intercept=_optional_number(obj, "RescaleIntercept"),
        convolution_kernel=_optional_text(obj, "ConvolutionKernel"),
        kvp=_optional_number(obj, "KVP"),
        exposure=_optional_number(obj, "Exposure"),
        tube_current=_optional_number(obj, "XRayTubeCurrent"),
        series_date=_optional_text(obj, "SeriesDate"),
        manufacturer=_optional_text(obj, "Manufacturer"),
        patient_name=_optional_text(obj, "PatientName"),
        study_date=_optional_text(obj, "StudyDate"),
        instance_number=int(instance) if instance is not None else None,
    )


def _single_int(source: Union[DicomObject, DicomDataset], keyword: str) -> int:
    value = decode_value(source, tag(keyword))
    if not isinstance(value, list) or len(value) != 1:
        raise DicomValueError(f"{keyword} must hold one integer, got {value!r}")
    return int(value[0])


def decode_pixels(obj: DicomObject) -> np.ndarray:
    """Stored pixel values as a (rows, cols) integer grid; no rescale applied."""
    bits = _single_int(obj, "BitsAllocated")
    if bits != 16:
        raise UnsupportedBitsAllocated(f"BitsAllocated {bits} is not supported (only 16)")
    representation = _single_int(obj, "PixelRepresentation")
    if representation not in (0, 1):
        raise UnsupportedBitsAllocated(f"PixelRepresentation {representation} is not 0 or 1")
    if tag("SamplesPerPixel") in obj and _single_int(obj, "SamplesPerPixel") != 1:
        raise DicomValueError("Only single-sample (grayscale) pixel data is supported")

    rows = _single_int(obj, "Rows")
    cols = _single_int(obj, "Columns")
    pixel_element = obj.get(tag("PixelData"))
    if pixel_element is None:
        raise TagAbsent(f"{tag('PixelData')} is absent")
    expected = rows * cols * 2
    if len(pixel_element.value) != expected:
        raise PixelLengthMismatch(
            f"PixelData holds {len(pixel_element.value)} bytes, expected {rows}x{cols}x2 = {expected}"
        )
    dtype = np.dtype("<i2") if representation == 1 else np.dtype("<u2")
    return np.frombuffer(pixel_element.value, dtype=dtype).reshape(rows, cols).copy()


def _referenced_series_uid(obj: DicomObject) -> str:
    """Follow FrameOfReference -> Study -> Series references; empty when absent."""
    try:
        for frame in sequence_items(obj, tag("ReferencedFrameOfReferenceSequence")):
            for study in sequence_items(frame, tag("RTReferencedStudySequence")):
                for series in sequence_items(study, tag("RTReferencedSeriesSequence")):
                    uid = _optional_text(series, "SeriesInstanceUID")
                    if uid:
                        return uid
    except (TagAbsent, DicomValueError):
        pass
    return ""


def parse_rtstruct(obj: DicomObject) -> List[ContourSet]:
    """One ContourSet per ROI, in ROIContourSequence order."""
    modality = decode_value(obj, tag("Modality"))
    if modality != "RTSTRUCT":
        raise NotRTStruct(f"Modality is {modality!r}, not RTSTRUCT")
    if tag("ROIContourSequence") not in obj:
        raise NoContours("RTSTRUCT has no ROIContourSequence")

    names = {}
    if tag("StructureSetROISequence") in obj:
        for roi in sequence_items(obj, tag("StructureSetROISequence")):
            if tag("ROINumber") in roi:
                names[_single_int(roi, "ROINumber")] = _optional_text(roi, "ROIName") or ""

    series_uid = _referenced_series_uid(obj)
    contour_sets: List[ContourSet] = []
    for position, roi_contour in enumerate(sequence_items(obj, tag("ROIContourSequence")), start=1):
        number = _single_int(roi_contour, "ReferencedROINumber") if tag("ReferencedROINumber") in roi_contour else None
        name = names.get(number, "") if number is not None else ""
        polygons: List[Tuple[Tuple[float, float, float], ...]] = []
        if tag("ContourSequence") in roi_contour:
            for contour in sequence_items(roi_contour, tag("ContourSequence")):
                data = _optional_numbers(contour, "ContourData") or []
                if len(data) % 3:
                    raise OddContourData(
                        f"ROI '{name or position}': {len(data)} contour values are not divisible by 3"
                    )
                points = tuple((data[i], data[i + 1], data[i + 2]) for i in range(0, len(data), 3))
                if len(points) < 3:
                    logger.warning("ROI '%s': skipping contour with %d points", name or position, len(points))
                    continue
                polygons.append(points)
        contour_sets.append(ContourSet(
            roi_name=name or f"ROI-{number if number is not None else position}",
            referenced_series_uid=series_uid,
            planar_contours=tuple(polygons),
            roi_number=number,
        ))

    if not any(cs.planar_contours for cs in contour_sets):
        raise NoContours("RTSTRUCT holds no usable contours")
    return contour_sets


def element_tags(source: Union[DicomObject, DicomDataset]) -> Sequence[DicomTag]:
    """Tags of one nesting level in stored order."""
    return list(_dataset(source).keys())
