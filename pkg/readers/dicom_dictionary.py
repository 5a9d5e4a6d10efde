"""
Built-in data dictionary covering exactly the tags radgate reads.
Used to resolve VRs under Implicit VR Little Endian; unknown tags become UN.
"""
from typing import Dict, Tuple

from models.dicom_models import DicomTag

# VRs with a 2-byte reserved field and 4-byte length in explicit VR encoding
LONG_LENGTH_VRS = frozenset({"OB", "OD", "OF", "OL", "OV", "OW", "SQ", "SV", "UC", "UN", "UR", "UT", "UV"})

TEXT_VRS = frozenset({"AE", "AS", "CS", "DA", "DT", "LO", "LT", "PN", "SH", "ST", "TM", "UC", "UI", "UR", "UT"})

BINARY_NUMERIC_VRS: Dict[str, Tuple[str, int]] = {
    "US": ("<H", 2),
    "SS": ("<h", 2),
    "UL": ("<I", 4),
    "SL": ("<i", 4),
    "FL": ("<f", 4),
    "FD": ("<d", 8),
}

UNDEFINED_LENGTH = 0xFFFFFFFF

ITEM = DicomTag(0xFFFE, 0xE000)
ITEM_DELIMITATION = DicomTag(0xFFFE, 0xE00D)
SEQUENCE_DELIMITATION = DicomTag(0xFFFE, 0xE0DD)

# Keyword -> (tag, VR)
_ENTRIES: Dict[str, Tuple[DicomTag, str]] = {
    "FileMetaInformationGroupLength": (DicomTag(0x0002, 0x0000), "UL"),
    "FileMetaInformationVersion": (DicomTag(0x0002, 0x0001), "OB"),
    "MediaStorageSOPClassUID": (DicomTag(0x0002, 0x0002), "UI"),
    "MediaStorageSOPInstanceUID": (DicomTag(0x0002, 0x0003), "UI"),
    "TransferSyntaxUID": (DicomTag(0x0002, 0x0010), "UI"),
    "ImplementationClassUID": (DicomTag(0x0002, 0x0012), "UI"),
    "ImplementationVersionName": (DicomTag(0x0002, 0x0013), "SH"),
    "SpecificCharacterSet": (DicomTag(0x0008, 0x0005), "CS"),
    "ImageType": (DicomTag(0x0008, 0x0008), "CS"),
    "SOPClassUID": (DicomTag(0x0008, 0x0016), "UI"),
    "SOPInstanceUID": (DicomTag(0x0008, 0x0018), "UI"),
    "StudyDate": (DicomTag(0x0008, 0x0020), "DA"),
    "SeriesDate": (DicomTag(0x0008, 0x0021), "DA"),
    "Modality": (DicomTag(0x0008, 0x0060), "CS"),
    "Manufacturer": (DicomTag(0x0008, 0x0070), "LO"),
    "SeriesDescription": (DicomTag(0x0008, 0x103E), "LO"),
    "ReferencedSOPClassUID": (DicomTag(0x0008, 0x1150), "UI"),
    "ReferencedSOPInstanceUID": (DicomTag(0x0008, 0x1155), "UI"),
    "PatientName": (DicomTag(0x0010, 0x0010), "PN"),
    "PatientID": (DicomTag(0x0010, 0x0020), "LO"),
    "SliceThickness": (DicomTag(0x0018, 0x0050), "DS"),
    "KVP": (DicomTag(0x0018, 0x0060), "DS"),
    "XRayTubeCurrent": (DicomTag(0x0018, 0x1151), "IS"),
    "Exposure": (DicomTag(0x0018, 0x1152), "IS"),
    "ConvolutionKernel": (DicomTag(0x0018, 0x1210), "SH"),
    "StudyInstanceUID": (DicomTag(0x0020, 0x000D), "UI"),
    "SeriesInstanceUID": (DicomTag(0x0020, 0x000E), "UI"),
    "InstanceNumber": (DicomTag(0x0020, 0x0013), "IS"),
    "ImagePositionPatient": (DicomTag(0x0020, 0x0032), "DS"),
    "ImageOrientationPatient": (DicomTag(0x0020, 0x0037), "DS"),
    "FrameOfReferenceUID": (DicomTag(0x0020, 0x0052), "UI"),
    "SamplesPerPixel": (DicomTag(0x0028, 0x0002), "US"),
    "PhotometricInterpretation": (DicomTag(0x0028, 0x0004), "CS"),
    "Rows": (DicomTag(0x0028, 0x0010), "US"),
    "Columns": (DicomTag(0x0028, 0x0011), "US"),
    "PixelSpacing": (DicomTag(0x0028, 0x0030), "DS"),
    "BitsAllocated": (DicomTag(0x0028, 0x0100), "US"),
    "BitsStored": (DicomTag(0x0028, 0x0101), "US"),
    "HighBit": (DicomTag(0x0028, 0x0102), "US"),
    "PixelRepresentation": (DicomTag(0x0028, 0x0103), "US"),
    "WindowCenter": (DicomTag(0x0028, 0x1050), "DS"),
    "WindowWidth": (DicomTag(0x0028, 0x1051), "DS"),
    "RescaleIntercept": (DicomTag(0x0028, 0x1052), "DS"),
    "RescaleSlope": (DicomTag(0x0028, 0x1053), "DS"),
    "StructureSetLabel": (DicomTag(0x3006, 0x0002), "SH"),
    "ReferencedFrameOfReferenceSequence": (DicomTag(0x3006, 0x0010), "SQ"),
    "RTReferencedStudySequence": (DicomTag(0x3006, 0x0012), "SQ"),
    "RTReferencedSeriesSequence": (DicomTag(0x3006, 0x0014), "SQ"),
    "ContourImageSequence": (DicomTag(0x3006, 0x0016), "SQ"),
    "StructureSetROISequence": (DicomTag(0x3006, 0x0020), "SQ"),
    "ROINumber": (DicomTag(0x3006, 0x0022), "IS"),
    "ReferencedFrameOfReferenceUID": (DicomTag(0x3006, 0x0024), "UI"),
    "ROIName": (DicomTag(0x3006, 0x0026), "LO"),
    "ROIDisplayColor": (DicomTag(0x3006, 0x002A), "IS"),
    "ROIContourSequence": (DicomTag(0x3006, 0x0039), "SQ"),
    "ContourSequence": (DicomTag(0x3006, 0x0040), "SQ"),
    "ContourGeometricType": (DicomTag(0x3006, 0x0042), "CS"),
    "NumberOfContourPoints": (DicomTag(0x3006, 0x0046), "IS"),
    "ContourData": (DicomTag(0x3006, 0x0050), "DS"),
    "ReferencedROINumber": (DicomTag(0x3006, 0x0084), "IS"),
    "PixelData": (DicomTag(0x7FE0, 0x0010), "OW"),
}

TAGS: Dict[str, DicomTag] = {keyword: entry[0] for keyword, entry in _ENTRIES.items()}
VR_BY_TAG: Dict[DicomTag, str] = {entry[0]: entry[1] for entry in _ENTRIES.values()}
KEYWORD_BY_TAG: Dict[DicomTag, str] = {entry[0]: keyword for keyword, entry in _ENTRIES.items()}


def tag(keyword: str) -> DicomTag:
    """Look up a tag by its dictionary keyword."""
    return TAGS[keyword]


def lookup_vr(dicom_tag: DicomTag) -> str:
    """VR for implicit encoding; group-length elements are UL, unknown tags UN."""
    if dicom_tag.element == 0x0000:
        return "UL"
    return VR_BY_TAG.get(dicom_tag, "UN")
