"""
Exception hierarchy for radgate.

Validation errors (bad data, bad parameters) derive from ValueError and map to
CLI exit status 1; I/O errors derive from OSError and map to exit status 2.
"""
from typing import Optional


class RadgateError(Exception):
    """Base class for every error raised by radgate."""


class RadgateValidationError(RadgateError, ValueError):
    """Input data or parameters violate a contract."""


class RadgateIOError(RadgateError, OSError):
    """Reading or writing a file failed."""


# DICOM parsing

class DicomParseError(RadgateValidationError):
    """Byte stream is not a parseable DICOM Part-10 file."""


class MissingMagic(DicomParseError):
    pass


class UnsupportedTransferSyntax(DicomParseError):
    pass


class TruncatedElement(DicomParseError):
    pass


class UndefinedLengthElement(DicomParseError):
    pass


class MalformedSequence(DicomParseError):
    pass


class ElementOrderError(DicomParseError):
    pass


class DicomValueError(RadgateValidationError):
    """An element is present but cannot be interpreted as requested."""


class TagAbsent(DicomValueError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "tag absent"


class MalformedNumeric(DicomValueError):
    pass


class MissingGeometry(DicomValueError):
    pass


class InvalidGeometry(DicomValueError):
    pass


class PixelLengthMismatch(DicomValueError):
    pass


class UnsupportedBitsAllocated(DicomValueError):
    pass


class NotRTStruct(DicomValueError):
    pass


class NoContours(DicomValueError):
    pass


class OddContourData(DicomValueError):
    pass


# Catalog

class EmptyDataset(RadgateValidationError):
    pass


class MixedSeriesGeometry(RadgateValidationError):
    pass


# Volumes

class SingleSlice(RadgateValidationError):
    pass


class GeometryMismatch(RadgateValidationError):
    pass


class BadHeader(RadgateValidationError):
    pass


class SizeMismatch(RadgateValidationError):
    pass


class NonFiniteVoxels(RadgateValidationError):
    pass


# Pre-processing

class DegenerateIntensity(RadgateValidationError):
    pass


class UnsupportedStep(RadgateValidationError):
    pass


class PreprocessStepError(RadgateValidationError):
    """A chain step failed; `step_index` is 1-based."""

    def __init__(self, step_index: int, step_name: str, cause: Exception) -> None:
        super().__init__(f"step {step_index} ({step_name}) failed: {cause}")
        self.step_index = step_index
        self.step_name = step_name
        self.cause = cause


# Features

class EmptyMask(RadgateValidationError):
    pass


# Feature analysis

class MissingOutcomeColumn(RadgateValidationError):
    pass


class NoFeatureColumns(RadgateValidationError):
    pass


class DuplicatePatient(RadgateValidationError):
    pass


class EverythingDropped(RadgateValidationError):
    pass


class UnknownClass(RadgateValidationError):
    pass


class NotBinary(RadgateValidationError):
    pass


class TooFewSamples(RadgateValidationError):
    pass


class UnknownVolumeFeature(RadgateValidationError):
    pass


# CLI

class UsageError(RadgateValidationError):
    pass


class UnknownSubcommand(UsageError):
    pass


class ConfigInvalid(RadgateValidationError):
    """Configuration document rejected; `field_path` is dotted, e.g. 'steps.1.out_max'."""

    def __init__(self, message: str, field_path: Optional[str] = None) -> None:
        text = f"{field_path}: {message}" if field_path else message
        super().__init__(text)
        self.field_path = field_path


class IoFailure(RadgateIOError):
    pass
