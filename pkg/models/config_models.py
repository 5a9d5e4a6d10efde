"""
Configuration documents (JSON) validated with pydantic.

Every document forbids unknown keys. Validation failures surface as
ConfigInvalid with the dotted path of the offending field.
"""
import json
import os
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Tuple, Type, TypeVar, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, ValidationInfo, field_validator, model_validator
from typing_extensions import Annotated, TypeAlias

from models.exceptions import ConfigInvalid, IoFailure

# Fixed order, also the QC report column order
CHECK_NAMES: Tuple[str, ...] = (
    "modality",
    "projection",
    "slice_consistency",
    "slice_count",
    "thickness",
    "spacing",
    "kernel",
    "resolution",
    "slope_intercept",
)

# parameterised checks and the field each one reads
CHECK_PARAMETERS: Dict[str, str] = {
    "modality": "target_modality",
    "projection": "projection",
    "slice_count": "min_slice_count",
    "thickness": "thickness_range",
    "spacing": "spacing_range",
    "kernel": "kernel_whitelist",
    "resolution": "required_in_plane",
}


class _Document(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class QualitySpec(_Document):
    """
    Target acquisition parameters, one toggle per check. A parameterised check
    left untoggled runs when its parameter is given; toggled off, its parameter
    is discarded on load so the file may keep it.
    """
    target_modality: Optional[str] = None
    projection: Optional[Literal["axial"]] = None
    check_slice_consistency: bool = True
    min_slice_count: Optional[int] = Field(default=None, ge=1)
    thickness_range: Optional[Tuple[float, float]] = None
    spacing_range: Optional[Tuple[float, float]] = None
    kernel_whitelist: Optional[List[str]] = None
    required_in_plane: Optional[Tuple[int, int]] = None
    check_slope_intercept: bool = True
    check_modality: Optional[bool] = None
    check_projection: Optional[bool] = None
    check_slice_count: Optional[bool] = None
    check_thickness: Optional[bool] = None
    check_spacing: Optional[bool] = None
    check_kernel: Optional[bool] = None
    check_resolution: Optional[bool] = None

    @model_validator(mode="before")
    @classmethod
    def _discard_disabled_parameters(cls, data: Any) -> Any:
        if not isinstance(data, dict):
            return data
        disabled = [parameter for check, parameter in CHECK_PARAMETERS.items() if data.get(f"check_{check}") is False]
        return {key: value for key, value in data.items() if key not in disabled}

    @field_validator(*(f"check_{check}" for check in CHECK_PARAMETERS))
    @classmethod
    def _enabled_check_has_parameter(cls, value: Optional[bool], info: ValidationInfo) -> Optional[bool]:
        parameter = CHECK_PARAMETERS[info.field_name[len("check_"):]]  # type: ignore[index]
        if value and info.data.get(parameter) is None:
            raise ValueError(f"check is on but {parameter} is not set")
        return value

    @field_validator("thickness_range", "spacing_range")
    @classmethod
    def _ordered_range(cls, value: Optional[Tuple[float, float]]) -> Optional[Tuple[float, float]]:
        if value is not None and value[0] > value[1]:
            raise ValueError(f"range minimum {value[0]} exceeds maximum {value[1]}")
        return value

    @field_validator("kernel_whitelist")
    @classmethod
    def _nonempty_whitelist(cls, value: Optional[List[str]]) -> Optional[List[str]]:
        if value is not None and not value:
            raise ValueError("kernel whitelist is empty; omit it to disable the kernel check")
        return value

    def enabled_checks(self) -> List[str]:
        enabled = {check: getattr(self, parameter) is not None for check, parameter in CHECK_PARAMETERS.items()}
        enabled["slice_consistency"] = self.check_slice_consistency
        enabled["slope_intercept"] = self.check_slope_intercept
        return [name for name in CHECK_NAMES if enabled[name]]


class RescaleStep(_Document):
    step: Literal["rescale"] = "rescale"
    out_min: float = 0.0
    out_max: float = 1.0

    @field_validator("out_max")
    @classmethod
    def _above_min(cls, value: float, info: ValidationInfo) -> float:
        out_min = info.data.get("out_min")
        if out_min is not None and value <= out_min:
            raise ValueError(f"out_max {value} must exceed out_min {out_min}")
        return value


class ZScoreStep(_Document):
    step: Literal["zscore"] = "zscore"
    scope: Literal["whole", "roi"] = "whole"


class HistMatchStep(_Document):
    """`reference` is a patient id in the converted tree or a path to an NRRD file."""
    step: Literal["hist_match"] = "hist_match"
    reference: str
    levels: int = Field(default=1024, ge=2)


class HistEqualizeStep(_Document):
    step: Literal["hist_equalize"] = "hist_equalize"
    bins: int = Field(default=256, ge=2)


class IntensityResampleStep(_Document):
    step: Literal["intensity_resample"] = "intensity_resample"
    bin_count: Optional[int] = Field(default=None, ge=2)
    bin_width: Optional[float] = Field(default=None, gt=0)

    @model_validator(mode="after")
    def _one_mode(self) -> "IntensityResampleStep":
        if (self.bin_count is None) == (self.bin_width is None):
            raise ValueError("give exactly one of bin_count or bin_width")
        return self


class ReshapeStep(_Document):
    step: Literal["reshape"] = "reshape"
    target_spacing: Optional[Tuple[float, float, float]] = None
    target_dims: Optional[Tuple[int, int, int]] = None
    interpolation: Literal["trilinear", "nearest"] = "trilinear"

    @field_validator("target_spacing")
    @classmethod
    def _positive_spacing(cls, value: Optional[Tuple[float, float, float]]) -> Optional[Tuple[float, float, float]]:
        if value is not None and min(value) <= 0:
            raise ValueError("target spacing must be positive")
        return value

    @field_validator("target_dims")
    @classmethod
    def _positive_dims(cls, value: Optional[Tuple[int, int, int]]) -> Optional[Tuple[int, int, int]]:
        if value is not None and min(value) < 1:
            raise ValueError("target dims must be at least 1")
        return value

    @model_validator(mode="after")
    def _one_target(self) -> "ReshapeStep":
        if (self.target_spacing is None) == (self.target_dims is None):
            raise ValueError("give exactly one of target_spacing or target_dims")
        return self


class BiasFieldStep(_Document):
    """Reserved; execution raises UnsupportedStep."""
    step: Literal["bias_field"] = "bias_field"


PreprocessStep: TypeAlias = Annotated[
    Union[
        RescaleStep,
        ZScoreStep,
        HistMatchStep,
        HistEqualizeStep,
        IntensityResampleStep,
        ReshapeStep,
        BiasFieldStep,
    ],
    Field(discriminator="step"),
]

STEP_NAMES = frozenset({"rescale", "zscore", "hist_match", "hist_equalize", "intensity_resample", "reshape", "bias_field"})


class PreprocessParams(_Document):
    steps: List[PreprocessStep] = Field(default_factory=list)


class ExtractionParams(_Document):
    """Discretization defaults to a fixed bin width of 25 when neither mode is given."""
    bin_width: Optional[float] = Field(default=None, gt=0)
    bin_count: Optional[int] = Field(default=None, ge=2)
    resample_spacing: Optional[Tuple[float, float, float]] = None
    feature_families: List[Literal["firstorder", "shape", "glcm"]] = Field(
        default_factory=lambda: ["firstorder", "shape", "glcm"], min_length=1
    )
    glcm_distance: int = Field(default=1, ge=1)

    @field_validator("feature_families")
    @classmethod
    def _unique_families(cls, value: List[str]) -> List[str]:
        if len(set(value)) != len(value):
            raise ValueError("feature families must be unique")
        return value

    @field_validator("resample_spacing")
    @classmethod
    def _positive_spacing(cls, value: Optional[Tuple[float, float, float]]) -> Optional[Tuple[float, float, float]]:
        if value is not None and min(value) <= 0:
            raise ValueError("resample spacing must be positive")
        return value

    @model_validator(mode="after")
    def _one_discretization(self) -> "ExtractionParams":
        if self.bin_width is not None and self.bin_count is not None:
            raise ValueError("give at most one of bin_width or bin_count")
        return self

    @property
    def effective_bin_width(self) -> Optional[float]:
        if self.bin_count is None and self.bin_width is None:
            return 25.0
        return self.bin_width


class RunConfig(BaseModel):
    """Resolved settings of one CLI invocation."""
    model_config = ConfigDict(extra="forbid")

    subcommand: str
    root: Optional[Path] = None
    out: Optional[Path] = None
    spec: Optional[Path] = None
    params: Optional[Path] = None
    roi: Optional[str] = None
    window: Optional[Tuple[float, float]] = None
    alpha: float = Field(default=0.05, gt=0, lt=1)
    auc_threshold: float = Field(default=0.70, ge=0, le=1)
    corr_threshold: float = Field(default=0.75, ge=0, le=1)
    jobs: int = Field(default=1, ge=1)

    @field_validator("root", "out", "spec", "params")
    @classmethod
    def _resolve(cls, value: Optional[Path]) -> Optional[Path]:
        return value.expanduser().resolve() if value is not None else None

    @field_validator("window")
    @classmethod
    def _positive_width(cls, value: Optional[Tuple[float, float]]) -> Optional[Tuple[float, float]]:
        if value is not None and value[1] < 0:
            raise ValueError("window width must not be negative")
        return value


def jobs_from_environment(flag: Optional[int]) -> int:
    """--jobs wins, then RADGATE_JOBS, then 1."""
    if flag is not None:
        return flag
    raw = os.getenv("RADGATE_JOBS")
    if not raw:
        return 1
    try:
        jobs = int(raw)
    except ValueError as exc:
        raise ConfigInvalid(f"not an integer: {raw!r}", "RADGATE_JOBS") from exc
    if jobs < 1:
        raise ConfigInvalid("must be at least 1", "RADGATE_JOBS")
    return jobs


def _field_path(loc: Tuple[Union[int, str], ...]) -> str:
    parts: List[str] = []
    for index, item in enumerate(loc):
        # Discriminated unions insert the tag after the list index
        if isinstance(item, str) and item in STEP_NAMES and index > 0 and isinstance(loc[index - 1], int):
            continue
        parts.append(str(item))
    return ".".join(parts)


Model = TypeVar("Model", bound=BaseModel)


def validate_config(model: Type[Model], data: Any) -> Model:
    """Validate a decoded document, converting the first error to ConfigInvalid."""
    try:
        return model.model_validate(data)
    except ValidationError as exc:
        first = exc.errors()[0]
        raise ConfigInvalid(first["msg"], _field_path(tuple(first["loc"])) or None) from exc


def load_config(model: Type[Model], path: Path) -> Model:
    """Read and validate a JSON configuration file."""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(f"Cannot read {path}: {exc}") from exc
    try:
        data: Dict[str, Any] = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path} is not valid JSON: {exc.msg} (line {exc.lineno})") from exc
    return validate_config(model, data)


def dump_config(document: BaseModel) -> str:
    """Deterministic JSON text for a configuration document."""
    return json.dumps(document.model_dump(mode="json", exclude_none=True), indent=2, sort_keys=True) + "\n"
