"""
Image pre-processing: pure volume-to-volume transforms and the step chain
that applies them with before/after statistics.
"""
import logging
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np
from scipy import ndimage

from models.config_models import (
    BiasFieldStep,
    HistEqualizeStep,
    HistMatchStep,
    IntensityResampleStep,
    PreprocessParams,
    PreprocessStep,
    ReshapeStep,
    RescaleStep,
    ZScoreStep,
)
from models.exceptions import (
    DegenerateIntensity,
    EmptyMask,
    PreprocessStepError,
    RadgateValidationError,
    UnsupportedStep,
)
from models.imaging_models import IntensityStats, Mask, StepStats, Volume, VolumeGeometry

logger = logging.getLogger(__name__)

Triple = Tuple[float, float, float]


def _values(volume: Volume, mask: Optional[Mask] = None) -> np.ndarray:
    """Voxel values over the whole volume or the ROI, as float64."""
    voxels = np.asarray(volume.voxels, dtype=np.float64)
    if mask is None:
        return voxels.ravel()
    volume.require_same_geometry(mask)
    selected = voxels[np.asarray(mask.voxels) != 0]
    if selected.size == 0:
        raise EmptyMask("ROI mask is empty")
    return selected


def _range(values: np.ndarray, what: str) -> Tuple[float, float]:
    low, high = float(values.min()), float(values.max())
    if high <= low:
        raise DegenerateIntensity(f"{what}: intensities are constant ({low:g})")
    return low, high


def rescale(volume: Volume, out_min: float = 0.0, out_max: float = 1.0) -> Volume:
    """Affine map of [min, max] onto [out_min, out_max]."""
    if out_max <= out_min:
        raise RadgateValidationError(f"out_max {out_max} must exceed out_min {out_min}")
    low, high = _range(_values(volume), "rescale")
    voxels = np.asarray(volume.voxels, dtype=np.float64)
    scaled = out_min + (voxels - low) * ((out_max - out_min) / (high - low))
    return volume.with_voxels(scaled)


def zscore(volume: Volume, scope: str = "whole", mask: Optional[Mask] = None) -> Volume:
    """(x - mean) / std with population statistics over the scope."""
    if scope == "roi" and mask is None:
        raise RadgateValidationError("zscore over the ROI needs a mask")
    values = _values(volume, mask if scope == "roi" else None)
    mean = float(values.mean())
    std = float(values.std())
    if not std > 0:
        raise DegenerateIntensity(f"zscore: standard deviation over the {scope} scope is zero")
    voxels = np.asarray(volume.voxels, dtype=np.float64)
    return volume.with_voxels((voxels - mean) / std)


def _bin_indices(values: np.ndarray, low: float, high: float, levels: int) -> np.ndarray:
    """Equal-width bin index in [0, levels - 1]; the maximum falls in the last bin."""
    scaled = np.floor((values - low) * (levels / (high - low))).astype(np.int64)
    return np.clip(scaled, 0, levels - 1)


def _cdf(values: np.ndarray, low: float, high: float, levels: int) -> np.ndarray:
    counts = np.bincount(_bin_indices(values, low, high, levels), minlength=levels)
    return np.cumsum(counts) / values.size


def hist_match(volume: Volume, reference: Volume, levels: int = 1024) -> Volume:
    """
    Map each voxel's source CDF value through the inverse reference CDF.
    Both CDFs use `levels` equal-width bins; outputs are reference bin centers.
    """
    if levels < 2:
        raise RadgateValidationError("hist_match needs at least 2 levels")
    source = _values(volume)
    target = _values(reference)
    src_low, src_high = _range(source, "hist_match source")
    ref_low, ref_high = _range(target, "hist_match reference")
    src_cdf = _cdf(source, src_low, src_high, levels)
    ref_cdf = _cdf(target, ref_low, ref_high, levels)
    mapped_bins = np.clip(np.searchsorted(ref_cdf, src_cdf, side="left"), 0, levels - 1)
    width = (ref_high - ref_low) / levels
    centers = ref_low + (mapped_bins + 0.5) * width
    voxels = np.asarray(volume.voxels, dtype=np.float64)
    return volume.with_voxels(centers[_bin_indices(voxels, src_low, src_high, levels)])


def hist_equalize(volume: Volume, bins: int = 256) -> Volume:
    """value -> min + CDF(bin(value)) * (max - min)."""
    if bins < 2:
        raise RadgateValidationError("hist_equalize needs at least 2 bins")
    values = _values(volume)
    low, high = _range(values, "hist_equalize")
    cdf = _cdf(values, low, high, bins)
    voxels = np.asarray(volume.voxels, dtype=np.float64)
    return volume.with_voxels(low + cdf[_bin_indices(voxels, low, high, bins)] * (high - low))


def discretize_values(
    values: np.ndarray,
    low: float,
    high: float,
    bin_count: Optional[int] = None,
    bin_width: Optional[float] = None,
) -> np.ndarray:
    """
    Fixed bin count n: floor(n (x - min) / (max - min)) + 1, clamped to [1, n].
    Fixed bin width w: floor((x - min) / w) + 1, at least 1.
    """
    values = np.asarray(values, dtype=np.float64)
    if (bin_count is None) == (bin_width is None):
        raise RadgateValidationError("give exactly one of bin_count or bin_width")
    if bin_count is not None:
        if bin_count < 2:
            raise RadgateValidationError("bin_count must be at least 2")
        if high <= low:
            raise DegenerateIntensity(f"fixed bin count: intensities are constant ({low:g})")
        levels = np.floor(bin_count * (values - low) / (high - low)) + 1
        return np.clip(levels, 1, bin_count).astype(np.int32)
    assert bin_width is not None
    if not bin_width > 0:
        raise RadgateValidationError("bin_width must be positive")
    levels = np.floor((values - low) / bin_width) + 1
    return np.maximum(levels, 1).astype(np.int32)


def intensity_resample(
    volume: Volume,
    bin_count: Optional[int] = None,
    bin_width: Optional[float] = None,
    mask: Optional[Mask] = None,
) -> Volume:
    """Integer gray levels; the range is taken over the ROI when a mask is given."""
    values = _values(volume, mask)
    levels = discretize_values(
        np.asarray(volume.voxels, dtype=np.float64),
        float(values.min()),
        float(values.max()),
        bin_count=bin_count,
        bin_width=bin_width,
    )
    return volume.with_voxels(levels, intensity_unit="level")


def _target_grid(geometry: VolumeGeometry, target_spacing: Optional[Triple], target_dims: Optional[Tuple[int, int, int]]) -> Tuple[Tuple[int, int, int], Triple]:
    dims_in = np.asarray(geometry.dims, dtype=float)
    spacing_in = np.asarray(geometry.spacing, dtype=float)
    if (target_spacing is None) == (target_dims is None):
        raise RadgateValidationError("give exactly one of target_spacing or target_dims")
    if target_spacing is not None:
        spacing_out = np.asarray(target_spacing, dtype=float)
        if np.any(spacing_out <= 0):
            raise RadgateValidationError("target spacing must be positive")
        dims_out = np.maximum(1, np.floor(dims_in * spacing_in / spacing_out + 0.5)).astype(int)
    else:
        dims_out = np.asarray(target_dims, dtype=int)
        if np.any(dims_out < 1):
            raise RadgateValidationError("target dims must be at least 1")
        spacing_out = dims_in * spacing_in / dims_out
    return tuple(int(d) for d in dims_out), tuple(float(s) for s in spacing_out)  # type: ignore[return-value]


def reshape(
    volume: Volume,
    target_spacing: Optional[Triple] = None,
    target_dims: Optional[Tuple[int, int, int]] = None,
    interpolation: str = "trilinear",
) -> Volume:
    """
    Resample onto a grid with the same origin and direction. Output voxel
    (i, j, k) samples the input at continuous index (i, j, k) * s_out / s_in.
    Masks are always resampled with nearest neighbour.
    """
    is_mask = isinstance(volume, Mask)
    order = 0 if is_mask or interpolation == "nearest" else 1
    if interpolation not in ("trilinear", "nearest"):
        raise RadgateValidationError(f"Unknown interpolation '{interpolation}'")
    geometry = volume.geometry
    dims_out, spacing_out = _target_grid(geometry, target_spacing, target_dims)
    ratios = np.asarray(spacing_out) / np.asarray(geometry.spacing)
    nx, ny, nz = dims_out
    # Array axes are (z, y, x)
    grid = np.meshgrid(
        np.arange(nz) * ratios[2],
        np.arange(ny) * ratios[1],
        np.arange(nx) * ratios[0],
        indexing="ij",
    )
    source = np.asarray(volume.voxels)
    samples = ndimage.map_coordinates(
        source.astype(np.float64) if order == 1 else source,
        np.stack(grid),
        order=order,
        mode="nearest",
    )
    out_geometry = VolumeGeometry(dims_out, spacing_out, geometry.origin, geometry.direction)
    if is_mask:
        return Mask(out_geometry, samples.astype(np.uint8), volume.intensity_unit)
    return Volume(out_geometry, samples, volume.intensity_unit)


def reshape_pair(
    volume: Volume,
    mask: Mask,
    target_spacing: Optional[Triple] = None,
    target_dims: Optional[Tuple[int, int, int]] = None,
    interpolation: str = "trilinear",
) -> Tuple[Volume, Mask]:
    """Reshape image and mask onto the same output grid."""
    volume.require_same_geometry(mask)
    image = reshape(volume, target_spacing, target_dims, interpolation)
    resampled = reshape(mask, target_spacing, target_dims, "nearest")
    assert isinstance(resampled, Mask)
    return image, resampled


ReferenceLoader = Callable[[str], Volume]


@dataclass
class ChainResult:
    volume: Volume
    mask: Optional[Mask] = None
    stats: List[StepStats] = field(default_factory=list)


class PreprocessChain:
    """
    Applies the configured steps in order. Steps that are not listed do not
    run. Any failure is re-raised as PreprocessStepError naming the 1-based
    step index.
    """

    def __init__(self, params: PreprocessParams, reference_loader: Optional[ReferenceLoader] = None) -> None:
        self.params = params
        self.reference_loader = reference_loader

    def _apply(
        self,
        step: PreprocessStep,
        volume: Volume,
        mask: Optional[Mask],
    ) -> Tuple[Volume, Optional[Mask]]:
        if isinstance(step, RescaleStep):
            return rescale(volume, step.out_min, step.out_max), mask
        if isinstance(step, ZScoreStep):
            return zscore(volume, step.scope, mask), mask
        if isinstance(step, HistMatchStep):
            if self.reference_loader is None:
                raise RadgateValidationError("hist_match needs a reference volume loader")
            return hist_match(volume, self.reference_loader(step.reference), step.levels), mask
        if isinstance(step, HistEqualizeStep):
            return hist_equalize(volume, step.bins), mask
        if isinstance(step, IntensityResampleStep):
            return intensity_resample(volume, step.bin_count, step.bin_width, mask), mask
        if isinstance(step, ReshapeStep):
            if mask is None:
                return reshape(volume, step.target_spacing, step.target_dims, step.interpolation), None
            return reshape_pair(volume, mask, step.target_spacing, step.target_dims, step.interpolation)
        if isinstance(step, BiasFieldStep):
            raise UnsupportedStep("bias field correction is not implemented")
        raise UnsupportedStep(f"Unknown step {step!r}")

    def run(self, volume: Volume, mask: Optional[Mask] = None, patient_id: str = "") -> ChainResult:
        result = ChainResult(volume, mask)
        for index, step in enumerate(self.params.steps, start=1):
            scope = "roi" if isinstance(step, ZScoreStep) and step.scope == "roi" else "whole"
            try:
                before = IntensityStats.of(_values(result.volume, result.mask if scope == "roi" else None))
                volume_out, mask_out = self._apply(step, result.volume, result.mask)
                after = IntensityStats.of(_values(volume_out, mask_out if scope == "roi" else None))
            except (RadgateValidationError, ValueError) as e:
                raise PreprocessStepError(index, step.step, e) from e
            parameters = step.model_dump(mode="json", exclude={"step"}, exclude_none=True)
            stats = StepStats(step.step, parameters, before, after, patient_id, scope)
            logger.info(
                "%sstep %d %s %s: in [%g, %g] mean %g std %g -> out [%g, %g] mean %g std %g",
                f"{patient_id}: " if patient_id else "",
                index,
                step.step,
                parameters,
                before.minimum, before.maximum, before.mean, before.std,
                after.minimum, after.maximum, after.mean, after.std,
            )
            result = ChainResult(volume_out, mask_out, result.stats + [stats])
        return result


def run_chain(
    volume: Volume,
    params: PreprocessParams,
    mask: Optional[Mask] = None,
    reference_loader: Optional[ReferenceLoader] = None,
) -> Tuple[Volume, List[StepStats]]:
    """Apply the steps in order; returns the final volume and per-step stats."""
    result = PreprocessChain(params, reference_loader).run(volume, mask)
    return result.volume, result.stats

