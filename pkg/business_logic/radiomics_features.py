"""
Handcrafted radiomics features over a (volume, mask) pair: first-order
intensity statistics, voxel-face shape descriptors and direction-averaged
GLCM texture.
"""
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import ndimage
from scipy.spatial.distance import cdist

from business_logic.preprocessing import discretize_values, reshape_pair
from models.config_models import ExtractionParams
from models.exceptions import EmptyMask, RadgateError
from models.feature_models import FeatureTable, FeatureVector
from models.imaging_models import Mask, Volume
from readers.nrrd_dataset_reader import NrrdCase

logger = logging.getLogger(__name__)

FAMILIES = ("firstorder", "shape", "glcm")

FIRST_ORDER_NAMES = (
    "Energy",
    "Entropy",
    "Kurtosis",
    "Maximum",
    "Mean",
    "Median",
    "Minimum",
    "Percentile10",
    "Percentile90",
    "Range",
    "RootMeanSquared",
    "Skewness",
    "Uniformity",
    "Variance",
)
SHAPE_NAMES = ("Maximum3DDiameter", "Sphericity", "SurfaceArea", "SurfaceVolumeRatio", "VoxelVolume")
GLCM_NAMES = (
    "AngularSecondMoment",
    "Contrast",
    "Correlation",
    "Dissimilarity",
    "InverseDifferenceMoment",
    "JointEntropy",
)
FAMILY_NAMES: Dict[str, Tuple[str, ...]] = {
    "firstorder": FIRST_ORDER_NAMES,
    "shape": SHAPE_NAMES,
    "glcm": GLCM_NAMES,
}

Offset = Tuple[int, int, int]

# 13 unique (dx, dy, dz) unit offsets; the negated offsets are covered by symmetrization
GLCM_DIRECTIONS: Tuple[Offset, ...] = tuple(
    (dx, dy, dz)
    for dz in (-1, 0, 1)
    for dy in (-1, 0, 1)
    for dx in (-1, 0, 1)
    if (dz, dy, dx) > (0, 0, 0)
)

DIAMETER_CHUNK = 2048


def feature_columns(families: Sequence[str]) -> List[str]:
    """Column order: family order, then feature names alphabetically."""
    return [f"original_{family}_{name}" for family in FAMILIES if family in families for name in FAMILY_NAMES[family]]


def roi_values(volume: Volume, mask: Mask) -> np.ndarray:
    volume.require_same_geometry(mask)
    selected = np.asarray(volume.voxels, dtype=np.float64)[np.asarray(mask.voxels) != 0]
    if selected.size == 0:
        raise EmptyMask("ROI mask is empty")
    return selected


def discretize(values: np.ndarray, params: ExtractionParams) -> np.ndarray:
    """
    Gray levels 1..Ng anchored at the minimum of `values`. A constant input
    is a single level under either scheme.
    """
    values = np.asarray(values, dtype=np.float64)
    low, high = float(values.min()), float(values.max())
    if high <= low:
        return np.ones(values.shape, dtype=np.int32)
    return discretize_values(values, low, high, bin_count=params.bin_count, bin_width=params.effective_bin_width)


def first_order(volume: Volume, mask: Mask, params: Optional[ExtractionParams] = None) -> Dict[str, float]:
    params = params or ExtractionParams()
    x = roi_values(volume, mask)
    constant = bool(x.max() == x.min())
    mean = float(x[0]) if constant else float(x.mean())
    centered = x - mean
    variance = 0.0 if constant else float(np.mean(centered ** 2))
    if variance > 0:
        skewness = float(np.mean(centered ** 3)) / variance ** 1.5
        kurtosis = float(np.mean(centered ** 4)) / variance ** 2
    else:
        skewness = kurtosis = 0.0
    _, counts = np.unique(discretize(x, params), return_counts=True)
    p = counts / x.size
    energy = float(np.sum(x ** 2))
    return {
        "Energy": energy,
        "Entropy": float(-np.sum(p * np.log2(p))) + 0.0,
        "Kurtosis": kurtosis,
        "Maximum": float(x.max()),
        "Mean": mean,
        "Median": float(np.median(x)),
        "Minimum": float(x.min()),
        "Percentile10": float(np.percentile(x, 10)),
        "Percentile90": float(np.percentile(x, 90)),
        "Range": float(x.max() - x.min()),
        "RootMeanSquared": math.sqrt(energy / x.size),
        "Skewness": skewness,
        "Uniformity": float(np.sum(p ** 2)),
        "Variance": variance,
    }


def surface_area(voxels: np.ndarray, spacing: Tuple[float, float, float]) -> float:
    """Exposed faces between ROI and background (6-neighbourhood) times face area."""
    sx, sy, sz = spacing
    padded = np.pad(voxels.astype(np.int8), 1)
    # array axes are (z, y, x); faces normal to an axis span the other two spacings
    face_areas = (sx * sy, sx * sz, sy * sz)
    area = 0.0
    for axis, face in enumerate(face_areas):
        area += int(np.count_nonzero(np.diff(padded, axis=axis))) * face
    return area


def surface_voxels(voxels: np.ndarray) -> np.ndarray:
    """(z, y, x) indices of ROI voxels with a 6-neighbour outside the ROI."""
    inside = voxels.astype(bool)
    interior = ndimage.binary_erosion(inside, structure=ndimage.generate_binary_structure(3, 1), border_value=0)
    return np.argwhere(inside & ~interior)


def maximum_diameter(points: np.ndarray) -> float:
    """Largest pairwise distance, evaluated in row chunks."""
    best = 0.0
    for start in range(0, len(points), DIAMETER_CHUNK):
        block = cdist(points[start:start + DIAMETER_CHUNK], points)
        best = max(best, float(block.max()))
    return best


def shape(mask: Mask, spacing: Optional[Tuple[float, float, float]] = None) -> Dict[str, float]:
    spacing = tuple(float(s) for s in (spacing or mask.spacing))  # type: ignore[assignment]
    voxels = np.asarray(mask.voxels) != 0
    count = int(np.count_nonzero(voxels))
    if count == 0:
        raise EmptyMask("ROI mask is empty")
    sx, sy, sz = spacing  # type: ignore[misc]
    volume = count * sx * sy * sz
    area = surface_area(voxels, spacing)  # type: ignore[arg-type]
    points = surface_voxels(voxels)[:, ::-1] * np.asarray([sx, sy, sz])
    return {
        "Maximum3DDiameter": maximum_diameter(points),
        "Sphericity": (36.0 * math.pi * volume ** 2) ** (1.0 / 3.0) / area,
        "SurfaceArea": area,
        "SurfaceVolumeRatio": area / volume,
        "VoxelVolume": volume,
    }


def _overlap(size: int, step: int) -> Tuple[slice, slice]:
    """Source and destination slices pairing index n with n + step along one axis."""
    if step >= 0:
        return slice(0, max(size - step, 0)), slice(step, size)
    return slice(-step, size), slice(0, max(size + step, 0))


def cooccurrence_matrix(levels: np.ndarray, offset: Offset, n_levels: Optional[int] = None) -> np.ndarray:
    """
    Symmetrized co-occurrence counts of `levels` (array (z, y, x), 0 outside
    the ROI, 1..Ng inside) for the index offset (dx, dy, dz). Entry [i-1, j-1]
    counts pairs with levels i and j.
    """
    levels = np.asarray(levels)
    ng = int(n_levels if n_levels is not None else max(int(levels.max(initial=0)), 1))
    dx, dy, dz = offset
    source_slices, target_slices = zip(*(_overlap(size, step) for size, step in zip(levels.shape, (dz, dy, dx))))
    first = levels[source_slices]
    second = levels[target_slices]
    paired = (first > 0) & (second > 0)
    codes = (first[paired].astype(np.int64) - 1) * ng + (second[paired].astype(np.int64) - 1)
    counts = np.bincount(codes, minlength=ng * ng).reshape(ng, ng).astype(np.float64)
    return counts + counts.T


def glcm_from_matrix(matrix: np.ndarray) -> Optional[Dict[str, float]]:
    """Features of one direction's matrix; None when it holds no pairs."""
    total = float(matrix.sum())
    if total == 0:
        return None
    p = matrix / total
    ng = p.shape[0]
    i, j = np.meshgrid(np.arange(1, ng + 1, dtype=float), np.arange(1, ng + 1, dtype=float), indexing="ij")
    diff = i - j
    marginal = p.sum(axis=1)
    levels = np.arange(1, ng + 1, dtype=float)
    mu = float(np.sum(levels * marginal))
    sigma_sq = float(np.sum((levels - mu) ** 2 * marginal))
    nonzero = p[p > 0]
    correlation = (float(np.sum(i * j * p)) - mu * mu) / sigma_sq if sigma_sq > 0 else float("nan")
    return {
        "AngularSecondMoment": float(np.sum(p ** 2)),
        "Contrast": float(np.sum(p * diff ** 2)),
        "Correlation": correlation,
        "Dissimilarity": float(np.sum(p * np.abs(diff))),
        "InverseDifferenceMoment": float(np.sum(p / (1.0 + diff ** 2))),
        "JointEntropy": float(-np.sum(nonzero * np.log2(nonzero))) + 0.0,
    }


def level_image(volume: Volume, mask: Mask, params: ExtractionParams) -> np.ndarray:
    """Discretized ROI on the full grid, 0 outside the mask."""
    inside = np.asarray(mask.voxels) != 0
    levels = np.zeros(inside.shape, dtype=np.int32)
    levels[inside] = discretize(roi_values(volume, mask), params)
    return levels


def glcm(volume: Volume, mask: Mask, params: Optional[ExtractionParams] = None) -> Dict[str, float]:
    """
    Mean over the 13 directions that have at least one pair. Correlation
    averages only directions where it is defined.
    """
    params = params or ExtractionParams()
    levels = level_image(volume, mask, params)
    ng = int(levels.max())
    per_direction = []
    for direction in GLCM_DIRECTIONS:
        offset = tuple(params.glcm_distance * d for d in direction)
        values = glcm_from_matrix(cooccurrence_matrix(levels, offset, ng))  # type: ignore[arg-type]
        if values is not None:
            per_direction.append(values)
    if not per_direction:
        logger.debug("No voxel pairs at distance %d; GLCM features missing", params.glcm_distance)
        return {name: float("nan") for name in GLCM_NAMES}
    result = {}
    for name in GLCM_NAMES:
        samples = [values[name] for values in per_direction if not math.isnan(values[name])]
        result[name] = float(np.mean(samples)) if samples else float("nan")
    return result


@dataclass
class ExtractionResult:
    table: FeatureTable
    failures: Dict[str, str] = field(default_factory=dict)


class FeatureExtractor:
    """Computes the configured families for one case at a time."""

    def __init__(self, params: Optional[ExtractionParams] = None) -> None:
        self.params = params or ExtractionParams()
        self.columns = feature_columns(self.params.feature_families)

    def vector(self, case: NrrdCase) -> FeatureVector:
        if case.mask is None:
            raise EmptyMask(f"No mask for patient {case.patient_id}")
        volume, mask = case.image, case.mask
        volume.require_same_geometry(mask)
        if self.params.resample_spacing is not None:
            volume, mask = reshape_pair(volume, mask, target_spacing=self.params.resample_spacing)
        vector = FeatureVector(case.patient_id)
        for family in FAMILIES:
            if family not in self.params.feature_families:
                continue
            if family == "firstorder":
                vector.update(family, first_order(volume, mask, self.params))
            elif family == "shape":
                vector.update(family, shape(mask))
            else:
                vector.update(family, glcm(volume, mask, self.params))
        return vector

    def row(self, case: NrrdCase) -> Tuple[Dict[str, float], Optional[str]]:
        try:
            values = self.vector(case).values
        except RadgateError as e:
            reason = f"{type(e).__name__}: {e}"
            logger.warning("Feature extraction failed for %s: %s", case.patient_id, reason)
            return {name: float("nan") for name in self.columns}, reason
        logger.info("Extracted %d features for %s", len(values), case.patient_id)
        return {name: values[name] for name in self.columns}, None


def extract(cases: Sequence[NrrdCase], params: Optional[ExtractionParams] = None, jobs: int = 1) -> ExtractionResult:
    """
    One row per patient in patient order. A failed patient keeps its row with
    every value missing, and the reason goes to `failures`.
    """
    extractor = FeatureExtractor(params)
    ordered = sorted(cases, key=lambda case: case.patient_id)
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(extractor.row, ordered))
    else:
        rows = [extractor.row(case) for case in ordered]

    failures = {case.patient_id: reason for case, (_, reason) in zip(ordered, rows) if reason is not None}
    frame = pd.DataFrame(
        [values for values, _ in rows],
        index=pd.Index([case.patient_id for case in ordered], name="patient"),
        columns=extractor.columns,
        dtype=float,
    )
    table = FeatureTable(frame, tuple(extractor.columns))
    logger.info("Feature table: %d patients x %d features, %d failed", len(frame), len(extractor.columns), len(failures))
    return ExtractionResult(table, failures)
