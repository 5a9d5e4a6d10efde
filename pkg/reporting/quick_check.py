"""
Unrolls a volume into per-slice 8-bit pixmaps for a quick visual check,
with the ROI outline painted red.
"""
import io
import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
from PIL import Image
from scipy import ndimage

from models.imaging_models import Mask, Volume
from storage.atomic_writer import atomic_write

logger = logging.getLogger(__name__)

MID_GRAY = 128
RED = (255, 0, 0)

# in-plane 4-neighbourhood; slices are eroded independently
_IN_PLANE_CROSS = np.zeros((3, 3, 3), dtype=bool)
_IN_PLANE_CROSS[1] = ndimage.generate_binary_structure(2, 1)


def window_bounds(volume: Volume, window: Optional[Tuple[float, float]] = None) -> Tuple[float, float]:
    """(low, high) from (level, width), else the volume's own min and max."""
    if window is None:
        voxels = np.asarray(volume.voxels, dtype=np.float64)
        return float(voxels.min()), float(voxels.max())
    level, width = window
    return level - width / 2.0, level + width / 2.0


def to_gray(values: np.ndarray, low: float, high: float) -> np.ndarray:
    """Linear map of [low, high] onto 0..255; a degenerate window is mid-gray."""
    values = np.asarray(values, dtype=np.float64)
    if not high > low:
        return np.full(values.shape, MID_GRAY, dtype=np.uint8)
    scaled = np.rint((values - low) / (high - low) * 255.0)
    return np.clip(scaled, 0, 255).astype(np.uint8)


def mask_boundary(mask: Mask) -> np.ndarray:
    """Mask voxels with at least one in-plane 4-neighbour outside the mask."""
    inside = np.asarray(mask.voxels) != 0
    interior = ndimage.binary_erosion(inside, structure=_IN_PLANE_CROSS, border_value=0)
    return inside & ~interior


def _encode(pixels: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    Image.fromarray(pixels).save(buffer, format="PPM")
    return buffer.getvalue()


def unroll(
    volume: Volume,
    out_dir: Union[str, Path],
    patient_id: str,
    mask: Optional[Mask] = None,
    window: Optional[Tuple[float, float]] = None,
) -> List[Path]:
    """
    Write one image per axial slice as <out_dir>/<patient>/<patient>_sliceNNN:
    binary PGM without a mask, binary PPM with the outline in red.
    """
    low, high = window_bounds(volume, window)
    gray = to_gray(volume.voxels, low, high)
    boundary = None
    if mask is not None:
        volume.require_same_geometry(mask)
        boundary = mask_boundary(mask)
    target = Path(out_dir) / patient_id
    written = []
    for k in range(gray.shape[0]):
        if boundary is None:
            pixels = gray[k]
            suffix = "pgm"
        else:
            pixels = np.repeat(gray[k][:, :, np.newaxis], 3, axis=2)
            pixels[boundary[k]] = RED
            suffix = "ppm"
        written.append(atomic_write(target / f"{patient_id}_slice{k:03d}.{suffix}", _encode(np.ascontiguousarray(pixels))))
    logger.info("Unrolled %s: %d slices, window [%g, %g]", patient_id, len(written), low, high)
    return written
