"""
Reader for converted NRRD trees laid out as <root>/<patient>/image.nrrd (+ mask.nrrd).
"""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional

from models.exceptions import EmptyDataset, RadgateError
from models.imaging_models import DataFormat, Mask, Volume
from readers.base_reader import BaseDatasetReader
from storage.nrrd_io import read_mask, read_nrrd

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class NrrdCase:
    patient_id: str
    image: Volume
    mask: Optional[Mask] = None
    image_path: Optional[Path] = None
    mask_path: Optional[Path] = None


def _first_match(directory: Path, patterns: List[str]) -> Optional[Path]:
    for pattern in patterns:
        matches = sorted(p for p in directory.glob(pattern) if p.is_file())
        if matches:
            return matches[0]
    return None


class NrrdDatasetReader(BaseDatasetReader[NrrdCase]):
    """
    One case per patient directory holding an image matching the layout's
    image patterns. The mask is read when the layout says masks are
    available and a file matches the mask patterns.
    """

    def get_format_name(self) -> str:
        return DataFormat.NRRD.value

    def patient_directories(self) -> List[Path]:
        return sorted(p for p in self.layout.root.iterdir() if p.is_dir() and not p.name.startswith("."))

    def iter_items(self) -> Iterator[NrrdCase]:
        found = False
        for directory in self.patient_directories():
            image_path = _first_match(directory, self.layout.image_name_patterns)
            if image_path is None:
                logger.debug("No image in %s", directory)
                continue
            found = True
            mask_path = _first_match(directory, self.layout.mask_name_patterns) if self.layout.mask_available else None
            try:
                image = read_nrrd(image_path)
                mask = read_mask(mask_path) if mask_path is not None else None
            except RadgateError as e:
                if self.config.strict:
                    raise
                logger.warning("Excluding patient %s: %s", directory.name, e)
                self.exclude(directory.name, f"{type(e).__name__}: {e}")
                continue
            if self.layout.mask_available and mask is None:
                logger.warning("Patient %s has no mask matching %s", directory.name, self.layout.mask_name_patterns)
            yield NrrdCase(directory.name, image, mask, image_path, mask_path)
        if not found:
            raise EmptyDataset(f"No NRRD images under {self.layout.root}")
