"""
DICOM dataset reader: walks a directory tree, parses every file and groups
image slices into per-patient series records.
"""
import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Tuple, Union

import numpy as np

from models.dicom_models import SliceMeta
from models.exceptions import EmptyDataset, MissingMagic, RadgateError
from models.imaging_models import DataFormat, DatasetLayout, SeriesRecord
from readers.base_reader import BaseDatasetReader, ReaderConfig
from readers.dicom_parser import extract_slice_meta, read_file

logger = logging.getLogger(__name__)

_Parsed = Tuple[Path, Union[SliceMeta, str, None]]


def _parse_one(path: Path) -> _Parsed:
    """(path, meta) on success, (path, reason) on failure, (path, None) if not DICOM."""
    try:
        return path, extract_slice_meta(read_file(path))
    except MissingMagic:
        return path, None
    except RadgateError as e:
        return path, f"{type(e).__name__}: {e}"


class DicomDatasetReader(BaseDatasetReader[SeriesRecord]):
    """
    Yields one SeriesRecord per (patient, image series). RTSTRUCT files are
    attached to every series of their patient. Files that fail to parse and
    series that violate the record invariants are listed in `excluded`.
    """

    def __init__(self, layout: DatasetLayout, config: Optional[ReaderConfig] = None) -> None:
        super().__init__(layout, config)
        self.files_seen = 0
        self.excluded_series: List[Tuple[str, str, str]] = []

    def get_format_name(self) -> str:
        return DataFormat.DICOM.value

    def sort_key(self, item: SeriesRecord) -> Tuple[str, ...]:
        return (item.patient_id, item.series_uid)

    def _candidate_files(self) -> List[Path]:
        root = self.layout.root
        files = [p for p in root.rglob("*") if p.is_file() and not p.name.startswith(".")]
        if not self.config.follow_symlinks:
            files = [p for p in files if not p.is_symlink()]
        return sorted(files)

    def _fallback_patient(self, path: Path) -> str:
        relative = path.relative_to(self.layout.root)
        return relative.parts[0] if len(relative.parts) > 1 else path.stem

    def iter_items(self) -> Iterator[SeriesRecord]:
        self.excluded_series = []
        self.files_seen = 0
        files = self._candidate_files()
        if self.config.jobs > 1:
            with ThreadPoolExecutor(max_workers=self.config.jobs) as pool:
                parsed = list(pool.map(_parse_one, files))
        else:
            parsed = [_parse_one(path) for path in files]

        images: Dict[Tuple[str, str], List[Tuple[SliceMeta, Path]]] = defaultdict(list)
        structures: Dict[str, List[Tuple[SliceMeta, Path]]] = defaultdict(list)
        for path, outcome in parsed:
            if outcome is None:
                logger.debug("Skipping non-DICOM file %s", path)
                continue
            self.files_seen += 1
            if isinstance(outcome, str):
                logger.warning("Excluding %s: %s", path, outcome)
                self.exclude(str(path), outcome)
                continue
            patient = outcome.patient_id or self._fallback_patient(path)
            if outcome.modality == "RTSTRUCT":
                structures[patient].append((outcome, path))
            elif outcome.is_image:
                images[(patient, outcome.series_uid)].append((outcome, path))
            else:
                logger.info("Ignoring %s: %s object without pixel data", path, outcome.modality)

        if self.files_seen == 0:
            raise EmptyDataset(f"No DICOM files found under {self.layout.root}")

        patients_with_images = {patient for patient, _ in images}
        for patient in sorted(set(structures) - patients_with_images):
            logger.warning("Patient %s has an RTSTRUCT but no image series", patient)

        for (patient, series_uid), members in sorted(images.items()):
            record = self._build_record(patient, series_uid, members, structures.get(patient, []))
            if record is not None:
                yield record

    def _build_record(
        self,
        patient: str,
        series_uid: str,
        members: List[Tuple[SliceMeta, Path]],
        structures: List[Tuple[SliceMeta, Path]],
    ) -> Optional[SeriesRecord]:
        try:
            normal = members[0][0].normal
            members = sorted(
                members,
                key=lambda item: (float(np.dot(normal, np.asarray(item[0].image_position))), item[0].sop_uid),
            )
            structures = sorted(structures, key=lambda item: str(item[1]))
            return SeriesRecord(
                patient_id=patient,
                series_uid=series_uid,
                modality=members[0][0].modality,
                slices=[meta for meta, _ in members],
                slice_paths=[path for _, path in members],
                rtstruct_paths=[path for _, path in structures],
                rtstruct_slices=[meta for meta, _ in structures],
            )
        except RadgateError as e:
            reason = f"{type(e).__name__}: {e}"
            logger.warning("Excluding series %s of patient %s: %s", series_uid, patient, reason)
            self.exclude(f"{patient}/{series_uid}", reason)
            self.excluded_series.append((patient, series_uid, reason))
            return None


def scan_dataset(layout: DatasetLayout, config: Optional[ReaderConfig] = None) -> List[SeriesRecord]:
    """One record per (patient, image series), sorted by patient id."""
    return DicomDatasetReader(layout, config).read()
