"""
Rule-driven quality gate over series records.
Demonstrates: Strategy pattern for checks, builder-style gate assembly.
"""
import logging
from abc import ABC, abstractmethod
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Sequence, Tuple

import numpy as np

from models.config_models import CHECK_NAMES, QualitySpec
from models.exceptions import RadgateError
from models.imaging_models import CheckFlag, QualityReport, QualityRow, SeriesRecord

logger = logging.getLogger(__name__)

ORIENTATION_TOLERANCE = 1e-3
THICKNESS_TOLERANCE = 1e-3
MISSING_GAP_FACTOR = 1.5
OVERLAP_GAP_FACTOR = 0.5


class QualityCheck(ABC):
    """
    Abstract base class for quality checks.
    Demonstrates: Strategy pattern for per-series rules.
    """
    name: str = ""

    @abstractmethod
    def passes(self, record: SeriesRecord) -> bool:
        """True when the series satisfies the rule."""

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}()"


class ModalityCheck(QualityCheck):
    name = "modality"

    def __init__(self, target: str):
        self.target = target

    def passes(self, record: SeriesRecord) -> bool:
        return all(meta.modality == self.target for meta in record.slices)


class ProjectionCheck(QualityCheck):
    """Axial: row cosines (1,0,0) and column cosines (0,1,0)."""
    name = "projection"
    AXIAL = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])

    def passes(self, record: SeriesRecord) -> bool:
        for meta in record.slices:
            if meta.orientation is None:
                return False
            if np.max(np.abs(np.asarray(meta.orientation) - self.AXIAL)) > ORIENTATION_TOLERANCE:
                return False
        return True


class SliceConsistencyCheck(QualityCheck):
    """Fails on a gap above 1.5x or below 0.5x the median gap."""
    name = "slice_consistency"

    def passes(self, record: SeriesRecord) -> bool:
        gaps = np.diff(np.sort(record.positions))
        if gaps.size == 0:
            return True
        median = float(np.median(gaps))
        if median <= 0:
            return False
        return bool(np.all(gaps <= MISSING_GAP_FACTOR * median) and np.all(gaps >= OVERLAP_GAP_FACTOR * median))


class SliceCountCheck(QualityCheck):
    name = "slice_count"

    def __init__(self, minimum: int):
        self.minimum = minimum

    def passes(self, record: SeriesRecord) -> bool:
        return len(record.slices) >= self.minimum


class ThicknessCheck(QualityCheck):
    name = "thickness"

    def __init__(self, low: float, high: float):
        self.low = low
        self.high = high

    def passes(self, record: SeriesRecord) -> bool:
        values = [meta.slice_thickness for meta in record.slices]
        if any(v is None for v in values):
            return False
        thickness = np.asarray(values, dtype=float)
        if thickness.max() - thickness.min() > THICKNESS_TOLERANCE:
            return False
        return bool(np.all((thickness >= self.low) & (thickness <= self.high)))


class SpacingCheck(QualityCheck):
    name = "spacing"

    def __init__(self, low: float, high: float):
        self.low = low
        self.high = high

    def passes(self, record: SeriesRecord) -> bool:
        for meta in record.slices:
            if meta.pixel_spacing is None:
                return False
            if not all(self.low <= s <= self.high for s in meta.pixel_spacing):
                return False
        return True


class KernelCheck(QualityCheck):
    name = "kernel"

    def __init__(self, whitelist: Iterable[str]):
        self.whitelist = {kernel.strip().upper() for kernel in whitelist}

    def passes(self, record: SeriesRecord) -> bool:
        return all(
            meta.convolution_kernel is not None and meta.convolution_kernel.strip().upper() in self.whitelist
            for meta in record.slices
        )


class ResolutionCheck(QualityCheck):
    name = "resolution"

    def __init__(self, rows: int, cols: int):
        self.shape = (rows, cols)

    def passes(self, record: SeriesRecord) -> bool:
        return all((meta.rows, meta.cols) == self.shape for meta in record.slices)


class SlopeInterceptCheck(QualityCheck):
    name = "slope_intercept"

    def passes(self, record: SeriesRecord) -> bool:
        return all(meta.rescale_slope is not None and meta.rescale_intercept is not None for meta in record.slices)


def checks_from_spec(spec: QualitySpec) -> List[QualityCheck]:
    """Instantiate the enabled checks in report column order."""
    factories = {
        "modality": lambda: ModalityCheck(spec.target_modality or ""),
        "projection": ProjectionCheck,
        "slice_consistency": SliceConsistencyCheck,
        "slice_count": lambda: SliceCountCheck(spec.min_slice_count or 0),
        "thickness": lambda: ThicknessCheck(*spec.thickness_range),  # type: ignore[misc]
        "spacing": lambda: SpacingCheck(*spec.spacing_range),  # type: ignore[misc]
        "kernel": lambda: KernelCheck(spec.kernel_whitelist or []),
        "resolution": lambda: ResolutionCheck(*spec.required_in_plane),  # type: ignore[misc]
        "slope_intercept": SlopeInterceptCheck,
    }
    return [factories[name]() for name in spec.enabled_checks()]


def report_ids(records: Sequence[Tuple[str, str]]) -> List[str]:
    """Patient ids for report rows; patients with several series get _1, _2, ..."""
    totals = Counter(patient for patient, _ in records)
    seen: Counter = Counter()
    ids = []
    for patient, _ in records:
        if totals[patient] > 1:
            seen[patient] += 1
            ids.append(f"{patient}_{seen[patient]}")
        else:
            ids.append(patient)
    return ids


class QualityGate:
    """
    Runs a set of checks over series records.
    Demonstrates: Business logic, builder pattern.
    """

    def __init__(self, jobs: int = 1):
        self.checks: List[QualityCheck] = []
        self.jobs = jobs

    @classmethod
    def from_spec(cls, spec: QualitySpec, jobs: int = 1) -> "QualityGate":
        gate = cls(jobs)
        for check in checks_from_spec(spec):
            gate.add_check(check)
        return gate

    def add_check(self, check: QualityCheck) -> "QualityGate":
        """Add a check to the gate (builder pattern)."""
        self.checks.append(check)
        return self

    def _flags(self, record: SeriesRecord) -> Tuple[Dict[str, CheckFlag], str]:
        enabled = {check.name: check for check in self.checks}
        flags: Dict[str, CheckFlag] = {}
        try:
            for name in CHECK_NAMES:
                check = enabled.get(name)
                if check is None:
                    flags[name] = CheckFlag.SKIPPED
                else:
                    flags[name] = CheckFlag.PASSED if check.passes(record) else CheckFlag.FAILED
        except RadgateError as e:
            return self._unreadable_flags(), f"{type(e).__name__}: {e}"
        return flags, ""

    def _unreadable_flags(self) -> Dict[str, CheckFlag]:
        enabled = {check.name for check in self.checks}
        return {name: (CheckFlag.FAILED if name in enabled else CheckFlag.SKIPPED) for name in CHECK_NAMES}

    def run(
        self,
        records: Sequence[SeriesRecord],
        unreadable: Sequence[Tuple[str, str, str]] = (),
    ) -> QualityReport:
        """
        One row per series, sorted by (patient, series). `unreadable` holds
        (patient, series_uid, reason) for series excluded while scanning.
        """
        ordered = sorted(records, key=lambda r: (r.patient_id, r.series_uid))
        if self.jobs > 1:
            with ThreadPoolExecutor(max_workers=self.jobs) as pool:
                evaluated = list(pool.map(self._flags, ordered))
        else:
            evaluated = [self._flags(record) for record in ordered]

        entries: List[Tuple[str, str, Dict[str, CheckFlag], str]] = [
            (record.patient_id, record.series_uid, flags, note)
            for record, (flags, note) in zip(ordered, evaluated)
        ]
        entries.extend((patient, uid, self._unreadable_flags(), reason) for patient, uid, reason in unreadable)
        entries.sort(key=lambda entry: (entry[0], entry[1]))

        ids = report_ids([(patient, uid) for patient, uid, _, _ in entries])
        report = QualityReport(check_names=list(CHECK_NAMES))
        for row_id, (_, uid, flags, note) in zip(ids, entries):
            row = QualityRow(row_id, uid, flags, note)
            if row.overall:
                logger.info("%s passed all enabled checks", row_id)
            else:
                logger.info("%s failed: %s%s", row_id, ", ".join(row.failed_checks()), f" ({note})" if note else "")
            report.rows.append(row)
        return report


def quality_check(
    records: Sequence[SeriesRecord],
    spec: QualitySpec,
    unreadable: Sequence[Tuple[str, str, str]] = (),
    jobs: int = 1,
) -> QualityReport:
    """Evaluate every enabled check of `spec` on every series."""
    return QualityGate.from_spec(spec, jobs).run(records, unreadable)


def summarize(report: QualityReport) -> Dict[str, int]:
    """Failure count per check, for the console summary."""
    counts: Dict[str, int] = {name: 0 for name in report.check_names}
    for row in report.rows:
        for name in row.failed_checks():
            counts[name] += 1
    return counts
