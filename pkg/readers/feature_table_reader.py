"""
Feature-table loader: feature CSV (+ optional clinical CSV) -> FeatureTable.
"""
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import pandas as pd

from models.exceptions import DuplicatePatient, IoFailure, MissingOutcomeColumn, NoFeatureColumns, RadgateValidationError
from models.feature_models import MISSING_LABEL, ClassSummary, FeatureTable

logger = logging.getLogger(__name__)


@dataclass
class TableSelection:
    """Column and row filters applied in order: drop patients, then include/exclude features."""
    include: Optional[List[str]] = None
    exclude: List[str] = field(default_factory=list)
    drop_patients: List[str] = field(default_factory=list)


def _read_csv(path: Path, text_columns: Sequence[str]) -> pd.DataFrame:
    try:
        header = pd.read_csv(path, nrows=0)
        dtypes = {name: str for name in header.columns if name in text_columns or name == header.columns[0]}
        return pd.read_csv(path, dtype=dtypes)
    except OSError as exc:
        raise IoFailure(f"Cannot read {path}: {exc}") from exc
    except (pd.errors.EmptyDataError, pd.errors.ParserError) as exc:
        raise RadgateValidationError(f"{path} is not a readable CSV table: {exc}") from exc


def _index_by_patient(frame: pd.DataFrame, patient_column: Optional[str], source: Path) -> pd.DataFrame:
    column = patient_column or str(frame.columns[0])
    if column not in frame.columns:
        raise RadgateValidationError(f"{source}: patient column '{column}' not found")
    ids = frame[column].astype(str)
    duplicated = sorted(ids[ids.duplicated()].unique())
    if duplicated:
        raise DuplicatePatient(f"{source}: duplicate patient ids {', '.join(duplicated)}")
    frame = frame.drop(columns=[column])
    frame.index = pd.Index(ids, name="patient")
    return frame


class FeatureTableReader:
    """Reads a feature table, merges clinical data and applies the selection."""

    def __init__(
        self,
        path: Union[str, Path],
        outcome_column: str,
        selection: Optional[TableSelection] = None,
        patient_column: Optional[str] = None,
        clinical_path: Optional[Union[str, Path]] = None,
    ) -> None:
        self.path = Path(path)
        self.outcome_column = outcome_column
        self.selection = selection or TableSelection()
        self.patient_column = patient_column
        self.clinical_path = Path(clinical_path) if clinical_path is not None else None

    def read(self) -> Tuple[FeatureTable, ClassSummary]:
        frame = _index_by_patient(_read_csv(self.path, [self.outcome_column]), self.patient_column, self.path)
        if self.clinical_path is not None:
            clinical = _index_by_patient(
                _read_csv(self.clinical_path, [self.outcome_column]), self.patient_column, self.clinical_path
            )
            # clinical data contributes the outcome only, never features
            if self.outcome_column in clinical.columns and self.outcome_column not in frame.columns:
                frame = frame.join(clinical.loc[:, [self.outcome_column]], how="left")
                logger.info("Merged outcome '%s' from %s", self.outcome_column, self.clinical_path)

        if self.outcome_column not in frame.columns:
            raise MissingOutcomeColumn(f"Outcome column '{self.outcome_column}' not found in {self.path}")
        frame[self.outcome_column] = frame[self.outcome_column].fillna(MISSING_LABEL).astype(str).str.strip()

        dropped = [pid for pid in self.selection.drop_patients if pid in frame.index]
        unknown = sorted(set(self.selection.drop_patients) - set(dropped))
        if unknown:
            logger.warning("Patients to drop not in table: %s", ", ".join(unknown))
        frame = frame.drop(index=dropped)

        numeric = [
            str(c) for c in frame.columns
            if c != self.outcome_column and pd.api.types.is_numeric_dtype(frame[c])
        ]
        if self.selection.include is not None:
            missing = [name for name in self.selection.include if name not in numeric]
            if missing:
                logger.warning("Included features not found or not numeric: %s", ", ".join(missing))
            features = [name for name in numeric if name in set(self.selection.include)]
        else:
            features = numeric
        features = [name for name in features if name not in set(self.selection.exclude)]
        if not features:
            raise NoFeatureColumns(f"No feature columns left in {self.path} after filtering")

        table = FeatureTable(
            frame.loc[:, features + [self.outcome_column]],
            tuple(features),
            self.outcome_column,
            self.path,
        )
        summary = ClassSummary.from_outcome(table.outcome)
        logger.info("Loaded %d patients x %d features; %s", len(frame), len(features), summary)
        return table, summary


def load(
    path: Union[str, Path],
    outcome_column: str,
    include: Optional[List[str]] = None,
    exclude: Optional[List[str]] = None,
    drop_patients: Optional[List[str]] = None,
    patient_column: Optional[str] = None,
    clinical_path: Optional[Union[str, Path]] = None,
) -> Tuple[FeatureTable, ClassSummary]:
    selection = TableSelection(include=include, exclude=list(exclude or []), drop_patients=list(drop_patients or []))
    return FeatureTableReader(path, outcome_column, selection, patient_column, clinical_path).read()
