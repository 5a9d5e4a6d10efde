"""
Feature-table and analysis result models.
"""
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
import pandas as pd
from dataclasses_json import dataclass_json

from models.exceptions import DuplicatePatient, NoFeatureColumns, RadgateValidationError

FEATURE_NAME_PATTERN = re.compile(r"^original_(firstorder|shape|glcm)_[A-Za-z0-9]+$")

# Empty outcome cells are kept as this label rather than NaN
MISSING_LABEL = ""


@dataclass(frozen=True)
class FeatureTable:
    """
    Patients x features matrix. `frame` is indexed by patient id and holds the
    feature columns plus, when set, the outcome column as strings.
    """
    frame: pd.DataFrame
    feature_names: Tuple[str, ...]
    outcome_column: Optional[str] = None
    source: Optional[Path] = None

    def __post_init__(self) -> None:
        if not self.feature_names:
            raise NoFeatureColumns("Feature table has no feature columns")
        duplicated = self.frame.index[self.frame.index.duplicated()].unique().tolist()
        if duplicated:
            raise DuplicatePatient(f"Duplicate patient ids: {', '.join(map(str, duplicated))}")
        if self.outcome_column is not None and self.outcome_column in self.feature_names:
            raise RadgateValidationError(f"Outcome column '{self.outcome_column}' is also a feature")
        missing = [name for name in self.feature_names if name not in self.frame.columns]
        if missing:
            raise NoFeatureColumns(f"Columns not in frame: {missing}")

    @property
    def patients(self) -> List[str]:
        return [str(p) for p in self.frame.index]

    @property
    def features(self) -> pd.DataFrame:
        return self.frame.loc[:, list(self.feature_names)].astype(float)

    @property
    def outcome(self) -> pd.Series:
        if self.outcome_column is None:
            raise RadgateValidationError("Feature table has no outcome column")
        return self.frame[self.outcome_column].fillna(MISSING_LABEL).astype(str)

    @property
    def labels(self) -> List[str]:
        """Sorted non-missing outcome labels."""
        return sorted(label for label in self.outcome.unique() if label != MISSING_LABEL)

    @property
    def is_binary(self) -> bool:
        return self.outcome_column is not None and len(self.labels) == 2

    def column(self, name: str) -> np.ndarray:
        return self.frame[name].to_numpy(dtype=float)

    def replace(self, frame: pd.DataFrame, feature_names: Optional[List[str]] = None) -> "FeatureTable":
        names = tuple(feature_names) if feature_names is not None else self.feature_names
        return FeatureTable(frame, names, self.outcome_column, self.source)


@dataclass(frozen=True)
class ClassSummary:
    """Outcome labels (sorted, missing label first), counts and balance fractions."""
    labels: Tuple[str, ...]
    counts: Tuple[int, ...]
    balance: Tuple[float, ...]

    def __post_init__(self) -> None:
        if list(self.labels) != sorted(self.labels):
            raise RadgateValidationError("Class labels must be sorted")
        if self.balance and not math.isclose(sum(self.balance), 1.0, abs_tol=1e-9):
            raise RadgateValidationError(f"Class balance does not sum to 1: {self.balance}")

    @classmethod
    def from_outcome(cls, outcome: pd.Series) -> "ClassSummary":
        counts = outcome.value_counts()
        labels = tuple(sorted(str(label) for label in counts.index))
        values = tuple(int(counts[label]) for label in labels)
        total = sum(values)
        balance = tuple(count / total for count in values) if total else ()
        return cls(labels, values, balance)

    def share(self, label: str) -> float:
        return self.balance[self.labels.index(label)]

    def __str__(self) -> str:
        parts = [f"'{label}': {count} ({share:.2f})" for label, count, share in zip(self.labels, self.counts, self.balance)]
        return "classes " + ", ".join(parts)


@dataclass(frozen=True)
class DropReport:
    """Patients or features removed by handle_nan."""
    axis: str
    dropped: Tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return bool(self.dropped)


@dataclass_json
@dataclass
class StatRow:
    """Basic statistics for one feature; optional fields stay None when not computed."""
    feature: str
    n_missing: int
    mean: float
    std: float
    min: float
    max: float
    mw_p_corrected: Optional[float] = None
    roc_auc: Optional[float] = None
    volume_spearman: Optional[float] = None


@dataclass_json
@dataclass
class MannWhitneyResult:
    feature: str
    u_statistic: float
    p_value: float
    p_corrected: float
    method: str
    highlight: bool


@dataclass(frozen=True)
class CurveSeries:
    """
    One plotted series. For roc/pr `x`/`y` are the curve, for histogram the
    bin edges (len(y) + 1) and counts, for bar the category index and heights,
    for heatmap a flattened square matrix in `y`. Bars carry one highlight
    flag per bar, curves at most one for the whole curve.
    """
    kind: str
    name: str
    x: Tuple[float, ...]
    y: Tuple[float, ...]
    summary: Optional[float] = None
    highlight: Tuple[bool, ...] = ()
    labels: Tuple[str, ...] = ()
    group: str = ""

    KINDS = ("roc", "pr", "histogram", "bar", "heatmap")
    CURVE_KINDS = ("roc", "pr")

    def __post_init__(self) -> None:
        if self.kind not in self.KINDS:
            raise RadgateValidationError(f"Unknown series kind '{self.kind}'")
        if self.kind == "roc":
            xs = np.asarray(self.x, dtype=float)
            ys = np.asarray(self.y, dtype=float)
            if xs.size and (xs.min() < 0 or xs.max() > 1 or ys.min() < 0 or ys.max() > 1):
                raise RadgateValidationError("ROC coordinates must lie in [0, 1]")
            if np.any(np.diff(xs) < 0):
                raise RadgateValidationError("ROC false-positive rates must be non-decreasing")
        if self.kind in self.CURVE_KINDS:
            if len(self.highlight) > 1:
                raise RadgateValidationError("A curve carries at most one highlight flag")
        elif self.highlight and len(self.highlight) != len(self.y):
            raise RadgateValidationError("highlight flags must align with y")

    def to_frame(self) -> pd.DataFrame:
        """Underlying data as a table, one row per point."""
        if self.kind == "histogram":
            edges = list(self.x)
            return pd.DataFrame({"group": self.group, "series": self.name, "bin_start": edges[:-1], "bin_end": edges[1:], "count": list(self.y)})
        data: Dict[str, Any] = {"group": self.group, "series": self.name, "x": list(self.x), "y": list(self.y)}
        if self.labels:
            data["label"] = list(self.labels)
        if self.highlight:
            flags = self.highlight * len(self.x) if self.kind in self.CURVE_KINDS else self.highlight
            data["highlight"] = [int(flag) for flag in flags]
        return pd.DataFrame(data)


@dataclass
class FeatureVector:
    """Named feature values of one patient; NaN marks a missing value."""
    patient_id: str
    values: Dict[str, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for name in self.values:
            if not FEATURE_NAME_PATTERN.match(name):
                raise RadgateValidationError(f"Feature name '{name}' does not follow original_<family>_<Name>")

    def update(self, family: str, values: Dict[str, float]) -> None:
        for name, value in values.items():
            key = f"original_{family}_{name}"
            if key in self.values:
                raise RadgateValidationError(f"Feature '{key}' computed twice")
            self.values[key] = float(value)
