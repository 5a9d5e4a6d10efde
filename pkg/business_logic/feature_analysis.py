"""
Exploratory analysis of a feature table against an outcome: distributions,
mutual correlation, Mann-Whitney tests, univariate ROC, volume analysis and
basic statistics, plus the AnalysisBox that writes the report set.
"""
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from business_logic import rank_statistics
from models.exceptions import (
    EverythingDropped,
    NotBinary,
    RadgateValidationError,
    TooFewSamples,
    UnknownClass,
    UnknownVolumeFeature,
)
from models.feature_models import (
    MISSING_LABEL,
    ClassSummary,
    CurveSeries,
    DropReport,
    FeatureTable,
    MannWhitneyResult,
    StatRow,
)
from readers.feature_table_reader import load
from reporting.svg_plots import SvgPlot, emit_svg
from storage.table_writer import write_records, write_table

logger = logging.getLogger(__name__)

HISTOGRAM_BINS = 20
DEFAULT_ALPHA = 0.05
DEFAULT_AUC_THRESHOLD = 0.70
DEFAULT_CORR_THRESHOLD = 0.75


def handle_nan(table: FeatureTable, axis: str = "patients") -> Tuple[FeatureTable, DropReport]:
    """
    patients: drop rows with a missing feature or a missing outcome.
    features: drop columns with a missing value.
    """
    features = table.features
    if axis == "patients":
        holes = features.isna().any(axis=1)
        if table.outcome_column is not None:
            holes |= table.outcome == MISSING_LABEL
        dropped = [str(pid) for pid in table.frame.index[holes.to_numpy()]]
        if len(dropped) == len(table.frame):
            raise EverythingDropped("Every patient has a missing value")
        result = table.replace(table.frame.loc[~holes.to_numpy()])
    elif axis == "features":
        dropped = [name for name in table.feature_names if features[name].isna().any()]
        kept = [name for name in table.feature_names if name not in set(dropped)]
        if not kept:
            raise EverythingDropped("Every feature has a missing value")
        columns = kept + ([table.outcome_column] if table.outcome_column is not None else [])
        result = table.replace(table.frame.loc[:, columns], kept)
    else:
        raise RadgateValidationError(f"Unknown axis '{axis}', expected 'patients' or 'features'")
    if dropped:
        logger.info("handle_nan(%s) dropped %d: %s", axis, len(dropped), ", ".join(dropped))
    else:
        logger.info("handle_nan(%s): no changes", axis)
    return result, DropReport(axis, tuple(dropped))


def distributions(table: FeatureTable, feature: str, classes: Optional[Sequence[str]] = None) -> List[CurveSeries]:
    """
    One histogram per class over 20 equal-width bins spanning the pooled
    range of the selected classes. A constant feature gets a single bin.
    """
    if feature not in table.feature_names:
        raise RadgateValidationError(f"Unknown feature '{feature}'")
    labels = list(classes) if classes is not None else table.labels
    unknown = [label for label in labels if label not in table.labels]
    if unknown:
        raise UnknownClass(f"Unknown class(es): {', '.join(unknown)}; known: {', '.join(table.labels)}")
    outcome = table.outcome.to_numpy()
    values = table.column(feature)
    selected = np.isin(outcome, labels) & np.isfinite(values)
    pooled = values[selected]
    if pooled.size == 0:
        edges = np.array([0.0, 1.0])
    elif pooled.min() == pooled.max():
        logger.info("Feature %s is constant; single histogram bin", feature)
        edges = np.array([pooled.min() - 0.5, pooled.min() + 0.5])
    else:
        edges = np.linspace(pooled.min(), pooled.max(), HISTOGRAM_BINS + 1)
    series = []
    for label in sorted(labels):
        counts, _ = np.histogram(values[selected & (outcome == label)], bins=edges)
        series.append(
            CurveSeries(
                "histogram",
                label,
                tuple(float(e) for e in edges),
                tuple(float(c) for c in counts),
                group=feature,
            )
        )
    return series


def spearman_matrix(table: FeatureTable) -> pd.DataFrame:
    """Absolute Spearman correlation for every feature pair; missing when undefined."""
    names = list(table.feature_names)
    columns = {name: table.column(name) for name in names}
    matrix = np.full((len(names), len(names)), np.nan)
    for i, first in enumerate(names):
        for j in range(i, len(names)):
            rho = rank_statistics.spearman(columns[first], columns[names[j]])
            if i == j and not math.isnan(rho):
                rho = 1.0
            matrix[i, j] = matrix[j, i] = abs(rho)
    return pd.DataFrame(matrix, index=names, columns=names)


def _binary_groups(table: FeatureTable) -> Tuple[str, str, np.ndarray]:
    """(negative label, positive label, positive flags) of the labelled rows; the larger label is positive."""
    if not table.is_binary:
        raise NotBinary(f"Outcome has {len(table.labels)} classes; the test needs exactly 2")
    negative, positive = table.labels
    return negative, positive, table.outcome.to_numpy() == positive


def _labelled(table: FeatureTable) -> np.ndarray:
    return table.outcome.to_numpy() != MISSING_LABEL


def mann_whitney(table: FeatureTable, alpha: float = DEFAULT_ALPHA) -> List[MannWhitneyResult]:
    """Two-sided test per feature, positive class against negative, Bonferroni-corrected."""
    negative, positive, is_positive = _binary_groups(table)
    labelled = _labelled(table)
    counts = {label: int(np.sum(table.outcome.to_numpy() == label)) for label in (negative, positive)}
    small = [label for label, count in counts.items() if count < 2]
    if small:
        raise TooFewSamples(f"Class(es) {', '.join(small)} have fewer than 2 patients")

    raw = []
    for name in table.feature_names:
        values = table.column(name)
        present = np.isfinite(values) & labelled
        first = values[present & is_positive]
        second = values[present & ~is_positive]
        if first.size == 0 or second.size == 0:
            raw.append(rank_statistics.UTest(float("nan"), float("nan"), "none"))
        else:
            raw.append(rank_statistics.mann_whitney_u(first, second))
    corrected = rank_statistics.bonferroni([test.p_value for test in raw])
    results = [
        MannWhitneyResult(name, test.u_statistic, test.p_value, p, test.method, bool(p < alpha))
        for name, test, p in zip(table.feature_names, raw, corrected)
    ]
    logger.info("Mann-Whitney: %d of %d features below alpha %g", sum(r.highlight for r in results), len(results), alpha)
    return results


def univariate_roc(table: FeatureTable, auc_threshold: float = DEFAULT_AUC_THRESHOLD) -> List[CurveSeries]:
    """
    ROC per feature with the raw values as scores; `summary` holds the AUC and
    the curve is highlighted when it reaches `auc_threshold`. No flipping below 0.5.
    """
    _, _, is_positive = _binary_groups(table)
    labelled = _labelled(table)
    curves = []
    for name in table.feature_names:
        values = table.column(name)
        present = np.isfinite(values) & labelled
        try:
            fpr, tpr = rank_statistics.roc_curve(values[present], is_positive[present])
        except ValueError:
            logger.warning("ROC undefined for %s: one class has no values", name)
            continue
        auc = float(np.sum(np.diff(fpr) * (tpr[1:] + tpr[:-1]) / 2.0))
        curves.append(
            CurveSeries("roc", name, tuple(fpr.tolist()), tuple(tpr.tolist()), summary=auc, highlight=(auc >= auc_threshold,))
        )
    return curves


@dataclass
class VolumeAnalysis:
    correlations: CurveSeries
    precision_recall: Optional[CurveSeries] = None


def volume_analysis(
    table: FeatureTable,
    volume_feature: str,
    corr_threshold: float = DEFAULT_CORR_THRESHOLD,
) -> VolumeAnalysis:
    """
    |Spearman| of every feature against the volume feature, and for binary
    outcomes the precision-recall curve using volume as the score.
    """
    if volume_feature not in table.feature_names:
        raise UnknownVolumeFeature(f"Volume feature '{volume_feature}' not in table")
    volume = table.column(volume_feature)
    names = list(table.feature_names)
    rhos = [abs(rank_statistics.spearman(table.column(name), volume)) for name in names]
    bars = CurveSeries(
        "bar",
        f"|rho| vs {volume_feature}",
        tuple(float(i) for i in range(len(names))),
        tuple(rhos),
        highlight=tuple(bool(rho > corr_threshold) for rho in rhos),
        labels=tuple(names),
    )
    result = VolumeAnalysis(bars)
    if not table.is_binary:
        logger.info("Outcome is not binary; skipping the volume precision-recall curve")
        return result
    _, positive, is_positive = _binary_groups(table)
    present = np.isfinite(volume) & _labelled(table)
    recall, precision = rank_statistics.precision_recall(volume[present], is_positive[present])
    ap = float(np.sum(np.diff(np.r_[0.0, recall]) * precision))
    result.precision_recall = CurveSeries(
        "pr", f"{volume_feature} (positive '{positive}')", tuple(recall.tolist()), tuple(precision.tolist()), summary=ap
    )
    return result


def basic_stats(
    table: FeatureTable,
    volume_feature: Optional[str] = None,
    mann_whitney_results: Optional[Sequence[MannWhitneyResult]] = None,
    roc_curves: Optional[Sequence[CurveSeries]] = None,
) -> List[StatRow]:
    """
    Moments ignore missing values (population std). Test and AUC fields are
    only filled for binary outcomes; volume_spearman only when a volume
    feature is named.
    """
    binary = table.outcome_column is not None and table.is_binary
    if binary and mann_whitney_results is None:
        try:
            mann_whitney_results = mann_whitney(table)
        except TooFewSamples as e:
            logger.warning("Skipping Mann-Whitney: %s", e)
    if binary and roc_curves is None:
        roc_curves = univariate_roc(table)
    p_by_feature = {r.feature: r.p_corrected for r in mann_whitney_results or []}
    auc_by_feature = {c.name: c.summary for c in roc_curves or []}
    if volume_feature is not None and volume_feature not in table.feature_names:
        raise UnknownVolumeFeature(f"Volume feature '{volume_feature}' not in table")
    volume = table.column(volume_feature) if volume_feature is not None else None

    rows = []
    for name in table.feature_names:
        values = table.column(name)
        present = values[np.isfinite(values)]
        nan = float("nan")
        rows.append(
            StatRow(
                feature=name,
                n_missing=int(values.size - present.size),
                mean=float(present.mean()) if present.size else nan,
                std=float(present.std()) if present.size else nan,
                min=float(present.min()) if present.size else nan,
                max=float(present.max()) if present.size else nan,
                mw_p_corrected=p_by_feature.get(name) if binary else None,
                roc_auc=auc_by_feature.get(name) if binary else None,
                volume_spearman=rank_statistics.spearman(values, volume) if volume is not None else None,
            )
        )
    return rows


def stat_rows_frame(rows: Sequence[StatRow]) -> pd.DataFrame:
    """Rows as a table; optional columns that are absent for every feature are left out."""
    frame = pd.DataFrame([row.to_dict() for row in rows])  # type: ignore[attr-defined]
    absent = [c for c in ("mw_p_corrected", "roc_auc", "volume_spearman") if all(getattr(r, c) is None for r in rows)]
    return frame.drop(columns=absent)


@dataclass
class AnalysisReport:
    """Files written by one analysis run."""
    stats_path: Path
    plots: Dict[str, Path] = field(default_factory=dict)
    tables: Dict[str, Path] = field(default_factory=dict)
    drop_report: Optional[DropReport] = None


class AnalysisBox:
    """
    Holds a loaded feature table and runs the analysis suite over it.
    Demonstrates: Business logic layer over the table reader.
    """

    def __init__(
        self,
        table: FeatureTable,
        summary: Optional[ClassSummary] = None,
        alpha: float = DEFAULT_ALPHA,
        auc_threshold: float = DEFAULT_AUC_THRESHOLD,
        corr_threshold: float = DEFAULT_CORR_THRESHOLD,
    ) -> None:
        self.table = table
        self.summary = summary or (ClassSummary.from_outcome(table.outcome) if table.outcome_column else None)
        self.alpha = alpha
        self.auc_threshold = auc_threshold
        self.corr_threshold = corr_threshold
        self.drop_report: Optional[DropReport] = None

    @classmethod
    def from_csv(
        cls,
        path: Union[str, Path],
        outcome_column: str,
        include: Optional[List[str]] = None,
        exclude: Optional[List[str]] = None,
        drop_patients: Optional[List[str]] = None,
        patient_column: Optional[str] = None,
        clinical_path: Optional[Union[str, Path]] = None,
        **thresholds: float,
    ) -> "AnalysisBox":
        table, summary = load(path, outcome_column, include, exclude, drop_patients, patient_column, clinical_path)
        return cls(table, summary, **thresholds)

    def handle_nan(self, axis: str = "patients") -> DropReport:
        self.table, self.drop_report = handle_nan(self.table, axis)
        self.summary = ClassSummary.from_outcome(self.table.outcome) if self.table.outcome_column else None
        return self.drop_report

    def plot_set(self, volume_feature: Optional[str] = None) -> List[SvgPlot]:
        """Plots in fixed order; binary outcomes with a volume feature give six."""
        table = self.table
        histograms = [s for name in table.feature_names for s in distributions(table, name)]
        matrix = spearman_matrix(table)
        plots = [
            SvgPlot("histogram", "feature_distributions", histograms, "value", "count"),
            SvgPlot(
                "heatmap",
                "correlation_matrix",
                [
                    CurveSeries(
                        "heatmap",
                        "|spearman rho|",
                        tuple(float(i) for i in range(len(matrix))),
                        tuple(float(v) for v in matrix.to_numpy().ravel()),
                        labels=tuple(matrix.columns),
                    )
                ],
            ),
        ]
        if table.is_binary:
            try:
                tests = mann_whitney(table, self.alpha)
            except TooFewSamples as e:
                logger.warning("Skipping Mann-Whitney plot: %s", e)
            else:
                plots.append(
                    SvgPlot(
                        "bar",
                        "mann_whitney",
                        [
                            CurveSeries(
                                "bar",
                                "Bonferroni-corrected p",
                                tuple(float(i) for i in range(len(tests))),
                                tuple(t.p_corrected for t in tests),
                                highlight=tuple(t.highlight for t in tests),
                                labels=tuple(t.feature for t in tests),
                            )
                        ],
                        "feature",
                        "p (corrected)",
                        threshold=self.alpha,
                    )
                )
            curves = univariate_roc(table, self.auc_threshold)
            plots.append(
                SvgPlot("roc", "roc_curves", curves, "false positive rate", "true positive rate", threshold=self.auc_threshold)
            )
        else:
            logger.info("Outcome has %d classes; Mann-Whitney and ROC are binary-only", len(table.labels))
        if volume_feature is not None:
            analysis = volume_analysis(table, volume_feature, self.corr_threshold)
            if analysis.precision_recall is not None:
                plots.append(SvgPlot("pr", "volume_precision_recall", [analysis.precision_recall], "recall", "precision"))
            plots.append(
                SvgPlot("bar", "volume_correlation", [analysis.correlations], "feature", "|rho|", threshold=self.corr_threshold)
            )
        return plots

    def run(self, out_dir: Union[str, Path], volume_feature: Optional[str] = None, stem: Optional[str] = None) -> AnalysisReport:
        """Write <stem>_basic_stats.csv and an SVG plus a CSV per plot."""
        out = Path(out_dir)
        stem = stem or (self.table.source.stem if self.table.source is not None else "features")
        rows = basic_stats(self.table, volume_feature)
        report = AnalysisReport(write_table(stat_rows_frame(rows), out / f"{stem}_basic_stats.csv"), drop_report=self.drop_report)
        if self.table.is_binary:
            try:
                tests = mann_whitney(self.table, self.alpha)
            except TooFewSamples:
                tests = []
            report.tables["mann_whitney"] = write_records(
                [t.to_dict() for t in tests],  # type: ignore[attr-defined]
                out / f"{stem}_mann_whitney.csv",
                ["feature", "u_statistic", "p_value", "p_corrected", "method", "highlight"],
            )
        for plot in self.plot_set(volume_feature):
            report.plots[plot.title] = emit_svg(plot, out / f"{stem}_{plot.title}.svg")
            report.tables[plot.title] = write_table(plot.to_frame(), out / f"{stem}_{plot.title}.csv")
        logger.info("Analysis wrote %d plots to %s", len(report.plots), out)
        return report
