from pathlib import Path
from typing import Dict, List

import numpy as np
import pandas as pd
import pytest

from business_logic.feature_analysis import (
    AnalysisBox,
    basic_stats,
    distributions,
    handle_nan,
    mann_whitney,
    spearman_matrix,
    stat_rows_frame,
    univariate_roc,
    volume_analysis,
)
from fixtures.generator import OUTCOME, PLANTED_FEATURE, STAGE, VOLUME_FEATURE
from models.exceptions import (
    EverythingDropped,
    MissingOutcomeColumn,
    NotBinary,
    TooFewSamples,
    UnknownClass,
    UnknownVolumeFeature,
)
from models.feature_models import FeatureTable
from readers.feature_table_reader import load


@pytest.fixture(scope="module")
def feature_dir(fixture_tree: Path) -> Path:
    return fixture_tree / "features"


@pytest.fixture(scope="module")
def survival(feature_dir: Path):
    return load(feature_dir / "features.csv", OUTCOME, clinical_path=feature_dir / "clinical.csv")


def _table(columns: Dict[str, List[float]], outcome: List[str]) -> FeatureTable:
    patients = [f"P-{k}" for k in range(len(outcome))]
    frame = pd.DataFrame(columns, index=pd.Index(patients, name="patient"))
    frame["y"] = outcome
    return FeatureTable(frame, tuple(columns), "y")


def test_outcome_comes_from_the_clinical_table(survival) -> None:
    table, summary = survival

    assert summary.labels == ("0", "1")
    assert summary.counts == (42, 58)
    assert summary.share("0") == pytest.approx(0.42)
    assert table.is_binary
    assert len(table.feature_names) == 6
    assert VOLUME_FEATURE in table.feature_names


def test_outcome_must_exist(feature_dir: Path) -> None:
    with pytest.raises(MissingOutcomeColumn):
        load(feature_dir / "features.csv", OUTCOME)


def test_row_and_column_selection(feature_dir: Path) -> None:
    table, _ = load(
        feature_dir / "features.csv",
        OUTCOME,
        include=[PLANTED_FEATURE, VOLUME_FEATURE, "original_glcm_Contrast"],
        exclude=["original_glcm_Contrast"],
        drop_patients=["LUNG1-001", "NOT-THERE"],
        clinical_path=feature_dir / "clinical.csv",
    )

    assert table.feature_names == (PLANTED_FEATURE, VOLUME_FEATURE)
    assert len(table.patients) == 99
    assert "LUNG1-001" not in table.patients


def test_missing_stage_label_is_counted_apart(feature_dir: Path) -> None:
    table, summary = load(feature_dir / "features.csv", STAGE, clinical_path=feature_dir / "clinical.csv")

    assert summary.labels == ("", "I", "II", "IIIa", "IIIb")
    assert summary.counts == (1, 24, 9, 23, 43)
    assert table.labels == ["I", "II", "IIIa", "IIIb"]
    assert not table.is_binary


def test_handle_nan_over_patients_and_features() -> None:
    table = _table({"original_firstorder_Mean": [1.0, np.nan, 3.0], "original_shape_VoxelVolume": [1.0, 2.0, 3.0]}, ["0", "1", ""])

    by_patient, patient_report = handle_nan(table, "patients")
    by_feature, feature_report = handle_nan(table, "features")

    assert by_patient.patients == ["P-0"]
    assert patient_report.dropped == ("P-1", "P-2")
    assert by_feature.feature_names == ("original_shape_VoxelVolume",)
    assert feature_report.dropped == ("original_firstorder_Mean",)
    assert not handle_nan(by_patient, "patients")[1]


def test_handle_nan_refuses_to_drop_everything() -> None:
    table = _table({"original_firstorder_Mean": [np.nan, np.nan]}, ["0", "1"])

    with pytest.raises(EverythingDropped):
        handle_nan(table, "patients")
    with pytest.raises(EverythingDropped):
        handle_nan(table, "features")


def test_distributions_share_bin_edges(survival) -> None:
    table, summary = survival

    series = distributions(table, PLANTED_FEATURE)

    assert [s.name for s in series] == ["0", "1"]
    assert series[0].x == series[1].x
    assert len(series[0].x) == 21
    assert [sum(s.y) for s in series] == list(summary.counts)


def test_distributions_for_selected_classes(survival) -> None:
    table, _ = survival

    series = distributions(table, PLANTED_FEATURE, ["1"])

    assert [s.name for s in series] == ["1"]
    assert series[0].x[0] >= 60.0
    with pytest.raises(UnknownClass):
        distributions(table, PLANTED_FEATURE, ["2"])


def test_constant_feature_gets_one_bin() -> None:
    table = _table({"original_firstorder_Mean": [5.0, 5.0, 5.0]}, ["0", "1", "1"])

    series = distributions(table, "original_firstorder_Mean")

    assert series[0].x == (4.5, 5.5)
    assert series[1].y == (2.0,)


def test_spearman_matrix(survival) -> None:
    table, _ = survival

    matrix = spearman_matrix(table)

    assert np.allclose(np.diag(matrix.to_numpy()), 1.0)
    np.testing.assert_allclose(matrix.to_numpy(), matrix.to_numpy().T)
    assert matrix.loc["original_shape_SurfaceArea", VOLUME_FEATURE] > 0.9


def test_planted_feature_separates_the_classes(survival) -> None:
    table, _ = survival

    tests = {r.feature: r for r in mann_whitney(table)}
    curves = {c.name: c for c in univariate_roc(table)}

    planted = tests[PLANTED_FEATURE]
    assert planted.highlight
    assert planted.method == "asymptotic"
    assert planted.p_corrected == pytest.approx(min(1.0, planted.p_value * 6))
    assert curves[PLANTED_FEATURE].summary == pytest.approx(1.0)
    assert curves[PLANTED_FEATURE].highlight == (True,)
    assert all(0.0 <= c.summary <= 1.0 for c in curves.values())


def test_roc_highlight_follows_the_auc_threshold() -> None:
    table = _table(
        {"original_firstorder_Mean": [1.0, 2.0, 3.0, 4.0], "original_firstorder_Range": [1.0, 3.0, 2.0, 4.0]},
        ["0", "0", "1", "1"],
    )

    default = {c.name: c for c in univariate_roc(table)}
    strict = {c.name: c for c in univariate_roc(table, auc_threshold=0.8)}

    assert default["original_firstorder_Mean"].highlight == (True,)
    assert default["original_firstorder_Range"].summary == pytest.approx(0.75)
    assert default["original_firstorder_Range"].highlight == (True,)
    assert strict["original_firstorder_Range"].highlight == (False,)


def test_roc_table_carries_the_highlight_flag(survival, tmp_path: Path) -> None:
    table, summary = survival

    report = AnalysisBox(table, summary, auc_threshold=0.9).run(tmp_path)

    curves = pd.read_csv(report.tables["roc_curves"])
    flags = curves.groupby("series")["highlight"].agg(set)
    assert flags[PLANTED_FEATURE] == {1}
    assert all(len(values) == 1 for values in flags)
    assert set(curves.loc[curves["summary"] < 0.9, "highlight"]) <= {0}


def test_tests_need_a_binary_outcome(feature_dir: Path) -> None:
    table, _ = load(feature_dir / "features.csv", STAGE, clinical_path=feature_dir / "clinical.csv")

    with pytest.raises(NotBinary):
        mann_whitney(table)
    with pytest.raises(NotBinary):
        univariate_roc(table)


def test_tests_need_two_patients_per_class() -> None:
    table = _table({"original_firstorder_Mean": [1.0, 2.0, 3.0]}, ["0", "1", "1"])

    with pytest.raises(TooFewSamples):
        mann_whitney(table)


def test_volume_analysis(survival) -> None:
    table, _ = survival

    analysis = volume_analysis(table, VOLUME_FEATURE)

    bars = dict(zip(analysis.correlations.labels, analysis.correlations.highlight))
    assert bars[VOLUME_FEATURE]
    assert bars["original_shape_SurfaceArea"]
    assert analysis.precision_recall is not None
    assert 0.0 < analysis.precision_recall.summary <= 1.0
    with pytest.raises(UnknownVolumeFeature):
        volume_analysis(table, "original_shape_Missing")


def test_basic_stats_columns(survival, feature_dir: Path) -> None:
    table, _ = survival
    stage, _ = load(feature_dir / "features.csv", STAGE, clinical_path=feature_dir / "clinical.csv")

    binary = stat_rows_frame(basic_stats(table, VOLUME_FEATURE))
    plain = stat_rows_frame(basic_stats(stage))

    assert list(binary.columns) == [
        "feature", "n_missing", "mean", "std", "min", "max", "mw_p_corrected", "roc_auc", "volume_spearman",
    ]
    assert list(plain.columns) == ["feature", "n_missing", "mean", "std", "min", "max"]
    row = binary.set_index("feature").loc[VOLUME_FEATURE]
    assert row["volume_spearman"] == pytest.approx(1.0)
    assert row["std"] == pytest.approx(float(np.std(table.column(VOLUME_FEATURE))))


def test_basic_stats_skip_missing_values() -> None:
    table = _table({"original_firstorder_Mean": [1.0, np.nan, 3.0, 5.0]}, ["0", "0", "1", "1"])

    row = basic_stats(table)[0]

    assert row.n_missing == 1
    assert row.mean == pytest.approx(3.0)
    assert row.min == 1.0 and row.max == 5.0


def test_analysis_writes_six_plots(survival, tmp_path: Path) -> None:
    table, summary = survival
    box = AnalysisBox(table, summary)

    report = box.run(tmp_path, VOLUME_FEATURE)

    assert list(report.plots) == [
        "feature_distributions",
        "correlation_matrix",
        "mann_whitney",
        "roc_curves",
        "volume_precision_recall",
        "volume_correlation",
    ]
    assert report.stats_path == tmp_path / "features_basic_stats.csv"
    assert all(path.read_text().startswith("<svg") for path in report.plots.values())
    assert (tmp_path / "features_mann_whitney.csv").exists()
    assert len(pd.read_csv(report.stats_path)) == 6


def test_multiclass_analysis_skips_binary_plots(feature_dir: Path, tmp_path: Path) -> None:
    box = AnalysisBox.from_csv(feature_dir / "features.csv", STAGE, clinical_path=feature_dir / "clinical.csv")
    dropped = box.handle_nan("patients")

    report = box.run(tmp_path, VOLUME_FEATURE, stem="stage")

    assert len(dropped.dropped) == 1
    assert box.summary is not None and "" not in box.summary.labels
    assert list(report.plots) == ["feature_distributions", "correlation_matrix", "volume_correlation"]
    assert "mann_whitney" not in report.tables


def test_analysis_is_deterministic(survival, tmp_path: Path) -> None:
    table, summary = survival

    first = AnalysisBox(table, summary).run(tmp_path / "a", VOLUME_FEATURE)
    second = AnalysisBox(table, summary).run(tmp_path / "b", VOLUME_FEATURE)

    for name, path in first.plots.items():
        assert path.read_bytes() == second.plots[name].read_bytes()
    for name, path in first.tables.items():
        assert path.read_bytes() == second.tables[name].read_bytes()
