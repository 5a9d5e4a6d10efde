from pathlib import Path

import numpy as np
import pytest

from business_logic.dataset_description import CT_COLUMNS, DEFAULT_COLUMNS, DescribeMode, describe
from fixtures.generator import write_clean
from models.exceptions import EmptyDataset, RadgateValidationError
from models.imaging_models import DatasetLayout
from readers.base_reader import ReaderConfig
from readers.dicom_dataset_reader import DicomDatasetReader, scan_dataset


def test_clean_tree_groups_series(fixture_tree: Path) -> None:
    reader = DicomDatasetReader(DatasetLayout(fixture_tree / "clean"))

    records = reader.read()

    assert [r.patient_id for r in records] == ["CLEAN-01", "CLEAN-02"]
    assert reader.files_seen == 24
    assert reader.excluded_series == []
    for record in records:
        assert len(record.slices) == 12
        assert record.modality == "CT"
        assert np.all(np.diff(record.positions) > 0)
        assert [p.name for p in record.slice_paths] == [f"CT_{k:03d}.dcm" for k in range(12)]


def test_parallel_scan_matches_serial(fixture_tree: Path) -> None:
    layout = DatasetLayout(fixture_tree / "defects")

    serial = scan_dataset(layout)
    parallel = scan_dataset(layout, ReaderConfig(jobs=4))

    assert [(r.patient_id, r.series_uid, len(r.slices)) for r in serial] == [
        (r.patient_id, r.series_uid, len(r.slices)) for r in parallel
    ]


def test_structure_sets_attach_to_patient_series(fixture_tree: Path) -> None:
    records = scan_dataset(DatasetLayout(fixture_tree / "rtstruct"))

    assert [r.patient_id for r in records] == ["RT-01", "RT-02", "RT-03"]
    for record in records:
        assert [p.name for p in record.rtstruct_paths] == ["RS.dcm"]
        assert record.rtstruct_slices[0].modality == "RTSTRUCT"


def test_non_dicom_and_broken_files(tmp_path: Path) -> None:
    written = write_clean(tmp_path, seed=3, count=1)
    (tmp_path / "notes.txt").write_text("not a DICOM file\n")
    broken = tmp_path / "CLEAN-01" / "CT_broken.dcm"
    broken.write_bytes(written[0].read_bytes()[:-10])
    reader = DicomDatasetReader(DatasetLayout(tmp_path))

    records = reader.read()

    assert reader.files_seen == 13
    assert len(records) == 1 and len(records[0].slices) == 12
    assert [what for what, _ in reader.excluded] == [str(broken)]
    assert "TruncatedElement" in reader.excluded[0][1]


def test_empty_tree(tmp_path: Path) -> None:
    (tmp_path / "notes.txt").write_text("nothing here\n")

    with pytest.raises(EmptyDataset):
        scan_dataset(DatasetLayout(tmp_path))


def test_missing_root(tmp_path: Path) -> None:
    with pytest.raises(RadgateValidationError):
        DatasetLayout(tmp_path / "absent")


def test_describe_default_lists_every_file(fixture_tree: Path) -> None:
    records = scan_dataset(DatasetLayout(fixture_tree / "rtstruct"))

    frame = describe(records)

    assert list(frame.columns) == DEFAULT_COLUMNS
    assert len(frame) == 3 * 13
    first = frame.iloc[0]
    assert first["patient"] == "RT-01"
    assert first["file"] == "CT_000.dcm"
    assert first["pixel_spacing"] == "1\\1"
    assert first["date"] == "20240115"
    structure_rows = frame[frame["modality"] == "RTSTRUCT"]
    assert list(structure_rows["file"]) == ["RS.dcm"] * 3
    assert structure_rows["pixel_spacing"].isna().all()


def test_describe_ct_one_row_per_series(fixture_tree: Path) -> None:
    records = scan_dataset(DatasetLayout(fixture_tree / "clean"))

    frame = describe(records, DescribeMode.CT)

    assert list(frame.columns) == CT_COLUMNS
    assert list(frame["patient"]) == ["CLEAN-01", "CLEAN-02"]
    assert list(frame["slices"]) == [12, 12]
    assert list(frame["convolution_kernel"]) == ["STANDARD", "STANDARD"]
    assert list(frame["kvp"]) == [120.0, 120.0]
    assert frame.iloc[0]["patient_name"] == "SYNTHETIC^CLEAN-01"


def test_describe_nothing() -> None:
    with pytest.raises(EmptyDataset):
        describe([])
