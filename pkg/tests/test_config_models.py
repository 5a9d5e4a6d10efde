import json
from pathlib import Path

import pytest

from fixtures.generator import quality_spec
from models.config_models import (
    CHECK_NAMES,
    ExtractionParams,
    PreprocessParams,
    QualitySpec,
    ReshapeStep,
    RunConfig,
    dump_config,
    jobs_from_environment,
    load_config,
    validate_config,
)
from models.exceptions import ConfigInvalid, IoFailure


def test_only_parameterless_checks_run_by_default() -> None:
    assert QualitySpec().enabled_checks() == ["slice_consistency", "slope_intercept"]
    assert quality_spec().enabled_checks() == list(CHECK_NAMES)


def test_check_toggles() -> None:
    off = QualitySpec(thickness_range=(1.0, 3.0), check_thickness=False, check_slope_intercept=False)
    on = QualitySpec(thickness_range=(1.0, 3.0), check_thickness=True)
    kept = validate_config(QualitySpec, {"spacing_range": [2.0, 0.5], "check_spacing": False, "target_modality": "CT"})

    assert off.thickness_range is None
    assert off.enabled_checks() == ["slice_consistency"]
    assert on.enabled_checks() == ["slice_consistency", "thickness", "slope_intercept"]
    assert kept.enabled_checks() == ["modality", "slice_consistency", "slope_intercept"]
    assert "spacing_range" not in dump_config(kept)


@pytest.mark.parametrize(
    "model,data,field_path",
    [
        (QualitySpec, {"thickness_range": [4.0, 1.0]}, "thickness_range"),
        (QualitySpec, {"kernel_whitelist": []}, "kernel_whitelist"),
        (QualitySpec, {"surprise": 1}, "surprise"),
        (QualitySpec, {"check_kernel": True}, "check_kernel"),
        (PreprocessParams, {"steps": [{"step": "rescale"}, {"step": "rescale", "out_min": 2, "out_max": 1}]}, "steps.1.out_max"),
        (PreprocessParams, {"steps": [{"step": "reshape", "target_spacing": [1, 1, 1], "target_dims": [2, 2, 2]}]}, "steps.0"),
        (PreprocessParams, {"steps": [{"step": "blur"}]}, "steps.0"),
        (ExtractionParams, {"feature_families": ["glcm", "glcm"]}, "feature_families"),
        (RunConfig, {"subcommand": "unroll", "window": [40, -1]}, "window"),
    ],
)
def test_errors_name_the_offending_field(model, data, field_path: str) -> None:
    with pytest.raises(ConfigInvalid) as caught:
        validate_config(model, data)

    assert caught.value.field_path == field_path
    assert str(caught.value).startswith(field_path)


def test_extraction_discretization_modes() -> None:
    assert ExtractionParams().effective_bin_width == 25.0
    assert ExtractionParams(bin_count=16).effective_bin_width is None
    with pytest.raises(ConfigInvalid):
        validate_config(ExtractionParams, {"bin_count": 16, "bin_width": 10})


def test_steps_are_parsed_by_name() -> None:
    params = validate_config(PreprocessParams, {"steps": [{"step": "reshape", "target_dims": [4, 4, 2]}]})

    assert isinstance(params.steps[0], ReshapeStep)
    assert params.steps[0].interpolation == "trilinear"


def test_fixture_spec_loads_back(fixture_tree: Path) -> None:
    loaded = load_config(QualitySpec, fixture_tree / "spec.json")

    assert loaded == quality_spec()


def test_dump_is_sorted_and_skips_unset_values() -> None:
    text = dump_config(ExtractionParams(bin_count=8))

    data = json.loads(text)
    assert list(data) == sorted(data)
    assert "bin_width" not in data
    assert text.endswith("}\n")


def test_unreadable_documents(tmp_path: Path) -> None:
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")

    with pytest.raises(ConfigInvalid):
        load_config(QualitySpec, broken)
    with pytest.raises(IoFailure):
        load_config(QualitySpec, tmp_path / "missing.json")


def test_jobs_resolution(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.delenv("RADGATE_JOBS", raising=False)
    assert jobs_from_environment(None) == 1

    monkeypatch.setenv("RADGATE_JOBS", "3")
    assert jobs_from_environment(None) == 3
    assert jobs_from_environment(2) == 2


@pytest.mark.parametrize("raw", ["many", "0"])
def test_bad_jobs_variable(monkeypatch: pytest.MonkeyPatch, raw: str) -> None:
    monkeypatch.setenv("RADGATE_JOBS", raw)

    with pytest.raises(ConfigInvalid) as caught:
        jobs_from_environment(None)

    assert caught.value.field_path == "RADGATE_JOBS"
