"""
Seeded synthetic datasets for tests and demos.

    out/
      clean/<patient>/CT_NNN.dcm        series passing every quality check
      defects/<patient>/CT_NNN.dcm      one series per check, failing only that check
      rtstruct/<patient>/{CT_NNN,RS}.dcm  image series plus a structure set
      features/{features,clinical}.csv  feature table with planted effects
      spec.json, preprocess.json, extraction.json

Same seed, same bytes.
"""
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from fixtures.dicom_writer import AXIAL, DicomWriter, make_uid, rtstruct_dataset, slice_dataset
from models.config_models import (
    ExtractionParams,
    PreprocessParams,
    QualitySpec,
    ReshapeStep,
    dump_config,
)
from models.dicom_models import SliceMeta
from models.exceptions import RadgateValidationError
from storage.atomic_writer import atomic_write
from storage.table_writer import write_table

logger = logging.getLogger(__name__)

KINDS = ("all", "clean", "defects", "rtstruct", "features")
STUDY_DATE = "20240115"
SAGITTAL = (0.0, 1.0, 0.0, 0.0, 0.0, -1.0)
OUTCOME = "1yearsurvival"
STAGE = "Overall.Stage"
VOLUME_FEATURE = "original_shape_VoxelVolume"
PLANTED_FEATURE = "original_firstorder_Mean"


@dataclass(frozen=True)
class SeriesPlan:
    """Acquisition parameters of one synthetic image series."""
    patient_id: str
    modality: str = "CT"
    orientation: Tuple[float, ...] = AXIAL
    slice_count: int = 12
    rows: int = 16
    cols: int = 16
    pixel_spacing: Tuple[float, float] = (0.8, 0.8)
    thickness: float = 3.0
    gap: float = 3.0
    kernel: str = "STANDARD"
    rescale: bool = True
    missing_index: Optional[int] = None
    origin: Tuple[float, float, float] = (0.0, 0.0, 0.0)
    implicit: bool = False


def quality_spec() -> QualitySpec:
    """The acquisition target every clean series meets."""
    return QualitySpec(
        target_modality="CT",
        projection="axial",
        min_slice_count=10,
        thickness_range=(2.0, 5.0),
        spacing_range=(0.5, 1.0),
        kernel_whitelist=["STANDARD", "B30f"],
        required_in_plane=(16, 16),
    )


# defect name -> (plan change, the one check it breaks)
DEFECTS: Dict[str, Tuple[Callable[[SeriesPlan], SeriesPlan], str]] = {
    "modality": (lambda p: replace(p, modality="MR"), "modality"),
    "projection": (lambda p: replace(p, orientation=SAGITTAL), "projection"),
    "missing-slice": (lambda p: replace(p, slice_count=p.slice_count + 1, missing_index=p.slice_count // 2), "slice_consistency"),
    "slice-count": (lambda p: replace(p, slice_count=6), "slice_count"),
    "thickness": (lambda p: replace(p, thickness=7.0), "thickness"),
    "spacing": (lambda p: replace(p, pixel_spacing=(2.0, 2.0)), "spacing"),
    "kernel": (lambda p: replace(p, kernel="SHARP"), "kernel"),
    "resolution": (lambda p: replace(p, rows=12, cols=12), "resolution"),
    "slope-intercept": (lambda p: replace(p, rescale=False), "slope_intercept"),
}


def defect_patient(defect: str) -> str:
    return f"DEFECT-{defect.upper()}"


def _rng(seed: int, *parts: int) -> np.random.Generator:
    return np.random.default_rng([seed, *parts])


def clean_plan(seed: int, patient_id: str, index: int = 0) -> SeriesPlan:
    """Seeded clean plan; parameters stay well inside quality_spec()."""
    rng = _rng(seed, 1, index)
    spacing = round(float(rng.uniform(0.6, 0.95)), 2)
    thickness = round(float(rng.uniform(2.5, 4.5)), 1)
    origin = tuple(float(v) for v in rng.integers(-200, 0, size=3))
    return SeriesPlan(
        patient_id=patient_id,
        pixel_spacing=(spacing, spacing),
        thickness=thickness,
        gap=thickness,
        origin=origin,  # type: ignore[arg-type]
        implicit=bool(index % 2),
    )


def _normal(orientation: Tuple[float, ...]) -> np.ndarray:
    return np.cross(np.asarray(orientation[:3], dtype=float), np.asarray(orientation[3:], dtype=float))


def slice_metas(plan: SeriesPlan, seed: int) -> List[SliceMeta]:
    """One SliceMeta per written slice, in acquisition order."""
    normal = _normal(plan.orientation)
    series_uid = make_uid(seed, plan.patient_id, "series")
    metas = []
    for k in range(plan.slice_count):
        if k == plan.missing_index:
            continue
        position = np.asarray(plan.origin, dtype=float) + normal * plan.gap * k
        metas.append(SliceMeta(
            patient_id=plan.patient_id,
            sop_uid=make_uid(seed, plan.patient_id, "slice", k),
            series_uid=series_uid,
            modality=plan.modality,
            rows=plan.rows,
            cols=plan.cols,
            pixel_spacing=plan.pixel_spacing,
            image_position=tuple(round(float(v), 4) for v in position),  # type: ignore[arg-type]
            orientation=plan.orientation,  # type: ignore[arg-type]
            slice_thickness=plan.thickness,
            rescale_slope=1.0 if plan.rescale else None,
            rescale_intercept=-1024.0 if plan.rescale else None,
            convolution_kernel=plan.kernel,
            kvp=120.0,
            exposure=200.0,
            tube_current=300.0,
            series_date=STUDY_DATE,
            manufacturer="RADGATE",
            patient_name=f"SYNTHETIC^{plan.patient_id}",
            study_date=STUDY_DATE,
            instance_number=k + 1,
        ))
    return metas


def _extras(seed: int, plan: SeriesPlan) -> Dict[str, str]:
    return {
        "StudyInstanceUID": make_uid(seed, plan.patient_id, "study"),
        "FrameOfReferenceUID": make_uid(seed, plan.patient_id, "frame"),
    }


def write_series(
    plan: SeriesPlan,
    out_dir: Path,
    seed: int,
    pixels: Optional[Callable[[SliceMeta], np.ndarray]] = None,
) -> List[Path]:
    """Write the plan's slices as <out_dir>/<patient>/CT_NNN.dcm."""
    rng = _rng(seed, 2, sum(map(ord, plan.patient_id)))
    writer = DicomWriter(implicit=plan.implicit)
    extras = _extras(seed, plan)
    written = []
    for meta in slice_metas(plan, seed):
        if pixels is not None:
            grid = pixels(meta)
        else:
            # soft tissue around 40 HU stored with the -1024 intercept
            grid = np.clip(np.rint(rng.normal(1064.0, 30.0, size=(plan.rows, plan.cols))), 0, 4095).astype(np.int16)
        name = f"CT_{(meta.instance_number or 0) - 1:03d}.dcm"
        written.append(writer.write(slice_dataset(meta, grid, extras), out_dir / plan.patient_id / name))
    return written


def write_clean(out_dir: Path, seed: int, count: int = 2) -> List[Path]:
    written: List[Path] = []
    for index in range(count):
        written.extend(write_series(clean_plan(seed, f"CLEAN-{index + 1:02d}", index), out_dir, seed))
    return written


def write_defects(out_dir: Path, seed: int) -> List[Path]:
    written: List[Path] = []
    for index, (defect, (change, _)) in enumerate(sorted(DEFECTS.items())):
        plan = change(clean_plan(seed, defect_patient(defect), index))
        written.extend(write_series(plan, out_dir, seed))
    return written


def _polygon(center: Tuple[float, float], radius: float, z: float, corners: int = 16) -> List[Tuple[float, float, float]]:
    return [
        (center[0] + radius * math.cos(2 * math.pi * m / corners), center[1] + radius * math.sin(2 * math.pi * m / corners), z)
        for m in range(corners)
    ]


@dataclass(frozen=True)
class Phantom:
    """ROI shapes in world millimetres on an axial grid with unit pixel spacing."""
    center: Tuple[float, float, float]
    radius: float
    square: Tuple[float, float, float, float]
    triangle: Tuple[Tuple[float, float], ...]
    square_slices: Tuple[int, ...] = (2, 3, 4, 5)
    triangle_slices: Tuple[int, ...] = (3, 4, 5, 6)

    def rois(self, positions: List[float]) -> List[Dict[str, object]]:
        """Structure-set ROIs: sphere (16-gons), square, triangle."""
        cx, cy, cz = self.center
        sphere = []
        for z in positions:
            dz = z - cz
            if abs(dz) >= self.radius:
                continue
            r = math.sqrt(self.radius ** 2 - dz ** 2)
            if r >= 0.6:
                sphere.append(_polygon((cx, cy), r, z))
        x0, y0, x1, y1 = self.square
        square = [[(x0, y0, positions[k]), (x1, y0, positions[k]), (x1, y1, positions[k]), (x0, y1, positions[k])] for k in self.square_slices]
        triangle = [[(x, y, positions[k]) for x, y in self.triangle] for k in self.triangle_slices]
        return [
            {"number": 1, "name": "sphere", "color": (255, 0, 0), "contours": sphere},
            {"number": 2, "name": "square", "color": (0, 255, 0), "contours": square},
            {"number": 3, "name": "triangle", "color": (0, 0, 255), "contours": triangle},
        ]


def phantom(seed: int, index: int) -> Phantom:
    rng = _rng(seed, 3, index)
    return Phantom(
        center=(round(float(rng.uniform(2.0, 4.0)), 2), round(float(rng.uniform(2.0, 4.0)), 2), round(float(rng.uniform(10.5, 12.5)), 2)),
        radius=round(float(rng.uniform(5.0, 6.0)), 2),
        square=(-8.5, -8.5, -3.5, -3.5),
        triangle=((-10.3, 3.7), (-5.3, 3.7), (-7.8, 9.7)),
    )


def _phantom_pixels(plan: SeriesPlan, shape: Phantom, rng: np.random.Generator) -> Callable[[SliceMeta], np.ndarray]:
    """Stored values: lung-like background, a brighter sphere with a radial gradient, bright square."""
    def render(meta: SliceMeta) -> np.ndarray:
        assert meta.image_position is not None
        x0, y0, z = meta.image_position
        xs = x0 + np.arange(plan.cols) * plan.pixel_spacing[1]
        ys = y0 + np.arange(plan.rows) * plan.pixel_spacing[0]
        gx, gy = np.meshgrid(xs, ys)
        distance = np.sqrt((gx - shape.center[0]) ** 2 + (gy - shape.center[1]) ** 2 + (z - shape.center[2]) ** 2)
        hu = rng.normal(-800.0, 25.0, size=gx.shape)
        inside = distance < shape.radius
        hu[inside] = 60.0 - 8.0 * distance[inside] + rng.normal(0.0, 12.0, size=int(inside.sum()))
        sx0, sy0, sx1, sy1 = shape.square
        hu[(gx > sx0) & (gx < sx1) & (gy > sy0) & (gy < sy1)] += 500.0
        return np.clip(np.rint(hu + 1024.0), 0, 4095).astype(np.int16)
    return render


def write_rtstruct(out_dir: Path, seed: int, count: int = 3) -> List[Path]:
    """Patients RT-01.. with 24x24x12 series (1 x 1 x 2 mm) and a sphere/square/triangle structure set."""
    written: List[Path] = []
    for index in range(count):
        patient = f"RT-{index + 1:02d}"
        plan = SeriesPlan(
            patient_id=patient,
            slice_count=12,
            rows=24,
            cols=24,
            pixel_spacing=(1.0, 1.0),
            thickness=2.0,
            gap=2.0,
            origin=(-12.0, -12.0, 0.0),
            implicit=index == 1,
        )
        shape = phantom(seed, index)
        written.extend(write_series(plan, out_dir, seed, _phantom_pixels(plan, shape, _rng(seed, 4, index))))
        positions = [plan.origin[2] + plan.gap * k for k in range(plan.slice_count)]
        extras = _extras(seed, plan)
        dataset = rtstruct_dataset(
            patient_id=patient,
            sop_uid=make_uid(seed, patient, "rtstruct"),
            series_uid=make_uid(seed, patient, "rtstruct-series"),
            study_uid=extras["StudyInstanceUID"],
            frame_uid=extras["FrameOfReferenceUID"],
            referenced_series_uid=make_uid(seed, patient, "series"),
            rois=shape.rois(positions),
            study_date=STUDY_DATE,
        )
        writer = DicomWriter(implicit=plan.implicit, undefined_length_sequences=index >= 1)
        written.append(writer.write(dataset, out_dir / patient / "RS.dcm"))
    return written


def feature_frames(seed: int, patients: int = 100) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Feature and clinical tables. The binary outcome splits 42/58; the mean
    intensity separates the classes completely (AUC 1); surface area tracks
    volume closely; the remaining columns are noise.
    """
    rng = _rng(seed, 5)
    ids = [f"LUNG1-{k:03d}" for k in range(1, patients + 1)]
    negatives = round(patients * 0.42)
    survival = rng.permutation(np.r_[np.zeros(negatives, dtype=int), np.ones(patients - negatives, dtype=int)])
    stage_counts = {"I": 24, "II": 9, "IIIa": 23, "IIIb": 43}
    scale = patients / 100.0
    stages: List[str] = []
    for label, share in stage_counts.items():
        stages.extend([label] * round(share * scale))
    stages = (stages + [""] * patients)[:patients]
    stages[-1] = ""
    stages = list(rng.permutation(stages))

    volume = rng.lognormal(9.0, 0.8, size=patients)
    features = pd.DataFrame({
        "patient": ids,
        "original_firstorder_Entropy": rng.normal(4.0, 0.5, size=patients),
        PLANTED_FEATURE: np.where(survival == 1, rng.uniform(60.0, 120.0, size=patients), rng.uniform(-40.0, 50.0, size=patients)),
        "original_glcm_Contrast": rng.gamma(2.0, 1.5, size=patients),
        "original_shape_Sphericity": rng.uniform(0.4, 0.9, size=patients),
        "original_shape_SurfaceArea": 4.836 * volume ** (2.0 / 3.0) * (1.0 + rng.normal(0.0, 0.03, size=patients)),
        VOLUME_FEATURE: volume,
    })
    numeric = features.columns[1:]
    features[numeric] = features[numeric].round(6)
    clinical = pd.DataFrame({"patient": ids, OUTCOME: survival, STAGE: stages})
    return features, clinical


def write_features(out_dir: Path, seed: int) -> List[Path]:
    features, clinical = feature_frames(seed)
    return [write_table(features, out_dir / "features.csv"), write_table(clinical, out_dir / "clinical.csv")]


def write_configs(out_dir: Path) -> List[Path]:
    preprocess = PreprocessParams(steps=[ReshapeStep(target_spacing=(1.0, 1.0, 1.0))])
    extraction = ExtractionParams(bin_count=16)
    return [
        atomic_write(out_dir / "spec.json", dump_config(quality_spec())),
        atomic_write(out_dir / "preprocess.json", dump_config(preprocess)),
        atomic_write(out_dir / "extraction.json", dump_config(extraction)),
    ]


def gen_fixtures(kind: str, seed: int, out: Union[str, Path]) -> List[Path]:
    """Write the requested fixture set under `out`; returns the files in sorted order."""
    if kind not in KINDS:
        raise RadgateValidationError(f"Unknown fixture kind '{kind}' (expected one of {', '.join(KINDS)})")
    root = Path(out)
    written = write_configs(root)
    if kind in ("all", "clean"):
        written += write_clean(root / "clean", seed)
    if kind in ("all", "defects"):
        written += write_defects(root / "defects", seed)
    if kind in ("all", "rtstruct"):
        written += write_rtstruct(root / "rtstruct", seed)
    if kind in ("all", "features"):
        written += write_features(root / "features", seed)
    logger.info("Generated %d fixture files (%s, seed %d) under %s", len(written), kind, seed, root)
    return sorted(written)
