from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import pytest

from fixtures.generator import gen_fixtures
from models.imaging_models import Mask, Volume, VolumeGeometry

FIXTURE_SEED = 7


@pytest.fixture(scope="session")
def fixture_tree(tmp_path_factory: pytest.TempPathFactory) -> Path:
    """Every synthetic dataset, generated once per session."""
    out = tmp_path_factory.mktemp("fixtures")
    gen_fixtures("all", FIXTURE_SEED, out)
    return out


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


def _geometry(shape: Sequence[int], spacing: Sequence[float], origin: Sequence[float]) -> VolumeGeometry:
    nz, ny, nx = shape
    return VolumeGeometry(
        dims=(nx, ny, nz),
        spacing=tuple(float(s) for s in spacing),  # type: ignore[arg-type]
        origin=tuple(float(o) for o in origin),  # type: ignore[arg-type]
    )


@pytest.fixture
def make_volume() -> Callable[..., Volume]:
    """Volume from a (z, y, x) array with identity direction."""
    def build(voxels: np.ndarray, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0), unit: str = "") -> Volume:
        voxels = np.asarray(voxels)
        return Volume(_geometry(voxels.shape, spacing, origin), voxels, unit)
    return build


@pytest.fixture
def make_mask() -> Callable[..., Mask]:
    def build(voxels: np.ndarray, spacing=(1.0, 1.0, 1.0), origin=(0.0, 0.0, 0.0)) -> Mask:
        voxels = (np.asarray(voxels) != 0).astype(np.uint8)
        return Mask(_geometry(voxels.shape, spacing, origin), voxels, "mask")
    return build
