"""
Temp-write-then-rename helpers so no command ever leaves partial output.
"""
import logging
import os
import shutil
import tempfile
from pathlib import Path
from types import TracebackType
from typing import Optional, Type, Union

from models.exceptions import IoFailure

logger = logging.getLogger(__name__)


def atomic_write(path: Union[str, Path], payload: Union[bytes, str]) -> Path:
    """Write `payload` to a sibling temp file and rename it over `path`."""
    target = Path(path)
    data = payload.encode("utf-8") if isinstance(payload, str) else payload
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        handle, temp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.", suffix=".tmp")
        try:
            with os.fdopen(handle, "wb") as stream:
                stream.write(data)
            os.replace(temp_name, target)
        except BaseException:
            if os.path.exists(temp_name):
                os.unlink(temp_name)
            raise
    except OSError as exc:
        raise IoFailure(f"Cannot write {target}: {exc}") from exc
    return target


class StagedOutput:
    """
    Stage a directory of outputs next to `target` and move it into place on
    success. Entries already present in `target` but not produced by this run
    are left alone; produced entries replace their old versions. Directories
    shallower than `replace_depth` are merged rather than replaced.

        with StagedOutput(out_dir) as stage:
            atomic_write(stage / "a.csv", text)
    """

    def __init__(self, target: Union[str, Path], replace_depth: int = 1) -> None:
        if replace_depth < 1:
            raise ValueError("replace_depth must be at least 1")
        self.target: Path = Path(target)
        self.replace_depth = replace_depth
        self.staging: Optional[Path] = None

    def __enter__(self) -> Path:
        try:
            self.target.parent.mkdir(parents=True, exist_ok=True)
            self.staging = Path(tempfile.mkdtemp(dir=self.target.parent, prefix=f".{self.target.name}.staging-"))
        except OSError as exc:
            raise IoFailure(f"Cannot stage output next to {self.target}: {exc}") from exc
        return self.staging

    def __exit__(
        self,
        exc_type: Optional[Type[BaseException]],
        exc: Optional[BaseException],
        traceback: Optional[TracebackType],
    ) -> None:
        assert self.staging is not None
        if exc_type is not None:
            logger.debug("Discarding staged output %s", self.staging)
            shutil.rmtree(self.staging, ignore_errors=True)
            return
        try:
            self._commit()
        except OSError as error:
            raise IoFailure(f"Cannot move outputs into {self.target}: {error}") from error
        finally:
            shutil.rmtree(self.staging, ignore_errors=True)

    def _commit(self) -> None:
        assert self.staging is not None
        if not self.target.exists():
            os.replace(self.staging, self.target)
            self.staging.mkdir()
            return
        _merge(self.staging, self.target, self.replace_depth)


def _merge(source: Path, target: Path, depth: int) -> None:
    for entry in sorted(source.iterdir()):
        destination = target / entry.name
        existing_dir = destination.is_dir() and not destination.is_symlink()
        if depth > 1 and entry.is_dir() and existing_dir:
            _merge(entry, destination, depth - 1)
            continue
        if existing_dir:
            shutil.rmtree(destination)
        os.replace(entry, destination)
