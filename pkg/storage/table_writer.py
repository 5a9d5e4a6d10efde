"""
CSV tables: UTF-8, comma separated, header row, LF line endings, empty cell
for missing values.
"""
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd

from storage.atomic_writer import atomic_write

logger = logging.getLogger(__name__)


def frame_to_csv(frame: pd.DataFrame, index: bool = False) -> str:
    return frame.to_csv(index=index, lineterminator="\n", na_rep="")


def write_table(frame: pd.DataFrame, path: Union[str, Path], index: bool = False) -> Path:
    target = atomic_write(path, frame_to_csv(frame, index=index))
    logger.info("Wrote %d rows to %s", len(frame), target)
    return target


def write_records(
    records: Sequence[Dict[str, Any]],
    path: Union[str, Path],
    columns: Optional[List[str]] = None,
) -> Path:
    """Write a list of row dicts; `columns` fixes the column order."""
    frame = pd.DataFrame.from_records(list(records), columns=columns)
    if columns is not None and not records:
        frame = pd.DataFrame(columns=columns)
    return write_table(frame, path)
