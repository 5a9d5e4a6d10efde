"""
Abstract base class for all dataset readers.
Demonstrates: Abstract classes, protocols, full type checking
"""
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Generic, Iterator, List, Optional, Protocol, Tuple, TypeVar

from models.imaging_models import DatasetLayout


class PatientKeyed(Protocol):
    """Anything a reader yields carries the patient it belongs to."""
    patient_id: str


Item = TypeVar("Item", bound=PatientKeyed)


@dataclass
class ReaderConfig:
    """Configuration shared by the dataset readers."""
    jobs: int = 1
    follow_symlinks: bool = False
    strict: bool = False


class BaseDatasetReader(ABC, Generic[Item]):
    """
    Abstract base class for dataset readers.
    Implements template method pattern: `read()` walks, collects and sorts.
    """

    def __init__(self, layout: DatasetLayout, config: Optional[ReaderConfig] = None) -> None:
        self.layout: DatasetLayout = layout
        self.config: ReaderConfig = config or ReaderConfig()
        self.excluded: List[Tuple[str, str]] = []
        self._validate_config()

    def _validate_config(self) -> None:
        if self.config.jobs < 1:
            raise ValueError("jobs must be at least 1")

    @abstractmethod
    def iter_items(self) -> Iterator[Item]:
        """Yield dataset items; subclasses record skipped inputs in `excluded`."""

    @abstractmethod
    def get_format_name(self) -> str:
        """Return the name of the data format read."""

    def sort_key(self, item: Item) -> Tuple[str, ...]:
        return (item.patient_id,)

    def read(self) -> List[Item]:
        self.excluded = []
        return sorted(self.iter_items(), key=self.sort_key)

    def exclude(self, what: str, reason: str) -> None:
        self.excluded.append((what, reason))

    def __repr__(self) -> str:
        return f"{self.__class__.__name__}(format={self.get_format_name()}, root={self.layout.root})"
