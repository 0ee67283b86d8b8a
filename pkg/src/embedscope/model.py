"""Domain types: projects, records, embedding matrices, layouts, annotations."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import InvalidArgument, InvalidDim, InvalidSchema, NonFinite


class Modality(str, Enum):
    TEXT = "text"
    IMAGE = "image"
    VIDEO = "video"


class AnnotationSource(str, Enum):
    SINGLE_PICK = "single_pick"
    SPHERE_SELECT = "sphere_select"
    IMPORT = "import"


@dataclass(frozen=True)
class Project:
    """Project metadata. `revision` only ever increases."""

    project_id: str
    name: str
    created_at: str
    dim: int
    label_schema: tuple[str, ...]
    revision: int

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise InvalidDim(f"dim must be >= 1, got {self.dim}")
        if not self.label_schema:
            raise InvalidSchema("label schema must be non-empty")
        if len(set(self.label_schema)) != len(self.label_schema):
            raise InvalidSchema("label names must be unique")

    def label_index(self, label: int | str) -> int:
        """Resolve a label given by name or index to a schema index."""
        from .errors import InvalidLabel

        if isinstance(label, bool):
            raise InvalidLabel(f"invalid label {label!r}")
        if isinstance(label, int):
            if not 0 <= label < len(self.label_schema):
                raise InvalidLabel(f"label index {label} outside schema of size {len(self.label_schema)}")
            return label
        try:
            return self.label_schema.index(label)
        except ValueError:
            raise InvalidLabel(f"label {label!r} not in schema") from None


@dataclass(frozen=True)
class Record:
    """One data sample; `payload` is inline text or a media URI."""

    record_id: str
    ingest_order: int
    modality: Modality = Modality.TEXT
    payload: str = ""
    label_gt: int | None = None
    is_foreign: bool = False


@dataclass(frozen=True)
class IngestRow:
    """One row of an ingestion stream prior to validation."""

    record_id: str
    vector: Sequence[float] | np.ndarray
    label: str | None = None
    modality: Modality = Modality.TEXT
    payload: str = ""
    is_foreign: bool = False


class EmbeddingMatrix:
    """Row-major float32 store of one D-dimensional vector per record."""

    def __init__(self, data: np.ndarray):
        data = np.asarray(data, dtype=np.float32)
        if data.ndim != 2:
            raise InvalidArgument(f"embedding matrix must be 2-D, got shape {data.shape}")
        if data.size and not np.all(np.isfinite(data)):
            bad = np.argwhere(~np.isfinite(data))[0]
            raise NonFinite("non-finite embedding entry", row=int(bad[0]), col=int(bad[1]))
        self._data = data
        self._norms: np.ndarray | None = None

    @classmethod
    def empty(cls, dim: int) -> "EmbeddingMatrix":
        return cls(np.empty((0, dim), dtype=np.float32))

    @property
    def data(self) -> np.ndarray:
        return self._data

    @property
    def dim(self) -> int:
        return int(self._data.shape[1])

    @property
    def count(self) -> int:
        return int(self._data.shape[0])

    @property
    def norms(self) -> np.ndarray:
        """Per-row L2 norms, computed once on first use."""
        if self._norms is None:
            self._norms = np.linalg.norm(self._data.astype(np.float64), axis=1)
        return self._norms

    def appended(self, rows: np.ndarray) -> "EmbeddingMatrix":
        rows = np.asarray(rows, dtype=np.float32)
        if rows.shape[1] != self.dim:
            raise InvalidDim(f"cannot append dim-{rows.shape[1]} rows to dim-{self.dim} matrix")
        return EmbeddingMatrix(np.vstack([self._data, rows]) if self.count else rows)

    def fingerprint(self) -> str:
        return hashlib.sha256(self._data.tobytes()).hexdigest()


@dataclass(frozen=True)
class Annotation:
    """One labeling event; later revisions win per record."""

    record_ids: tuple[str, ...]
    label: int
    revision: int
    source: AnnotationSource
    created_at: str

    def __post_init__(self) -> None:
        if not self.record_ids:
            raise InvalidArgument("annotation must cover at least one record")


@dataclass(frozen=True)
class CurrentLabel:
    """Resolved current label of a record after folding the annotation history."""

    label: int
    revision: int
    source: AnnotationSource


@dataclass(frozen=True)
class Layout:
    """A fitted reduction: per-record 2D/3D coordinates plus fit provenance."""

    layout_id: str
    reducer_name: str
    out_dim: int
    coords: np.ndarray
    params: Mapping[str, Any]
    seed: int
    fitted_at: str
    train_fingerprint: str = ""

    def __post_init__(self) -> None:
        coords = np.asarray(self.coords, dtype=np.float32)
        if coords.ndim != 2 or coords.shape[1] != self.out_dim:
            raise InvalidDim(f"coords shape {coords.shape} does not match out_dim {self.out_dim}")
        if self.out_dim < 1:
            raise InvalidDim(f"out_dim must be >= 1, got {self.out_dim}")
        if coords.size and not np.all(np.isfinite(coords)):
            bad = np.argwhere(~np.isfinite(coords))[0]
            raise NonFinite("non-finite layout coordinate", row=int(bad[0]), col=int(bad[1]))
        object.__setattr__(self, "coords", coords)

    @property
    def count(self) -> int:
        return int(self.coords.shape[0])


def fold_annotations(history: Sequence[Annotation]) -> dict[str, CurrentLabel]:
    """Replay an annotation history in revision order; last write wins per record."""
    current: dict[str, CurrentLabel] = {}
    for ann in sorted(history, key=lambda a: a.revision):
        for rid in ann.record_ids:
            current[rid] = CurrentLabel(label=ann.label, revision=ann.revision, source=ann.source)
    return current
