"""embedscope: embedding-space exploration, bulk annotation, and evaluation."""

from .errors import EngineError
from .model import (
    Annotation,
    AnnotationSource,
    CurrentLabel,
    EmbeddingMatrix,
    IngestRow,
    Layout,
    Modality,
    Project,
    Record,
)
from .store import ProjectStore

__all__ = [
    "Annotation",
    "AnnotationSource",
    "CurrentLabel",
    "EmbeddingMatrix",
    "EngineError",
    "IngestRow",
    "Layout",
    "Modality",
    "Project",
    "ProjectStore",
    "Record",
]

__version__ = "0.1.0"
