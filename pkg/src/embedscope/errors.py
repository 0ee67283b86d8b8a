"""Exception taxonomy shared by the engine, service, and CLI."""

from __future__ import annotations


class EngineError(Exception):
    """Base class for all engine-raised errors."""


class AlreadyExists(EngineError):
    pass


class InvalidSchema(EngineError):
    pass


class InvalidDim(EngineError):
    pass


class DimMismatch(EngineError):
    def __init__(self, message: str, row: int | None = None):
        super().__init__(message)
        self.row = row


class DuplicateId(EngineError):
    pass


class NonFinite(EngineError):
    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        super().__init__(message)
        self.row = row
        self.col = col


class UnknownProject(EngineError):
    pass


class UnknownRecord(EngineError):
    pass


class UnknownLayout(EngineError):
    pass


class InvalidLabel(EngineError):
    pass


class InvalidArgument(EngineError):
    pass


class UnsupportedFormat(EngineError):
    pass


class FormatError(EngineError):
    """Malformed ingestion payload (bad NDJSON line, truncated binary, ...)."""


class StoreCorrupt(EngineError):
    def __init__(self, message: str, path: str):
        super().__init__(f"{message}: {path}")
        self.path = path


class InsufficientData(EngineError):
    pass


class UnknownReducer(EngineError):
    pass


class DuplicateName(EngineError):
    pass


class CountMismatch(EngineError):
    pass


class Unsupported(EngineError):
    pass


class EmptyQuery(EngineError):
    pass


class ProviderTimeout(EngineError):
    pass


class ProviderError(EngineError):
    def __init__(self, status: int, body: str):
        super().__init__(f"provider returned status {status}: {body}")
        self.status = status
        self.body = body


class UndefinedMetric(EngineError):
    pass


class InvalidK(EngineError):
    pass


class InvalidInput(EngineError):
    pass


class InsufficientPool(EngineError):
    pass


class JobConflict(EngineError):
    pass
