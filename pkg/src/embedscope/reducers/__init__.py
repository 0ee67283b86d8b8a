"""Dimensionality reducers with a uniform fit/transform contract.

Every reducer fits on an embedding matrix and can place unseen vectors into
the same layout (out-of-sample projection), except imported static layouts
which only render. The default registry holds "pca", "hnne", and "import".
"""

from __future__ import annotations

import hashlib
import json
import struct
import threading
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Any, Callable, Mapping

import numpy as np

from ..errors import (
    CountMismatch,
    DuplicateName,
    InsufficientData,
    InvalidDim,
    NonFinite,
    Unsupported,
    UnknownReducer,
)
from ..model import EmbeddingMatrix, Layout

SPWR_MAGIC = b"SPWR"
SPWR_VERSION = 1


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class ReducerSpec:
    """Fit request: reducer name, target dimensionality, parameters, seed.

    out_dim is validated to {2,3} where layouts become persistent artifacts
    (store and service); the math layer accepts any out_dim >= 1 so that
    degenerate dimensionalities remain available to tests and reports.
    """

    name: str
    out_dim: int
    params: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self) -> None:
        if not self.name:
            raise UnknownReducer("reducer name must be non-empty")
        if self.out_dim < 1:
            raise InvalidDim(f"out_dim must be >= 1, got {self.out_dim}")
        object.__setattr__(self, "params", dict(self.params))

    def params_json(self) -> str:
        return json.dumps(self.params, sort_keys=True, separators=(",", ":"))


class FittedReducer:
    """Fitted state able to project new vectors into an existing layout.

    Subclasses implement `_transform_rows` plus the state payload used by the
    SPWR serialization; transform of a training row must reproduce the fitted
    layout row bit-for-bit for methods with exact out-of-sample identity.
    """

    method = "abstract"

    def __init__(self, spec: ReducerSpec, train_fingerprint: str):
        self.spec = spec
        self.train_fingerprint = train_fingerprint

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def transform(self, vectors: np.ndarray) -> np.ndarray:
        """Project M×D vectors to M×out_dim float32 coordinates.

        Each row is projected independently, so batch calls and single-vector
        calls produce identical bits.
        """
        vectors = np.asarray(vectors, dtype=np.float32)
        single = vectors.ndim == 1
        if single:
            vectors = vectors[None, :]
        if vectors.ndim != 2 or vectors.shape[1] != self.dim:
            raise InvalidDim(
                f"expected vectors of dim {self.dim}, got shape {vectors.shape}"
            )
        if vectors.size and not np.all(np.isfinite(vectors)):
            bad = np.argwhere(~np.isfinite(vectors))[0]
            raise NonFinite("non-finite query vector entry", row=int(bad[0]), col=int(bad[1]))
        out = self._transform_rows(vectors)
        return out[0] if single else out

    def _transform_rows(self, vectors: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def state_payload(self) -> bytes:
        raise NotImplementedError

    @classmethod
    def from_state_payload(
        cls, spec: ReducerSpec, train_fingerprint: str, payload: bytes
    ) -> "FittedReducer":
        raise NotImplementedError


FitFn = Callable[[np.ndarray, ReducerSpec], tuple[np.ndarray, FittedReducer]]

_registry_lock = threading.Lock()
_registry: dict[str, tuple[FitFn | None, type[FittedReducer] | None]] = {}


def register_reducer(
    name: str,
    fit_fn: FitFn | None,
    state_cls: type[FittedReducer] | None = None,
) -> None:
    """Register a reducer under `name`; duplicate names are rejected."""
    with _registry_lock:
        if name in _registry:
            raise DuplicateName(f"reducer {name!r} already registered")
        _registry[name] = (fit_fn, state_cls)


def available_reducers() -> set[str]:
    with _registry_lock:
        return set(_registry)


def _lookup(name: str) -> tuple[FitFn | None, type[FittedReducer] | None]:
    with _registry_lock:
        try:
            return _registry[name]
        except KeyError:
            raise UnknownReducer(f"no reducer named {name!r}") from None


def layout_id_for(spec: ReducerSpec, train_fingerprint: str, scope: str = "") -> str:
    key = f"{scope}|{spec.name}|{spec.out_dim}|{spec.seed}|{spec.params_json()}|{train_fingerprint}"
    return hashlib.sha256(key.encode("utf-8")).hexdigest()[:16]


def fit(matrix: EmbeddingMatrix | np.ndarray, spec: ReducerSpec) -> tuple[Layout, FittedReducer]:
    """Fit a registered reducer; deterministic given (matrix, spec)."""
    if not isinstance(matrix, EmbeddingMatrix):
        matrix = EmbeddingMatrix(np.asarray(matrix, dtype=np.float32))
    if matrix.count < spec.out_dim + 1:
        raise InsufficientData(
            f"need at least {spec.out_dim + 1} rows to fit out_dim={spec.out_dim}, got {matrix.count}"
        )
    fit_fn, _ = _lookup(spec.name)
    if fit_fn is None:
        raise Unsupported(f"reducer {spec.name!r} cannot be fitted; import coordinates instead")
    coords, fitted = fit_fn(matrix.data, spec)
    fingerprint = matrix.fingerprint()
    fitted.train_fingerprint = fingerprint
    layout = Layout(
        layout_id=layout_id_for(spec, fingerprint),
        reducer_name=spec.name,
        out_dim=spec.out_dim,
        coords=np.asarray(coords, dtype=np.float32),
        params=dict(spec.params),
        seed=spec.seed,
        fitted_at=_now_iso(),
        train_fingerprint=fingerprint,
    )
    return layout, fitted


def transform(fitted: FittedReducer | None, vectors: np.ndarray) -> np.ndarray:
    if fitted is None:
        raise Unsupported("this layout has no out-of-sample projection (imported coordinates)")
    return fitted.transform(vectors)


def import_layout(coords: np.ndarray, expected_count: int | None = None) -> Layout:
    """Wrap externally computed coordinates (t-SNE, UMAP, ...) as a static layout."""
    coords = np.asarray(coords, dtype=np.float32)
    if coords.ndim != 2 or coords.shape[1] not in (2, 3):
        raise InvalidDim(f"imported coords must be N×2 or N×3, got shape {coords.shape}")
    if expected_count is not None and coords.shape[0] != expected_count:
        raise CountMismatch(
            f"imported coords have {coords.shape[0]} rows, project has {expected_count} records"
        )
    if coords.size and not np.all(np.isfinite(coords)):
        bad = np.argwhere(~np.isfinite(coords))[0]
        raise NonFinite("non-finite imported coordinate", row=int(bad[0]), col=int(bad[1]))
    digest = hashlib.sha256(coords.tobytes()).hexdigest()
    return Layout(
        layout_id=digest[:16],
        reducer_name="import",
        out_dim=int(coords.shape[1]),
        coords=coords,
        params={},
        seed=0,
        fitted_at=_now_iso(),
        train_fingerprint=digest,
    )


def serialize_fitted(fitted: FittedReducer) -> bytes:
    """Versioned binary blob: magic, version, name, spec echo, method payload."""
    name_b = fitted.spec.name.encode("utf-8")
    params_b = fitted.spec.params_json().encode("utf-8")
    fp_b = fitted.train_fingerprint.encode("ascii")
    payload = fitted.state_payload()
    return b"".join(
        [
            SPWR_MAGIC,
            struct.pack("<I", SPWR_VERSION),
            struct.pack("<I", len(name_b)),
            name_b,
            struct.pack("<IQ", fitted.spec.out_dim, fitted.spec.seed),
            struct.pack("<I", len(params_b)),
            params_b,
            struct.pack("<I", len(fp_b)),
            fp_b,
            struct.pack("<Q", len(payload)),
            payload,
        ]
    )


def deserialize_fitted(blob: bytes) -> FittedReducer:
    if blob[:4] != SPWR_MAGIC:
        raise UnknownReducer(f"bad reducer blob magic {blob[:4]!r}")
    (version,) = struct.unpack_from("<I", blob, 4)
    if version != SPWR_VERSION:
        raise UnknownReducer(f"unsupported reducer blob version {version}")
    off = 8
    (name_len,) = struct.unpack_from("<I", blob, off)
    off += 4
    name = blob[off : off + name_len].decode("utf-8")
    off += name_len
    out_dim, seed = struct.unpack_from("<IQ", blob, off)
    off += 12
    (params_len,) = struct.unpack_from("<I", blob, off)
    off += 4
    params = json.loads(blob[off : off + params_len].decode("utf-8"))
    off += params_len
    (fp_len,) = struct.unpack_from("<I", blob, off)
    off += 4
    fingerprint = blob[off : off + fp_len].decode("ascii")
    off += fp_len
    (payload_len,) = struct.unpack_from("<Q", blob, off)
    off += 8
    payload = blob[off : off + payload_len]
    _, state_cls = _lookup(name)
    if state_cls is None:
        raise UnknownReducer(f"reducer {name!r} has no deserializable state")
    spec = ReducerSpec(name=name, out_dim=int(out_dim), params=params, seed=int(seed))
    return state_cls.from_state_payload(spec, fingerprint, payload)


def _register_defaults() -> None:
    from .pca import PcaFitted, fit_pca
    from .hnne import HnneFitted, fit_hnne

    register_reducer("pca", fit_pca, PcaFitted)
    register_reducer("hnne", fit_hnne, HnneFitted)
    register_reducer("import", None, None)


_register_defaults()
