"""Query pipeline: payload -> embedding vector -> layout position + neighbors.

Neighbor retrieval always runs in the original embedding space (the layout is
lossy); the layout only supplies the rendered position. All k-NN search here
is exact: brute force up to a size threshold, above it a uniform grid over
layout space that still enumerates every candidate cell ring needed for
correctness.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    DimMismatch,
    EmptyQuery,
    InvalidArgument,
    InvalidDim,
    NonFinite,
    ProviderError,
    ProviderTimeout,
)

GRID_THRESHOLD = 200_000
DEFAULT_TIMEOUT_S = 10.0

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1


def _fnv1a64(data: bytes) -> int:
    h = _FNV_OFFSET
    for b in data:
        h ^= b
        h = (h * _FNV_PRIME) & _MASK64
    return h


def embed_text_builtin(text: str, dim: int) -> np.ndarray:
    """Deterministic offline text embedding via hashed character trigrams.

    Lowercases, pads with '^'/'$' sentinels, slides a 3-codepoint window, and
    for each trigram adds ±1 (sign = bit 63 of its FNV-1a 64-bit hash) into
    bucket hash mod dim; the accumulator is then L2-normalized.
    """
    if dim < 8:
        raise InvalidDim(f"builtin embedder needs dim >= 8, got {dim}")
    trimmed = text.strip()
    if not trimmed:
        raise EmptyQuery("query text is empty")
    padded = "^" + trimmed.lower() + "$"
    acc = np.zeros(dim, dtype=np.float64)
    for i in range(len(padded) - 2):
        h = _fnv1a64(padded[i : i + 3].encode("utf-8"))
        bucket = h % dim
        acc[bucket] += -1.0 if (h >> 63) & 1 else 1.0
    norm = float(np.linalg.norm(acc))
    if norm == 0.0:
        raise EmptyQuery("text hashed to the zero vector")
    return (acc / norm).astype(np.float32)


@dataclass(frozen=True)
class RemoteProvider:
    """HTTP embedding provider speaking POST {base_url}/embed."""

    base_url: str
    dim: int
    name: str = "remote"
    timeout_s: float = DEFAULT_TIMEOUT_S

    def embed(self, modality: str, payload: str) -> np.ndarray:
        import httpx

        if not payload:
            raise InvalidArgument("payload must be non-empty")
        url = self.base_url.rstrip("/") + "/embed"
        try:
            resp = httpx.post(
                url,
                json={"modality": modality, "payload": payload},
                timeout=self.timeout_s,
            )
        except httpx.TimeoutException:
            raise ProviderTimeout(f"provider at {url} timed out after {self.timeout_s}s") from None
        if not 200 <= resp.status_code < 300:
            raise ProviderError(resp.status_code, resp.text)
        try:
            vector = resp.json()["vector"]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise ProviderError(resp.status_code, f"malformed provider body: {resp.text[:200]}") from None
        vec = np.asarray(vector, dtype=np.float32)
        if vec.ndim != 1 or vec.shape[0] != self.dim:
            raise DimMismatch(f"provider returned dim {vec.shape}, expected {self.dim}")
        if not np.all(np.isfinite(vec)):
            col = int(np.argwhere(~np.isfinite(vec))[0][0])
            raise NonFinite(f"provider vector has non-finite entry at {col}", col=col)
        return vec


def _as_query_matrix(queries: np.ndarray, dim: int) -> np.ndarray:
    q = np.asarray(queries, dtype=np.float64)
    single = q.ndim == 1
    if single:
        q = q[None, :]
    if q.ndim != 2 or q.shape[1] != dim:
        raise DimMismatch(f"query shape {q.shape} does not match dim {dim}")
    return q


def knn_search(
    data: np.ndarray,
    queries: np.ndarray,
    k: int,
    metric: str = "euclidean",
) -> tuple[np.ndarray, np.ndarray]:
    """Exact k nearest rows of `data` for each query.

    Returns (indices, distances), each M×k', k' = min(k, N), sorted by
    ascending distance with ties broken by ascending row index. Cosine is
    Euclidean over L2-normalized copies of both sides.
    """
    data = np.asarray(data, dtype=np.float64)
    n = data.shape[0]
    q = _as_query_matrix(queries, data.shape[1])
    if metric == "cosine":
        dn = np.linalg.norm(data, axis=1, keepdims=True)
        qn = np.linalg.norm(q, axis=1, keepdims=True)
        data = np.divide(data, np.where(dn == 0.0, 1.0, dn))
        q = np.divide(q, np.where(qn == 0.0, 1.0, qn))
    elif metric != "euclidean":
        raise InvalidArgument(f"unknown metric {metric!r}")
    k_eff = min(max(k, 0), n)
    indices = np.empty((q.shape[0], k_eff), dtype=np.int64)
    distances = np.empty((q.shape[0], k_eff), dtype=np.float64)
    if k_eff == 0:
        return indices, distances
    row_ids = np.arange(n)
    for m in range(q.shape[0]):
        diff = data - q[m]
        d2 = np.einsum("ij,ij->i", diff, diff)
        order = np.lexsort((row_ids, d2))[:k_eff]
        indices[m] = order
        distances[m] = np.sqrt(d2[order])
    return indices, distances


class LayoutGrid:
    """Uniform grid over layout space giving exact nearest-point queries."""

    def __init__(self, coords: np.ndarray, target_per_cell: float = 8.0):
        self.coords = np.asarray(coords, dtype=np.float64)
        n, d = self.coords.shape
        self.dim = d
        self.lo = self.coords.min(axis=0)
        hi = self.coords.max(axis=0)
        span = np.maximum(hi - self.lo, 1e-12)
        cells_per_axis = max(1, int(np.floor((n / target_per_cell) ** (1.0 / d))))
        self.cell = span / cells_per_axis
        self.shape = np.full(d, cells_per_axis, dtype=np.int64)
        keys = self._cell_of(self.coords)
        order = np.lexsort((np.arange(n),) + tuple(keys.T[::-1]))
        self._sorted = order
        flat = self._flatten(keys[order])
        starts = np.searchsorted(flat, np.arange(int(self.shape.prod()) + 1))
        self._starts = starts

    def _cell_of(self, pts: np.ndarray) -> np.ndarray:
        idx = np.floor((pts - self.lo) / self.cell).astype(np.int64)
        return np.clip(idx, 0, self.shape - 1)

    def _flatten(self, cells: np.ndarray) -> np.ndarray:
        flat = cells[:, 0]
        for axis in range(1, self.dim):
            flat = flat * self.shape[axis] + cells[:, axis]
        return flat

    def _cell_points(self, cell: np.ndarray) -> np.ndarray:
        flat = int(self._flatten(cell[None, :])[0])
        return self._sorted[self._starts[flat] : self._starts[flat + 1]]

    def nearest(
        self, position: np.ndarray, k: int, tie_keys: np.ndarray | None = None
    ) -> tuple[np.ndarray, np.ndarray]:
        """Exact k nearest layout points; ties by tie_keys (default row index)."""
        pos = np.asarray(position, dtype=np.float64)
        if pos.shape != (self.dim,):
            raise DimMismatch(f"position shape {pos.shape} does not match layout dim {self.dim}")
        n = self.coords.shape[0]
        k_eff = min(max(k, 0), n)
        if k_eff == 0:
            return np.empty(0, dtype=np.int64), np.empty(0)
        center = self._cell_of(pos[None, :])[0]
        found: list[int] = []
        ring = 0
        max_ring = int(self.shape.max())

        def ranked(idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
            diff = self.coords[idx] - pos
            d2 = np.einsum("ij,ij->i", diff, diff)
            keys = idx if tie_keys is None else tie_keys[idx]
            order = np.lexsort((keys, d2))[:k_eff]
            return idx[order], np.sqrt(d2[order])

        while ring <= max_ring + 1:
            for cell in self._ring_cells(center, ring):
                found.extend(self._cell_points(cell).tolist())
            if len(found) >= k_eff:
                idx = np.asarray(sorted(set(found)), dtype=np.int64)
                best, dists = ranked(idx)
                # Safe stopping: every unexplored cell is at least `ring`
                # whole cells away along some axis.
                min_gap = ring * float(self.cell.min())
                if dists[-1] <= min_gap or ring > max_ring:
                    return best, dists
            ring += 1
        idx = np.asarray(sorted(set(found)), dtype=np.int64)
        return ranked(idx)

    def _ring_cells(self, center: np.ndarray, ring: int) -> list[np.ndarray]:
        lo = np.maximum(center - ring, 0)
        hi = np.minimum(center + ring, self.shape - 1)
        cells = []
        ranges = [np.arange(lo[a], hi[a] + 1) for a in range(self.dim)]
        for combo in np.stack(np.meshgrid(*ranges, indexing="ij"), axis=-1).reshape(-1, self.dim):
            if ring == 0 or int(np.abs(combo - center).max()) == ring:
                cells.append(combo)
        return cells


def nearest_in_layout(
    coords: np.ndarray,
    position: Sequence[float],
    k: int,
    record_ids: Sequence[str] | None = None,
    grid_threshold: int = GRID_THRESHOLD,
) -> tuple[np.ndarray, np.ndarray]:
    """Exact k nearest layout points by Euclidean distance.

    Ties go to the smaller record_id when ids are supplied, else to the
    smaller row index. Returns (row indices, distances).
    """
    coords = np.asarray(coords, dtype=np.float64)
    pos = np.asarray(position, dtype=np.float64)
    if pos.shape != (coords.shape[1],):
        raise DimMismatch(
            f"position has {pos.shape[0] if pos.ndim == 1 else pos.shape} entries,"
            f" layout is {coords.shape[1]}-D"
        )
    tie_keys = None if record_ids is None else np.asarray(record_ids, dtype=object)
    if coords.shape[0] > grid_threshold:
        return LayoutGrid(coords).nearest(pos, k, tie_keys=tie_keys)
    n = coords.shape[0]
    k_eff = min(max(k, 0), n)
    diff = coords - pos
    d2 = np.einsum("ij,ij->i", diff, diff)
    keys = np.arange(n) if tie_keys is None else tie_keys
    order = np.lexsort((keys, d2))[:k_eff]
    return order, np.sqrt(d2[order])


@dataclass(frozen=True)
class QueryResult:
    """Projected position (None for imported layouts) plus nearest records."""

    position: tuple[float, ...] | None
    neighbors: tuple[tuple[str, float], ...]
    provider: str
    query_echo: str
    vector: np.ndarray = field(repr=False, default=None)


def run_query(
    vector: np.ndarray,
    matrix_data: np.ndarray,
    record_ids: Sequence[str],
    fitted,
    k: int,
    provider_name: str,
    query_echo: str,
    metric: str = "euclidean",
) -> QueryResult:
    """Place an embedded query in the layout and retrieve its k nearest records."""
    if k < 0:
        raise InvalidArgument(f"k must be >= 0, got {k}")
    vec = np.asarray(vector, dtype=np.float32)
    position: tuple[float, ...] | None = None
    if fitted is not None:
        coords = fitted.transform(vec)
        position = tuple(float(c) for c in coords)
    neighbors: tuple[tuple[str, float], ...] = ()
    if k > 0 and matrix_data.shape[0] > 0:
        data = np.asarray(matrix_data, dtype=np.float64)
        q = np.asarray(vec, dtype=np.float64)
        if metric == "cosine":
            dn = np.linalg.norm(data, axis=1, keepdims=True)
            data = np.divide(data, np.where(dn == 0.0, 1.0, dn))
            qn = float(np.linalg.norm(q))
            q = q / qn if qn else q
        elif metric != "euclidean":
            raise InvalidArgument(f"unknown metric {metric!r}")
        diff = data - q
        d2 = np.einsum("ij,ij->i", diff, diff)
        order = np.lexsort((np.asarray(record_ids, dtype=object), d2))
        order = order[: min(k, data.shape[0])]
        neighbors = tuple((record_ids[i], float(np.sqrt(d2[i]))) for i in order)
    return QueryResult(
        position=position,
        neighbors=neighbors,
        provider=provider_name,
        query_echo=query_echo,
        vector=vec,
    )
