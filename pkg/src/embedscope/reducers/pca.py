"""Linear reduction by covariance eigen-decomposition.

Sign convention: the largest-magnitude entry of every component is made
positive, so repeated fits produce identical layouts across runs and
platforms. Projection is computed row by row with 1-D dot products; this
keeps a batch transform bit-identical to single-vector calls and makes
transform(training row) reproduce the fitted coordinates exactly.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import InvalidDim
from . import FittedReducer, ReducerSpec


def principal_components(x: np.ndarray, out_dim: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (mean, components, eigenvalues) of the sample covariance.

    Components are rows, ordered by descending eigenvalue; eigenvalues cover
    the full spectrum (descending) so callers can reason about discarded
    variance.
    """
    x = np.asarray(x, dtype=np.float64)
    n, d = x.shape
    if out_dim > d:
        raise InvalidDim(f"out_dim {out_dim} exceeds input dimensionality {d}")
    mean = x.mean(axis=0)
    centered = x - mean
    denom = max(n - 1, 1)
    cov = centered.T @ centered / denom
    eigvals, eigvecs = np.linalg.eigh(cov)
    order = np.argsort(eigvals)[::-1]
    eigvals = eigvals[order]
    components = np.ascontiguousarray(eigvecs[:, order[:out_dim]].T)
    for j in range(components.shape[0]):
        pivot = int(np.argmax(np.abs(components[j])))
        if components[j, pivot] < 0:
            components[j] = -components[j]
    return mean, components, eigvals


def project_rows(vectors: np.ndarray, mean: np.ndarray, components: np.ndarray) -> np.ndarray:
    """Row-wise centered projection; float64 internally, float32 out."""
    out_dim = components.shape[0]
    out = np.empty((vectors.shape[0], out_dim), dtype=np.float64)
    for i in range(vectors.shape[0]):
        row = vectors[i].astype(np.float64) - mean
        for j in range(out_dim):
            out[i, j] = np.dot(row, components[j])
    return out.astype(np.float32)


class PcaFitted(FittedReducer):
    method = "pca"

    def __init__(
        self,
        spec: ReducerSpec,
        train_fingerprint: str,
        mean: np.ndarray,
        components: np.ndarray,
        eigenvalues: np.ndarray,
    ):
        super().__init__(spec, train_fingerprint)
        self.mean = np.asarray(mean, dtype=np.float64)
        self.components = np.asarray(components, dtype=np.float64)
        self.eigenvalues = np.asarray(eigenvalues, dtype=np.float64)

    @property
    def dim(self) -> int:
        return int(self.mean.shape[0])

    def _transform_rows(self, vectors: np.ndarray) -> np.ndarray:
        return project_rows(vectors, self.mean, self.components)

    def state_payload(self) -> bytes:
        d = self.dim
        k = self.components.shape[0]
        ne = self.eigenvalues.shape[0]
        head = struct.pack("<III", d, k, ne)
        return (
            head
            + self.mean.astype("<f8").tobytes()
            + self.components.astype("<f8").tobytes(order="C")
            + self.eigenvalues.astype("<f8").tobytes()
        )

    @classmethod
    def from_state_payload(
        cls, spec: ReducerSpec, train_fingerprint: str, payload: bytes
    ) -> "PcaFitted":
        d, k, ne = struct.unpack_from("<III", payload, 0)
        off = 12
        mean = np.frombuffer(payload, dtype="<f8", count=d, offset=off).copy()
        off += d * 8
        components = (
            np.frombuffer(payload, dtype="<f8", count=k * d, offset=off).reshape(k, d).copy()
        )
        off += k * d * 8
        eigenvalues = np.frombuffer(payload, dtype="<f8", count=ne, offset=off).copy()
        return cls(spec, train_fingerprint, mean, components, eigenvalues)


def fit_pca(x: np.ndarray, spec: ReducerSpec) -> tuple[np.ndarray, PcaFitted]:
    mean, components, eigenvalues = principal_components(x, spec.out_dim)
    fitted = PcaFitted(spec, "", mean, components, eigenvalues)
    coords = project_rows(x, mean, components)
    return coords, fitted
