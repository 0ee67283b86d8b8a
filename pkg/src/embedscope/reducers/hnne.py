"""Hierarchical nearest-neighbor projection.

Fit builds a cluster hierarchy by repeatedly contracting connected components
of the exact 1-NN graph (component centroid = mean of member records) until at
most out_dim+1 super-nodes remain. Placement then walks the hierarchy
top-down:

- the top level is placed by PCA of its centroids;
- within each node, the child whose centroid lies closest to the node
  centroid acts as the representative and inherits the node position; the
  remaining children fan out on uniformly distributed direction slots (equal
  angles in 2D, a Fibonacci lattice in 3D, phase-rotated per parent), ordered
  by ascending minimum record index, at their embedding-space distance from
  the representative;
- finally every leaf is radially normalized so that its distance from its
  top-level anchor equals its embedding-space distance from that subtree's
  representative record.

The radial normalization is what makes the layout faithful to isolation: a
record far from everything in embedding space keeps a proportionally large
clearing in layout space instead of being flattened onto a cluster shell.

Out-of-sample projection interpolates between the k_project nearest training
vectors with inverse-distance weights; an exact match short-circuits to that
row's fitted position, which makes transform(training row) bit-exact.
"""

from __future__ import annotations

import struct

import numpy as np

from ..errors import InvalidDim
from . import FittedReducer, ReducerSpec

DEFAULT_K_PROJECT = 5
_GOLDEN_ANGLE = np.pi * (3.0 - np.sqrt(5.0))


def exact_nearest_neighbors(
    points: np.ndarray, return_distances: bool = False
) -> np.ndarray | tuple[np.ndarray, np.ndarray]:
    """Index of each row's nearest other row; ties go to the smaller index."""
    pts = np.asarray(points, dtype=np.float64)
    n = pts.shape[0]
    if n < 2:
        raise ValueError("need at least two points for a 1-NN graph")
    sq = np.einsum("ij,ij->i", pts, pts)
    nearest = np.zeros(n, dtype=np.int64)
    dists = np.zeros(n, dtype=np.float64)
    block = max(1, min(n, (1 << 22) // max(n, 1) + 1))
    for start in range(0, n, block):
        end = min(start + block, n)
        d2 = sq[start:end, None] + sq[None, :] - 2.0 * (pts[start:end] @ pts.T)
        d2[np.arange(end - start), np.arange(start, end)] = np.inf
        idx = np.argmin(d2, axis=1)
        nearest[start:end] = idx
        dists[start:end] = np.sqrt(np.maximum(d2[np.arange(end - start), idx], 0.0))
    if return_distances:
        return nearest, dists
    return nearest


def _connected_components(nn: np.ndarray) -> np.ndarray:
    """Undirected components of the 1-NN graph, numbered by minimum member."""
    n = nn.shape[0]
    parent = np.arange(n)

    def find(a: int) -> int:
        root = a
        while parent[root] != root:
            root = parent[root]
        while parent[a] != root:
            parent[a], a = root, parent[a]
        return root

    for i in range(n):
        ra, rb = find(i), find(int(nn[i]))
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    ids: dict[int, int] = {}
    out = np.empty(n, dtype=np.int64)
    for i in range(n):
        r = find(i)
        if r not in ids:
            ids[r] = len(ids)
        out[i] = ids[r]
    return out


def direction_slots(m: int, out_dim: int, phase: int = 0) -> np.ndarray:
    """m deterministic unit vectors spread uniformly over the circle/sphere.

    `phase` rotates the slot set so sibling groups in different parents do
    not produce systematically parallel offsets.
    """
    if m == 0:
        return np.zeros((0, out_dim))
    dirs = np.zeros((m, out_dim), dtype=np.float64)
    if out_dim == 1:
        dirs[:, 0] = [1.0 if (j + phase) % 2 == 0 else -1.0 for j in range(m)]
        return dirs
    if out_dim == 2:
        ang = 2.0 * np.pi * np.arange(m) / m + phase * _GOLDEN_ANGLE
        dirs[:, 0] = np.cos(ang)
        dirs[:, 1] = np.sin(ang)
        return dirs
    j = np.arange(m, dtype=np.float64)
    y = 1.0 - 2.0 * (j + 0.5) / m
    r = np.sqrt(np.maximum(1.0 - y * y, 0.0))
    phi = (j + phase) * _GOLDEN_ANGLE
    dirs[:, 0] = r * np.cos(phi)
    dirs[:, 1] = y
    dirs[:, 2] = r * np.sin(phi)
    if out_dim > 3:
        dirs[:, 3:] = 0.0
    return dirs


def _project64(points: np.ndarray, out_dim: int) -> np.ndarray:
    """Centered PCA projection kept in float64 for internal placement."""
    from .pca import principal_components

    mean, components, _ = principal_components(points, out_dim)
    centered = points - mean
    out = np.empty((points.shape[0], out_dim), dtype=np.float64)
    for i in range(points.shape[0]):
        for j in range(out_dim):
            out[i, j] = np.dot(centered[i], components[j])
    return out


class HnneFitted(FittedReducer):
    method = "hnne"

    def __init__(
        self,
        spec: ReducerSpec,
        train_fingerprint: str,
        train: np.ndarray,
        coords: np.ndarray,
        memberships: list[np.ndarray],
        k_project: int,
    ):
        super().__init__(spec, train_fingerprint)
        self.train = np.asarray(train, dtype=np.float32)
        self.coords = np.asarray(coords, dtype=np.float32)
        self.memberships = [np.asarray(m, dtype=np.int64) for m in memberships]
        self.k_project = int(k_project)
        self._train64 = self.train.astype(np.float64)
        self._coords64 = self.coords.astype(np.float64)

    @property
    def dim(self) -> int:
        return int(self.train.shape[1])

    @property
    def hierarchy(self) -> tuple[np.ndarray, ...]:
        """Leaf-to-group maps, one per contraction level (coarsest last)."""
        return tuple(self.memberships)

    def _transform_rows(self, vectors: np.ndarray) -> np.ndarray:
        n = self.train.shape[0]
        out_dim = self.coords.shape[1]
        k = min(self.k_project, n)
        out = np.empty((vectors.shape[0], out_dim), dtype=np.float32)
        row_ids = np.arange(n)
        for i in range(vectors.shape[0]):
            q = vectors[i].astype(np.float64)
            diff = self._train64 - q
            d2 = np.einsum("ij,ij->i", diff, diff)
            order = np.lexsort((row_ids, d2))[:k]
            if d2[order[0]] == 0.0:
                out[i] = self.coords[order[0]]
                continue
            w = 1.0 / np.sqrt(d2[order])
            pos = (w[:, None] * self._coords64[order]).sum(axis=0) / w.sum()
            out[i] = pos.astype(np.float32)
        return out

    def state_payload(self) -> bytes:
        n, d = self.train.shape
        out_dim = self.coords.shape[1]
        head = struct.pack("<IIIQI", d, out_dim, self.k_project, n, len(self.memberships))
        parts = [head, self.train.astype("<f4").tobytes(order="C"),
                 self.coords.astype("<f4").tobytes(order="C")]
        for m in self.memberships:
            parts.append(m.astype("<i8").tobytes())
        return b"".join(parts)

    @classmethod
    def from_state_payload(
        cls, spec: ReducerSpec, train_fingerprint: str, payload: bytes
    ) -> "HnneFitted":
        d, out_dim, k_project, n, n_levels = struct.unpack_from("<IIIQI", payload, 0)
        off = 24
        train = np.frombuffer(payload, dtype="<f4", count=n * d, offset=off).reshape(n, d).copy()
        off += n * d * 4
        coords = (
            np.frombuffer(payload, dtype="<f4", count=n * out_dim, offset=off)
            .reshape(n, out_dim)
            .copy()
        )
        off += n * out_dim * 4
        memberships = []
        for _ in range(n_levels):
            memberships.append(np.frombuffer(payload, dtype="<i8", count=n, offset=off).copy())
            off += n * 8
        return cls(spec, train_fingerprint, train, coords, memberships, k_project)


def fit_hnne(x: np.ndarray, spec: ReducerSpec) -> tuple[np.ndarray, HnneFitted]:
    out_dim = spec.out_dim
    x64 = np.asarray(x, dtype=np.float64)
    n, d = x64.shape
    if out_dim > d:
        raise InvalidDim(f"out_dim {out_dim} exceeds input dimensionality {d}")
    k_project = int(spec.params.get("k_project", DEFAULT_K_PROJECT))
    if k_project < 1:
        raise InvalidDim(f"k_project must be >= 1, got {k_project}")

    # Bottom-up contraction. Per level we track each node's record-mass sum,
    # member count, and minimum record index (the deterministic tie key).
    level_parent: list[np.ndarray] = []
    level_centroids: list[np.ndarray] = [x64]
    level_min_leaf: list[np.ndarray] = [np.arange(n, dtype=np.int64)]
    sums = x64.copy()
    counts = np.ones(n, dtype=np.int64)
    while level_centroids[-1].shape[0] > out_dim + 1:
        cur = level_centroids[-1]
        nn = exact_nearest_neighbors(cur)
        comp = _connected_components(nn)
        k = int(comp.max()) + 1
        if k == cur.shape[0]:
            break
        new_sums = np.zeros((k, d), dtype=np.float64)
        np.add.at(new_sums, comp, sums)
        new_counts = np.zeros(k, dtype=np.int64)
        np.add.at(new_counts, comp, counts)
        new_min = np.full(k, n, dtype=np.int64)
        np.minimum.at(new_min, comp, level_min_leaf[-1])
        sums, counts = new_sums, new_counts
        level_parent.append(comp)
        level_centroids.append(new_sums / new_counts[:, None])
        level_min_leaf.append(new_min)

    top = len(level_centroids) - 1

    # Representative child per node (centroid nearest the node centroid, ties
    # by minimum record index), resolved down to a representative record.
    rep_leaf_by_level: list[np.ndarray] = [np.arange(n, dtype=np.int64)]
    for lev in range(1, top + 1):
        parent_of = level_parent[lev - 1]
        child_cent = level_centroids[lev - 1]
        parent_cent = level_centroids[lev]
        rep_child = np.full(parent_cent.shape[0], -1, dtype=np.int64)
        order = np.lexsort((level_min_leaf[lev - 1], parent_of))
        bounds = np.searchsorted(parent_of[order], np.arange(parent_cent.shape[0] + 1))
        for p in range(parent_cent.shape[0]):
            kids = order[bounds[p] : bounds[p + 1]]
            best_c = kids[0]
            best_d = np.linalg.norm(child_cent[best_c] - parent_cent[p])
            for c in kids[1:]:
                dist = np.linalg.norm(child_cent[c] - parent_cent[p])
                if dist < best_d:
                    best_d, best_c = dist, c
            rep_child[p] = best_c
        rep_leaf_by_level.append(rep_leaf_by_level[lev - 1][rep_child])

    # Top-down walk: representatives inherit the parent position, the other
    # children fan out at their centroid distance from the representative.
    top_centroids = level_centroids[top]
    if top_centroids.shape[0] == 1:
        positions = np.zeros((1, out_dim), dtype=np.float64)
    else:
        positions = _project64(top_centroids, out_dim)
    anchors = positions.copy()

    for lev in range(top, 0, -1):
        parent_of = level_parent[lev - 1]
        child_cent = level_centroids[lev - 1]
        parent_cent = level_centroids[lev]
        parent_pos = positions
        child_pos = np.zeros((child_cent.shape[0], out_dim), dtype=np.float64)
        order = np.lexsort((level_min_leaf[lev - 1], parent_of))
        bounds = np.searchsorted(parent_of[order], np.arange(parent_cent.shape[0] + 1))
        for p in range(parent_cent.shape[0]):
            kids = order[bounds[p] : bounds[p + 1]]
            rep = kids[0]
            best = np.linalg.norm(child_cent[rep] - parent_cent[p])
            for c in kids[1:]:
                dist = np.linalg.norm(child_cent[c] - parent_cent[p])
                if dist < best:
                    best, rep = dist, c
            child_pos[rep] = parent_pos[p]
            others = [c for c in kids if c != rep]
            phase = int(level_min_leaf[lev][p]) % 977
            dirs = direction_slots(len(others), out_dim, phase=phase)
            for j, c in enumerate(others):
                radius = np.linalg.norm(child_cent[c] - child_cent[rep])
                child_pos[c] = parent_pos[p] + radius * dirs[j]
        positions = child_pos

    # Radial normalization: distance from the top anchor becomes the true
    # embedding distance to the subtree's representative record.
    memberships: list[np.ndarray] = []
    leaf_map = np.arange(n, dtype=np.int64)
    for parent_of in level_parent:
        leaf_map = parent_of[leaf_map]
        memberships.append(leaf_map.copy())
    top_of_leaf = memberships[-1] if memberships else np.arange(n, dtype=np.int64)
    top_rep_leaf = rep_leaf_by_level[top]

    coords64 = positions
    fallback = direction_slots(1, out_dim)[0]
    radii = np.zeros(n, dtype=np.float64)
    for i in range(n):
        t = int(top_of_leaf[i])
        anchor = anchors[t]
        true_r = float(np.linalg.norm(x64[i] - x64[int(top_rep_leaf[t])]))
        radii[i] = true_r
        v = coords64[i] - anchor
        norm = float(np.linalg.norm(v))
        if true_r == 0.0:
            coords64[i] = anchor
        elif norm == 0.0:
            coords64[i] = anchor + true_r * fallback
        else:
            coords64[i] = anchor + (true_r / norm) * v

    # Unusually isolated records (embedding 1-NN distance well above their
    # subtree's median) have no close neighbors whose geometry their slot
    # direction should respect; re-aim them for maximum clearance so that
    # isolation ordering survives into layout space.
    _, e1 = exact_nearest_neighbors(x64, return_distances=True)
    candidates = direction_slots(128, out_dim)
    for t in range(anchors.shape[0]):
        leaves = np.flatnonzero(top_of_leaf == t)
        if leaves.size < 3:
            continue
        med = float(np.median(e1[leaves]))
        iso = [int(i) for i in leaves if e1[i] > 3.0 * med and radii[i] > 0.0]
        if not iso:
            continue
        iso.sort(key=lambda i: (-radii[i], i))
        keep = np.array([i for i in leaves if i not in set(iso)], dtype=np.int64)
        placed = coords64[keep] if keep.size else anchors[t][None, :]
        for i in iso:
            tips = anchors[t] + radii[i] * candidates
            gaps = np.min(
                np.linalg.norm(tips[:, None, :] - placed[None, :, :], axis=2), axis=1
            )
            coords64[i] = tips[int(np.argmax(gaps))]
            placed = np.vstack([placed, coords64[i][None, :]])

    coords = coords64.astype(np.float32)
    fitted = HnneFitted(spec, "", np.asarray(x, dtype=np.float32), coords, memberships, k_project)
    return coords, fitted
