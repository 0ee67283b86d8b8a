"""Geometric selection in layout space: ray picking and ball selection.

All math runs in layout/world coordinates. A 3D pick uses a view cone
(angular radius) so that distant points get proportionally larger tolerance,
matching what mouse picking in a perspective view requires. Selection readers
never mutate the store; only annotate_selection writes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgument, Unsupported
from .model import AnnotationSource, Layout


@dataclass(frozen=True)
class Ray:
    origin: tuple[float, float, float]
    direction: tuple[float, float, float]

    def __post_init__(self) -> None:
        d = np.asarray(self.direction, dtype=np.float64)
        if d.shape != (3,):
            raise InvalidArgument("ray direction must have 3 components")
        norm = float(np.linalg.norm(d))
        if abs(norm - 1.0) > 1e-6:
            raise InvalidArgument(f"ray direction must be unit length, |d| = {norm:.8f}")


@dataclass(frozen=True)
class SphereSelector:
    center: tuple[float, ...]
    radius: float

    def __post_init__(self) -> None:
        if self.radius <= 0:
            raise InvalidArgument(f"selector radius must be > 0, got {self.radius}")


def pick(
    layout: Layout,
    ray: Ray,
    angular_radius: float,
    record_ids: Sequence[str],
) -> str | None:
    """Nearest-depth record inside the view cone, or None.

    A point qualifies when its perpendicular distance to the ray is at most
    tan(angular_radius) times its distance along the ray. Ties: smaller
    perpendicular distance, then smaller record_id.
    """
    if layout.out_dim != 3:
        raise Unsupported("pick requires a 3D layout; use pick2d for 2D layouts")
    if not 0.0 < angular_radius <= math.pi / 4:
        raise InvalidArgument(f"angular_radius must be in (0, pi/4], got {angular_radius}")
    coords = layout.coords.astype(np.float64)
    origin = np.asarray(ray.origin, dtype=np.float64)
    direction = np.asarray(ray.direction, dtype=np.float64)
    rel = coords - origin
    depth = rel @ direction
    perp = np.linalg.norm(rel - depth[:, None] * direction, axis=1)
    limit = math.tan(angular_radius) * depth
    qualifying = perp <= limit
    if not np.any(qualifying):
        return None
    best = None
    for i in np.flatnonzero(qualifying):
        key = (depth[i], perp[i], record_ids[i])
        if best is None or key < best[0]:
            best = (key, record_ids[i])
    return best[1]


def pick2d(
    layout: Layout,
    point: Sequence[float],
    pick_radius: float,
    record_ids: Sequence[str],
) -> str | None:
    """Nearest record within pick_radius of a 2D point; ties by record_id."""
    if layout.out_dim != 2:
        raise Unsupported("pick2d requires a 2D layout")
    if pick_radius <= 0:
        raise InvalidArgument(f"pick_radius must be > 0, got {pick_radius}")
    p = np.asarray(point, dtype=np.float64)
    if p.shape != (2,):
        raise InvalidArgument("pick2d point must have 2 components")
    coords = layout.coords.astype(np.float64)
    dist = np.linalg.norm(coords - p, axis=1)
    inside = np.flatnonzero(dist <= pick_radius)
    if inside.size == 0:
        return None
    best = min(inside, key=lambda i: (dist[i], record_ids[i]))
    return record_ids[best]


def select_sphere(
    layout: Layout,
    selector: SphereSelector,
    record_ids: Sequence[str],
) -> list[str]:
    """All records within the closed ball, ordered by record_id."""
    center = np.asarray(selector.center, dtype=np.float64)
    if center.shape != (layout.out_dim,):
        raise InvalidArgument(
            f"selector center has {center.shape[0] if center.ndim == 1 else center.shape}"
            f" components, layout is {layout.out_dim}-D"
        )
    coords = layout.coords.astype(np.float64)
    dist = np.linalg.norm(coords - center, axis=1)
    hit = np.flatnonzero(dist <= selector.radius)
    return sorted(record_ids[i] for i in hit)


def annotate_selection(
    store,
    project_id: str,
    layout: Layout,
    selector: SphereSelector,
    label: int | str,
) -> tuple[int, int]:
    """Label everything inside the selector; returns (revision, changed count).

    A selection that would change nothing (empty, or already carrying the
    label) is a no-op and does not consume a revision.
    """
    state = store.state(project_id)
    ids = select_sphere(layout, selector, [r.record_id for r in state.records])
    if not ids:
        return state.project.revision, 0
    label_idx = state.project.label_index(label)
    would_change = [
        rid
        for rid in ids
        if state.current.get(rid) is None or state.current[rid].label != label_idx
    ]
    if not would_change:
        return state.project.revision, 0
    revision, changed = store.apply_annotation(
        project_id, ids, label_idx, source=AnnotationSource.SPHERE_SELECT
    )
    return revision, changed
