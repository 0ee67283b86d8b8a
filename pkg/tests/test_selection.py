from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import rows_from_matrix
from helpers import pick_oracle
from embedscope.errors import InvalidArgument, Unsupported
from embedscope.model import Layout
from embedscope.selection import Ray, SphereSelector, annotate_selection, pick, pick2d, select_sphere


def layout_of(coords):
    coords = np.asarray(coords, dtype=np.float32)
    return Layout(
        layout_id="t",
        reducer_name="import",
        out_dim=coords.shape[1],
        coords=coords,
        params={},
        seed=0,
        fitted_at="now",
    )


def ids_for(coords):
    return [f"r{i:04d}" for i in range(len(coords))]


class TestRay:
    def test_direction_must_be_unit(self):
        with pytest.raises(InvalidArgument):
            Ray(origin=(0, 0, 0), direction=(0, 0, 2))

    def test_tolerates_rounding(self):
        Ray(origin=(0, 0, 0), direction=(0, 0, 1 + 5e-7))


class TestPick:
    def test_on_axis_point_wins(self):
        layout = layout_of([[0, 0, 5], [0.4, 0, 5]])
        ray = Ray(origin=(0, 0, 0), direction=(0, 0, 1))
        assert pick(layout, ray, 0.05, ids_for(layout.coords)) == "r0000"

    def test_nearest_depth_wins(self):
        layout = layout_of([[0, 0, 5], [0, 0, 9]])
        ray = Ray(origin=(0, 0, 0), direction=(0, 0, 1))
        assert pick(layout, ray, 0.05, ids_for(layout.coords)) == "r0000"

    def test_none_when_cone_empty(self):
        layout = layout_of([[10, 10, 10]])
        ray = Ray(origin=(0, 0, 0), direction=(0, 0, 1))
        assert pick(layout, ray, 0.05, ids_for(layout.coords)) is None

    def test_point_behind_origin_ignored(self):
        layout = layout_of([[0, 0, -5], [0, 0, 7]])
        ray = Ray(origin=(0, 0, 0), direction=(0, 0, 1))
        assert pick(layout, ray, 0.1, ids_for(layout.coords)) == "r0001"

    def test_2d_layout_unsupported(self):
        layout = layout_of([[0, 0], [1, 1]])
        ray = Ray(origin=(0, 0, 0), direction=(0, 0, 1))
        with pytest.raises(Unsupported):
            pick(layout, ray, 0.05, ids_for(layout.coords))

    def test_angular_radius_bounds(self):
        layout = layout_of([[0, 0, 5]])
        ray = Ray(origin=(0, 0, 0), direction=(0, 0, 1))
        for bad in (0.0, -0.1, np.pi / 4 + 0.01):
            with pytest.raises(InvalidArgument):
                pick(layout, ray, bad, ids_for(layout.coords))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(41)
        coords = rng.normal(0, 5, (1000, 3))
        layout = layout_of(coords)
        ids = ids_for(coords)
        hits = 0
        for _ in range(100):
            origin = rng.normal(0, 10, 3)
            direction = rng.normal(0, 1, 3)
            direction /= np.linalg.norm(direction)
            ray = Ray(origin=tuple(origin), direction=tuple(direction))
            angular = float(rng.uniform(0.01, np.pi / 4))
            got = pick(layout, ray, angular, ids)
            want = pick_oracle(layout.coords, origin, direction, angular, ids)
            assert got == want
            hits += got is not None
        assert hits > 10, "fixture should produce plenty of non-empty picks"

    def test_rotation_invariance(self):
        rng = np.random.default_rng(43)
        coords = rng.normal(0, 5, (200, 3))
        layout = layout_of(coords)
        ids = ids_for(coords)
        origin = np.array([0.0, 0.0, -20.0])
        direction = np.array([0.0, 0.0, 1.0])
        base = pick(layout, Ray(tuple(origin), tuple(direction)), 0.3, ids)
        assert base is not None
        for seed in range(5):
            q, _ = np.linalg.qr(np.random.default_rng(seed).normal(0, 1, (3, 3)))
            rotated = layout_of(coords @ q.T)
            r_origin = q @ origin
            r_dir = q @ direction
            r_dir /= np.linalg.norm(r_dir)
            got = pick(rotated, Ray(tuple(r_origin), tuple(r_dir)), 0.3, ids)
            assert got == base


class TestPick2d:
    def test_exact_click(self):
        layout = layout_of([[0, 0], [3, 3]])
        assert pick2d(layout, [3, 3], 0.5, ids_for(layout.coords)) == "r0001"

    def test_out_of_radius(self):
        layout = layout_of([[0, 0]])
        assert pick2d(layout, [5, 5], 0.5, ids_for(layout.coords)) is None

    def test_tie_by_record_id(self):
        layout = layout_of([[1, 0], [-1, 0]])
        assert pick2d(layout, [0, 0], 2.0, ids_for(layout.coords)) == "r0000"

    def test_matches_brute_force(self):
        rng = np.random.default_rng(47)
        coords = rng.normal(0, 3, (500, 2))
        layout = layout_of(coords)
        ids = ids_for(coords)
        for _ in range(100):
            point = rng.normal(0, 3, 2)
            radius = float(rng.uniform(0.05, 1.0))
            got = pick2d(layout, point, radius, ids)
            dists = np.linalg.norm(coords - point, axis=1)
            candidates = [(dists[i], ids[i]) for i in range(len(ids)) if dists[i] <= radius]
            want = min(candidates)[1] if candidates else None
            assert got == want


class TestSelectSphere:
    def test_boundary_inclusive(self):
        layout = layout_of([[0.5, 0, 0], [1.5, 0, 0], [1.0, 0, 0]])
        got = select_sphere(layout, SphereSelector((0, 0, 0), 1.0), ids_for(layout.coords))
        assert got == ["r0000", "r0002"]

    def test_universal_ball(self):
        rng = np.random.default_rng(51)
        coords = rng.normal(0, 1, (50, 2))
        diag = float(np.linalg.norm(coords.max(0) - coords.min(0)))
        got = select_sphere(layout_of(coords), SphereSelector((0, 0), diag * 2), ids_for(coords))
        assert got == sorted(ids_for(coords))

    def test_matches_brute_force(self):
        rng = np.random.default_rng(53)
        coords = rng.normal(0, 2, (300, 3))
        layout = layout_of(coords)
        ids = ids_for(coords)
        for _ in range(50):
            center = rng.normal(0, 2, 3)
            radius = float(rng.uniform(0.2, 3.0))
            got = select_sphere(layout, SphereSelector(tuple(center), radius), ids)
            want = sorted(
                ids[i]
                for i in range(len(ids))
                if np.linalg.norm(coords[i] - center) <= radius
            )
            assert got == want

    @given(st.floats(0.1, 2.0), st.floats(0.0, 3.0))
    @settings(max_examples=30, deadline=None)
    def test_monotone_in_radius(self, r1, extra):
        rng = np.random.default_rng(57)
        coords = rng.normal(0, 1, (80, 2))
        layout = layout_of(coords)
        ids = ids_for(coords)
        small = set(select_sphere(layout, SphereSelector((0, 0), r1), ids))
        big = set(select_sphere(layout, SphereSelector((0, 0), r1 + extra), ids))
        assert small <= big

    def test_radius_positive(self):
        with pytest.raises(InvalidArgument):
            SphereSelector((0, 0), 0.0)


class TestAnnotateSelection:
    def _project(self, store, n=60):
        rng = np.random.default_rng(61)
        p = store.create_project("sel", 3, ["a", "b", "c"])
        cluster = rng.normal(0, 0.5, (50, 3)).astype(np.float32)
        far = rng.normal(40, 0.5, (n - 50, 3)).astype(np.float32)
        x = np.vstack([cluster, far])
        store.ingest(p.project_id, rows_from_matrix(x))
        layout = store.import_layout(p.project_id, x)
        return store, p, layout

    def test_cluster_count_and_single_revision(self, store):
        store_, p, layout = self._project(store)
        revision, count = annotate_selection(
            store_, p.project_id, layout, SphereSelector((0, 0, 0), 5.0), "b"
        )
        assert count == 50
        assert revision == 1

    def test_repeat_is_noop(self, store):
        store_, p, layout = self._project(store)
        annotate_selection(store_, p.project_id, layout, SphereSelector((0, 0, 0), 5.0), "b")
        before = store_.checksum()
        revision, count = annotate_selection(
            store_, p.project_id, layout, SphereSelector((0, 0, 0), 5.0), "b"
        )
        assert count == 0
        assert revision == 1
        assert store_.checksum() == before

    def test_empty_selection_noop(self, store):
        store_, p, layout = self._project(store)
        revision, count = annotate_selection(
            store_, p.project_id, layout, SphereSelector((100, 100, 100), 1.0), "a"
        )
        assert (revision, count) == (0, 0)

    def test_overlapping_spheres_last_wins(self, store):
        p = store.create_project("tri", 2, ["a", "b", "c"])
        x = np.array(
            [[0.0, 0.0], [1.0, 0.0], [2.0, 0.0], [3.0, 0.0], [4.0, 0.0]], dtype=np.float32
        )
        store.ingest(p.project_id, rows_from_matrix(x))
        layout = store.import_layout(p.project_id, x)
        annotate_selection(store, p.project_id, layout, SphereSelector((1.0, 0.0), 1.0), "a")
        annotate_selection(store, p.project_id, layout, SphereSelector((3.0, 0.0), 1.0), "b")
        current = store.state(p.project_id).current
        schema = store.project(p.project_id).label_schema
        labels = {rid: schema[cur.label] for rid, cur in current.items()}
        # set algebra: first ball {0,1,2}, second {2,3,4}; intersection follows the later call
        assert labels == {"r0": "a", "r1": "a", "r2": "b", "r3": "b", "r4": "b"}

    def test_selection_reads_are_pure(self, store):
        store_, p, layout = self._project(store)
        before = store_.checksum()
        select_sphere(layout, SphereSelector((0, 0, 0), 5.0), [r.record_id for r in store_.state(p.project_id).records])
        pick(layout, Ray((0, 0, -50), (0, 0, 1)), 0.3, [r.record_id for r in store_.state(p.project_id).records])
        assert store_.checksum() == before
