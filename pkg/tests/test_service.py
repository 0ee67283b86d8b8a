from __future__ import annotations

import json
import struct
import time

import numpy as np
import pytest
from fastapi.testclient import TestClient

from embedscope import formats
from embedscope.model import IngestRow
from embedscope.service import Config, create_app
from embedscope.store import ProjectStore


def make_client(tmp_path, **kwargs):
    config = Config(data_dir=str(tmp_path / "data"), **kwargs)
    app = create_app(config)
    return TestClient(app), app


def ndjson_body(n, dim, labels=None, prefix="r"):
    lines = []
    rng = np.random.default_rng(abs(hash(prefix)) % 2**32)
    for i in range(n):
        obj = {
            "id": f"{prefix}{i:05d}",
            "vector": [round(float(v), 5) for v in rng.normal(0, 1, dim)],
            "modality": "text",
            "payload": f"text {i}",
        }
        if labels is not None:
            obj["label"] = labels[i % len(labels)]
        lines.append(json.dumps(obj))
    return ("\n".join(lines) + "\n").encode()


def wait_job(client, job_id, timeout=30.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        ticket = client.get(f"/jobs/{job_id}").json()
        if ticket["state"] in ("done", "failed"):
            return ticket
        time.sleep(0.02)
    raise TimeoutError(f"job {job_id} did not settle")


def make_project(client, name="demo", dim=6, schema=("a", "b")):
    resp = client.post("/projects", json={"name": name, "dim": dim, "label_schema": list(schema)})
    assert resp.status_code == 200, resp.text
    return resp.json()["project_id"]


def fit_layout(client, pid, reducer="pca", out_dim=3, seed=0):
    resp = client.post(
        f"/projects/{pid}/layouts",
        json={"reducer": reducer, "out_dim": out_dim, "seed": seed},
    )
    assert resp.status_code == 200, resp.text
    ticket = wait_job(client, resp.json()["job_id"])
    assert ticket["state"] == "done", ticket
    return ticket["result_ref"]


class TestBasics:
    def test_healthz(self, tmp_path):
        client, _ = make_client(tmp_path)
        resp = client.get("/healthz")
        assert resp.status_code == 200
        assert resp.json() == {"status": "ok"}

    def test_create_and_list_projects(self, tmp_path):
        client, _ = make_client(tmp_path)
        pid = make_project(client)
        listing = client.get("/projects").json()
        assert [p["project_id"] for p in listing] == [pid]
        assert listing[0]["label_schema"] == ["a", "b"]

    def test_duplicate_project_conflict(self, tmp_path):
        client, _ = make_client(tmp_path)
        make_project(client)
        resp = client.post("/projects", json={"name": "demo", "dim": 6, "label_schema": ["a"]})
        assert resp.status_code == 409

    def test_unknown_project_404(self, tmp_path):
        client, _ = make_client(tmp_path)
        assert client.get("/projects/none/annotations/export").status_code == 404

    def test_read_endpoint_stable_bytes(self, tmp_path):
        client, _ = make_client(tmp_path)
        pid = make_project(client)
        client.post(
            f"/projects/{pid}/records",
            content=ndjson_body(5, 6),
            headers={"content-type": "application/x-ndjson"},
        )
        first = client.get("/projects").content
        second = client.get("/projects").content
        assert first == second


class TestIngestEndpoint:
    def test_ndjson_content_type(self, tmp_path):
        client, _ = make_client(tmp_path)
        pid = make_project(client)
        resp = client.post(
            f"/projects/{pid}/records",
            content=ndjson_body(7, 6),
            headers={"content-type": "application/x-ndjson"},
        )
        assert resp.status_code == 200
        assert resp.json() == {"count": 7}

    def test_spwk_content_type(self, tmp_path):
        client, _ = make_client(tmp_path)
        pid = make_project(client, name="bin", dim=4)
        rows = [
            IngestRow(f"b{i}", np.arange(4, dtype=np.float32) + i, payload=f"p{i}")
            for i in range(3)
        ]
        blob = formats.write_spwk(rows, dim=4)
        resp = client.post(
            f"/projects/{pid}/records",
            content=blob,
            headers={"content-type": "application/octet-stream"},
        )
        assert resp.status_code == 200
        assert resp.json() == {"count": 3}

    def test_bad_payload_rejected(self, tmp_path):
        client, _ = make_client(tmp_path)
        pid = make_project(client)
        resp = client.post(
            f"/projects/{pid}/records",
            content=b'{"id":"x"}\n',
            headers={"content-type": "application/x-ndjson"},
        )
        assert resp.status_code == 400
        assert "vector" in resp.json()["message"]


class TestLayoutFlow:
    def test_fit_points_roundtrip(self, tmp_path):
        client, _ = make_client(tmp_path)
        pid = make_project(client)
        n, dim = 40, 6
        client.post(
            f"/projects/{pid}/records",
            content=ndjson_body(n, dim),
            headers={"content-type": "application/x-ndjson"},
        )
        layout_id = fit_layout(client, pid)
        resp = client.get(f"/layouts/{layout_id}/points")
        assert resp.status_code == 200
        body = resp.content
        assert body[:4] == b"SPWP"
        out_dim, count = struct.unpack_from("<IQ", body, 4)
        assert (out_dim, count) == (3, n)
        assert len(body) == 16 + n * out_dim * 4
        assert client.get(f"/layouts/{layout_id}/points").content == body

    def test_out_dim_validation(self, tmp_path):
        client, _ = make_client(tmp_path)
        pid = make_project(client)
        resp = client.post(f"/projects/{pid}/layouts", json={"reducer": "pca", "out_dim": 5})
        assert resp.status_code == 400

    def test_concurrent_fits_on_two_projects(self, tmp_path):
        client, _ = make_client(tmp_path)
        pids = [make_project(client, name=f"p{i}") for i in range(2)]
        for i, pid in enumerate(pids):
            client.post(
                f"/projects/{pid}/records",
                content=ndjson_body(300, 6, prefix=f"q{i}"),
                headers={"content-type": "application/x-ndjson"},
            )
        jobs = [
            client.post(f"/projects/{pid}/layouts", json={"reducer": "hnne", "out_dim": 3}).json()[
                "job_id"
            ]
            for pid in pids
        ]
        tickets = [wait_job(client, j) for j in jobs]
        assert all(t["state"] == "done" for t in tickets)

    def test_second_fit_on_same_project_conflicts(self, tmp_path):
        client, app = make_client(tmp_path)
        pid = make_project(client)
        client.post(
            f"/projects/{pid}/records",
            content=ndjson_body(50, 6),
            headers={"content-type": "application/x-ndjson"},
        )
        store = app.state.store
        original = store.fit_layout

        def slow_fit(*args, **kwargs):
            time.sleep(0.5)
            return original(*args, **kwargs)

        store.fit_layout = slow_fit
        try:
            first = client.post(f"/projects/{pid}/layouts", json={"reducer": "pca", "out_dim": 2})
            second = client.post(f"/projects/{pid}/layouts", json={"reducer": "pca", "out_dim": 3})
            assert first.status_code == 200
            assert second.status_code == 409
            wait_job(client, first.json()["job_id"])
        finally:
            store.fit_layout = original

    def test_failed_fit_reports_error(self, tmp_path):
        client, _ = make_client(tmp_path)
        pid = make_project(client)
        client.post(
            f"/projects/{pid}/records",
            content=ndjson_body(2, 6),
            headers={"content-type": "application/x-ndjson"},
        )
        resp = client.post(f"/projects/{pid}/layouts", json={"reducer": "pca", "out_dim": 3})
        ticket = wait_job(client, resp.json()["job_id"])
        assert ticket["state"] == "failed"
        assert "rows" in ticket["error"]


class TestInteraction:
    def _setup(self, tmp_path):
        client, app = make_client(tmp_path)
        pid = make_project(client, dim=8, schema=("World", "Sports"))
        client.post(
            f"/projects/{pid}/records",
            content=ndjson_body(30, 8),
            headers={"content-type": "application/x-ndjson"},
        )
        layout_id = fit_layout(client, pid, reducer="hnne", out_dim=3)
        return client, pid, layout_id

    def test_query_builtin(self, tmp_path):
        client, pid, layout_id = self._setup(tmp_path)
        resp = client.post(
            f"/layouts/{layout_id}/query",
            json={"provider": "builtin", "payload": "sports news", "k": 5},
        )
        assert resp.status_code == 200
        body = resp.json()
        assert len(body["position"]) == 3
        assert len(body["neighbors"]) == 5
        dists = [n["distance"] for n in body["neighbors"]]
        assert dists == sorted(dists)
        assert body["provider"] == "builtin_text_hash"
        assert body["query_echo"] == "sports news"

    def test_query_k_truncated(self, tmp_path):
        client, pid, layout_id = self._setup(tmp_path)
        resp = client.post(
            f"/layouts/{layout_id}/query",
            json={"provider": "builtin", "payload": "x y z", "k": 999},
        )
        assert len(resp.json()["neighbors"]) == 30

    def test_remote_without_config(self, tmp_path):
        client, pid, layout_id = self._setup(tmp_path)
        resp = client.post(
            f"/layouts/{layout_id}/query",
            json={"provider": "remote", "payload": "x", "k": 1},
        )
        assert resp.status_code == 400

    def test_pick_and_select_and_annotate(self, tmp_path):
        client, pid, layout_id = self._setup(tmp_path)
        points = formats.decode_spwp(client.get(f"/layouts/{layout_id}/points").content)
        target = points[4].astype(np.float64)
        origin = target - np.array([0.0, 0.0, 30.0])
        resp = client.post(
            f"/layouts/{layout_id}/pick",
            json={
                "ray": {"origin": origin.tolist(), "direction": [0.0, 0.0, 1.0]},
                "angular_radius": 0.02,
            },
        )
        assert resp.status_code == 200
        picked = resp.json()["record_id"]
        assert picked is not None

        resp = client.post(
            f"/layouts/{layout_id}/select",
            json={"center": target.tolist(), "radius": 0.01},
        )
        ids = resp.json()["record_ids"]
        assert picked in ids

        resp = client.post(
            f"/projects/{pid}/annotations", json={"record_ids": ids, "label": "Sports"}
        )
        body = resp.json()
        assert body["revision"] == 1
        assert body["changed"] == len(ids)

        export = client.get(f"/projects/{pid}/annotations/export?format=csv").text
        assert "Sports" in export

    def test_pick_miss_returns_null(self, tmp_path):
        client, pid, layout_id = self._setup(tmp_path)
        resp = client.post(
            f"/layouts/{layout_id}/pick",
            json={
                "ray": {"origin": [9999.0, 9999.0, 9999.0], "direction": [0.0, 0.0, 1.0]},
                "angular_radius": 0.001,
            },
        )
        assert resp.json()["record_id"] is None

    def test_preview(self, tmp_path):
        client, pid, layout_id = self._setup(tmp_path)
        state = None
        listing = client.get("/projects").json()
        assert listing
        resp = client.get(f"/projects/{pid}/records/r00003/preview")
        assert resp.status_code == 200
        assert resp.json() == {"modality": "text", "payload": "text 3"}

    def test_eval_job_and_report(self, tmp_path):
        client, app = make_client(tmp_path)
        pid = make_project(client, dim=6, schema=("a", "b", "c"))
        client.post(
            f"/projects/{pid}/records",
            content=ndjson_body(90, 6, labels=["a", "b", "c"]),
            headers={"content-type": "application/x-ndjson"},
        )
        resp = client.post(
            f"/projects/{pid}/eval",
            json={"k_eval": 10, "reducers": [{"reducer": "pca", "out_dim": 2}]},
        )
        ticket = wait_job(client, resp.json()["job_id"])
        assert ticket["state"] == "done", ticket
        report = client.get(f"/reports/{ticket['result_ref']}").json()
        assert report["rows"][0]["method"] == "full_dim"
        assert report["rows"][1]["method"] == "pca"

    def test_eval_without_labels_fails(self, tmp_path):
        client, _ = make_client(tmp_path)
        pid = make_project(client)
        client.post(
            f"/projects/{pid}/records",
            content=ndjson_body(10, 6),
            headers={"content-type": "application/x-ndjson"},
        )
        resp = client.post(f"/projects/{pid}/eval", json={"k_eval": 5, "reducers": []})
        ticket = wait_job(client, resp.json()["job_id"])
        assert ticket["state"] == "failed"
        assert "ground-truth" in ticket["error"]


class TestAtomicity:
    def test_failed_requests_leave_store_bytes_identical(self, tmp_path):
        client, app = make_client(tmp_path)
        pid = make_project(client, dim=4)
        client.post(
            f"/projects/{pid}/records",
            content=ndjson_body(5, 4),
            headers={"content-type": "application/x-ndjson"},
        )
        store: ProjectStore = app.state.store
        before = store.checksum()

        dup = '{"id":"r00000","vector":[1,2,3,4]}\n'
        assert (
            client.post(
                f"/projects/{pid}/records",
                content=dup.encode(),
                headers={"content-type": "application/x-ndjson"},
            ).status_code
            == 400
        )
        bad_dim = '{"id":"zz","vector":[1,2]}\n'
        assert (
            client.post(
                f"/projects/{pid}/records",
                content=bad_dim.encode(),
                headers={"content-type": "application/x-ndjson"},
            ).status_code
            == 400
        )
        nan = '{"id":"nn","vector":[1,2,3,null]}\n'
        resp = client.post(
            f"/projects/{pid}/records",
            content=nan.encode(),
            headers={"content-type": "application/x-ndjson"},
        )
        assert resp.status_code == 400
        assert (
            client.post(
                f"/projects/{pid}/annotations",
                json={"record_ids": ["ghost"], "label": "a"},
            ).status_code
            == 404
        )
        assert (
            client.post(
                f"/projects/{pid}/annotations", json={"record_ids": [], "label": "a"}
            ).status_code
            == 400
        )
        assert store.checksum() == before


class TestDurability:
    def test_restart_preserves_everything(self, tmp_path):
        client, app = make_client(tmp_path)
        pid = make_project(client, dim=6, schema=("a", "b"))
        client.post(
            f"/projects/{pid}/records",
            content=ndjson_body(200, 6),
            headers={"content-type": "application/x-ndjson"},
        )
        ids = [f"r{i:05d}" for i in range(0, 200, 3)]
        client.post(f"/projects/{pid}/annotations", json={"record_ids": ids, "label": "b"})
        layout_id = fit_layout(client, pid, reducer="pca", out_dim=2)

        export_csv = client.get(f"/projects/{pid}/annotations/export?format=csv").content
        export_nd = client.get(f"/projects/{pid}/annotations/export?format=ndjson").content
        points = client.get(f"/layouts/{layout_id}/points").content
        listing = client.get("/projects").content

        client2, _ = make_client(tmp_path)
        assert client2.get("/projects").content == listing
        assert client2.get(f"/projects/{pid}/annotations/export?format=csv").content == export_csv
        assert client2.get(f"/projects/{pid}/annotations/export?format=ndjson").content == export_nd
        assert client2.get(f"/layouts/{layout_id}/points").content == points
