"""HTTP service exposing projects, layouts, queries, selection, and evaluation.

A single process owns the store; request handlers run in the server's worker
threads with per-project write serialization inherited from the store. Layout
fits and evaluation reports run as background jobs polled via /jobs/{id}.
"""

from __future__ import annotations

import logging
import os
import uuid
from contextlib import asynccontextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
from fastapi import FastAPI, Query, Request, Response
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import evaluation, formats, query as query_mod, selection
from .errors import (
    AlreadyExists,
    EngineError,
    InvalidArgument,
    JobConflict,
    ProviderError,
    ProviderTimeout,
    StoreCorrupt,
    UnknownLayout,
    UnknownProject,
    UnknownRecord,
    UnknownReducer,
    Unsupported,
)
from .jobs import JobManager
from .model import Modality
from .reducers import ReducerSpec
from .store import ProjectStore

log = logging.getLogger("embedscope.service")

_NOT_FOUND = (UnknownProject, UnknownRecord, UnknownLayout, UnknownReducer)
_CONFLICT = (AlreadyExists, JobConflict)


@dataclass
class Config:
    data_dir: str
    port: int = 8000
    host: str = "127.0.0.1"
    provider_url: str | None = None
    provider_timeout_s: float = 10.0
    log_level: str = "info"
    ui_dir: str | None = None
    workers: int = 4
    extra: dict[str, Any] = field(default_factory=dict)

    @classmethod
    def from_env(cls, **overrides) -> "Config":
        base = {
            "data_dir": os.environ.get("DATA_DIR", "./data"),
            "port": int(os.environ.get("PORT", "8000")),
            "provider_url": os.environ.get("PROVIDER_URL") or None,
            "log_level": os.environ.get("LOG_LEVEL", "info"),
            "ui_dir": os.environ.get("UI_DIR") or None,
        }
        base.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**base)


class CreateProjectBody(BaseModel):
    name: str
    dim: int
    label_schema: list[str]


class LayoutBody(BaseModel):
    reducer: str
    out_dim: int = 3
    params: dict = {}
    seed: int = 0


class QueryBody(BaseModel):
    provider: str = "builtin"
    modality: str = "text"
    payload: str
    k: int = 10


class RayBody(BaseModel):
    origin: list[float]
    direction: list[float]


class PickBody(BaseModel):
    ray: RayBody
    angular_radius: float


class Pick2DBody(BaseModel):
    point: list[float]
    pick_radius: float


class SelectBody(BaseModel):
    center: list[float]
    radius: float


class AnnotateBody(BaseModel):
    record_ids: list[str]
    label: int | str


class EvalBody(BaseModel):
    space: str = "full_dim"
    k_eval: int = 100
    reducers: list[LayoutBody] = []


def _http_status(exc: EngineError) -> int:
    if isinstance(exc, _NOT_FOUND):
        return 404
    if isinstance(exc, _CONFLICT):
        return 409
    if isinstance(exc, ProviderTimeout):
        return 504
    if isinstance(exc, ProviderError):
        return 502
    if isinstance(exc, StoreCorrupt):
        return 500
    return 400


def create_app(config: Config) -> FastAPI:
    store = ProjectStore(config.data_dir)
    jobs = JobManager(workers=config.workers)
    report_owner: dict[str, str] = {}

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        jobs.shutdown()
        store.flush()

    app = FastAPI(title="embedscope", lifespan=lifespan)
    app.state.store = store
    app.state.jobs = jobs
    app.state.config = config

    @app.exception_handler(EngineError)
    async def engine_error_handler(_request: Request, exc: EngineError):
        return JSONResponse(
            status_code=_http_status(exc),
            content={"error": type(exc).__name__, "message": str(exc)},
        )

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.post("/projects")
    def create_project(body: CreateProjectBody):
        project = store.create_project(body.name, body.dim, body.label_schema)
        return {"project_id": project.project_id}

    @app.get("/projects")
    def list_projects():
        return [
            {
                "project_id": p.project_id,
                "name": p.name,
                "dim": p.dim,
                "label_schema": list(p.label_schema),
                "revision": p.revision,
                "records": len(store.state(p.project_id).records),
                "created_at": p.created_at,
            }
            for p in store.list_projects()
        ]

    @app.post("/projects/{project_id}/records")
    async def ingest_records(project_id: str, request: Request):
        pid = store.resolve(project_id)
        body = await request.body()
        content_type = request.headers.get("content-type", "").split(";")[0].strip()
        if content_type in ("application/octet-stream", "application/x-spwk"):
            rows = formats.parse_spwk(body)
        elif content_type in ("application/x-ndjson", "application/ndjson", "text/plain"):
            rows = formats.parse_ndjson(body)
        else:
            rows = formats.sniff_ingest(body)
        count = store.ingest(pid, rows)
        return {"count": count}

    @app.post("/projects/{project_id}/layouts")
    def fit_layout(project_id: str, body: LayoutBody):
        pid = store.resolve(project_id)
        spec = ReducerSpec(name=body.reducer, out_dim=body.out_dim, params=body.params, seed=body.seed)
        if spec.out_dim not in (2, 3):
            raise InvalidArgument(f"out_dim must be 2 or 3, got {spec.out_dim}")
        ticket = jobs.submit(
            "fit_layout",
            lambda: store.fit_layout(pid, spec).layout_id,
            exclusive_key=f"fit:{pid}",
        )
        return {"job_id": ticket.job_id}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        return jobs.get(job_id).as_dict()

    @app.get("/layouts/{layout_id}/points")
    def layout_points(layout_id: str):
        _, layout = store.get_layout(layout_id)
        return Response(
            content=formats.encode_spwp(layout.coords),
            media_type="application/octet-stream",
        )

    @app.get("/layouts/{layout_id}")
    def layout_info(layout_id: str):
        pid, layout = store.get_layout(layout_id)
        state = store.state(pid)
        labels: dict[str, int] = {}
        for rec in state.records:
            cur = state.current.get(rec.record_id)
            if cur is not None:
                labels[rec.record_id] = cur.label
        return {
            "layout_id": layout.layout_id,
            "project_id": pid,
            "reducer_name": layout.reducer_name,
            "out_dim": layout.out_dim,
            "count": layout.count,
            "record_ids": [r.record_id for r in state.records],
            "labels": labels,
            "label_schema": list(state.project.label_schema),
        }

    def _provider_for(pid: str, name: str):
        project = store.project(pid)
        if name in ("builtin", "builtin_text_hash"):
            return None
        if name in ("remote", "remote_http"):
            if not config.provider_url:
                raise InvalidArgument("no remote provider configured (set PROVIDER_URL)")
            return query_mod.RemoteProvider(
                base_url=config.provider_url,
                dim=project.dim,
                timeout_s=config.provider_timeout_s,
            )
        raise InvalidArgument(f"unknown provider {name!r}")

    @app.post("/layouts/{layout_id}/query")
    def layout_query(layout_id: str, body: QueryBody):
        pid, layout = store.get_layout(layout_id)
        state = store.state(pid)
        provider = _provider_for(pid, body.provider)
        if provider is None:
            if body.modality != Modality.TEXT.value:
                raise Unsupported("the builtin provider only embeds text")
            vector = query_mod.embed_text_builtin(body.payload, state.project.dim)
            provider_name = "builtin_text_hash"
        else:
            vector = provider.embed(body.modality, body.payload)
            provider_name = provider.name
        fitted = store.fitted_reducer(layout.layout_id)
        result = query_mod.run_query(
            vector,
            state.matrix.data,
            [r.record_id for r in state.records],
            fitted,
            body.k,
            provider_name,
            body.payload,
        )
        return {
            "position": list(result.position) if result.position is not None else None,
            "neighbors": [
                {"record_id": rid, "distance": dist} for rid, dist in result.neighbors
            ],
            "provider": result.provider,
            "query_echo": result.query_echo,
        }

    @app.post("/layouts/{layout_id}/pick")
    def layout_pick(layout_id: str, body: PickBody):
        pid, layout = store.get_layout(layout_id)
        state = store.state(pid)
        ray = selection.Ray(origin=tuple(body.ray.origin), direction=tuple(body.ray.direction))
        rid = selection.pick(layout, ray, body.angular_radius, [r.record_id for r in state.records])
        return {"record_id": rid}

    @app.post("/layouts/{layout_id}/pick2d")
    def layout_pick2d(layout_id: str, body: Pick2DBody):
        pid, layout = store.get_layout(layout_id)
        state = store.state(pid)
        rid = selection.pick2d(
            layout, body.point, body.pick_radius, [r.record_id for r in state.records]
        )
        return {"record_id": rid}

    @app.post("/layouts/{layout_id}/select")
    def layout_select(layout_id: str, body: SelectBody):
        pid, layout = store.get_layout(layout_id)
        state = store.state(pid)
        selector = selection.SphereSelector(center=tuple(body.center), radius=body.radius)
        ids = selection.select_sphere(layout, selector, [r.record_id for r in state.records])
        return {"record_ids": ids}

    @app.post("/projects/{project_id}/annotations")
    def annotate(project_id: str, body: AnnotateBody):
        pid = store.resolve(project_id)
        revision, changed = store.apply_annotation(pid, body.record_ids, body.label)
        return {"revision": revision, "changed": changed}

    @app.get("/projects/{project_id}/annotations/export")
    def export_annotations(project_id: str, format: str = Query("csv")):
        pid = store.resolve(project_id)
        data = store.export_annotations(pid, format)
        media = "text/csv" if format == "csv" else "application/x-ndjson"
        return Response(content=data, media_type=media)

    @app.post("/projects/{project_id}/eval")
    def eval_project(project_id: str, body: EvalBody):
        pid = store.resolve(project_id)
        specs = [
            ReducerSpec(name=r.reducer, out_dim=r.out_dim, params=r.params, seed=r.seed)
            for r in body.reducers
        ]
        if body.space not in ("full_dim", "layout"):
            raise InvalidArgument(f"unknown space {body.space!r}")
        k_eval = body.k_eval

        def work() -> str:
            state = store.state(pid)
            labeled = [r for r in state.records if r.label_gt is not None and not r.is_foreign]
            if not labeled:
                raise InvalidArgument("project has no ground-truth labels to evaluate")
            x = state.matrix.data[[r.ingest_order for r in labeled]]
            y = [state.project.label_schema[r.label_gt] for r in labeled]
            report = evaluation.layout_quality_report(x, y, specs, k_eval=k_eval)
            report_id = uuid.uuid4().hex[:12]
            store.save_report(pid, report_id, report.to_json(), report.to_csv())
            report_owner[report_id] = pid
            return report_id

        ticket = jobs.submit("eval_report", work)
        return {"job_id": ticket.job_id}

    @app.get("/reports/{report_id}")
    def get_report(report_id: str):
        pid = report_owner.get(report_id)
        if pid is None:
            for project in store.list_projects():
                path = (
                    Path(config.data_dir)
                    / "projects"
                    / project.project_id
                    / "reports"
                    / f"{report_id}.json"
                )
                if path.exists():
                    pid = project.project_id
                    break
        if pid is None:
            raise UnknownLayout(f"no report {report_id!r}")
        return store.load_report(pid, report_id)

    @app.get("/projects/{project_id}/records/{record_id}/preview")
    def preview(project_id: str, record_id: str):
        pid = store.resolve(project_id)
        rec = store.state(pid).record_by_id(record_id)
        return {"modality": rec.modality.value, "payload": rec.payload}

    if config.ui_dir and Path(config.ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=config.ui_dir, html=True), name="ui")

    return app


def serve(config: Config) -> None:
    """Run the service until interrupted; raises on an occupied port."""
    import uvicorn

    logging.basicConfig(level=config.log_level.upper())
    app = create_app(config)
    uvicorn.run(app, host=config.host, port=config.port, log_level=config.log_level)
