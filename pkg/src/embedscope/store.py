"""Engine-owned persistent store for projects, embeddings, layouts, annotations.

Layout on disk (one directory per project under <data_dir>/projects/):

    meta.json            project header, record metadata, layout index
    embeddings.npy       float32 N×D matrix
    annotations.ndjson   append-only annotation history, one event per line
    layouts/<id>/        meta.json + coords.npy + reducer.spwr
    reports/<id>.json    evaluation reports (plus .csv sibling)

Every mutation validates fully in memory first, stages new file contents, and
renames meta.json last; meta.json is the commit point, so a failed request
leaves the observable store state untouched. Writes are serialized per
project; readers operate on immutable snapshots.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import reducers
from .errors import (
    AlreadyExists,
    DimMismatch,
    DuplicateId,
    InvalidArgument,
    InvalidDim,
    InvalidSchema,
    NonFinite,
    StoreCorrupt,
    UnknownLayout,
    UnknownProject,
    UnknownRecord,
)
from .formats import export_annotations_bytes
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
    fold_annotations,
)
from .reducers import FittedReducer, ReducerSpec


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


@dataclass(frozen=True)
class ProjectState:
    """Immutable snapshot of one project; replaced wholesale on mutation."""

    project: Project
    records: tuple[Record, ...]
    matrix: EmbeddingMatrix
    history: tuple[Annotation, ...]
    current: Mapping[str, CurrentLabel]
    layouts: Mapping[str, Layout]
    layout_keys: Mapping[str, str] = field(default_factory=dict)

    def record_by_id(self, record_id: str) -> Record:
        rec = self._index().get(record_id)
        if rec is None:
            raise UnknownRecord(f"no record {record_id!r}")
        return rec

    def _index(self) -> dict[str, Record]:
        idx = getattr(self, "_idx", None)
        if idx is None:
            idx = {r.record_id: r for r in self.records}
            object.__setattr__(self, "_idx", idx)
        return idx


def _atomic_write(path: Path, data: bytes) -> None:
    tmp = path.with_name(f".{path.name}.tmp-{uuid.uuid4().hex[:8]}")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _record_to_json(rec: Record) -> dict:
    return {
        "id": rec.record_id,
        "order": rec.ingest_order,
        "modality": rec.modality.value,
        "payload": rec.payload,
        "label_gt": rec.label_gt,
        "is_foreign": rec.is_foreign,
    }


def _record_from_json(obj: Mapping) -> Record:
    return Record(
        record_id=obj["id"],
        ingest_order=int(obj["order"]),
        modality=Modality(obj.get("modality", "text")),
        payload=obj.get("payload", ""),
        label_gt=obj.get("label_gt"),
        is_foreign=bool(obj.get("is_foreign", False)),
    )


class ProjectStore:
    """Thread-safe project store rooted at a data directory."""

    def __init__(self, data_dir: str | Path):
        self.root = Path(data_dir)
        self.projects_dir = self.root / "projects"
        self.projects_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._states: dict[str, ProjectState] = {}
        self._names: dict[str, str] = {}
        self._layout_owner: dict[str, str] = {}
        self._fitted_cache: dict[str, FittedReducer] = {}
        self._load_all()

    # ------------------------------------------------------------------ load

    def _load_all(self) -> None:
        for proj_dir in sorted(self.projects_dir.iterdir() if self.projects_dir.exists() else []):
            if not proj_dir.is_dir():
                continue
            meta_path = proj_dir / "meta.json"
            if not meta_path.exists():
                continue
            state = self._load_project(proj_dir, meta_path)
            self._states[state.project.project_id] = state
            self._names[state.project.name] = state.project.project_id
            for lid in state.layouts:
                self._layout_owner[lid] = state.project.project_id

    def _load_project(self, proj_dir: Path, meta_path: Path) -> ProjectState:
        try:
            meta = json.loads(meta_path.read_text("utf-8"))
        except (json.JSONDecodeError, UnicodeDecodeError):
            raise StoreCorrupt("unreadable project metadata", str(meta_path)) from None
        try:
            project = Project(
                project_id=meta["project_id"],
                name=meta["name"],
                created_at=meta["created_at"],
                dim=int(meta["dim"]),
                label_schema=tuple(meta["label_schema"]),
                revision=int(meta["revision"]),
            )
            records = tuple(_record_from_json(o) for o in meta["records"])
            layout_keys = dict(meta.get("layout_keys", {}))
        except (KeyError, TypeError, ValueError):
            raise StoreCorrupt("malformed project metadata", str(meta_path)) from None

        emb_path = proj_dir / "embeddings.npy"
        if records:
            if not emb_path.exists():
                raise StoreCorrupt("missing embeddings file", str(emb_path))
            try:
                data = np.load(emb_path)
            except Exception:
                raise StoreCorrupt("unreadable embeddings file", str(emb_path)) from None
            if data.shape[0] < len(records) or data.shape[1] != project.dim:
                raise StoreCorrupt("embeddings shape disagrees with metadata", str(emb_path))
            matrix = EmbeddingMatrix(data[: len(records)])
        else:
            matrix = EmbeddingMatrix.empty(project.dim)

        history: list[Annotation] = []
        ann_path = proj_dir / "annotations.ndjson"
        if ann_path.exists():
            try:
                for line in ann_path.read_text("utf-8").splitlines():
                    if not line.strip():
                        continue
                    obj = json.loads(line)
                    if int(obj["revision"]) > project.revision:
                        continue
                    history.append(
                        Annotation(
                            record_ids=tuple(obj["record_ids"]),
                            label=int(obj["label"]),
                            revision=int(obj["revision"]),
                            source=AnnotationSource(obj["source"]),
                            created_at=obj["created_at"],
                        )
                    )
            except (json.JSONDecodeError, KeyError, ValueError):
                raise StoreCorrupt("malformed annotation history", str(ann_path)) from None

        layouts: dict[str, Layout] = {}
        for lid in layout_keys.values():
            layout = self._load_layout(proj_dir, lid)
            layouts[layout.layout_id] = layout

        return ProjectState(
            project=project,
            records=records,
            matrix=matrix,
            history=tuple(history),
            current=fold_annotations(history),
            layouts=layouts,
            layout_keys=layout_keys,
        )

    def _load_layout(self, proj_dir: Path, layout_id: str) -> Layout:
        ldir = proj_dir / "layouts" / layout_id
        meta_path = ldir / "meta.json"
        try:
            meta = json.loads(meta_path.read_text("utf-8"))
            coords = np.load(ldir / "coords.npy")
            return Layout(
                layout_id=meta["layout_id"],
                reducer_name=meta["reducer_name"],
                out_dim=int(meta["out_dim"]),
                coords=coords,
                params=meta.get("params", {}),
                seed=int(meta.get("seed", 0)),
                fitted_at=meta["fitted_at"],
                train_fingerprint=meta.get("train_fingerprint", ""),
            )
        except FileNotFoundError:
            raise StoreCorrupt("missing layout files", str(ldir)) from None
        except (json.JSONDecodeError, KeyError, ValueError):
            raise StoreCorrupt("malformed layout metadata", str(meta_path)) from None

    # ----------------------------------------------------------------- write

    def _proj_dir(self, project_id: str) -> Path:
        return self.projects_dir / project_id

    def _persist(self, state: ProjectState, write_matrix: bool, write_history: bool) -> None:
        proj_dir = self._proj_dir(state.project.project_id)
        proj_dir.mkdir(parents=True, exist_ok=True)
        if write_matrix:
            tmp = proj_dir / f".embeddings.tmp-{uuid.uuid4().hex[:8]}.npy"
            np.save(tmp, state.matrix.data)
            os.replace(tmp, proj_dir / "embeddings.npy")
        if write_history:
            lines = [
                json.dumps(
                    {
                        "revision": a.revision,
                        "label": a.label,
                        "record_ids": list(a.record_ids),
                        "source": a.source.value,
                        "created_at": a.created_at,
                    },
                    separators=(",", ":"),
                )
                for a in state.history
            ]
            _atomic_write(proj_dir / "annotations.ndjson", ("\n".join(lines) + "\n" if lines else "").encode())
        meta = {
            "project_id": state.project.project_id,
            "name": state.project.name,
            "created_at": state.project.created_at,
            "dim": state.project.dim,
            "label_schema": list(state.project.label_schema),
            "revision": state.project.revision,
            "records": [_record_to_json(r) for r in state.records],
            "layout_keys": dict(state.layout_keys),
        }
        _atomic_write(proj_dir / "meta.json", json.dumps(meta, separators=(",", ":")).encode())

    def _persist_layout(self, project_id: str, layout: Layout, fitted: FittedReducer | None) -> None:
        ldir = self._proj_dir(project_id) / "layouts" / layout.layout_id
        staging = ldir.with_name(f".{layout.layout_id}.staging-{uuid.uuid4().hex[:8]}")
        staging.mkdir(parents=True)
        np.save(staging / "coords.npy", layout.coords)
        if fitted is not None:
            (staging / "reducer.spwr").write_bytes(reducers.serialize_fitted(fitted))
        meta = {
            "layout_id": layout.layout_id,
            "reducer_name": layout.reducer_name,
            "out_dim": layout.out_dim,
            "params": dict(layout.params),
            "seed": layout.seed,
            "fitted_at": layout.fitted_at,
            "train_fingerprint": layout.train_fingerprint,
        }
        (staging / "meta.json").write_text(json.dumps(meta, separators=(",", ":")), "utf-8")
        ldir.parent.mkdir(parents=True, exist_ok=True)
        if ldir.exists():
            for child in staging.iterdir():
                child.unlink()
            staging.rmdir()
        else:
            os.rename(staging, ldir)

    # ------------------------------------------------------------- lifecycle

    def create_project(self, name: str, dim: int, label_schema: Sequence[str]) -> Project:
        if not isinstance(name, str) or not name:
            raise InvalidArgument("project name must be a non-empty string")
        if dim < 1:
            raise InvalidDim(f"dim must be >= 1, got {dim}")
        if not label_schema:
            raise InvalidSchema("label schema must be non-empty")
        with self._lock:
            if name in self._names:
                raise AlreadyExists(f"project named {name!r} already exists")
            project = Project(
                project_id=uuid.uuid4().hex[:12],
                name=name,
                created_at=_now_iso(),
                dim=dim,
                label_schema=tuple(label_schema),
                revision=0,
            )
            state = ProjectState(
                project=project,
                records=(),
                matrix=EmbeddingMatrix.empty(dim),
                history=(),
                current={},
                layouts={},
                layout_keys={},
            )
            self._persist(state, write_matrix=False, write_history=True)
            self._states[project.project_id] = state
            self._names[name] = project.project_id
            return project

    def resolve(self, id_or_name: str) -> str:
        if id_or_name in self._states:
            return id_or_name
        pid = self._names.get(id_or_name)
        if pid is None:
            raise UnknownProject(f"no project {id_or_name!r}")
        return pid

    def state(self, project_id: str) -> ProjectState:
        try:
            return self._states[project_id]
        except KeyError:
            raise UnknownProject(f"no project {project_id!r}") from None

    def project(self, project_id: str) -> Project:
        return self.state(project_id).project

    def list_projects(self) -> list[Project]:
        return sorted((s.project for s in self._states.values()), key=lambda p: p.created_at)

    # ---------------------------------------------------------------- ingest

    def ingest(self, project_id: str, rows: Iterable[IngestRow]) -> int:
        rows = list(rows)
        with self._lock:
            state = self.state(project_id)
            project = state.project
            if not rows:
                return 0
            seen: set[str] = set()
            existing = {r.record_id for r in state.records}
            vectors = np.empty((len(rows), project.dim), dtype=np.float32)
            label_indices: list[int | None] = []
            for i, row in enumerate(rows):
                vec = np.asarray(row.vector, dtype=np.float32)
                if vec.ndim != 1 or vec.shape[0] != project.dim:
                    raise DimMismatch(
                        f"row {i}: vector has dim {vec.shape[0] if vec.ndim == 1 else vec.shape},"
                        f" project dim is {project.dim}",
                        row=i,
                    )
                if not np.all(np.isfinite(vec)):
                    col = int(np.argwhere(~np.isfinite(vec))[0][0])
                    raise NonFinite(f"row {i}: non-finite value at column {col}", row=i, col=col)
                if row.record_id in seen or row.record_id in existing:
                    raise DuplicateId(f"row {i}: record id {row.record_id!r} already exists")
                seen.add(row.record_id)
                vectors[i] = vec
                label_indices.append(
                    project.label_index(row.label) if row.label is not None else None
                )

            base = len(state.records)
            new_records = list(state.records)
            for i, row in enumerate(rows):
                new_records.append(
                    Record(
                        record_id=row.record_id,
                        ingest_order=base + i,
                        modality=row.modality,
                        payload=row.payload,
                        label_gt=label_indices[i],
                        is_foreign=row.is_foreign,
                    )
                )
            matrix = state.matrix.appended(vectors)

            # Labeled rows also seed the annotation history (source=import) so
            # that export -> ingest round-trips reproduce current labels.
            history = list(state.history)
            revision = project.revision
            by_label: dict[int, list[str]] = {}
            for i, row in enumerate(rows):
                if label_indices[i] is not None:
                    by_label.setdefault(label_indices[i], []).append(row.record_id)
            for label in sorted(by_label):
                revision += 1
                history.append(
                    Annotation(
                        record_ids=tuple(by_label[label]),
                        label=label,
                        revision=revision,
                        source=AnnotationSource.IMPORT,
                        created_at=_now_iso(),
                    )
                )

            new_state = ProjectState(
                project=replace(project, revision=revision),
                records=tuple(new_records),
                matrix=matrix,
                history=tuple(history),
                current=fold_annotations(history),
                layouts=state.layouts,
                layout_keys=state.layout_keys,
            )
            self._persist(new_state, write_matrix=True, write_history=bool(by_label))
            self._states[project_id] = new_state
            return len(rows)

    # ------------------------------------------------------------ annotation

    def apply_annotation(
        self,
        project_id: str,
        record_ids: Iterable[str],
        label: int | str,
        source: AnnotationSource = AnnotationSource.SINGLE_PICK,
    ) -> tuple[int, int]:
        """Label a set of records; returns (new revision, count whose label changed)."""
        ids = list(record_ids)
        if not ids:
            raise InvalidArgument("record id set must be non-empty")
        with self._lock:
            state = self.state(project_id)
            label_idx = state.project.label_index(label)
            index = {r.record_id for r in state.records}
            for rid in ids:
                if rid not in index:
                    raise UnknownRecord(f"no record {rid!r}")
            unique_ids = tuple(dict.fromkeys(ids))
            changed = sum(
                1
                for rid in unique_ids
                if state.current.get(rid) is None or state.current[rid].label != label_idx
            )
            revision = state.project.revision + 1
            annotation = Annotation(
                record_ids=unique_ids,
                label=label_idx,
                revision=revision,
                source=source,
                created_at=_now_iso(),
            )
            history = state.history + (annotation,)
            new_state = replace(
                state,
                project=replace(state.project, revision=revision),
                history=history,
                current=fold_annotations(history),
            )
            self._persist(new_state, write_matrix=False, write_history=True)
            self._states[project_id] = new_state
            return revision, changed

    def export_annotations(
        self, project_id: str, fmt: str, include_foreign: bool = False
    ) -> bytes:
        state = self.state(project_id)
        records = [r for r in state.records if include_foreign or not r.is_foreign]
        visible = {r.record_id for r in records}
        current = {rid: cur for rid, cur in state.current.items() if rid in visible}
        return export_annotations_bytes(
            fmt, state.project, records, state.matrix.data, current
        )

    # --------------------------------------------------------------- layouts

    def _layout_cache_key(self, spec: ReducerSpec, fingerprint: str) -> str:
        return f"{spec.name}|{spec.out_dim}|{spec.seed}|{spec.params_json()}|{fingerprint}"

    def fit_layout(self, project_id: str, spec: ReducerSpec) -> Layout:
        """Fit (or return the cached) layout for this reducer spec."""
        if spec.out_dim not in (2, 3):
            raise InvalidDim(f"persisted layouts must have out_dim 2 or 3, got {spec.out_dim}")
        with self._lock:
            state = self.state(project_id)
            key = self._layout_cache_key(spec, state.matrix.fingerprint())
            cached = state.layout_keys.get(key)
            if cached is not None:
                return state.layouts[cached]
        # The fit itself runs outside the store lock; reducers are pure.
        layout, fitted = reducers.fit(state.matrix, spec)
        layout = replace(layout, layout_id=reducers.layout_id_for(spec, layout.train_fingerprint, scope=project_id))
        with self._lock:
            state = self.state(project_id)
            if state.matrix.fingerprint() != layout.train_fingerprint:
                # Records changed while fitting; refit against the new matrix.
                return self.fit_layout(project_id, spec)
            cached = state.layout_keys.get(key)
            if cached is not None:
                return state.layouts[cached]
            self._persist_layout(project_id, layout, fitted)
            layouts = dict(state.layouts)
            layouts[layout.layout_id] = layout
            layout_keys = dict(state.layout_keys)
            layout_keys[key] = layout.layout_id
            new_state = replace(state, layouts=layouts, layout_keys=layout_keys)
            self._persist(new_state, write_matrix=False, write_history=False)
            self._states[project_id] = new_state
            self._layout_owner[layout.layout_id] = project_id
            self._fitted_cache[layout.layout_id] = fitted
            return layout

    def import_layout(self, project_id: str, coords: np.ndarray) -> Layout:
        with self._lock:
            state = self.state(project_id)
            layout = reducers.import_layout(coords, expected_count=len(state.records))
            if layout.layout_id in state.layouts:
                return state.layouts[layout.layout_id]
            self._persist_layout(project_id, layout, None)
            layouts = dict(state.layouts)
            layouts[layout.layout_id] = layout
            layout_keys = dict(state.layout_keys)
            layout_keys[f"import|{layout.train_fingerprint}"] = layout.layout_id
            new_state = replace(state, layouts=layouts, layout_keys=layout_keys)
            self._persist(new_state, write_matrix=False, write_history=False)
            self._states[project_id] = new_state
            self._layout_owner[layout.layout_id] = project_id
            return layout

    def get_layout(self, layout_id: str) -> tuple[str, Layout]:
        owner = self._layout_owner.get(layout_id)
        if owner is None:
            raise UnknownLayout(f"no layout {layout_id!r}")
        return owner, self._states[owner].layouts[layout_id]

    def fitted_reducer(self, layout_id: str) -> FittedReducer | None:
        """Deserialized fit state for a layout, or None for imported layouts."""
        owner, layout = self.get_layout(layout_id)
        if layout.reducer_name == "import":
            return None
        cached = self._fitted_cache.get(layout_id)
        if cached is not None:
            return cached
        blob_path = self._proj_dir(owner) / "layouts" / layout_id / "reducer.spwr"
        if not blob_path.exists():
            raise StoreCorrupt("missing reducer state", str(blob_path))
        fitted = reducers.deserialize_fitted(blob_path.read_bytes())
        self._fitted_cache[layout_id] = fitted
        return fitted

    # --------------------------------------------------------------- reports

    def save_report(self, project_id: str, report_id: str, as_json: bytes, as_csv: bytes) -> None:
        rdir = self._proj_dir(project_id) / "reports"
        rdir.mkdir(parents=True, exist_ok=True)
        _atomic_write(rdir / f"{report_id}.json", as_json)
        _atomic_write(rdir / f"{report_id}.csv", as_csv)

    def load_report(self, project_id: str, report_id: str) -> dict:
        path = self._proj_dir(project_id) / "reports" / f"{report_id}.json"
        if not path.exists():
            raise UnknownLayout(f"no report {report_id!r}")
        return json.loads(path.read_text("utf-8"))

    # ----------------------------------------------------------------- misc

    def checksum(self) -> str:
        """Digest over all persisted store files (staging/temp files excluded)."""
        digest = hashlib.sha256()
        for path in sorted(self.root.rglob("*")):
            name = path.name
            if not path.is_file() or ".tmp-" in name or ".staging-" in name:
                continue
            digest.update(str(path.relative_to(self.root)).encode())
            digest.update(path.read_bytes())
        return digest.hexdigest()

    def flush(self) -> None:
        """Writes are synchronous; kept for lifecycle symmetry."""
