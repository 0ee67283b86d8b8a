"""Wire and file formats: NDJSON ingestion, SPWK binary ingestion, CSV/NDJSON
annotation export, and the SPWP layout point stream."""

from __future__ import annotations

import csv
import io
import json
import struct
from typing import Iterable, Mapping, Sequence

import numpy as np

from .errors import FormatError, UnsupportedFormat
from .model import CurrentLabel, IngestRow, Modality, Project, Record

SPWK_MAGIC = b"SPWK"
SPWK_VERSION = 1
SPWP_MAGIC = b"SPWP"

_MODALITIES = {m.value for m in Modality}


def _row_from_obj(obj: Mapping, where: str) -> IngestRow:
    if not isinstance(obj, Mapping):
        raise FormatError(f"{where}: expected a JSON object, got {type(obj).__name__}")
    try:
        record_id = obj["id"]
    except KeyError:
        raise FormatError(f"{where}: missing 'id'") from None
    if not isinstance(record_id, str) or not record_id:
        raise FormatError(f"{where}: 'id' must be a non-empty string")
    label = obj.get("label")
    if label is not None and not isinstance(label, str):
        raise FormatError(f"{where}: 'label' must be a string when present")
    modality = obj.get("modality", "text")
    if modality not in _MODALITIES:
        raise FormatError(f"{where}: unknown modality {modality!r}")
    payload = obj.get("payload", "")
    if not isinstance(payload, str):
        raise FormatError(f"{where}: 'payload' must be a string")
    vector = obj.get("vector")
    return IngestRow(
        record_id=record_id,
        vector=vector if vector is not None else (),
        label=label,
        modality=Modality(modality),
        payload=payload,
    )


def parse_ndjson(data: bytes | str) -> list[IngestRow]:
    """Parse ingestion NDJSON: one record object per non-blank line."""
    text = data.decode("utf-8") if isinstance(data, bytes) else data
    rows: list[IngestRow] = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"line {lineno}: invalid JSON ({exc.msg})") from None
        row = _row_from_obj(obj, f"line {lineno}")
        if not isinstance(row.vector, (list, tuple)) or not row.vector:
            raise FormatError(f"line {lineno}: 'vector' must be a non-empty array")
        rows.append(row)
    return rows


def _meta_obj(row_id: str, label: str | None, modality: str, payload: str) -> dict:
    obj: dict = {"id": row_id}
    if label is not None:
        obj["label"] = label
    obj["modality"] = modality
    obj["payload"] = payload
    return obj


def parse_spwk(data: bytes) -> list[IngestRow]:
    """Parse the SPWK binary ingestion container."""
    if len(data) < 20:
        raise FormatError("SPWK payload shorter than fixed header")
    if data[:4] != SPWK_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {SPWK_MAGIC!r}")
    version, dim = struct.unpack_from("<II", data, 4)
    (count,) = struct.unpack_from("<Q", data, 12)
    if version != SPWK_VERSION:
        raise FormatError(f"unsupported SPWK version {version}")
    vec_bytes = count * dim * 4
    off = 20
    if len(data) < off + vec_bytes + 8:
        raise FormatError("SPWK payload truncated")
    vectors = np.frombuffer(data, dtype="<f4", count=count * dim, offset=off).reshape(count, dim)
    off += vec_bytes
    (meta_len,) = struct.unpack_from("<Q", data, off)
    off += 8
    if len(data) < off + meta_len:
        raise FormatError("SPWK metadata truncated")
    try:
        meta = json.loads(data[off : off + meta_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"SPWK metadata is not valid JSON: {exc}") from None
    if not isinstance(meta, list) or len(meta) != count:
        raise FormatError(f"SPWK metadata must be an array of {count} objects")
    rows = []
    for i, obj in enumerate(meta):
        row = _row_from_obj(obj, f"record {i}")
        rows.append(
            IngestRow(
                record_id=row.record_id,
                vector=vectors[i],
                label=row.label,
                modality=row.modality,
                payload=row.payload,
            )
        )
    return rows


def write_spwk(rows: Sequence[IngestRow], dim: int) -> bytes:
    """Encode ingestion rows as SPWK bytes (canonical metadata key order)."""
    vectors = np.asarray([np.asarray(r.vector, dtype=np.float32) for r in rows], dtype=np.float32)
    if rows and vectors.shape[1] != dim:
        raise FormatError(f"vector dim {vectors.shape[1]} != declared dim {dim}")
    meta = [_meta_obj(r.record_id, r.label, r.modality.value, r.payload) for r in rows]
    meta_bytes = json.dumps(meta, separators=(",", ":"), ensure_ascii=False).encode("utf-8")
    out = io.BytesIO()
    out.write(SPWK_MAGIC)
    out.write(struct.pack("<II", SPWK_VERSION, dim))
    out.write(struct.pack("<Q", len(rows)))
    if rows:
        out.write(vectors.astype("<f4").tobytes(order="C"))
    out.write(struct.pack("<Q", len(meta_bytes)))
    out.write(meta_bytes)
    return out.getvalue()


def sniff_ingest(data: bytes) -> list[IngestRow]:
    """Dispatch on the SPWK magic, falling back to NDJSON."""
    if data[:4] == SPWK_MAGIC:
        return parse_spwk(data)
    return parse_ndjson(data)


def encode_spwp(coords: np.ndarray) -> bytes:
    """Encode layout coordinates as the SPWP point stream."""
    coords = np.asarray(coords, dtype="<f4")
    if coords.ndim != 2:
        raise FormatError(f"coords must be 2-D, got shape {coords.shape}")
    count, out_dim = coords.shape
    return SPWP_MAGIC + struct.pack("<IQ", out_dim, count) + coords.tobytes(order="C")


def decode_spwp(data: bytes) -> np.ndarray:
    """Decode an SPWP point stream back into an N×out_dim float32 array."""
    if len(data) < 16:
        raise FormatError("SPWP payload shorter than fixed header")
    if data[:4] != SPWP_MAGIC:
        raise FormatError(f"bad magic {data[:4]!r}, expected {SPWP_MAGIC!r}")
    out_dim, count = struct.unpack_from("<IQ", data, 4)
    expect = 16 + count * out_dim * 4
    if len(data) != expect:
        raise FormatError(f"SPWP payload is {len(data)} bytes, expected {expect}")
    return np.frombuffer(data, dtype="<f4", count=count * out_dim, offset=16).reshape(count, out_dim)


def export_csv(
    project: Project,
    records: Sequence[Record],
    current: Mapping[str, CurrentLabel],
) -> bytes:
    """CSV of currently annotated records, ordered by record_id."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["record_id", "label", "revision", "source"])
    by_id = {r.record_id: r for r in records}
    for rid in sorted(current):
        if rid not in by_id:
            continue
        cur = current[rid]
        writer.writerow([rid, project.label_schema[cur.label], cur.revision, cur.source.value])
    return buf.getvalue().encode("utf-8")


def export_ndjson(
    project: Project,
    records: Sequence[Record],
    matrix_rows: np.ndarray,
    current: Mapping[str, CurrentLabel],
) -> bytes:
    """NDJSON mirror of the ingestion schema with labels from current annotations."""
    lines = []
    order = sorted(range(len(records)), key=lambda i: records[i].record_id)
    for i in order:
        rec = records[i]
        cur = current.get(rec.record_id)
        obj: dict = {"id": rec.record_id, "vector": [float(v) for v in matrix_rows[rec.ingest_order]]}
        if cur is not None:
            obj["label"] = project.label_schema[cur.label]
        obj["modality"] = rec.modality.value
        obj["payload"] = rec.payload
        lines.append(json.dumps(obj, separators=(",", ":"), ensure_ascii=False))
    return ("\n".join(lines) + "\n" if lines else "").encode("utf-8")


def export_annotations_bytes(
    fmt: str,
    project: Project,
    records: Sequence[Record],
    matrix_rows: np.ndarray,
    current: Mapping[str, CurrentLabel],
) -> bytes:
    if fmt == "csv":
        return export_csv(project, records, current)
    if fmt == "ndjson":
        return export_ndjson(project, records, matrix_rows, current)
    raise UnsupportedFormat(f"unknown export format {fmt!r} (expected csv or ndjson)")
