"""HTTP facade: ingest meshes, serve parts, selections, views, exports.

Sessions are content-addressed by the SHA-256 of the uploaded bytes, so
re-uploading a mesh is a no-op. Ingest runs the artifact pipeline in a
background thread; every read endpoint answers only once the session is
ready. Material assignments go through an append-only journal that is
replayed when a session is restored from disk.
"""

from __future__ import annotations

import datetime
import hashlib
import json
import threading
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, PlainTextResponse
from pydantic import BaseModel, ConfigDict, Field

from .encode import ProjectionHead, load_head
from .mesh import face_part_ids
from .pipeline import (
    PipelineConfig,
    PipelineResult,
    export_assignments_obj,
    load_artifacts,
    run_pipeline,
)
from .retrieve import (
    EmbeddingIndex,
    PartNotFoundError,
    SelectionRequest,
    build_index,
    select_group,
)

GEOMETRY_FORMAT = "part-geometry"
VIEW_NAMES = ("isolated", "context", "full")


@dataclass(frozen=True)
class ServiceConfig:
    data_dir: Path
    resolution: int = 512
    candidates: int = 16
    backend: str = "builtin"
    head_checkpoint: Path | None = None
    space: str = "x"
    cors_origins: tuple[str, ...] = ()

    def pipeline_config(self, out_dir: Path) -> PipelineConfig:
        return PipelineConfig(
            out_dir=out_dir,
            resolution=self.resolution,
            candidates=self.candidates,
            backend=self.backend,
            head_checkpoint=self.head_checkpoint,
            space=self.space,
            save_views=True,
        )


@dataclass
class MeshSession:
    mesh_id: str
    status: str = "ingesting"  # ingesting | ready | failed
    reason: str | None = None
    result: PipelineResult | None = None
    index: EmbeddingIndex | None = None
    assignments: dict[int, str] = field(default_factory=dict)
    lock: threading.Lock = field(default_factory=threading.Lock)


def encode_geometry(vertices: np.ndarray, faces: np.ndarray, face_parts: np.ndarray) -> bytes:
    """Binary geometry: 4-byte LE header length, JSON header, raw sections.

    Sections are little-endian and appear in header order: vertices (f32,
    3 per vertex), indices (u32, 3 per face), face part ids (u32, 1 per
    face).
    """
    v = np.ascontiguousarray(vertices, dtype="<f4").reshape(-1)
    idx = np.ascontiguousarray(faces, dtype="<u4").reshape(-1)
    fp = np.ascontiguousarray(face_parts, dtype="<u4").reshape(-1)
    header = {
        "format": GEOMETRY_FORMAT,
        "vertex_count": int(len(v) // 3),
        "face_count": int(len(idx) // 3),
        "sections": [
            {"name": "vertices", "dtype": "f32", "count": int(v.size)},
            {"name": "indices", "dtype": "u32", "count": int(idx.size)},
            {"name": "face_part_ids", "dtype": "u32", "count": int(fp.size)},
        ],
    }
    hb = json.dumps(header).encode("utf-8")
    return len(hb).to_bytes(4, "little") + hb + v.tobytes() + idx.tobytes() + fp.tobytes()


def decode_geometry(data: bytes) -> dict:
    """Inverse of :func:`encode_geometry`; returns header plus numpy sections."""
    hlen = int.from_bytes(data[:4], "little")
    header = json.loads(data[4 : 4 + hlen].decode("utf-8"))
    out = {"header": header}
    offset = 4 + hlen
    dtypes = {"f32": "<f4", "u32": "<u4"}
    for section in header["sections"]:
        count = section["count"]
        dt = np.dtype(dtypes[section["dtype"]])
        arr = np.frombuffer(data, dtype=dt, count=count, offset=offset)
        out[section["name"]] = arr
        offset += count * dt.itemsize
    return out


class _QueryBody(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    query_part_ids: list[int]
    lam: float = Field(alias="lambda")


class _AssignBody(BaseModel):
    part_ids: list[int]
    material: str


class ServiceState:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.sessions: dict[str, MeshSession] = {}
        self.registry_lock = threading.Lock()
        self.head: ProjectionHead | None = None
        if config.head_checkpoint is not None:
            self.head, _ = load_head(config.head_checkpoint)
        Path(config.data_dir).mkdir(parents=True, exist_ok=True)
        self._restore_sessions()

    # -- session lifecycle -------------------------------------------------

    def _mesh_dir(self, mesh_id: str) -> Path:
        return Path(self.config.data_dir) / mesh_id

    def _restore_sessions(self) -> None:
        for child in sorted(Path(self.config.data_dir).iterdir()):
            if not child.is_dir():
                continue
            manifest = child / "manifest.json"
            if not manifest.is_file():
                continue
            try:
                meta = json.loads(manifest.read_text())
                if meta.get("failed_stage"):
                    session = MeshSession(
                        mesh_id=child.name,
                        status="failed",
                        reason=f"stage {meta['failed_stage']} failed on a previous run",
                    )
                else:
                    result = load_artifacts(child)
                    session = MeshSession(mesh_id=child.name, status="ready", result=result)
                    session.index = build_index(
                        child.name,
                        result.groups,
                        result.embeddings,
                        space=self.config.space,
                        head=self.head,
                    )
                    session.assignments = self._replay_journal(child.name)
                self.sessions[child.name] = session
            except Exception as exc:
                self.sessions[child.name] = MeshSession(
                    mesh_id=child.name, status="failed", reason=f"restore failed: {exc}"
                )

    def create_session(self, body: bytes) -> MeshSession:
        mesh_id = hashlib.sha256(body).hexdigest()
        with self.registry_lock:
            if mesh_id in self.sessions:
                return self.sessions[mesh_id]
            session = MeshSession(mesh_id=mesh_id)
            self.sessions[mesh_id] = session
        mesh_dir = self._mesh_dir(mesh_id)
        mesh_dir.mkdir(parents=True, exist_ok=True)
        (mesh_dir / "raw.obj").write_bytes(body)
        thread = threading.Thread(
            target=self._ingest, args=(session, body), daemon=True
        )
        thread.start()
        return session

    def _ingest(self, session: MeshSession, body: bytes) -> None:
        try:
            cfg = self.config.pipeline_config(self._mesh_dir(session.mesh_id))
            result = run_pipeline(body, name=session.mesh_id[:12], cfg=cfg)
            index = build_index(
                session.mesh_id,
                result.groups,
                result.embeddings,
                space=self.config.space,
                head=self.head,
            )
            with session.lock:
                session.result = result
                session.index = index
                session.status = "ready"
        except Exception as exc:
            with session.lock:
                session.status = "failed"
                session.reason = str(exc)

    # -- assignments ---------------------------------------------------------

    def _journal_path(self, mesh_id: str) -> Path:
        return self._mesh_dir(mesh_id) / "journal.jsonl"

    def _replay_journal(self, mesh_id: str) -> dict[int, str]:
        path = self._journal_path(mesh_id)
        assignments: dict[int, str] = {}
        if path.is_file():
            for line in path.read_text().splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                assignments[int(rec["part_id"])] = rec["material"]
        return assignments

    def assign(self, session: MeshSession, part_ids: list[int], material: str) -> dict[int, str]:
        assert session.result is not None
        known = {p.part_id for p in session.result.parts}
        unknown = [pid for pid in part_ids if pid not in known]
        if unknown:
            raise PartNotFoundError(f"unknown part ids {sorted(unknown)}")
        ts = datetime.datetime.now(datetime.timezone.utc).isoformat()
        with session.lock:
            with open(self._journal_path(session.mesh_id), "a") as fh:
                for pid in part_ids:
                    fh.write(
                        json.dumps({"part_id": pid, "material": material, "ts": ts})
                        + "\n"
                    )
            for pid in part_ids:
                session.assignments[pid] = material
            return dict(session.assignments)


def _require(state: ServiceState, mesh_id: str) -> MeshSession:
    session = state.sessions.get(mesh_id)
    if session is None:
        raise HTTPException(status_code=404, detail=f"unknown mesh {mesh_id}")
    return session


def _require_ready(state: ServiceState, mesh_id: str) -> MeshSession:
    session = _require(state, mesh_id)
    if session.status != "ready":
        detail = {"status": session.status}
        if session.reason:
            detail["reason"] = session.reason
        raise HTTPException(status_code=409, detail=detail)
    return session


def create_app(config: ServiceConfig) -> FastAPI:
    state = ServiceState(config)
    app = FastAPI(title="part grouping service")
    app.state.service = state
    if config.cors_origins:
        app.add_middleware(
            CORSMiddleware,
            allow_origins=list(config.cors_origins),
            allow_methods=["GET", "POST"],
            allow_headers=["content-type"],
            expose_headers=["exemplar", "exemplar-part-id"],
        )

    @app.post("/meshes")
    async def create_mesh(request: Request) -> JSONResponse:
        body = await request.body()
        if not body:
            raise HTTPException(status_code=400, detail="empty request body")
        session = state.create_session(body)
        return JSONResponse(
            {"mesh_id": session.mesh_id, "status": session.status}, status_code=202
        )

    @app.get("/meshes/{mesh_id}")
    def mesh_status(mesh_id: str) -> dict:
        session = _require(state, mesh_id)
        payload = {"mesh_id": mesh_id, "status": session.status}
        if session.reason:
            payload["reason"] = session.reason
        if session.status == "ready" and session.result is not None:
            payload["part_count"] = len(session.result.parts)
        return payload

    @app.get("/meshes/{mesh_id}/parts")
    def list_parts(mesh_id: str) -> dict:
        session = _require_ready(state, mesh_id)
        result = session.result
        exemplar_of = result.groups.exemplar_of()
        return {
            "mesh_id": mesh_id,
            "parts": [
                {
                    "part_id": p.part_id,
                    "material_id": p.material_id,
                    "material_name": (
                        result.mesh.material_names[p.material_id]
                        if 0 <= p.material_id < len(result.mesh.material_names)
                        else str(p.material_id)
                    ),
                    "centroid": [float(c) for c in p.centroid],
                    "max_radial_extent": p.max_radial_extent,
                    "vertex_count": p.vertex_count,
                    "face_count": int(len(p.face_ids)),
                    "group_exemplar": exemplar_of[p.part_id],
                }
                for p in result.parts
            ],
        }

    @app.get("/meshes/{mesh_id}/geometry")
    def geometry(mesh_id: str) -> Response:
        session = _require_ready(state, mesh_id)
        result = session.result
        fp = face_part_ids(result.parts, result.mesh.num_faces)
        blob = encode_geometry(result.mesh.vertices, result.mesh.faces, fp)
        return Response(content=blob, media_type="application/octet-stream")

    @app.get("/meshes/{mesh_id}/parts/{part_id}/views/{view}.png")
    def view_image(mesh_id: str, part_id: int, view: str) -> Response:
        if view not in VIEW_NAMES:
            raise HTTPException(status_code=404, detail=f"unknown view {view!r}")
        session = _require_ready(state, mesh_id)
        exemplar_of = session.result.groups.exemplar_of()
        if part_id not in exemplar_of:
            raise HTTPException(status_code=404, detail=f"unknown part {part_id}")
        ex = exemplar_of[part_id]
        png = state._mesh_dir(mesh_id) / "views" / f"part_{ex}_{view}.png"
        if not png.is_file():
            raise HTTPException(status_code=404, detail="view image not rendered")
        return Response(
            content=png.read_bytes(),
            media_type="image/png",
            headers={"exemplar": "true" if ex != part_id else "false",
                     "exemplar-part-id": str(ex)},
        )

    @app.post("/meshes/{mesh_id}/query")
    def query(mesh_id: str, body: _QueryBody) -> dict:
        session = _require_ready(state, mesh_id)
        try:
            request = SelectionRequest(
                query_part_ids=tuple(body.query_part_ids), threshold=body.lam
            )
            selected = select_group(session.index, request)
        except PartNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        except ValueError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {
            "selected": [
                {"part_id": pid, "distance": dist} for pid, dist in selected
            ],
            "lambda": body.lam,
        }

    @app.post("/meshes/{mesh_id}/assignments")
    def assign(mesh_id: str, body: _AssignBody) -> dict:
        session = _require_ready(state, mesh_id)
        if not body.part_ids:
            raise HTTPException(status_code=400, detail="part_ids must be nonempty")
        if not body.material:
            raise HTTPException(status_code=400, detail="material name must be nonempty")
        try:
            assignments = state.assign(session, body.part_ids, body.material)
        except PartNotFoundError as exc:
            raise HTTPException(status_code=404, detail=str(exc)) from exc
        return {
            "mesh_id": mesh_id,
            "assignments": {str(pid): name for pid, name in sorted(assignments.items())},
        }

    @app.get("/meshes/{mesh_id}/export.json")
    def export_json(mesh_id: str) -> dict:
        session = _require_ready(state, mesh_id)
        with session.lock:
            return {str(pid): name for pid, name in sorted(session.assignments.items())}

    @app.get("/meshes/{mesh_id}/export.obj")
    def export_obj(mesh_id: str) -> PlainTextResponse:
        session = _require_ready(state, mesh_id)
        result = session.result
        with session.lock:
            assignments = dict(session.assignments)
        text = export_assignments_obj(result.mesh, result.parts, assignments)
        return PlainTextResponse(text, media_type="text/plain")

    return app


def serve(config: ServiceConfig, host: str = "127.0.0.1", port: int = 8787) -> None:
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port, log_level="warning")
