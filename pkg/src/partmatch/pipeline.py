"""End-to-end artifact pipeline: parse, segment, dedup, render, embed.

Both the CLI and the HTTP service run this module, so batch and
interactive paths produce byte-identical artifacts. Every run writes a
manifest with content hashes; a failed stage is recorded there before the
error propagates.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import dedup as dedup_mod
from .dedup import DuplicateGroups, Tolerances, group_duplicates, groups_from_json, groups_to_json
from .encode import (
    BuiltinBackend,
    EmbeddingFormatError,
    ProjectionHead,
    embed_part,
    load_embedding_store,
    load_head,
    save_embedding_store,
)
from .mesh import Mesh, Part, load_obj, mesh_snapshot, mesh_to_obj, segment_mesh, snapshot_to_mesh
from .raster import save_color_png
from .train import MaterialPool, TrainSample
from .views import Scene, ViewConfig, hemisphere_directions, outward_axis, render_view_set, render_view_set_from_direction

ARTIFACT_MESH = "mesh.json"
ARTIFACT_GROUPS = "groups.json"
ARTIFACT_EMBED_INDEX = "embeddings.index.json"
ARTIFACT_EMBED_BLOB = "embeddings.f32"
ARTIFACT_MANIFEST = "manifest.json"

STAGES = ("parse", "segment", "dedup", "views", "embed", "manifest")


class PipelineConfigError(ValueError):
    """Rejected before any compute: bad flags or missing referenced files."""


class PipelineStageError(RuntimeError):
    def __init__(self, stage: str, cause: Exception):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass(frozen=True)
class PipelineConfig:
    out_dir: Path
    resolution: int = 512
    candidates: int = 16
    tolerances: Tolerances = Tolerances()
    backend: str = "builtin"  # "builtin" | "external:<sidecar dir>"
    head_checkpoint: Path | None = None
    space: str = "x"
    seed: int = 0
    save_views: bool = False
    jobs: int = 1

    def view_config(self) -> ViewConfig:
        return ViewConfig(resolution=self.resolution, candidates=self.candidates)


def validate_config(cfg: PipelineConfig) -> None:
    """Fail fast on contradictions; called before any mesh bytes are read."""
    if cfg.resolution < 8:
        raise PipelineConfigError("resolution must be at least 8")
    if cfg.candidates < 1:
        raise PipelineConfigError("need at least one view candidate")
    if cfg.jobs < 1:
        raise PipelineConfigError("jobs must be at least 1")
    if cfg.space not in ("x", "z"):
        raise PipelineConfigError(f"unknown embedding space {cfg.space!r}")
    if cfg.space == "z":
        if cfg.head_checkpoint is None:
            raise PipelineConfigError("space 'z' needs a head checkpoint")
        if not Path(cfg.head_checkpoint).is_file():
            raise PipelineConfigError(
                f"head checkpoint {cfg.head_checkpoint} does not exist"
            )
    if cfg.backend != "builtin":
        if not cfg.backend.startswith("external:"):
            raise PipelineConfigError(
                f"backend must be 'builtin' or 'external:<dir>', got {cfg.backend!r}"
            )
        sidecar = Path(cfg.backend.split(":", 1)[1])
        if not sidecar.is_dir():
            raise PipelineConfigError(f"sidecar dir {sidecar} does not exist")


@dataclass
class PipelineResult:
    mesh: Mesh
    parts: list[Part]
    groups: DuplicateGroups
    embeddings: dict[int, np.ndarray]
    manifest: dict
    out_dir: Path


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _hash_file(path: Path) -> str:
    return _sha256(path.read_bytes())


def run_pipeline(mesh_bytes: bytes, name: str, cfg: PipelineConfig) -> PipelineResult:
    """Parse to embeddings, writing artifacts and a hashed manifest.

    On stage failure the manifest is still written with ``failed_stage``
    set, then PipelineStageError propagates.
    """
    validate_config(cfg)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)

    manifest: dict = {
        "input": {"name": name, "sha256": _sha256(mesh_bytes)},
        "config": {
            "resolution": cfg.resolution,
            "candidates": cfg.candidates,
            "backend": cfg.backend,
            "space": cfg.space,
            "seed": cfg.seed,
            "tolerances": {
                "bins": cfg.tolerances.bins,
                "l1": cfg.tolerances.l1,
                "scale_tol": cfg.tolerances.scale_tol,
                "count_tol": cfg.tolerances.count_tol,
            },
        },
        "stages": [],
        "failed_stage": None,
        "artifacts": {},
    }

    def fail(stage: str, exc: Exception) -> PipelineStageError:
        manifest["failed_stage"] = stage
        manifest["stages"].append({"name": stage, "status": "failed", "error": str(exc)})
        _write_manifest(out, manifest)
        return PipelineStageError(stage, exc)

    def done(stage: str) -> None:
        manifest["stages"].append({"name": stage, "status": "ok"})

    try:
        mesh = load_obj(mesh_bytes, name=name)
    except Exception as exc:
        raise fail("parse", exc) from exc
    done("parse")

    try:
        merged, parts = segment_mesh(mesh)
        snapshot = mesh_snapshot(merged, parts)
        (out / ARTIFACT_MESH).write_text(json.dumps(snapshot) + "\n")
    except Exception as exc:
        raise fail("segment", exc) from exc
    manifest["parts"] = len(parts)
    done("segment")

    try:
        groups = group_duplicates(merged, parts, cfg.tolerances)
        (out / ARTIFACT_GROUPS).write_text(
            json.dumps(groups_to_json(groups), indent=2) + "\n"
        )
    except Exception as exc:
        raise fail("dedup", exc) from exc
    manifest["exemplars"] = len(groups.exemplars)
    done("dedup")

    scene = Scene.build(merged, parts)
    view_cfg = cfg.view_config()
    try:
        exemplars = sorted(groups.exemplars)
        if cfg.jobs > 1:
            from concurrent.futures import ThreadPoolExecutor

            with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
                rendered = list(
                    pool.map(lambda ex: render_view_set(scene, parts[ex], view_cfg), exemplars)
                )
            views_by_part = dict(zip(exemplars, rendered))
        else:
            views_by_part = {
                ex: render_view_set(scene, parts[ex], view_cfg) for ex in exemplars
            }
        if cfg.save_views:
            vdir = out / "views"
            vdir.mkdir(exist_ok=True)
            for ex, vs in views_by_part.items():
                for vname in ("isolated", "context", "full"):
                    save_color_png(getattr(vs, vname), vdir / f"part_{ex}_{vname}.png")
    except Exception as exc:
        raise fail("views", exc) from exc
    done("views")

    try:
        embeddings = _embed_stage(cfg, groups, views_by_part)
        backend_dim = len(next(iter(embeddings.values()))) // 3
        features = {
            pid: {
                "isolated": x[:backend_dim],
                "context": x[backend_dim : 2 * backend_dim],
                "full": x[2 * backend_dim :],
            }
            for pid, x in embeddings.items()
        }
        save_embedding_store(
            out / ARTIFACT_EMBED_INDEX, out / ARTIFACT_EMBED_BLOB, features, backend_dim
        )
    except Exception as exc:
        raise fail("embed", exc) from exc
    done("embed")

    for rel in sorted(
        p.relative_to(out).as_posix()
        for p in out.rglob("*")
        if p.is_file() and p.name != ARTIFACT_MANIFEST
    ):
        manifest["artifacts"][rel] = _hash_file(out / rel)
    done("manifest")
    _write_manifest(out, manifest)

    return PipelineResult(
        mesh=merged,
        parts=parts,
        groups=groups,
        embeddings=embeddings,
        manifest=manifest,
        out_dir=out,
    )


def _embed_stage(
    cfg: PipelineConfig,
    groups: DuplicateGroups,
    views_by_part: dict,
) -> dict[int, np.ndarray]:
    if cfg.backend == "builtin":
        backend = BuiltinBackend()
        return {
            ex: embed_part(views_by_part[ex], backend).x
            for ex in sorted(groups.exemplars)
        }
    sidecar = Path(cfg.backend.split(":", 1)[1])
    store = load_embedding_store(
        sidecar / ARTIFACT_EMBED_INDEX, sidecar / ARTIFACT_EMBED_BLOB
    )
    missing = [ex for ex in groups.exemplars if ex not in store]
    if missing:
        raise EmbeddingFormatError(
            f"sidecar store lacks embeddings for exemplars {sorted(missing)}"
        )
    return {ex: store[ex] for ex in sorted(groups.exemplars)}


def _write_manifest(out: Path, manifest: dict) -> None:
    (out / ARTIFACT_MANIFEST).write_text(json.dumps(manifest, indent=2) + "\n")


def load_artifacts(out_dir: str | Path) -> PipelineResult:
    """Rehydrate a pipeline run from its artifact directory."""
    out = Path(out_dir)
    snapshot = json.loads((out / ARTIFACT_MESH).read_text())
    mesh, parts = snapshot_to_mesh(snapshot)
    groups = groups_from_json(json.loads((out / ARTIFACT_GROUPS).read_text()))
    embeddings = load_embedding_store(
        out / ARTIFACT_EMBED_INDEX, out / ARTIFACT_EMBED_BLOB
    )
    manifest = json.loads((out / ARTIFACT_MANIFEST).read_text())
    return PipelineResult(
        mesh=mesh,
        parts=parts,
        groups=groups,
        embeddings=embeddings,
        manifest=manifest,
        out_dir=out,
    )


# ---------------------------------------------------------------------------
# Training data assembly.


def build_material_pools(
    mesh_id: str,
    scene: Scene,
    groups: DuplicateGroups,
    cfg: PipelineConfig,
    floor: int = 8,
) -> dict[tuple[str, int], MaterialPool]:
    """Per-material candidate samples for one mesh.

    Base samples are the dedup exemplars' canonical view-set embeddings.
    Materials short of ``floor`` are topped up first with the remaining
    duplicate-group members, then with extra rendered viewpoints of the
    exemplars, both rendered on demand so well-populated materials cost
    nothing extra.
    """
    backend = BuiltinBackend()
    view_cfg = cfg.view_config()
    exemplar_of = groups.exemplar_of()

    def sample_for(pid: int, kind: str, view_set=None) -> TrainSample:
        vs = view_set if view_set is not None else render_view_set(scene, scene.parts[pid], view_cfg)
        part = scene.parts[pid]
        return TrainSample(
            mesh_id=mesh_id,
            part_id=pid,
            material_id=part.material_id,
            x=embed_part(vs, backend).x,
            kind=kind,
        )

    pools: dict[tuple[str, int], MaterialPool] = {}
    members_by_material: dict[int, list[int]] = {}
    for part in scene.parts:
        members_by_material.setdefault(part.material_id, []).append(part.part_id)

    for mid in sorted(members_by_material):
        key = (mesh_id, mid)
        pool = MaterialPool()
        members = sorted(members_by_material[mid])
        exemplars = sorted({exemplar_of[p] for p in members})
        for ex in exemplars:
            pool.base.append(sample_for(ex, "base"))

        have = len(pool.base)
        if have < floor:
            extras = [p for p in members if p not in set(exemplars)]
            for p in extras[: floor - have]:
                pool.extra_instances.append(sample_for(p, "extra-instance"))
            have += len(pool.extra_instances)

        if have < floor:
            needed = floor - have
            per_part = math.ceil(needed / max(len(exemplars), 1))
            made = 0
            for vi in range(per_part):
                for ex in exemplars:
                    if made >= needed:
                        break
                    part = scene.parts[ex]
                    axis = outward_axis(part, scene)
                    dirs = hemisphere_directions(axis, view_cfg.candidates)
                    # Skip index 0: that is the canonical axis direction.
                    direction = dirs[1 + (vi % (len(dirs) - 1))]
                    vs = render_view_set_from_direction(scene, part, direction, view_cfg)
                    pool.extra_views.append(sample_for(ex, "extra-view", view_set=vs))
                    made += 1
        pools[key] = pool
    return pools


# ---------------------------------------------------------------------------
# Benchmark evaluation glue.


def rank_for_benchmark(index, queries) -> list:
    """RankedQuery rows for evaluation: the query part itself is dropped
    from its ranking so metrics only score genuine retrieval."""
    from .evalkit import RankedQuery
    from .retrieve import rank_parts

    out = []
    for q in queries:
        ranking = [
            (pid, d)
            for pid, d in rank_parts(index, q.query_part_id)
            if pid != q.query_part_id
        ]
        out.append(
            RankedQuery(
                mesh_id=q.mesh_id,
                query_part_id=q.query_part_id,
                ranking=ranking,
                positives=q.positive_part_ids,
            )
        )
    return out


# ---------------------------------------------------------------------------
# Material-assignment export.


def export_assignments_obj(
    mesh: Mesh, parts: list[Part], assignments: dict[int, str]
) -> str:
    """OBJ with one contiguous ``usemtl`` block per assigned material.

    Unassigned parts come first under the default material; assigned
    materials follow in sorted name order. Faces are reordered to make
    each block contiguous.
    """
    default_faces: list[int] = []
    by_name: dict[str, list[int]] = {}
    for part in parts:
        name = assignments.get(part.part_id)
        bucket = by_name.setdefault(name, []) if name is not None else default_faces
        bucket.extend(int(f) for f in part.face_ids)

    lines = [f"o {mesh.name}"]
    for v in mesh.vertices:
        lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")

    def emit(name: str, face_ids: list[int]) -> None:
        lines.append(f"usemtl {name}")
        for fid in sorted(face_ids):
            f = mesh.faces[fid]
            lines.append(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}")

    if default_faces:
        emit("default", default_faces)
    for name in sorted(by_name):
        emit(name, by_name[name])
    return "\n".join(lines) + "\n"
