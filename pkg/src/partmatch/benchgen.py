"""Procedural benchmark meshes with ground-truth material groups.

Three desk-scale archetypes (pinecone, fence, potted plant) whose parts
are generated as disjoint connected components, so segmentation
reproduces the construction exactly and part ids follow emission order.
Instances of a template part get per-instance jitter: nonuniform scale up
to 20 percent, rotation up to 15 degrees, and Gaussian vertex noise, all
scaled by a single jitter knob (0 = exact rigid copies).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .evalkit import BenchmarkEntry, BenchmarkQuery, save_benchmark
from .mesh import Mesh, mesh_to_obj

SCALE_AMPLITUDE = 0.2
ROTATION_AMPLITUDE = math.radians(15.0)
NOISE_AMPLITUDE = 0.005

ARCHETYPES = ("pinecone", "fence", "plant")


class BenchmarkConfigError(ValueError):
    """Invalid archetype configuration."""


@dataclass(frozen=True)
class ArchetypeSpec:
    kind: str
    jitter: float = 1.0
    scales: int = 60  # pinecone
    slats: int = 8  # fence
    posts: int = 2
    rails: int = 0
    stems: int = 3  # plant
    leaves: int = 12

    def __post_init__(self) -> None:
        if self.kind not in ARCHETYPES:
            raise BenchmarkConfigError(f"unknown archetype {self.kind!r}")
        if not (0.0 <= self.jitter):
            raise BenchmarkConfigError("jitter must be nonnegative")
        for name in ("scales", "slats", "posts", "rails", "stems", "leaves"):
            if getattr(self, name) < 0:
                raise BenchmarkConfigError(f"{name} must be nonnegative")
        if self.kind == "pinecone" and self.scales < 1:
            raise BenchmarkConfigError("a pinecone needs at least one scale")
        if self.kind == "fence" and self.slats + self.posts + self.rails < 1:
            raise BenchmarkConfigError("an empty fence has no parts")
        if self.kind == "plant" and self.stems < 1:
            raise BenchmarkConfigError("a plant needs at least one stem")


@dataclass
class SyntheticMesh:
    name: str
    mesh: Mesh
    material_of_part: dict[int, int]
    queries: list[BenchmarkQuery]


class _Builder:
    """Accumulates disjoint parts; faces of part k all precede part k+1."""

    def __init__(self, name: str) -> None:
        self.name = name
        self.vertices: list[np.ndarray] = []
        self.faces: list[np.ndarray] = []
        self.face_materials: list[np.ndarray] = []
        self.material_names: list[str] = []
        self.part_materials: list[int] = []
        self._n_vertices = 0

    def material_id(self, name: str) -> int:
        if name not in self.material_names:
            self.material_names.append(name)
        return self.material_names.index(name)

    def add_part(self, verts: np.ndarray, faces: np.ndarray, material: str) -> int:
        mid = self.material_id(material)
        self.vertices.append(np.asarray(verts, dtype=np.float64))
        self.faces.append(np.asarray(faces, dtype=np.int32) + self._n_vertices)
        self.face_materials.append(np.full(len(faces), mid, dtype=np.int32))
        self.part_materials.append(mid)
        self._n_vertices += len(verts)
        return len(self.part_materials) - 1

    def build(self) -> Mesh:
        return Mesh(
            vertices=np.concatenate(self.vertices),
            faces=np.concatenate(self.faces),
            face_material=np.concatenate(self.face_materials),
            name=self.name,
            material_names=list(self.material_names),
        )


def _rotation(rx: float, ry: float, rz: float) -> np.ndarray:
    cx, sx = math.cos(rx), math.sin(rx)
    cy, sy = math.cos(ry), math.sin(ry)
    cz, sz = math.cos(rz), math.sin(rz)
    mx = np.array([[1, 0, 0], [0, cx, -sx], [0, sx, cx]])
    my = np.array([[cy, 0, sy], [0, 1, 0], [-sy, 0, cy]])
    mz = np.array([[cz, -sz, 0], [sz, cz, 0], [0, 0, 1]])
    return mz @ my @ mx


def _jitter_instance(
    verts: np.ndarray, rng: np.random.Generator, jitter: float, size: float
) -> np.ndarray:
    """Scale, rotate, and perturb a template in its local frame.

    Draws are made unconditionally so the random stream does not depend
    on the jitter amount.
    """
    s = 1.0 + rng.uniform(-SCALE_AMPLITUDE, SCALE_AMPLITUDE, size=3) * jitter
    angles = rng.uniform(-ROTATION_AMPLITUDE, ROTATION_AMPLITUDE, size=3) * jitter
    noise = rng.normal(0.0, NOISE_AMPLITUDE * size, size=verts.shape) * jitter
    rot = _rotation(*angles)
    return (verts * s) @ rot.T + noise


# --------------------------------------------------------------------------
# Part templates, all centered on the origin in a canonical orientation.


def _box(w: float, d: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    x, y, z = w / 2.0, d / 2.0, h / 2.0
    verts = np.array(
        [
            [-x, -y, -z], [x, -y, -z], [x, y, -z], [-x, y, -z],
            [-x, -y, z], [x, -y, z], [x, y, z], [-x, y, z],
        ]
    )
    faces = np.array(
        [
            [0, 2, 1], [0, 3, 2],  # bottom
            [4, 5, 6], [4, 6, 7],  # top
            [0, 1, 5], [0, 5, 4],  # front
            [1, 2, 6], [1, 6, 5],  # right
            [2, 3, 7], [2, 7, 6],  # back
            [3, 0, 4], [3, 4, 7],  # left
        ],
        dtype=np.int32,
    )
    return verts, faces


def _tube(
    radius_bottom: float,
    radius_top: float,
    height: float,
    segments: int = 8,
    rings: int = 2,
    cap_bottom: bool = False,
) -> tuple[np.ndarray, np.ndarray]:
    """Open frustum tube along +z, base at z=0; optional bottom fan cap."""
    levels = np.linspace(0.0, height, rings)
    radii = np.linspace(radius_bottom, radius_top, rings)
    theta = np.arange(segments) * (2.0 * math.pi / segments)
    verts = []
    for z, r in zip(levels, radii):
        for t in theta:
            verts.append([r * math.cos(t), r * math.sin(t), z])
    faces = []
    for ring in range(rings - 1):
        a = ring * segments
        b = (ring + 1) * segments
        for j in range(segments):
            k = (j + 1) % segments
            faces.append([a + j, a + k, b + j])
            faces.append([a + k, b + k, b + j])
    if cap_bottom:
        center = len(verts)
        verts.append([0.0, 0.0, 0.0])
        for j in range(segments):
            k = (j + 1) % segments
            faces.append([center, j, k])
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int32)


def _rect_quad(w: float, h: float) -> tuple[np.ndarray, np.ndarray]:
    x, y = w / 2.0, h / 2.0
    verts = np.array([[-x, -y, 0.0], [x, -y, 0.0], [x, y, 0.0], [-x, y, 0.0]])
    faces = np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32)
    return verts, faces


def _leaf_fan(radius: float, spread: float = math.radians(100.0)) -> tuple[np.ndarray, np.ndarray]:
    """Flat fan in the xy-plane: stalk point at origin, 5 arc vertices."""
    angles = np.linspace(-spread / 2.0, spread / 2.0, 5)
    verts = [[0.0, 0.0, 0.0]]
    for a in angles:
        verts.append([radius * math.cos(a), radius * math.sin(a), 0.0])
    faces = [[0, i, i + 1] for i in range(1, 5)]
    return np.asarray(verts, dtype=np.float64), np.asarray(faces, dtype=np.int32)


# --------------------------------------------------------------------------
# Archetypes.

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


def _build_pinecone(spec: ArchetypeSpec, rng: np.random.Generator, name: str) -> _Builder:
    b = _Builder(name)
    trunk_v, trunk_f = _tube(0.1, 0.05, 2.2, segments=8, rings=3)
    b.add_part(trunk_v, trunk_f, "trunk")

    quad_v, quad_f = _rect_quad(0.5, 0.3)
    n = spec.scales
    for k in range(n):
        t = k / max(n - 1, 1)
        v = _jitter_instance(quad_v, rng, spec.jitter, size=0.5)
        phi = k * GOLDEN_ANGLE
        tilt = math.radians(55.0)
        orient = _rotation(0.0, tilt, phi)
        v = v @ orient.T
        z = 0.25 + 1.8 * t
        radial = 0.45 * (1.0 - 0.55 * t) + 0.12
        center = np.array([radial * math.cos(phi), radial * math.sin(phi), z])
        b.add_part(v + center, quad_f, "scale")
    return b


def _build_fence(spec: ArchetypeSpec, rng: np.random.Generator, name: str) -> _Builder:
    b = _Builder(name)
    span = max(spec.slats, 1) * 0.2
    post_v, post_f = _box(0.15, 0.15, 1.6)
    for i in range(spec.posts):
        frac = i / max(spec.posts - 1, 1)
        x = -span / 2.0 - 0.15 + frac * (span + 0.3)
        v = _jitter_instance(post_v, rng, spec.jitter, size=1.6)
        b.add_part(v + np.array([x, 0.0, 0.8]), post_f, "post")

    slat_v, slat_f = _box(0.12, 0.05, 1.2)
    for i in range(spec.slats):
        x = -span / 2.0 + (i + 0.5) * 0.2
        v = _jitter_instance(slat_v, rng, spec.jitter, size=1.2)
        b.add_part(v + np.array([x, 0.0, 0.6]), slat_f, "slat")

    rail_v, rail_f = _box(span + 0.2, 0.04, 0.08)
    for i in range(spec.rails):
        z = 0.35 + 0.7 * (i / max(spec.rails - 1, 1))
        v = _jitter_instance(rail_v, rng, spec.jitter, size=span)
        b.add_part(v + np.array([0.0, 0.06, z]), rail_f, "rail")
    return b


def _build_plant(spec: ArchetypeSpec, rng: np.random.Generator, name: str) -> _Builder:
    b = _Builder(name)
    pot_v, pot_f = _tube(0.35, 0.5, 0.5, segments=8, rings=2, cap_bottom=True)
    b.add_part(pot_v, pot_f, "pot")

    stem_v, stem_f = _tube(0.025, 0.018, 0.9, segments=6, rings=2)
    stem_tops = []
    for i in range(spec.stems):
        phi = i * (2.0 * math.pi / spec.stems) + 0.4
        lean = math.radians(12.0)
        orient = _rotation(0.0, lean, phi)
        v = _jitter_instance(stem_v, rng, spec.jitter, size=0.9)
        v = v @ orient.T
        base = np.array([0.12 * math.cos(phi), 0.12 * math.sin(phi), 0.45])
        b.add_part(v + base, stem_f, "stem")
        top_local = orient @ np.array([0.0, 0.0, 0.9])
        stem_tops.append(base + top_local)

    leaf_v, leaf_f = _leaf_fan(0.22)
    for i in range(spec.leaves):
        anchor = stem_tops[i % len(stem_tops)]
        phi = i * GOLDEN_ANGLE
        droop = math.radians(-35.0)
        orient = _rotation(0.0, droop, phi)
        v = _jitter_instance(leaf_v, rng, spec.jitter, size=0.22)
        v = v @ orient.T
        offset = anchor - np.array([0.0, 0.0, 0.12 * (i % 3)])
        b.add_part(v + offset, leaf_f, "leaf")
    return b


_BUILDERS = {
    "pinecone": _build_pinecone,
    "fence": _build_fence,
    "plant": _build_plant,
}


def generate_mesh(spec: ArchetypeSpec, seed: int, name: str | None = None) -> SyntheticMesh:
    """One archetype instance plus its ground truth and queries.

    Queries are drawn one per material group with at least two member
    parts; the query part is chosen by the seeded generator and the rest
    of the group forms the positives.
    """
    rng = np.random.default_rng(seed)
    name = name or f"{spec.kind}-{seed}"
    builder = _BUILDERS[spec.kind](spec, rng, name)
    mesh = builder.build()
    material_of_part = dict(enumerate(builder.part_materials))

    by_material: dict[int, list[int]] = {}
    for pid, mid in material_of_part.items():
        by_material.setdefault(mid, []).append(pid)
    queries = []
    for mid in sorted(by_material):
        group = sorted(by_material[mid])
        if len(group) < 2:
            continue
        q = int(group[int(rng.integers(len(group)))])
        queries.append(
            BenchmarkQuery(
                mesh_id=name,
                query_part_id=q,
                positive_part_ids=frozenset(p for p in group if p != q),
            )
        )
    return SyntheticMesh(
        name=name, mesh=mesh, material_of_part=material_of_part, queries=queries
    )


def generate_synthetic_benchmark(
    seed: int, specs: list[ArchetypeSpec]
) -> list[SyntheticMesh]:
    """Deterministic benchmark: one mesh per spec, seeds derived from the root."""
    if not specs:
        raise BenchmarkConfigError("benchmark needs at least one archetype spec")
    children = np.random.SeedSequence(seed).spawn(len(specs))
    out = []
    for i, (spec, child) in enumerate(zip(specs, children)):
        child_seed = int(child.generate_state(1)[0])
        out.append(generate_mesh(spec, child_seed, name=f"{spec.kind}-{i:03d}"))
    return out


def default_benchmark_specs(n_meshes: int = 10) -> list[ArchetypeSpec]:
    """Mixed archetypes with mild count variation, cycling through kinds."""
    specs = []
    for i in range(n_meshes):
        kind = ARCHETYPES[i % len(ARCHETYPES)]
        if kind == "pinecone":
            specs.append(ArchetypeSpec(kind="pinecone", scales=24 + 4 * (i % 4)))
        elif kind == "fence":
            specs.append(
                ArchetypeSpec(kind="fence", slats=8 + (i % 3), rails=2 if i % 2 else 0)
            )
        else:
            specs.append(ArchetypeSpec(kind="plant", stems=3 + (i % 2), leaves=10 + i % 5))
    return specs


def write_benchmark_dir(
    out_dir: str | Path, meshes: list[SyntheticMesh]
) -> Path:
    """Materialize meshes as OBJ plus bench.json and the ground-truth map.

    Returns the path of bench.json. Mesh paths inside it are relative to
    the benchmark directory.
    """
    out = Path(out_dir)
    (out / "meshes").mkdir(parents=True, exist_ok=True)
    entries = []
    truth = {}
    for sm in meshes:
        rel = f"meshes/{sm.name}.obj"
        (out / rel).write_text(mesh_to_obj(sm.mesh))
        entries.append(BenchmarkEntry(mesh_path=rel, queries=sm.queries))
        truth[rel] = {
            str(pid): sm.mesh.material_names[mid]
            for pid, mid in sorted(sm.material_of_part.items())
        }
    bench_path = out / "bench.json"
    save_benchmark(bench_path, entries)
    (out / "materials.json").write_text(json.dumps(truth, indent=2) + "\n")
    return bench_path
