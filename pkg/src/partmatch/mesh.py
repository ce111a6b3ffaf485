"""Triangle mesh ingestion and part segmentation.

Meshes are plain indexed triangle soups with one material ID per face.
Parts are connected components of the vertex-merged mesh and carry the
majority material label of their faces.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np


class MeshError(Exception):
    """Base class for mesh ingestion errors."""


class MeshParseError(MeshError):
    """Malformed record in a mesh file."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class MeshStructureError(MeshError):
    """Structurally invalid mesh (bad indices, empty geometry, ...)."""


@dataclass
class Mesh:
    """Indexed triangle mesh with per-face material IDs.

    Material IDs are mesh-local small integers; ID 0 is the default for
    faces that never saw a ``usemtl`` record.
    """

    vertices: np.ndarray  # (n, 3) float64
    faces: np.ndarray  # (m, 3) int32 vertex indices
    face_material: np.ndarray  # (m,) int32
    name: str = "mesh"
    material_names: list[str] = field(default_factory=lambda: ["default"])

    def validate(self) -> None:
        if len(self.vertices) == 0 or len(self.faces) == 0:
            raise MeshStructureError(f"mesh '{self.name}' is empty")
        if len(self.face_material) != len(self.faces):
            raise MeshStructureError(
                f"face_material length {len(self.face_material)} != "
                f"face count {len(self.faces)}"
            )
        if self.faces.size and (
            self.faces.min() < 0 or self.faces.max() >= len(self.vertices)
        ):
            raise MeshStructureError("face index out of range")

    @property
    def num_vertices(self) -> int:
        return len(self.vertices)

    @property
    def num_faces(self) -> int:
        return len(self.faces)


@dataclass
class Part:
    """A connected component of the mesh: the atomic selection unit."""

    part_id: int
    face_ids: np.ndarray  # sorted int64 face indices
    material_id: int
    centroid: np.ndarray  # (3,) float64, unweighted mean of unique vertices
    max_radial_extent: float
    vertex_count: int
    vertex_ids: np.ndarray  # sorted unique vertex indices


def load_obj(data: bytes, name: str = "mesh") -> Mesh:
    """Parse a wavefront-style text mesh (``v`` / ``f`` / ``usemtl`` records).

    Faces with more than three vertices are fan-triangulated. ``usemtl``
    names map to dense integer IDs in first-appearance order; faces seen
    before any ``usemtl`` get material ID 0. Normals, texcoords and
    ``mtllib`` content are ignored.

    Raises:
        MeshParseError: malformed record (reported with its line number).
        MeshStructureError: face index out of range, or empty mesh.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise MeshParseError(f"not valid utf-8 text: {exc}") from None

    vertices: list[tuple[float, float, float]] = []
    faces: list[tuple[int, int, int]] = []
    face_material: list[int] = []
    face_lines: list[int] = []
    material_ids: dict[str, int] = {}
    material_names: list[str] = []
    current_material = 0

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        kind = tokens[0]
        if kind == "v":
            if len(tokens) < 4:
                raise MeshParseError("vertex record needs 3 coordinates", lineno)
            try:
                xyz = (float(tokens[1]), float(tokens[2]), float(tokens[3]))
            except ValueError:
                raise MeshParseError(
                    f"bad vertex coordinate in {raw!r}", lineno
                ) from None
            vertices.append(xyz)
        elif kind == "f":
            if len(tokens) < 4:
                raise MeshParseError("face record needs at least 3 vertices", lineno)
            idx = []
            for ref in tokens[1:]:
                head = ref.split("/", 1)[0]
                try:
                    i = int(head)
                except ValueError:
                    raise MeshParseError(
                        f"bad face vertex reference {ref!r}", lineno
                    ) from None
                if i == 0:
                    raise MeshParseError("face vertex index 0 is invalid", lineno)
                if i < 0:
                    i = len(vertices) + i
                    if i < 0:
                        raise MeshStructureError(
                            f"line {lineno}: relative face index out of range"
                        )
                else:
                    i -= 1
                idx.append(i)
            for a, b in zip(idx[1:], idx[2:]):
                faces.append((idx[0], a, b))
                face_material.append(current_material)
                face_lines.append(lineno)
        elif kind == "usemtl":
            if len(tokens) < 2:
                raise MeshParseError("usemtl record needs a material name", lineno)
            mat = tokens[1]
            if mat not in material_ids:
                material_ids[mat] = len(material_names)
                material_names.append(mat)
            current_material = material_ids[mat]
        # v/f/usemtl are the supported subset; everything else is ignored.

    if not vertices or not faces:
        raise MeshStructureError(f"mesh '{name}' is empty")

    faces_arr = np.asarray(faces, dtype=np.int32)
    bad = (faces_arr < 0) | (faces_arr >= len(vertices))
    if bad.any():
        first = int(np.argwhere(bad.any(axis=1))[0, 0])
        raise MeshStructureError(
            f"line {face_lines[first]}: face index out of range "
            f"(vertex count {len(vertices)})"
        )

    return Mesh(
        vertices=np.asarray(vertices, dtype=np.float64),
        faces=faces_arr,
        face_material=np.asarray(face_material, dtype=np.int32),
        name=name,
        material_names=material_names if material_names else ["default"],
    )


def merge_vertices(mesh: Mesh) -> Mesh:
    """Collapse vertices with bitwise-identical coordinates.

    Face indices are remapped; faces that become degenerate (a repeated
    index after remapping) are dropped together with their material entry.
    No epsilon is involved: only exactly equal coordinates merge.
    """
    seen: dict[bytes, int] = {}
    remap = np.empty(mesh.num_vertices, dtype=np.int64)
    keep: list[int] = []
    for i in range(mesh.num_vertices):
        key = mesh.vertices[i].tobytes()
        j = seen.get(key)
        if j is None:
            j = len(keep)
            seen[key] = j
            keep.append(i)
        remap[i] = j

    new_faces = remap[mesh.faces]
    ok = (
        (new_faces[:, 0] != new_faces[:, 1])
        & (new_faces[:, 1] != new_faces[:, 2])
        & (new_faces[:, 0] != new_faces[:, 2])
    )
    return replace(
        mesh,
        vertices=mesh.vertices[keep],
        faces=new_faces[ok].astype(np.int32),
        face_material=mesh.face_material[ok],
    )


class _UnionFind:
    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            # smaller root wins, keeps component labels stable
            if ra < rb:
                self.parent[rb] = ra
            else:
                self.parent[ra] = rb


def connected_components(mesh: Mesh) -> list[Part]:
    """Segment the mesh into parts by shared-vertex face connectivity.

    Two faces belong to the same part iff they share at least one vertex
    (the mesh must be vertex-merged first for this to be meaningful).
    Part IDs are assigned by ascending smallest face index. Material IDs
    are left at -1; call :func:`assign_part_materials` to fill them.
    """
    n_faces = mesh.num_faces
    uf = _UnionFind(n_faces)

    # For every vertex, union all faces touching it pairwise-consecutively.
    flat = mesh.faces.reshape(-1).astype(np.int64)
    face_of = np.repeat(np.arange(n_faces, dtype=np.int64), 3)
    order = np.argsort(flat, kind="stable")
    flat_sorted = flat[order]
    face_sorted = face_of[order]
    same_vertex = flat_sorted[1:] == flat_sorted[:-1]
    for a, b in zip(face_sorted[:-1][same_vertex], face_sorted[1:][same_vertex]):
        uf.union(int(a), int(b))

    roots = np.array([uf.find(i) for i in range(n_faces)], dtype=np.int64)
    groups: dict[int, list[int]] = {}
    for face, root in enumerate(roots):
        groups.setdefault(int(root), []).append(face)

    parts: list[Part] = []
    for pid, face_list in enumerate(sorted(groups.values(), key=lambda g: g[0])):
        face_ids = np.asarray(face_list, dtype=np.int64)
        vertex_ids = np.unique(mesh.faces[face_ids])
        pts = mesh.vertices[vertex_ids]
        centroid = pts.mean(axis=0)
        extent = float(np.sqrt(((pts - centroid) ** 2).sum(axis=1)).max())
        parts.append(
            Part(
                part_id=pid,
                face_ids=face_ids,
                material_id=-1,
                centroid=centroid,
                max_radial_extent=extent,
                vertex_count=len(vertex_ids),
                vertex_ids=vertex_ids.astype(np.int64),
            )
        )
    return parts


def assign_part_materials(mesh: Mesh, parts: list[Part]) -> list[Part]:
    """Set each part's material to the majority label of its faces.

    Ties break toward the smallest material ID so training labels are
    reproducible.
    """
    out = []
    for part in parts:
        labels = mesh.face_material[part.face_ids]
        counts = np.bincount(labels)
        out.append(replace(part, material_id=int(np.argmax(counts))))
    return out


def segment_mesh(mesh: Mesh) -> tuple[Mesh, list[Part]]:
    """Full segmentation: merge vertices, split into parts, label materials."""
    merged = merge_vertices(mesh)
    merged.validate()
    parts = assign_part_materials(merged, connected_components(merged))
    return merged, parts


def face_part_ids(parts: list[Part], num_faces: int) -> np.ndarray:
    """Per-face part ID array (int32); raises if parts do not partition."""
    out = np.full(num_faces, -1, dtype=np.int32)
    for part in parts:
        if (out[part.face_ids] != -1).any():
            raise MeshStructureError("parts overlap on at least one face")
        out[part.face_ids] = part.part_id
    if (out == -1).any():
        raise MeshStructureError("parts do not cover all faces")
    return out


def mesh_to_obj(mesh: Mesh, face_material: np.ndarray | None = None) -> str:
    """Serialize to OBJ text, emitting ``usemtl`` on material changes.

    Vertices use shortest round-trip float formatting, faces keep their
    original order, so load_obj(mesh_to_obj(m)) reproduces the mesh
    exactly (coordinates bitwise, ids structurally). An alternative
    per-face material array can override the mesh's own labels, which is
    how edited material assignments are exported.
    """
    mats = mesh.face_material if face_material is None else np.asarray(face_material)
    if len(mats) != mesh.num_faces:
        raise MeshStructureError(
            f"face_material length {len(mats)} does not match {mesh.num_faces} faces"
        )
    lines = [f"o {mesh.name}"]
    for v in mesh.vertices:
        lines.append(f"v {float(v[0])!r} {float(v[1])!r} {float(v[2])!r}")
    current = None
    for face, mid in zip(mesh.faces, mats):
        mid = int(mid)
        if mid != current:
            name = (
                mesh.material_names[mid]
                if 0 <= mid < len(mesh.material_names)
                else f"material_{mid}"
            )
            lines.append(f"usemtl {name}")
            current = mid
        lines.append(f"f {face[0] + 1} {face[1] + 1} {face[2] + 1}")
    return "\n".join(lines) + "\n"


def mesh_snapshot(mesh: Mesh, parts: list[Part]) -> dict:
    """JSON-ready snapshot of a segmented mesh (flat arrays + part table)."""
    return {
        "name": mesh.name,
        "material_names": list(mesh.material_names),
        "vertices": [float(v) for v in mesh.vertices.reshape(-1)],
        "faces": [int(i) for i in mesh.faces.reshape(-1)],
        "face_material": [int(m) for m in mesh.face_material],
        "parts": [
            {
                "part_id": p.part_id,
                "face_ids": [int(f) for f in p.face_ids],
                "material_id": p.material_id,
                "centroid": [float(c) for c in p.centroid],
                "max_radial_extent": p.max_radial_extent,
                "vertex_count": p.vertex_count,
            }
            for p in parts
        ],
    }


def snapshot_to_mesh(snapshot: dict) -> tuple[Mesh, list[Part]]:
    """Inverse of :func:`mesh_snapshot`."""
    mesh = Mesh(
        vertices=np.asarray(snapshot["vertices"], dtype=np.float64).reshape(-1, 3),
        faces=np.asarray(snapshot["faces"], dtype=np.int32).reshape(-1, 3),
        face_material=np.asarray(snapshot["face_material"], dtype=np.int32),
        name=snapshot["name"],
        material_names=list(snapshot["material_names"]),
    )
    parts = []
    for rec in snapshot["parts"]:
        face_ids = np.asarray(rec["face_ids"], dtype=np.int64)
        vertex_ids = np.unique(mesh.faces[face_ids]).astype(np.int64)
        parts.append(
            Part(
                part_id=rec["part_id"],
                face_ids=face_ids,
                material_id=rec["material_id"],
                centroid=np.asarray(rec["centroid"], dtype=np.float64),
                max_radial_extent=rec["max_radial_extent"],
                vertex_count=rec["vertex_count"],
                vertex_ids=vertex_ids,
            )
        )
    return mesh, parts
