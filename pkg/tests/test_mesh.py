"""Mesh ingestion, segmentation and serialization.

Segmentation is checked against an independent breadth-first-search oracle
on randomized meshes; the library itself uses union-find.
"""

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from partmatch.mesh import (
    Mesh,
    MeshParseError,
    MeshStructureError,
    assign_part_materials,
    connected_components,
    face_part_ids,
    load_obj,
    merge_vertices,
    mesh_snapshot,
    mesh_to_obj,
    segment_mesh,
    snapshot_to_mesh,
)

from conftest import box_mesh, merge_meshes


def bfs_components(faces: np.ndarray) -> list[list[int]]:
    """Reference segmentation: BFS over the face graph induced by shared
    vertices, components ordered by smallest face index."""
    by_vertex: dict[int, list[int]] = {}
    for fi, face in enumerate(faces):
        for v in face:
            by_vertex.setdefault(int(v), []).append(fi)
    seen = [False] * len(faces)
    comps = []
    for start in range(len(faces)):
        if seen[start]:
            continue
        queue = [start]
        seen[start] = True
        comp = []
        while queue:
            fi = queue.pop()
            comp.append(fi)
            for v in faces[fi]:
                for nb in by_vertex[int(v)]:
                    if not seen[nb]:
                        seen[nb] = True
                        queue.append(nb)
        comps.append(sorted(comp))
    return sorted(comps, key=lambda c: c[0])


def random_soup(rng, n_vertices, n_faces):
    faces = rng.integers(0, n_vertices, size=(n_faces, 3))
    # reroll degenerate rows so every face references 3 distinct vertices
    for i in range(n_faces):
        while len(set(faces[i])) < 3:
            faces[i] = rng.integers(0, n_vertices, size=3)
    return Mesh(
        vertices=rng.normal(size=(n_vertices, 3)),
        faces=faces.astype(np.int32),
        face_material=rng.integers(0, 4, size=n_faces).astype(np.int32),
    )


class TestLoadObj:
    def test_basic_parse(self):
        obj = b"""
# comment line
v 0 0 0
v 1 0 0
v 0 1 0
v 1 1 0
usemtl wood
f 1 2 3
f 2 4 3
"""
        mesh = load_obj(obj)
        assert mesh.num_vertices == 4
        assert mesh.num_faces == 2
        assert mesh.material_names == ["wood"]
        assert mesh.face_material.tolist() == [0, 0]

    def test_quads_fan_triangulated(self):
        obj = b"v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n"
        mesh = load_obj(obj)
        assert mesh.faces.tolist() == [[0, 1, 2], [0, 2, 3]]

    def test_material_ids_first_appearance_order(self):
        obj = (
            b"v 0 0 0\nv 1 0 0\nv 0 1 0\n"
            b"usemtl metal\nf 1 2 3\n"
            b"usemtl wood\nf 1 2 3\n"
            b"usemtl metal\nf 1 2 3\n"
        )
        mesh = load_obj(obj)
        assert mesh.material_names == ["metal", "wood"]
        assert mesh.face_material.tolist() == [0, 1, 0]

    def test_faces_before_usemtl_get_material_zero(self):
        # dense first-appearance ids: the first named material takes id 0,
        # so faces seen before any usemtl share its id
        obj = b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\nusemtl wood\nf 1 2 3\n"
        mesh = load_obj(obj)
        assert mesh.face_material.tolist() == [0, 0]
        assert mesh.material_names == ["wood"]

    def test_slash_references(self):
        obj = b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1/1/1 2//2 3/3\n"
        mesh = load_obj(obj)
        assert mesh.faces.tolist() == [[0, 1, 2]]

    def test_negative_indices_resolve_relative(self):
        obj = b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf -3 -2 -1\n"
        mesh = load_obj(obj)
        assert mesh.faces.tolist() == [[0, 1, 2]]

    def test_vertex_error_reports_line(self):
        obj = b"v 0 0 0\nv 1 oops 0\n"
        with pytest.raises(MeshParseError) as err:
            load_obj(obj)
        assert "line 2" in str(err.value)

    def test_short_vertex_record(self):
        with pytest.raises(MeshParseError) as err:
            load_obj(b"v 1 2\n")
        assert "line 1" in str(err.value)

    def test_face_needs_three_vertices(self):
        with pytest.raises(MeshParseError) as err:
            load_obj(b"v 0 0 0\nv 1 0 0\nf 1 2\n")
        assert "line 3" in str(err.value)

    def test_bad_face_reference(self):
        with pytest.raises(MeshParseError) as err:
            load_obj(b"v 0 0 0\nf 1 x 1\n")
        assert "line 2" in str(err.value)

    def test_zero_face_index_rejected(self):
        with pytest.raises(MeshParseError):
            load_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n")

    def test_out_of_range_index(self):
        with pytest.raises(MeshStructureError) as err:
            load_obj(b"v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n")
        assert "line 4" in str(err.value)

    def test_empty_mesh_rejected(self):
        with pytest.raises(MeshStructureError):
            load_obj(b"v 0 0 0\n")
        with pytest.raises(MeshStructureError):
            load_obj(b"")

    def test_not_utf8(self):
        with pytest.raises(MeshParseError):
            load_obj(b"\xff\xfe broken")

    def test_unknown_records_ignored(self):
        obj = b"mtllib x.mtl\nvn 0 0 1\nvt 0 0\ns off\nv 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 3\n"
        mesh = load_obj(obj)
        assert mesh.num_faces == 1


class TestMergeVertices:
    def test_bitwise_merge_only(self):
        eps = 1e-15  # one ulp-ish at 1.0: a genuinely different double
        verts = np.array(
            [
                [1.0, 2.0, 3.0],
                [1.0, 2.0, 3.0],
                [1.0 + eps, 2.0, 3.0],
                [0.0, 0.0, 0.0],
            ]
        )
        mesh = Mesh(
            vertices=verts,
            faces=np.array([[0, 2, 3], [1, 2, 3]], dtype=np.int32),
            face_material=np.zeros(2, dtype=np.int32),
        )
        merged = merge_vertices(mesh)
        assert merged.num_vertices == 3
        # both faces survive and now share the merged vertex 0
        assert merged.faces[0, 0] == merged.faces[1, 0]

    def test_negative_zero_not_merged_with_zero(self):
        verts = np.array([[0.0, 0.0, 0.0], [-0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        mesh = Mesh(
            vertices=verts,
            faces=np.array([[0, 2, 3], [1, 2, 3]], dtype=np.int32),
            face_material=np.zeros(2, dtype=np.int32),
        )
        assert merge_vertices(mesh).num_vertices == 4

    def test_degenerate_faces_dropped_with_materials(self):
        verts = np.array([[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])
        mesh = Mesh(
            vertices=verts,
            faces=np.array([[0, 1, 2], [0, 2, 3]], dtype=np.int32),
            face_material=np.array([7, 3], dtype=np.int32),
        )
        merged = merge_vertices(mesh)
        assert merged.num_faces == 1
        assert merged.face_material.tolist() == [3]


class TestConnectedComponents:
    def test_two_boxes(self, two_box_mesh):
        merged, parts = segment_mesh(two_box_mesh)
        assert len(parts) == 2
        assert [p.material_id for p in parts] == [0, 1]
        assert all(len(p.face_ids) == 12 for p in parts)

    def test_vs_bfs_oracle_random(self, rng):
        for _ in range(30):
            mesh = random_soup(rng, int(rng.integers(6, 40)), int(rng.integers(3, 60)))
            parts = connected_components(mesh)
            got = [p.face_ids.tolist() for p in parts]
            assert got == bfs_components(mesh.faces)
            assert [p.part_id for p in parts] == list(range(len(parts)))

    def test_part_ids_ordered_by_smallest_face(self):
        # second component in face order must still get id by first face
        a = box_mesh((0, 0, 0))
        b = box_mesh((5, 0, 0))
        mesh = merge_meshes([a, b])
        parts = connected_components(mesh)
        assert parts[0].face_ids[0] == 0
        assert parts[1].face_ids[0] == 12

    def test_centroid_and_extent(self):
        mesh = box_mesh((2.0, -1.0, 0.5), size=2.0)
        parts = connected_components(merge_vertices(mesh))
        assert len(parts) == 1
        p = parts[0]
        np.testing.assert_allclose(p.centroid, [2.0, -1.0, 0.5], atol=1e-12)
        assert p.max_radial_extent == pytest.approx(np.sqrt(3.0), rel=1e-12)
        assert p.vertex_count == 8

    @given(st.integers(0, 2**31 - 1))
    def test_oracle_property(self, seed):
        rng = np.random.default_rng(seed)
        mesh = random_soup(rng, int(rng.integers(4, 25)), int(rng.integers(2, 30)))
        parts = connected_components(mesh)
        assert [p.face_ids.tolist() for p in parts] == bfs_components(mesh.faces)


class TestMaterials:
    def test_majority_vote(self):
        mesh = box_mesh((0, 0, 0))
        mesh.face_material = np.array([1] * 7 + [2] * 5, dtype=np.int32)
        parts = assign_part_materials(mesh, connected_components(mesh))
        assert parts[0].material_id == 1

    def test_tie_breaks_to_smallest_id(self):
        mesh = box_mesh((0, 0, 0))
        mesh.face_material = np.array([2, 1] * 6, dtype=np.int32)
        parts = assign_part_materials(mesh, connected_components(mesh))
        assert parts[0].material_id == 1


class TestFacePartIds:
    def test_partition(self, two_box_mesh):
        merged, parts = segment_mesh(two_box_mesh)
        fp = face_part_ids(parts, merged.num_faces)
        assert fp.tolist() == [0] * 12 + [1] * 12

    def test_overlap_rejected(self, two_box_mesh):
        merged, parts = segment_mesh(two_box_mesh)
        bad = [parts[0], parts[0]]
        with pytest.raises(MeshStructureError):
            face_part_ids(bad, merged.num_faces)

    def test_gap_rejected(self, two_box_mesh):
        merged, parts = segment_mesh(two_box_mesh)
        with pytest.raises(MeshStructureError):
            face_part_ids(parts[:1], merged.num_faces)


class TestRoundTrips:
    def test_obj_round_trip_bitwise(self, rng):
        mesh = random_soup(rng, 15, 20)
        mesh.vertices = rng.normal(size=(15, 3)) * np.pi
        text = mesh_to_obj(mesh)
        back = load_obj(text.encode())
        assert (back.vertices == mesh.vertices).all()
        assert (back.faces == mesh.faces).all()
        # material identity lives in the names, so the grouping must be
        # preserved even when raw integer ids get re-densified
        for i in range(mesh.num_faces):
            for j in range(mesh.num_faces):
                same_before = mesh.face_material[i] == mesh.face_material[j]
                same_after = back.face_material[i] == back.face_material[j]
                assert same_before == same_after

    def test_obj_round_trip_ids_stable_from_obj(self):
        obj = (
            b"v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\n"
            b"usemtl wood\nf 1 2 3\nusemtl metal\nf 1 2 4\nusemtl wood\nf 2 3 4\n"
        )
        mesh = load_obj(obj)
        back = load_obj(mesh_to_obj(mesh).encode())
        assert (back.vertices == mesh.vertices).all()
        assert (back.face_material == mesh.face_material).all()
        assert back.material_names == mesh.material_names

    def test_obj_override_materials(self, two_box_mesh):
        override = np.full(two_box_mesh.num_faces, 1, dtype=np.int32)
        text = mesh_to_obj(two_box_mesh, face_material=override)
        assert text.count("usemtl") == 1

    def test_obj_override_length_checked(self, two_box_mesh):
        with pytest.raises(MeshStructureError):
            mesh_to_obj(two_box_mesh, face_material=np.zeros(3, dtype=np.int32))

    def test_snapshot_round_trip(self, two_box_mesh):
        merged, parts = segment_mesh(two_box_mesh)
        snap = mesh_snapshot(merged, parts)
        mesh2, parts2 = snapshot_to_mesh(snap)
        assert (mesh2.vertices == merged.vertices).all()
        assert (mesh2.faces == merged.faces).all()
        assert len(parts2) == len(parts)
        for p, q in zip(parts, parts2):
            assert p.part_id == q.part_id
            assert p.material_id == q.material_id
            assert (p.face_ids == q.face_ids).all()
            assert (p.vertex_ids == q.vertex_ids).all()
            assert p.vertex_count == q.vertex_count
            np.testing.assert_array_equal(p.centroid, q.centroid)
