import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from partmatch.mesh import Mesh

settings.register_profile(
    "default",
    max_examples=50,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


def box_mesh(center, size=1.0, material=0):
    """Axis-aligned cube: 8 vertices, 12 triangles, one material."""
    c = np.asarray(center, dtype=np.float64)
    h = size / 2.0
    corners = np.array(
        [
            [-h, -h, -h],
            [h, -h, -h],
            [h, h, -h],
            [-h, h, -h],
            [-h, -h, h],
            [h, -h, h],
            [h, h, h],
            [-h, h, h],
        ]
    )
    quads = [
        (0, 3, 2, 1),
        (4, 5, 6, 7),
        (0, 1, 5, 4),
        (1, 2, 6, 5),
        (2, 3, 7, 6),
        (3, 0, 4, 7),
    ]
    faces = []
    for a, b, cc, d in quads:
        faces.append((a, b, cc))
        faces.append((a, cc, d))
    return Mesh(
        vertices=corners + c,
        faces=np.asarray(faces, dtype=np.int32),
        face_material=np.full(len(faces), material, dtype=np.int32),
    )


def merge_meshes(meshes):
    """Concatenate meshes into one (parts stay disconnected)."""
    verts, faces, mats = [], [], []
    offset = 0
    for m in meshes:
        verts.append(m.vertices)
        faces.append(m.faces + offset)
        mats.append(m.face_material)
        offset += len(m.vertices)
    return Mesh(
        vertices=np.concatenate(verts),
        faces=np.concatenate(faces),
        face_material=np.concatenate(mats),
    )


@pytest.fixture
def two_box_mesh():
    return merge_meshes([box_mesh((0, 0, 0)), box_mesh((3, 0, 0), material=1)])


@pytest.fixture
def rng():
    return np.random.default_rng(0)


def look_at_camera(eye, target=(0.0, 0.0, 0.0), fov=math.radians(45.0)):
    from partmatch.raster import Camera

    eye = np.asarray(eye, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    d = target - eye
    nd = d / np.linalg.norm(d)
    up = np.array([0.0, 0.0, 1.0]) if abs(nd[2]) < 0.95 else np.array([0.0, 1.0, 0.0])
    return Camera(eye=eye, target=target, up=up, vertical_fov=fov)
