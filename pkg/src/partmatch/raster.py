"""Deterministic software rasterizer.

Produces color / depth / part-id buffers via perspective projection and
z-buffered triangle fill. Everything is computed in float64 with a fixed
operation order, so identical scenes give bitwise-identical buffers on
every run and machine.

Geometry conventions (shared with any reference implementation):

* camera basis: ``forward = normalize(target - eye)``,
  ``right = normalize(forward x up)``, ``camup = right x forward``
* the ray through pixel (row i, col j) is ``d = forward + a*right + b*camup``
  with ``a = (2*(j+0.5)/w - 1) * x_scale``, ``b = (1 - 2*(i+0.5)/h) * half_h``,
  ``half_h = tan(fov/2)``, ``x_scale = half_h * w / h``
* the depth of a triangle plane along that ray is
  ``t = (n . (v0 - eye)) / (n . d)`` with ``n = cross(v1-v0, v2-v0)``;
  because ``d . forward == 1`` this t equals camera-space depth.

Depth values are evaluated from these exact expressions (not by screen-space
interpolation), so a per-pixel ray--plane evaluation of the same scene
reproduces the buffers bit for bit away from coverage boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

HIGHLIGHT_RGB = (230, 60, 30)
BASE_RGB = (180, 180, 180)
AMBIENT = 0.25
DIFFUSE = 0.75
BACKFACE_FACTOR = 0.55


class CameraError(ValueError):
    """Degenerate camera configuration."""


@dataclass(frozen=True)
class Camera:
    eye: np.ndarray  # (3,)
    target: np.ndarray  # (3,)
    up: np.ndarray  # (3,) unit-ish; only its direction matters
    vertical_fov: float = math.radians(45.0)
    near: float = 1e-3
    far: float = 1e6


@dataclass
class FrameBuffer:
    width: int
    height: int
    color: np.ndarray  # (h, w, 3) uint8
    depth: np.ndarray  # (h, w) float32, +inf where empty
    part_id: np.ndarray  # (h, w) int32, -1 background


def camera_basis(cam: Camera) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Orthonormal (right, up, forward) for a camera; raises on degeneracy."""
    if not (0.0 < cam.vertical_fov < math.pi):
        raise CameraError(f"fov {cam.vertical_fov} outside (0, pi)")
    if not (0.0 < cam.near < cam.far):
        raise CameraError(f"invalid near/far {cam.near}/{cam.far}")
    forward = np.asarray(cam.target, dtype=np.float64) - np.asarray(
        cam.eye, dtype=np.float64
    )
    norm = np.linalg.norm(forward)
    if norm < 1e-12:
        raise CameraError("eye equals target")
    forward = forward / norm
    right = np.cross(forward, np.asarray(cam.up, dtype=np.float64))
    rnorm = np.linalg.norm(right)
    if rnorm < 1e-12:
        raise CameraError("up vector parallel to view direction")
    right = right / rnorm
    camup = np.cross(right, forward)
    return right, camup, forward


def pixel_ray_coeffs(
    cam: Camera, width: int, height: int
) -> tuple[np.ndarray, np.ndarray]:
    """Per-column ``a`` and per-row ``b`` ray coefficients (see module doc)."""
    half_h = math.tan(cam.vertical_fov / 2.0)
    x_scale = half_h * width / height
    cols = np.arange(width, dtype=np.float64)
    rows = np.arange(height, dtype=np.float64)
    a = (2.0 * (cols + 0.5) / width - 1.0) * x_scale
    b = (1.0 - 2.0 * (rows + 0.5) / height) * half_h
    return a, b


def _clip_near(poly: np.ndarray, near: float) -> np.ndarray:
    """Sutherland-Hodgman clip of a camera-space polygon against z >= near."""
    out = []
    n = len(poly)
    for k in range(n):
        p, q = poly[k], poly[(k + 1) % n]
        pin, qin = p[2] >= near, q[2] >= near
        if pin:
            out.append(p)
        if pin != qin:
            s = (near - p[2]) / (q[2] - p[2])
            out.append(p + s * (q - p))
    return np.asarray(out, dtype=np.float64)


def _edge_accepts_zero(dx: float, dy: float) -> bool:
    # Ownership tie-break for pixels exactly on an edge: of the two directed
    # versions of a shared edge, exactly one passes this test, so boundary
    # pixels are filled once and only once.
    return dy > 0.0 or (dy == 0.0 and dx < 0.0)


def shade_face(
    v0: np.ndarray,
    v1: np.ndarray,
    v2: np.ndarray,
    eye: np.ndarray,
    base_rgb: tuple[int, int, int],
) -> np.ndarray:
    """Flat Lambertian shading from a headlight at the eye.

    Back-facing triangles are rendered (not culled) but darker.
    """
    n = np.cross(v1 - v0, v2 - v0)
    nn = np.linalg.norm(n)
    centroid = (v0 + v1 + v2) / 3.0
    view = eye - centroid
    vn = np.linalg.norm(view)
    if nn < 1e-300 or vn < 1e-300:
        cosang = 0.0
    else:
        cosang = float(np.dot(n / nn, view / vn))
    intensity = AMBIENT + DIFFUSE * abs(cosang)
    if cosang < 0.0:
        intensity *= BACKFACE_FACTOR
    rgb = np.clip(np.round(np.asarray(base_rgb, dtype=np.float64) * intensity), 0, 255)
    return rgb.astype(np.uint8)


def rasterize(
    mesh,
    face_parts: np.ndarray,
    cam: Camera,
    width: int,
    height: int,
    highlight_part: int | None = None,
    hidden_parts: frozenset[int] | set[int] = frozenset(),
) -> FrameBuffer:
    """Render the mesh into color / depth / part-id planes.

    ``face_parts`` maps each face to its part id. Faces of ``hidden_parts``
    are skipped entirely; the ``highlight_part`` is drawn in the fixed
    highlight color, everything else in neutral gray. Zero-area triangles
    are skipped silently.
    """
    if width < 1 or height < 1:
        raise ValueError("render size must be at least 1x1")
    right, camup, forward = camera_basis(cam)
    eye = np.asarray(cam.eye, dtype=np.float64)

    verts = mesh.vertices
    rel = verts - eye
    xc = rel @ right
    yc = rel @ camup
    zc = rel @ forward

    half_h = math.tan(cam.vertical_fov / 2.0)
    x_scale = half_h * width / height
    a_cols, b_rows = pixel_ray_coeffs(cam, width, height)
    r0, r1, r2 = right
    u0, u1, u2 = camup
    f0, f1, f2 = forward

    zbuf = np.full((height, width), np.inf, dtype=np.float64)
    face_buf = np.full((height, width), -1, dtype=np.int64)

    hidden = hidden_parts if isinstance(hidden_parts, (set, frozenset)) else set(hidden_parts)

    for fi in range(mesh.num_faces):
        if int(face_parts[fi]) in hidden:
            continue
        i0, i1, i2 = mesh.faces[fi]
        w0, w1, w2 = verts[i0], verts[i1], verts[i2]
        n = np.cross(w1 - w0, w2 - w0)
        if n[0] == 0.0 and n[1] == 0.0 and n[2] == 0.0:
            continue
        num = n[0] * (w0[0] - eye[0]) + n[1] * (w0[1] - eye[1]) + n[2] * (w0[2] - eye[2])

        campoly = np.array(
            [
                [xc[i0], yc[i0], zc[i0]],
                [xc[i1], yc[i1], zc[i1]],
                [xc[i2], yc[i2], zc[i2]],
            ]
        )
        if campoly[:, 2].min() < cam.near:
            campoly = _clip_near(campoly, cam.near)
            if len(campoly) < 3:
                continue

        px = (campoly[:, 0] / (campoly[:, 2] * x_scale) + 1.0) * (width / 2.0)
        py = (1.0 - campoly[:, 1] / (campoly[:, 2] * half_h)) * (height / 2.0)

        for k in range(1, len(campoly) - 1):
            sx = np.array([px[0], px[k], px[k + 1]])
            sy = np.array([py[0], py[k], py[k + 1]])
            area2 = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sy[1] - sy[0]) * (sx[2] - sx[0])
            if area2 == 0.0:
                continue
            if area2 < 0.0:
                sx[1], sx[2] = sx[2], sx[1]
                sy[1], sy[2] = sy[2], sy[1]

            x0 = max(0, math.ceil(sx.min() - 0.5))
            x1 = min(width - 1, math.floor(sx.max() - 0.5))
            y0 = max(0, math.ceil(sy.min() - 0.5))
            y1 = min(height - 1, math.floor(sy.max() - 0.5))
            if x1 < x0 or y1 < y0:
                continue

            pcx = np.arange(x0, x1 + 1, dtype=np.float64) + 0.5
            pcy = (np.arange(y0, y1 + 1, dtype=np.float64) + 0.5)[:, None]
            covered = np.ones((y1 - y0 + 1, x1 - x0 + 1), dtype=bool)
            for e in range(3):
                ax, ay = sx[e], sy[e]
                dx, dy = sx[(e + 1) % 3] - ax, sy[(e + 1) % 3] - ay
                val = dx * (pcy - ay) - dy * (pcx - ax)
                if _edge_accepts_zero(dx, dy):
                    covered &= val >= 0.0
                else:
                    covered &= val > 0.0
            if not covered.any():
                continue

            av = a_cols[x0 : x1 + 1]
            bv = b_rows[y0 : y1 + 1][:, None]
            dxr = f0 + av * r0 + bv * u0
            dyr = f1 + av * r1 + bv * u1
            dzr = f2 + av * r2 + bv * u2
            denom = n[0] * dxr + n[1] * dyr + n[2] * dzr
            with np.errstate(divide="ignore", invalid="ignore"):
                t = num / denom
            covered &= np.isfinite(t) & (t >= cam.near)

            sub = zbuf[y0 : y1 + 1, x0 : x1 + 1]
            upd = covered & (t < sub)
            sub[upd] = t[upd]
            face_buf[y0 : y1 + 1, x0 : x1 + 1][upd] = fi

    color = np.zeros((height, width, 3), dtype=np.uint8)
    part_id = np.full((height, width), -1, dtype=np.int32)
    for fi in np.unique(face_buf):
        if fi < 0:
            continue
        mask = face_buf == fi
        pid = int(face_parts[fi])
        part_id[mask] = pid
        base = HIGHLIGHT_RGB if pid == highlight_part else BASE_RGB
        i0, i1, i2 = mesh.faces[fi]
        color[mask] = shade_face(verts[i0], verts[i1], verts[i2], eye, base)

    depth = zbuf.astype(np.float32)
    return FrameBuffer(width=width, height=height, color=color, depth=depth, part_id=part_id)


def visible_pixel_count(fb: FrameBuffer, part: int) -> int:
    """Number of pixels whose part_id equals ``part``."""
    return int(np.count_nonzero(fb.part_id == part))


def save_color_png(fb: FrameBuffer, path) -> None:
    from PIL import Image

    Image.fromarray(fb.color, mode="RGB").save(path, format="PNG")


def save_part_id_raw(fb: FrameBuffer, path) -> None:
    """Dump the part-id plane as row-major little-endian int32."""
    with open(path, "wb") as fh:
        fh.write(fb.part_id.astype("<i4").tobytes())
