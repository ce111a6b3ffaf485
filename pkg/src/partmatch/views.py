"""Canonical per-part views: isolated, with-context, and full-object.

The context viewpoint is chosen by brute force over a deterministic set of
hemisphere directions, maximizing the part's visible pixel count; if the
part stays heavily occluded, the framing fraction is halved (zoomed in)
for up to three retries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .mesh import Mesh, Part, face_part_ids
from .raster import Camera, FrameBuffer, rasterize, visible_pixel_count

GOLDEN_ANGLE = math.pi * (3.0 - math.sqrt(5.0))


@dataclass
class Scene:
    """A segmented mesh plus the per-face part lookup the renderer needs."""

    mesh: Mesh
    parts: list[Part]
    face_parts: np.ndarray
    centroid: np.ndarray
    radius: float

    @classmethod
    def build(cls, mesh: Mesh, parts: list[Part]) -> "Scene":
        centroid = mesh.vertices.mean(axis=0)
        radius = float(np.sqrt(((mesh.vertices - centroid) ** 2).sum(axis=1)).max())
        return cls(
            mesh=mesh,
            parts=parts,
            face_parts=face_part_ids(parts, mesh.num_faces),
            centroid=centroid,
            radius=radius,
        )

    def part(self, part_id: int) -> Part:
        return self.parts[part_id]

    def other_part_ids(self, part_id: int) -> frozenset[int]:
        return frozenset(p.part_id for p in self.parts if p.part_id != part_id)


@dataclass(frozen=True)
class ViewConfig:
    resolution: int = 512
    candidates: int = 16
    fov: float = math.radians(45.0)
    occlusion_threshold: float = 0.3
    context_fraction: float = 0.25
    isolated_fraction: float = 0.5
    full_fraction: float = 0.45
    max_zoom_steps: int = 3
    seed: int | None = None  # None = deterministic Fibonacci spiral


@dataclass
class ContextSelection:
    camera: Camera
    zoom_level: int
    direction: np.ndarray
    candidate_index: int
    visibility_ratio: float
    fraction: float


@dataclass
class ViewSet:
    part_id: int
    isolated: FrameBuffer
    context: FrameBuffer
    full: FrameBuffer
    context_camera: Camera
    zoom_level: int


def _unit(v: np.ndarray, fallback: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    if n < 1e-9:
        return fallback.copy()
    return v / n


def outward_axis(part: Part, scene: Scene) -> np.ndarray:
    """Hemisphere orientation: from the mesh centroid out through the part."""
    return _unit(part.centroid - scene.centroid, np.array([0.0, 0.0, 1.0]))


def hemisphere_directions(
    axis: np.ndarray, n: int, seed: int | None = None
) -> np.ndarray:
    """n unit directions on the hemisphere around ``axis``.

    Deterministic Fibonacci spiral by default (k=0 lies exactly on the
    axis); pass a seed for uniform random sampling instead.
    """
    if n < 1:
        raise ValueError("need at least one candidate direction")
    if seed is None:
        k = np.arange(n, dtype=np.float64)
        cos_t = 1.0 - k / n
        phi = k * GOLDEN_ANGLE
    else:
        rng = np.random.default_rng(seed)
        cos_t = rng.uniform(0.0, 1.0, size=n)
        phi = rng.uniform(0.0, 2.0 * math.pi, size=n)
    sin_t = np.sqrt(np.clip(1.0 - cos_t**2, 0.0, None))

    helper = np.array([0.0, 0.0, 1.0])
    if abs(float(np.dot(axis, helper))) > 0.999:
        helper = np.array([1.0, 0.0, 0.0])
    e1 = np.cross(helper, axis)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)

    dirs = (
        sin_t[:, None] * np.cos(phi)[:, None] * e1
        + sin_t[:, None] * np.sin(phi)[:, None] * e2
        + cos_t[:, None] * axis
    )
    return dirs


def framing_distance(radius: float, fraction: float, fov: float) -> float:
    """Camera distance so a sphere of ``radius`` spans ``fraction`` of the image."""
    return radius / (fraction * math.tan(fov / 2.0))


def look_at(target: np.ndarray, direction: np.ndarray, distance: float, fov: float) -> Camera:
    """Camera on ``target + distance*direction`` looking back at the target."""
    up = np.array([0.0, 0.0, 1.0])
    if abs(float(np.dot(direction, up))) > 0.999:
        up = np.array([0.0, 1.0, 0.0])
    return Camera(
        eye=target + distance * direction,
        target=np.asarray(target, dtype=np.float64),
        up=up,
        vertical_fov=fov,
    )


def sample_hemisphere_cameras(
    part: Part,
    scene: Scene,
    n: int = 16,
    fraction: float | None = None,
    cfg: ViewConfig = ViewConfig(),
) -> list[Camera]:
    """Candidate context cameras looking at the part centroid."""
    axis = outward_axis(part, scene)
    dirs = hemisphere_directions(axis, n, cfg.seed)
    f = cfg.context_fraction if fraction is None else fraction
    radius = part.max_radial_extent if part.max_radial_extent > 0 else _fallback_radius(scene)
    d = framing_distance(radius, f, cfg.fov)
    return [look_at(part.centroid, dirs[k], d, cfg.fov) for k in range(n)]


def _fallback_radius(scene: Scene) -> float:
    return scene.radius if scene.radius > 0 else 1.0


def select_context_view(
    scene: Scene, part: Part, cfg: ViewConfig = ViewConfig()
) -> ContextSelection:
    """Pick the least-occluded context camera; zoom in when all are bad.

    Per pass: render the full mesh from every candidate, take the camera
    with the highest visible pixel count for the part (ties go to the
    lowest candidate index), and compute its visibility ratio = visible
    pixels / pixels of the same view with every other part hidden (ratio
    is 1 when the part covers no pixels even unoccluded, since zooming
    cannot fix that). Passes halve the framing fraction until the ratio
    clears the occlusion threshold or ``max_zoom_steps`` is exhausted.
    """
    axis = outward_axis(part, scene)
    pid = part.part_id
    res = cfg.resolution

    if part.max_radial_extent <= 0.0:
        d = framing_distance(_fallback_radius(scene), cfg.context_fraction, cfg.fov)
        cam = look_at(part.centroid, axis, d, cfg.fov)
        return ContextSelection(
            camera=cam,
            zoom_level=0,
            direction=axis,
            candidate_index=0,
            visibility_ratio=1.0,
            fraction=cfg.context_fraction,
        )

    dirs = hemisphere_directions(axis, cfg.candidates, cfg.seed)
    others = scene.other_part_ids(pid)

    fraction = cfg.context_fraction
    last: ContextSelection | None = None
    for zoom in range(cfg.max_zoom_steps + 1):
        d = framing_distance(part.max_radial_extent, fraction, cfg.fov)
        cams = [look_at(part.centroid, dirs[k], d, cfg.fov) for k in range(cfg.candidates)]
        counts = [
            visible_pixel_count(
                rasterize(scene.mesh, scene.face_parts, cam, res, res, highlight_part=pid),
                pid,
            )
            for cam in cams
        ]
        best = int(np.argmax(counts))
        solo = visible_pixel_count(
            rasterize(
                scene.mesh,
                scene.face_parts,
                cams[best],
                res,
                res,
                highlight_part=pid,
                hidden_parts=others,
            ),
            pid,
        )
        ratio = counts[best] / solo if solo > 0 else 1.0
        last = ContextSelection(
            camera=cams[best],
            zoom_level=zoom,
            direction=dirs[best],
            candidate_index=best,
            visibility_ratio=ratio,
            fraction=fraction,
        )
        if ratio >= cfg.occlusion_threshold:
            return last
        fraction /= 2.0
    assert last is not None
    return last


def render_view_set(
    scene: Scene, part: Part, cfg: ViewConfig = ViewConfig()
) -> ViewSet:
    """Render the three canonical views for one part.

    Context: selected camera, whole mesh, part highlighted. Isolated: same
    viewpoint zoomed to the isolated framing fraction, all other parts
    hidden. Full: whole mesh framed from the object center toward the part
    centroid, part highlighted.
    """
    sel = select_context_view(scene, part, cfg)
    pid = part.part_id
    res = cfg.resolution

    context = rasterize(
        scene.mesh, scene.face_parts, sel.camera, res, res, highlight_part=pid
    )

    radius = part.max_radial_extent if part.max_radial_extent > 0 else _fallback_radius(scene)
    iso_cam = look_at(
        part.centroid,
        sel.direction,
        framing_distance(radius, cfg.isolated_fraction, cfg.fov),
        cfg.fov,
    )
    isolated = rasterize(
        scene.mesh,
        scene.face_parts,
        iso_cam,
        res,
        res,
        highlight_part=pid,
        hidden_parts=scene.other_part_ids(pid),
    )

    full_dir = _unit(part.centroid - scene.centroid, np.array([0.0, 0.0, 1.0]))
    full_cam = look_at(
        scene.centroid,
        full_dir,
        framing_distance(_fallback_radius(scene), cfg.full_fraction, cfg.fov),
        cfg.fov,
    )
    full = rasterize(
        scene.mesh, scene.face_parts, full_cam, res, res, highlight_part=pid
    )

    return ViewSet(
        part_id=pid,
        isolated=isolated,
        context=context,
        full=full,
        context_camera=sel.camera,
        zoom_level=sel.zoom_level,
    )


def render_view_set_from_direction(
    scene: Scene,
    part: Part,
    direction: np.ndarray,
    cfg: ViewConfig = ViewConfig(),
    fraction: float | None = None,
) -> ViewSet:
    """View set with a forced context direction (augmentation viewpoints)."""
    pid = part.part_id
    res = cfg.resolution
    f = cfg.context_fraction if fraction is None else fraction
    radius = part.max_radial_extent if part.max_radial_extent > 0 else _fallback_radius(scene)

    cam = look_at(part.centroid, direction, framing_distance(radius, f, cfg.fov), cfg.fov)
    context = rasterize(scene.mesh, scene.face_parts, cam, res, res, highlight_part=pid)
    iso_cam = look_at(
        part.centroid,
        direction,
        framing_distance(radius, cfg.isolated_fraction, cfg.fov),
        cfg.fov,
    )
    isolated = rasterize(
        scene.mesh,
        scene.face_parts,
        iso_cam,
        res,
        res,
        highlight_part=pid,
        hidden_parts=scene.other_part_ids(pid),
    )
    full_dir = _unit(part.centroid - scene.centroid, np.array([0.0, 0.0, 1.0]))
    full_cam = look_at(
        scene.centroid,
        full_dir,
        framing_distance(_fallback_radius(scene), cfg.full_fraction, cfg.fov),
        cfg.fov,
    )
    full = rasterize(scene.mesh, scene.face_parts, full_cam, res, res, highlight_part=pid)
    return ViewSet(
        part_id=pid, isolated=isolated, context=context, full=full,
        context_camera=cam, zoom_level=0,
    )
