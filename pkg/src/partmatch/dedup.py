"""Near-duplicate part grouping via radial vertex-distance histograms.

Rigid-transformed copies of a part produce identical histograms of
centroid-to-vertex distances, so matching histograms (plus vertex-count
and overall-scale agreement) collapses duplicates. Only one exemplar per
group is rendered and embedded downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .mesh import Mesh, Part


@dataclass(frozen=True)
class Tolerances:
    """Duplicate-detection thresholds (conservative by default)."""

    bins: int = 64
    l1: float = 1e-2
    scale_tol: float = 1e-2
    count_tol: float = 0.05


@dataclass
class Descriptor:
    """Scale-normalized radial histogram plus the raw size checks."""

    histogram: np.ndarray  # (bins,) float64, sums to 1 (all-zero if degenerate)
    vertex_count: int
    max_radial_extent: float


@dataclass
class DuplicateGroups:
    groups: list[list[int]]  # part ids, each list sorted ascending
    exemplars: list[int]  # one exemplar per group

    def exemplar_of(self) -> dict[int, int]:
        """Map part_id -> exemplar part_id."""
        out = {}
        for members, ex in zip(self.groups, self.exemplars):
            for pid in members:
                out[pid] = ex
        return out


def radial_histogram(part: Part, mesh: Mesh, bins: int = 64) -> Descriptor:
    """Histogram of vertex distances from the part centroid.

    Distances are divided by the part's max radial extent, binned uniformly
    over [0, 1] (the right edge lands in the last bin), and counts are
    normalized by vertex count. A zero-extent part yields an all-zero
    histogram.
    """
    pts = mesh.vertices[part.vertex_ids]
    dist = np.sqrt(((pts - part.centroid) ** 2).sum(axis=1))
    extent = part.max_radial_extent
    if extent <= 0.0:
        hist = np.zeros(bins, dtype=np.float64)
    else:
        normalized = dist / extent
        idx = np.clip(np.floor(normalized * bins).astype(np.int64), 0, bins - 1)
        hist = np.bincount(idx, minlength=bins).astype(np.float64) / len(pts)
    return Descriptor(
        histogram=hist,
        vertex_count=part.vertex_count,
        max_radial_extent=extent,
    )


def _relative_diff(a: float, b: float) -> float:
    m = max(a, b)
    if m == 0.0:
        return 0.0
    return abs(a - b) / m


def is_duplicate(a: Descriptor, b: Descriptor, tol: Tolerances = Tolerances()) -> bool:
    """True iff vertex counts, histograms, and overall scales all agree.

    Vertex counts must differ by less than ``count_tol`` (relative),
    histogram L1 distance must be at most ``l1``, and max radial extents
    must agree within ``scale_tol`` (relative; two zero extents compare
    equal).
    """
    if _relative_diff(float(a.vertex_count), float(b.vertex_count)) >= tol.count_tol:
        return False
    if np.abs(a.histogram - b.histogram).sum() > tol.l1:
        return False
    if _relative_diff(a.max_radial_extent, b.max_radial_extent) > tol.scale_tol:
        return False
    return True


def group_duplicates(
    mesh: Mesh,
    parts: list[Part],
    tol: Tolerances = Tolerances(),
    exemplar_seed: int | None = None,
) -> DuplicateGroups:
    """Greedy exemplar grouping over parts in ascending part_id order.

    Each part is matched against the exemplars of existing groups and joins
    the first one that passes :func:`is_duplicate`; otherwise it founds a
    new group with itself as exemplar. Greedy-on-exemplars keeps every
    member within tolerance of its exemplar even though the duplicate
    relation is not transitive.

    ``exemplar_seed`` re-picks each group's exemplar uniformly at random
    after grouping; the default keeps the lowest part_id for
    reproducibility.
    """
    ordered = sorted(parts, key=lambda p: p.part_id)
    descriptors = {p.part_id: radial_histogram(p, mesh, tol.bins) for p in ordered}

    groups: list[list[int]] = []
    exemplars: list[int] = []
    for part in ordered:
        desc = descriptors[part.part_id]
        for gi, ex in enumerate(exemplars):
            if is_duplicate(desc, descriptors[ex], tol):
                groups[gi].append(part.part_id)
                break
        else:
            groups.append([part.part_id])
            exemplars.append(part.part_id)

    if exemplar_seed is not None:
        rng = np.random.default_rng(exemplar_seed)
        exemplars = [members[rng.integers(len(members))] for members in groups]

    return DuplicateGroups(groups=groups, exemplars=exemplars)


def groups_to_json(groups: DuplicateGroups) -> list[dict]:
    return [
        {"exemplar": ex, "members": list(members)}
        for members, ex in zip(groups.groups, groups.exemplars)
    ]


def groups_from_json(data: list[dict]) -> DuplicateGroups:
    return DuplicateGroups(
        groups=[list(rec["members"]) for rec in data],
        exemplars=[rec["exemplar"] for rec in data],
    )
