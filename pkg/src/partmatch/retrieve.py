"""Same-material part retrieval over a segmented mesh.

Distances are computed between dedup exemplars only; members of a
duplicate group inherit their exemplar's embedding, so grouped parts sit
at distance zero from each other by construction. The default embedding
space is the pre-projection feature x, which ranks better than the
contrastive output z; z remains available behind a flag.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .dedup import DuplicateGroups
from .encode import ProjectionHead, project


class PartNotFoundError(LookupError):
    """A requested part id is not present in the index."""


def l1_distance(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError(f"embedding shapes differ: {a.shape} vs {b.shape}")
    return float(np.abs(a - b).sum())


def similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Negative L1 distance; higher means more alike."""
    return -l1_distance(a, b)


@dataclass
class EmbeddingIndex:
    """Queryable embeddings for all parts of one mesh."""

    mesh_id: str
    space: str
    part_ids: list[int]
    exemplar_of: dict[int, int]
    vectors: dict[int, np.ndarray]  # exemplar id -> embedding

    def embedding_for(self, part_id: int) -> np.ndarray:
        if part_id not in self.exemplar_of:
            raise PartNotFoundError(f"part {part_id} not in index for {self.mesh_id}")
        return self.vectors[self.exemplar_of[part_id]]


def build_index(
    mesh_id: str,
    groups: DuplicateGroups,
    embeddings: dict[int, np.ndarray],
    space: str = "x",
    head: ProjectionHead | None = None,
) -> EmbeddingIndex:
    """Index exemplar embeddings for retrieval.

    ``embeddings`` maps exemplar part id -> pre-projection x. With
    space="z" a projection head is required and exemplars are projected
    once at build time.
    """
    if space not in ("x", "z"):
        raise ValueError(f"unknown embedding space {space!r}")
    if space == "z" and head is None:
        raise ValueError("space 'z' requires a projection head")

    exemplar_of = groups.exemplar_of()
    part_ids = sorted(exemplar_of)
    vectors: dict[int, np.ndarray] = {}
    for ex in sorted(groups.exemplars):
        if ex not in embeddings:
            raise PartNotFoundError(f"no embedding for exemplar part {ex}")
        vec = np.asarray(embeddings[ex], dtype=np.float64)
        vectors[ex] = project(vec, head) if space == "z" else vec
    return EmbeddingIndex(
        mesh_id=mesh_id,
        space=space,
        part_ids=part_ids,
        exemplar_of=exemplar_of,
        vectors=vectors,
    )


def rank_parts(index: EmbeddingIndex, query_part_id: int) -> list[tuple[int, float]]:
    """All parts ordered by distance to the query, ties by part id.

    The query itself is included (distance 0 through its exemplar), so a
    ranking is a permutation of every part in the mesh.
    """
    q = index.embedding_for(query_part_id)
    dist_of_ex = {ex: l1_distance(q, v) for ex, v in index.vectors.items()}
    ranked = [(pid, dist_of_ex[index.exemplar_of[pid]]) for pid in index.part_ids]
    ranked.sort(key=lambda t: (t[1], t[0]))
    return ranked


@dataclass(frozen=True)
class SelectionRequest:
    query_part_ids: tuple[int, ...]
    threshold: float

    def __post_init__(self) -> None:
        if not self.query_part_ids:
            raise ValueError("selection needs at least one query part")
        if not np.isfinite(self.threshold) or self.threshold < 0:
            raise ValueError("threshold must be finite and nonnegative")


def select_group(
    index: EmbeddingIndex, request: SelectionRequest
) -> list[tuple[int, float]]:
    """Parts whose distance to the nearest query is within the threshold.

    Distance per part is min over query parts; queries therefore always
    select themselves. Output is sorted by (distance, part id). Growing
    the threshold or adding queries can only grow the selection.
    """
    queries = [index.embedding_for(q) for q in request.query_part_ids]
    dist_of_ex: dict[int, float] = {}
    for ex, vec in index.vectors.items():
        dist_of_ex[ex] = min(l1_distance(q, vec) for q in queries)
    out = []
    for pid in index.part_ids:
        d = dist_of_ex[index.exemplar_of[pid]]
        if d <= request.threshold:
            out.append((pid, d))
    out.sort(key=lambda t: (t[1], t[0]))
    return out
