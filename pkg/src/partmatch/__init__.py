"""Material-aware part grouping for pre-segmented triangle meshes.

Pipeline: parse and segment a mesh into connected-component parts, group
near-duplicate parts, render three canonical views per exemplar, embed
the views, then answer magic-wand queries: given clicked parts and a
distance threshold, return every part likely to share their material.
"""

from .dedup import DuplicateGroups, Tolerances, group_duplicates
from .encode import (
    BuiltinBackend,
    PartEmbedding,
    ProjectionHead,
    embed_part,
    init_head,
    load_head,
    project,
    save_head,
)
from .mesh import (
    Mesh,
    MeshError,
    MeshParseError,
    MeshStructureError,
    Part,
    load_obj,
    mesh_to_obj,
    segment_mesh,
)
from .raster import Camera, FrameBuffer, rasterize
from .retrieve import (
    EmbeddingIndex,
    PartNotFoundError,
    SelectionRequest,
    build_index,
    rank_parts,
    select_group,
    similarity,
)
from .train import TrainConfig, TrainSample, balance_dataset, supcon_loss, train_projection_head
from .views import Scene, ViewConfig, ViewSet, render_view_set, select_context_view

__all__ = [
    "BuiltinBackend",
    "Camera",
    "DuplicateGroups",
    "EmbeddingIndex",
    "FrameBuffer",
    "Mesh",
    "MeshError",
    "MeshParseError",
    "MeshStructureError",
    "Part",
    "PartEmbedding",
    "PartNotFoundError",
    "ProjectionHead",
    "Scene",
    "SelectionRequest",
    "Tolerances",
    "TrainConfig",
    "TrainSample",
    "ViewConfig",
    "ViewSet",
    "balance_dataset",
    "build_index",
    "embed_part",
    "group_duplicates",
    "init_head",
    "load_head",
    "load_obj",
    "mesh_to_obj",
    "project",
    "rank_parts",
    "rasterize",
    "render_view_set",
    "save_head",
    "segment_mesh",
    "select_context_view",
    "select_group",
    "similarity",
    "supcon_loss",
    "train_projection_head",
]
