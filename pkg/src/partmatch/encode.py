"""Per-part embeddings from rendered views.

Each view is summarized by a 384-d hand-built feature (occupancy grid,
normalized depth grid, intensity grid); the three canonical views
concatenate into the pre-projection embedding x. A small two-layer
projection head maps x onto the unit sphere for contrastive training.

External per-view features can be swapped in through the embedding store
files; the geometry pipeline stays unchanged.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol

import numpy as np

from .raster import FrameBuffer

VIEW_ORDER = ("isolated", "context", "full")

OCCUPANCY_GRID = 16
DEPTH_GRID = 8
INTENSITY_GRID = 8
BUILTIN_DIM = OCCUPANCY_GRID**2 + DEPTH_GRID**2 + INTENSITY_GRID**2


class EmbeddingError(Exception):
    """Base class for embedding store and checkpoint failures."""


class EmbeddingFormatError(EmbeddingError):
    """Structurally invalid store or checkpoint (bad header, wrong sizes)."""


class EmbeddingDataError(EmbeddingError):
    """Well-formed container holding unusable values (NaN, inf)."""


def _cell_index(extent: int, grid: int) -> np.ndarray:
    return (np.arange(extent) * grid) // extent


def _grid_mean(values: np.ndarray, select: np.ndarray, grid: int) -> np.ndarray:
    """Per-cell mean of ``values`` over ``select`` pixels; 0 for empty cells."""
    h, w = select.shape
    rows = _cell_index(h, grid)[:, None]
    cols = _cell_index(w, grid)[None, :]
    cell = (rows * grid + cols).ravel()
    sel = select.ravel()
    sums = np.bincount(cell[sel], weights=values.ravel()[sel], minlength=grid * grid)
    counts = np.bincount(cell[sel], minlength=grid * grid)
    out = np.zeros(grid * grid, dtype=np.float64)
    nz = counts > 0
    out[nz] = sums[nz] / counts[nz]
    return out


def extract_view_feature(fb: FrameBuffer, part_id: int) -> np.ndarray:
    """384-d summary of one rendered view of one part.

    Blocks, in order: 16x16 occupancy fractions of the part mask, 8x8 mean
    of min-max normalized depth over part pixels (all-equal depths map to
    0), 8x8 mean pixel intensity (r+g+b)/(3*255) over part pixels.
    """
    mask = fb.part_id == part_id

    h, w = mask.shape
    rows = _cell_index(h, OCCUPANCY_GRID)[:, None]
    cols = _cell_index(w, OCCUPANCY_GRID)[None, :]
    cell = (rows * OCCUPANCY_GRID + cols).ravel()
    occ_sum = np.bincount(cell, weights=mask.ravel().astype(np.float64),
                          minlength=OCCUPANCY_GRID**2)
    occ_cnt = np.bincount(cell, minlength=OCCUPANCY_GRID**2)
    occupancy = occ_sum / occ_cnt

    depth = fb.depth.astype(np.float64)
    if mask.any():
        dvals = depth[mask]
        lo, hi = float(dvals.min()), float(dvals.max())
        if hi > lo:
            norm = np.zeros_like(depth)
            norm[mask] = (depth[mask] - lo) / (hi - lo)
        else:
            norm = np.zeros_like(depth)
    else:
        norm = np.zeros_like(depth)
    depth_block = _grid_mean(norm, mask, DEPTH_GRID)

    intensity = fb.color.astype(np.float64).sum(axis=2) / (3.0 * 255.0)
    intensity_block = _grid_mean(intensity, mask, INTENSITY_GRID)

    return np.concatenate([occupancy, depth_block, intensity_block])


class ViewFeatureBackend(Protocol):
    """Anything that turns one rendered view into a fixed-size vector."""

    dim: int

    def extract(self, fb: FrameBuffer, part_id: int) -> np.ndarray: ...


class BuiltinBackend:
    """Default geometry-derived feature; no learned weights."""

    dim = BUILTIN_DIM

    def extract(self, fb: FrameBuffer, part_id: int) -> np.ndarray:
        return extract_view_feature(fb, part_id)


@dataclass
class PartEmbedding:
    part_id: int
    x: np.ndarray  # concat over included views, len(include) * backend.dim


def embed_part(
    views,
    backend: ViewFeatureBackend | None = None,
    include: tuple[str, ...] = VIEW_ORDER,
) -> PartEmbedding:
    """Pre-projection embedding x = concat of per-view features.

    ``include`` defaults to all three canonical views in fixed order;
    ablations pass a subset (still in canonical order), shrinking x by 384
    per dropped view.
    """
    backend = backend or BuiltinBackend()
    unknown = [v for v in include if v not in VIEW_ORDER]
    if unknown:
        raise EmbeddingFormatError(f"unknown views {unknown}; valid: {VIEW_ORDER}")
    if not include:
        raise EmbeddingFormatError("at least one view must be included")
    part_id = views.part_id
    blocks = []
    for name in include:
        feat = np.asarray(backend.extract(getattr(views, name), part_id), dtype=np.float64)
        if feat.shape != (backend.dim,):
            raise EmbeddingFormatError(
                f"backend returned shape {feat.shape} for view {name}, "
                f"expected ({backend.dim},)"
            )
        blocks.append(feat)
    return PartEmbedding(part_id=part_id, x=np.concatenate(blocks))


@dataclass
class ProjectionHead:
    """Two-layer MLP with L2-normalized output."""

    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @property
    def in_dim(self) -> int:
        return self.w1.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w1.shape[0]

    @property
    def out_dim(self) -> int:
        return self.w2.shape[0]

    def params(self) -> dict[str, np.ndarray]:
        return {"w1": self.w1, "b1": self.b1, "w2": self.w2, "b2": self.b2}


NORM_GUARD = 1e-12


def init_head(
    in_dim: int = 3 * BUILTIN_DIM,
    hidden_dim: int = 512,
    out_dim: int = 128,
    seed: int = 0,
) -> ProjectionHead:
    """Uniform(-1/sqrt(fan_in), +1/sqrt(fan_in)) init, biases included."""
    rng = np.random.default_rng(seed)
    s1 = 1.0 / np.sqrt(in_dim)
    s2 = 1.0 / np.sqrt(hidden_dim)
    return ProjectionHead(
        w1=rng.uniform(-s1, s1, size=(hidden_dim, in_dim)),
        b1=rng.uniform(-s1, s1, size=hidden_dim),
        w2=rng.uniform(-s2, s2, size=(out_dim, hidden_dim)),
        b2=rng.uniform(-s2, s2, size=out_dim),
    )


def project(x: np.ndarray, head: ProjectionHead) -> np.ndarray:
    """z = normalize(W2 relu(W1 x + b1) + b2); degenerate u falls back to e1."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    if single:
        x = x[None, :]
    if x.shape[1] != head.in_dim:
        raise EmbeddingFormatError(
            f"input dim {x.shape[1]} does not match head input {head.in_dim}"
        )
    h = np.maximum(x @ head.w1.T + head.b1, 0.0)
    u = h @ head.w2.T + head.b2
    norms = np.linalg.norm(u, axis=1)
    z = np.empty_like(u)
    bad = norms < NORM_GUARD
    good = ~bad
    z[good] = u[good] / norms[good, None]
    if bad.any():
        z[bad] = 0.0
        z[bad, 0] = 1.0
    return z[0] if single else z


# ---------------------------------------------------------------------------
# Embedding store: JSON index + packed float32 blob, one row per (part, view).


def save_embedding_store(
    index_path: str | Path,
    blob_path: str | Path,
    features: dict[int, dict[str, np.ndarray]],
    dim: int,
) -> None:
    """Write per-view features for many parts.

    ``features`` maps part_id -> {view name -> (dim,) vector}. Rows are
    emitted part id ascending, views in canonical order, so the store is
    byte-stable for a given input.
    """
    order = []
    rows = []
    for part_id in sorted(features):
        per_view = features[part_id]
        for view in VIEW_ORDER:
            if view not in per_view:
                raise EmbeddingFormatError(
                    f"part {part_id} is missing view {view!r}"
                )
            vec = np.asarray(per_view[view], dtype=np.float64)
            if vec.shape != (dim,):
                raise EmbeddingFormatError(
                    f"part {part_id} view {view!r} has shape {vec.shape}, "
                    f"expected ({dim},)"
                )
            order.append({"part_id": part_id, "view": view})
            rows.append(vec.astype("<f4"))
    index = {"dim": dim, "order": order}
    Path(index_path).write_text(json.dumps(index, indent=2) + "\n")
    blob = b"".join(r.tobytes() for r in rows)
    Path(blob_path).write_bytes(blob)


def load_embedding_store(
    index_path: str | Path, blob_path: str | Path
) -> dict[int, np.ndarray]:
    """Read a store back into pre-projection embeddings.

    Returns part_id -> x where x concatenates the part's views in
    canonical order. Structural problems raise EmbeddingFormatError;
    non-finite values raise EmbeddingDataError.
    """
    try:
        index = json.loads(Path(index_path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise EmbeddingFormatError(f"index is not valid JSON: {exc}") from exc
    if not isinstance(index, dict) or "dim" not in index or "order" not in index:
        raise EmbeddingFormatError("index must be an object with 'dim' and 'order'")
    dim = index["dim"]
    order = index["order"]
    if not isinstance(dim, int) or dim <= 0:
        raise EmbeddingFormatError(f"invalid feature dim {dim!r}")
    if not isinstance(order, list):
        raise EmbeddingFormatError("'order' must be a list")

    blob = Path(blob_path).read_bytes()
    expected = dim * len(order) * 4
    if len(blob) != expected:
        raise EmbeddingFormatError(
            f"blob holds {len(blob)} bytes, index implies {expected}"
        )
    data = np.frombuffer(blob, dtype="<f4").astype(np.float64).reshape(len(order), dim)

    per_part: dict[int, dict[str, np.ndarray]] = {}
    for row, entry in enumerate(order):
        if not isinstance(entry, dict) or "part_id" not in entry or "view" not in entry:
            raise EmbeddingFormatError(f"order entry {row} must have part_id and view")
        pid, view = entry["part_id"], entry["view"]
        if view not in VIEW_ORDER:
            raise EmbeddingFormatError(f"order entry {row} has unknown view {view!r}")
        if not isinstance(pid, int):
            raise EmbeddingFormatError(f"order entry {row} has non-integer part id")
        slot = per_part.setdefault(pid, {})
        if view in slot:
            raise EmbeddingFormatError(f"duplicate row for part {pid} view {view!r}")
        slot[view] = data[row]

    out: dict[int, np.ndarray] = {}
    for pid in sorted(per_part):
        slot = per_part[pid]
        missing = [v for v in VIEW_ORDER if v not in slot]
        if missing:
            raise EmbeddingFormatError(f"part {pid} is missing views {missing}")
        x = np.concatenate([slot[v] for v in VIEW_ORDER])
        if not np.isfinite(x).all():
            raise EmbeddingDataError(f"part {pid} has non-finite feature values")
        out[pid] = x
    return out


# ---------------------------------------------------------------------------
# Head checkpoint: 4-byte little-endian header length, JSON header, f32 blob.

_CKPT_PARAM_ORDER = ("w1", "b1", "w2", "b2")


def save_head(
    path: str | Path,
    head: ProjectionHead,
    seed: int,
    config: dict | None = None,
) -> None:
    header = {
        "format": "projection-head",
        "version": 1,
        "seed": seed,
        "config": config or {},
        "params": [
            {"name": name, "shape": list(head.params()[name].shape)}
            for name in _CKPT_PARAM_ORDER
        ],
    }
    header_bytes = json.dumps(header).encode("utf-8")
    blob = b"".join(
        np.ascontiguousarray(head.params()[name], dtype="<f4").tobytes()
        for name in _CKPT_PARAM_ORDER
    )
    with open(path, "wb") as fh:
        fh.write(len(header_bytes).to_bytes(4, "little"))
        fh.write(header_bytes)
        fh.write(blob)


def load_head(path: str | Path) -> tuple[ProjectionHead, dict]:
    """Returns (head, header). Shape or size mismatches raise EmbeddingFormatError."""
    raw = Path(path).read_bytes()
    if len(raw) < 4:
        raise EmbeddingFormatError("checkpoint shorter than its length prefix")
    hlen = int.from_bytes(raw[:4], "little")
    if len(raw) < 4 + hlen:
        raise EmbeddingFormatError("checkpoint header is truncated")
    try:
        header = json.loads(raw[4 : 4 + hlen].decode("utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise EmbeddingFormatError(f"checkpoint header is not valid JSON: {exc}") from exc
    if header.get("format") != "projection-head":
        raise EmbeddingFormatError(f"unexpected checkpoint format {header.get('format')!r}")
    params_meta = header.get("params")
    if not isinstance(params_meta, list) or [p.get("name") for p in params_meta] != list(
        _CKPT_PARAM_ORDER
    ):
        raise EmbeddingFormatError("checkpoint must describe w1, b1, w2, b2 in order")

    blob = raw[4 + hlen :]
    expected = sum(int(np.prod(p["shape"])) for p in params_meta) * 4
    if len(blob) != expected:
        raise EmbeddingFormatError(
            f"checkpoint blob holds {len(blob)} bytes, header implies {expected}"
        )
    arrays = {}
    offset = 0
    for meta in params_meta:
        shape = tuple(meta["shape"])
        count = int(np.prod(shape))
        arr = np.frombuffer(blob, dtype="<f4", count=count, offset=offset)
        arrays[meta["name"]] = arr.astype(np.float64).reshape(shape)
        offset += count * 4
    head = ProjectionHead(**arrays)
    if head.w1.ndim != 2 or head.w2.ndim != 2:
        raise EmbeddingFormatError("weight matrices must be 2-d")
    if head.w1.shape[0] != head.b1.shape[0] or head.w2.shape[0] != head.b2.shape[0]:
        raise EmbeddingFormatError("bias shapes do not match weight rows")
    if head.w2.shape[1] != head.w1.shape[0]:
        raise EmbeddingFormatError("layer widths do not chain")
    return head, header
