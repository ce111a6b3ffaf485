"""Per-stage wall-clock profile of the batch pipeline on one synthetic mesh.

Times segmentation, duplicate grouping, view selection + rendering, and
embedding separately, reporting totals and per-exemplar costs. Useful for
sizing --resolution and --candidates against a render budget.
"""

from __future__ import annotations

import argparse
import time

from partmatch.benchgen import ArchetypeSpec, generate_mesh
from partmatch.dedup import Tolerances, group_duplicates
from partmatch.encode import BuiltinBackend, embed_part
from partmatch.mesh import segment_mesh
from partmatch.views import Scene, ViewConfig, render_view_set


def parse_args() -> argparse.Namespace:
    p = argparse.ArgumentParser(
        description=__doc__, formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    p.add_argument("--kind", default="fence", choices=["pinecone", "fence", "plant"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--resolution", type=int, default=512)
    p.add_argument("--candidates", type=int, default=16)
    return p.parse_args()


def main() -> int:
    args = parse_args()
    sm = generate_mesh(ArchetypeSpec(kind=args.kind), seed=args.seed)
    print(f"mesh {sm.name}: {len(sm.mesh.vertices)} vertices, "
          f"{len(sm.mesh.faces)} faces")

    t = time.monotonic()
    merged, parts = segment_mesh(sm.mesh)
    t_segment = time.monotonic() - t
    print(f"segment: {len(parts)} parts in {t_segment:.3f}s")

    t = time.monotonic()
    groups = group_duplicates(merged, parts, Tolerances())
    t_dedup = time.monotonic() - t
    print(f"dedup: {len(groups.groups)} groups "
          f"({len(groups.exemplars)} exemplars) in {t_dedup:.3f}s")

    scene = Scene.build(merged, parts)
    cfg = ViewConfig(resolution=args.resolution, candidates=args.candidates)
    backend = BuiltinBackend()
    part_of = {p.part_id: p for p in parts}

    t_views = 0.0
    t_embed = 0.0
    for pid in groups.exemplars:
        t = time.monotonic()
        views = render_view_set(scene, part_of[pid], cfg)
        t_views += time.monotonic() - t
        t = time.monotonic()
        embed_part(views, backend)
        t_embed += time.monotonic() - t

    n = len(groups.exemplars)
    print(f"views: {t_views:.3f}s total at {args.resolution}x{args.resolution} "
          f"with {args.candidates} candidates ({t_views / n:.3f}s per exemplar)")
    print(f"embed: {t_embed:.3f}s total ({t_embed / n:.4f}s per exemplar)")
    print(f"pipeline total: {t_segment + t_dedup + t_views + t_embed:.3f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
