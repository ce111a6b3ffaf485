"""End-to-end quality run on the synthetic benchmark.

Generates meshes, builds exemplar embeddings with the built-in backend,
trains the projection head, and evaluates retrieval in both the raw
concatenated space (x) and the projected space (z), printing one metrics
row per space. The first --val-meshes meshes supply the threshold fit;
the rest are the test split.
"""

from __future__ import annotations

import argparse
import json
import time
from pathlib import Path

from partmatch.benchgen import default_benchmark_specs, generate_synthetic_benchmark
from partmatch.dedup import Tolerances, group_duplicates
from partmatch.evalkit import evaluate_queries
from partmatch.mesh import segment_mesh
from partmatch.pipeline import PipelineConfig, build_material_pools, rank_for_benchmark
from partmatch.retrieve import build_index
from partmatch.train import TrainConfig, balance_dataset, train_projection_head
from partmatch.views import Scene


def parse_args() -> argparse.Namespace:
    p = argparse.ArgumentParser(
        description=__doc__, formatter_class=argparse.ArgumentDefaultsHelpFormatter
    )
    p.add_argument("--meshes", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--val-meshes", type=int, default=5)
    p.add_argument("--resolution", type=int, default=128)
    p.add_argument("--candidates", type=int, default=16)
    p.add_argument("--steps", type=int, default=2000)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--temperature", type=float, default=0.07)
    p.add_argument("--learning-rate", type=float, default=1e-5)
    p.add_argument("--spaces", default="x,z", help="comma-separated: x, z")
    p.add_argument("--out", type=Path, default=None,
                   help="optional directory for JSON reports and losses")
    return p.parse_args()


def main() -> int:
    args = parse_args()
    spaces = [s.strip() for s in args.spaces.split(",") if s.strip()]

    t0 = time.monotonic()
    meshes = generate_synthetic_benchmark(args.seed, default_benchmark_specs(args.meshes))
    cfg = PipelineConfig(out_dir="unused", resolution=args.resolution,
                         candidates=args.candidates)

    per_mesh = []
    pools = {}
    for sm in meshes:
        merged, parts = segment_mesh(sm.mesh)
        groups = group_duplicates(merged, parts, Tolerances())
        scene = Scene.build(merged, parts)
        mesh_pools = build_material_pools(sm.name, scene, groups, cfg)
        pools.update(mesh_pools)
        embeddings = {s.part_id: s.x for pool in mesh_pools.values() for s in pool.base}
        per_mesh.append((sm, groups, embeddings))
        print(f"{sm.name}: {len(parts)} parts, {len(groups.groups)} groups, "
              f"{len(mesh_pools)} materials")
    print(f"embedding stage: {time.monotonic() - t0:.1f}s")

    samples = balance_dataset(pools, seed=args.seed)
    train_cfg = TrainConfig(steps=args.steps, batch_size=args.batch_size,
                            temperature=args.temperature,
                            learning_rate=args.learning_rate, seed=args.seed)
    t1 = time.monotonic()
    result = train_projection_head(samples, train_cfg)
    print(f"trained on {len(samples)} samples: loss {result.losses[0][1]:.4f} -> "
          f"{result.losses[-1][1]:.4f} in {time.monotonic() - t1:.1f}s")

    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / "losses.json").write_text(json.dumps(result.losses) + "\n")

    for space in spaces:
        head = result.head if space == "z" else None
        val_queries, test_queries = [], []
        for i, (sm, groups, embeddings) in enumerate(per_mesh):
            index = build_index(sm.name, groups, embeddings, space=space, head=head)
            rows = rank_for_benchmark(index, sm.queries)
            (val_queries if i < args.val_meshes else test_queries).extend(rows)
        report = evaluate_queries(test_queries, val_queries)
        cells = "  ".join(f"{k} {v:.4f}" for k, v in report.table_row().items())
        print(f"space {space}: {cells}  lambda* {report.threshold:.4f}")
        if args.out is not None:
            path = args.out / f"report_{space}.json"
            path.write_text(json.dumps(report.to_json(), indent=2) + "\n")
            print(f"  report: {path}")

    print(f"total: {time.monotonic() - t0:.1f}s")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
