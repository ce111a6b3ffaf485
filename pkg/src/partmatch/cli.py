"""Command line entry points: batch pipeline, training, evaluation, serving.

Every subcommand is a thin wrapper over the library modules; the HTTP
service shares the same core, so `query` here and the service's query
endpoint return identical selections for identical artifacts.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .benchgen import (
    ArchetypeSpec,
    BenchmarkConfigError,
    default_benchmark_specs,
    generate_synthetic_benchmark,
    write_benchmark_dir,
)
from .dedup import Tolerances, group_duplicates, groups_to_json
from .encode import save_head
from .evalkit import evaluate_queries, load_benchmark
from .mesh import MeshError, load_obj, mesh_snapshot, segment_mesh
from .pipeline import (
    PipelineConfig,
    PipelineConfigError,
    PipelineStageError,
    build_material_pools,
    load_artifacts,
    rank_for_benchmark,
    run_pipeline,
    validate_config,
)
from .raster import save_color_png
from .retrieve import (
    PartNotFoundError,
    SelectionRequest,
    build_index,
    rank_parts,
    select_group,
)
from .train import TrainConfig, TrainingError, balance_dataset, train_projection_head
from .views import Scene, ViewConfig, render_view_set


def _add_tolerance_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bins", type=int, default=64, help="radial histogram bins")
    p.add_argument("--l1-tol", type=float, default=1e-2, help="histogram L1 tolerance")
    p.add_argument("--scale-tol", type=float, default=1e-2,
                   help="relative extent tolerance")
    p.add_argument("--count-tol", type=float, default=0.05,
                   help="relative vertex count tolerance (strict)")


def _add_render_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--resolution", type=int, default=512, help="render size in pixels")
    p.add_argument("--candidates", type=int, default=16,
                   help="hemisphere view candidates")


def _add_space_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--space", choices=("x", "z"), default="x",
                   help="embedding space for distances")
    p.add_argument("--head", type=Path, default=None,
                   help="projection head checkpoint (required for --space z)")


def _tolerances(args: argparse.Namespace) -> Tolerances:
    return Tolerances(
        bins=args.bins, l1=args.l1_tol, scale_tol=args.scale_tol,
        count_tol=args.count_tol,
    )


def _pipeline_config(args: argparse.Namespace, out_dir: Path) -> PipelineConfig:
    return PipelineConfig(
        out_dir=out_dir,
        resolution=args.resolution,
        candidates=args.candidates,
        tolerances=_tolerances(args),
        backend=getattr(args, "backend", "builtin"),
        head_checkpoint=getattr(args, "head", None),
        space=getattr(args, "space", "x"),
        seed=getattr(args, "seed", 0),
        save_views=getattr(args, "save_views", False),
        jobs=getattr(args, "jobs", 1),
    )


def _load_index(args: argparse.Namespace):
    result = load_artifacts(args.index)
    head = None
    if args.space == "z":
        if args.head is None:
            raise PipelineConfigError("--space z needs --head")
        from .encode import load_head

        head, _ = load_head(args.head)
    name = result.mesh.name
    return result, build_index(name, result.groups, result.embeddings,
                               space=args.space, head=head)


# -- subcommand bodies -------------------------------------------------------


def _cmd_segment(args: argparse.Namespace) -> int:
    mesh = load_obj(Path(args.input).read_bytes(), name=Path(args.input).stem)
    merged, parts = segment_mesh(mesh)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "mesh.json").write_text(json.dumps(mesh_snapshot(merged, parts)) + "\n")
    print(f"parts: {len(parts)}")
    for p in parts:
        print(f"  part {p.part_id}: material {p.material_id}, "
              f"{len(p.face_ids)} faces, {p.vertex_count} vertices")
    return 0


def _cmd_dedup(args: argparse.Namespace) -> int:
    mesh = load_obj(Path(args.input).read_bytes(), name=Path(args.input).stem)
    merged, parts = segment_mesh(mesh)
    groups = group_duplicates(merged, parts, _tolerances(args))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "groups.json").write_text(json.dumps(groups_to_json(groups), indent=2) + "\n")
    print(f"parts: {len(parts)}")
    print(f"groups: {len(groups.groups)}")
    for g, ex in zip(groups.groups, groups.exemplars):
        print(f"  exemplar {ex}: members {sorted(g)}")
    return 0


def _cmd_views(args: argparse.Namespace) -> int:
    mesh = load_obj(Path(args.input).read_bytes(), name=Path(args.input).stem)
    merged, parts = segment_mesh(mesh)
    scene = Scene.build(merged, parts)
    cfg = ViewConfig(resolution=args.resolution, candidates=args.candidates)
    if args.part is not None:
        if not 0 <= args.part < len(parts):
            raise PartNotFoundError(f"part {args.part} not in mesh")
        targets = [args.part]
    else:
        groups = group_duplicates(merged, parts, _tolerances(args))
        targets = sorted(groups.exemplars)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for pid in targets:
        vs = render_view_set(scene, parts[pid], cfg)
        for vname in ("isolated", "context", "full"):
            save_color_png(getattr(vs, vname), out / f"part_{pid}_{vname}.png")
        print(f"part {pid}: zoom level {vs.zoom_level}")
    return 0


def _cmd_embed(args: argparse.Namespace) -> int:
    cfg = _pipeline_config(args, Path(args.out))
    validate_config(cfg)
    data = Path(args.input).read_bytes()
    result = run_pipeline(data, name=Path(args.input).stem, cfg=cfg)
    print(f"parts: {result.manifest['parts']}")
    print(f"exemplars: {result.manifest['exemplars']}")
    print(f"artifacts: {len(result.manifest['artifacts'])}")
    return 0


def _cmd_train(args: argparse.Namespace) -> int:
    bench_dir = Path(args.bench_dir)
    entries = load_benchmark(bench_dir / "bench.json")
    pipe_cfg = PipelineConfig(
        out_dir=bench_dir,  # unused by pool building; rendering is in-memory
        resolution=args.resolution,
        candidates=args.candidates,
    )
    pools = {}
    for entry in entries:
        mesh_path = bench_dir / entry.mesh_path
        mesh = load_obj(mesh_path.read_bytes(), name=mesh_path.stem)
        merged, parts = segment_mesh(mesh)
        groups = group_duplicates(merged, parts, _tolerances(args))
        scene = Scene.build(merged, parts)
        pools.update(
            build_material_pools(mesh_path.stem, scene, groups, pipe_cfg,
                                 floor=args.floor)
        )
        print(f"{mesh_path.stem}: {len(parts)} parts, "
              f"{len(groups.exemplars)} exemplars")
    samples = balance_dataset(pools, floor=args.floor, cap=args.cap,
                              max_ratio=args.max_ratio, seed=args.seed)
    print(f"training samples after balancing: {len(samples)}")
    cfg = TrainConfig(
        temperature=args.temperature,
        learning_rate=args.learning_rate,
        steps=args.steps,
        batch_size=args.batch_size,
        seed=args.seed,
        floor=args.floor,
        cap=args.cap,
        max_ratio=args.max_ratio,
    )
    result = train_projection_head(samples, cfg)
    save_head(
        args.out, result.head, seed=args.seed,
        config={
            "temperature": cfg.temperature,
            "learning_rate": cfg.learning_rate,
            "steps": cfg.steps,
            "batch_size": cfg.batch_size,
        },
    )
    losses_path = Path(str(args.out) + ".losses.json")
    losses_path.write_text(
        json.dumps([{"step": s, "loss": l} for s, l in result.losses], indent=2) + "\n"
    )
    first = result.losses[0][1] if result.losses else float("nan")
    last = result.losses[-1][1] if result.losses else float("nan")
    print(f"steps: {result.steps}, loss {first:.4f} -> {last:.4f}")
    print(f"checkpoint: {args.out}")
    return 0


def _cmd_query(args: argparse.Namespace) -> int:
    _, index = _load_index(args)
    part_ids = tuple(int(s) for s in args.parts.split(","))
    request = SelectionRequest(query_part_ids=part_ids, threshold=args.lam)
    selected = select_group(index, request)
    print(json.dumps(
        {
            "selected": [{"part_id": pid, "distance": d} for pid, d in selected],
            "lambda": args.lam,
        },
        indent=2,
    ))
    return 0


def _cmd_rank(args: argparse.Namespace) -> int:
    _, index = _load_index(args)
    ranking = rank_parts(index, args.part)
    print(json.dumps(
        {
            "query_part_id": args.part,
            "ranking": [{"part_id": pid, "distance": d} for pid, d in ranking],
        },
        indent=2,
    ))
    return 0


def _cmd_eval(args: argparse.Namespace) -> int:
    bench_path = Path(args.benchmark)
    entries = load_benchmark(bench_path)
    index_dir = Path(args.index_dir)
    val, test = [], []
    for i, entry in enumerate(entries):
        stem = Path(entry.mesh_path).stem
        art_dir = index_dir / stem
        if not (art_dir / "manifest.json").is_file():
            if not args.build_missing:
                print(f"error: no artifacts for {stem} under {index_dir}; "
                      f"run `partmatch embed` first or pass --build-missing",
                      file=sys.stderr)
                return 2
            mesh_path = bench_path.parent / entry.mesh_path
            cfg = _pipeline_config(args, art_dir)
            run_pipeline(mesh_path.read_bytes(), name=stem, cfg=cfg)
        result = load_artifacts(art_dir)
        head = None
        if args.space == "z":
            if args.head is None:
                raise PipelineConfigError("--space z needs --head")
            from .encode import load_head

            head, _ = load_head(args.head)
        index = build_index(stem, result.groups, result.embeddings,
                            space=args.space, head=head)
        ranked = rank_for_benchmark(index, entry.queries)
        (val if i < args.val_meshes else test).append((stem, ranked))

    val_queries = [q for _, qs in val for q in qs]
    test_queries = [q for _, qs in test for q in qs]
    if not test_queries:
        print("error: no test queries left after the validation split",
              file=sys.stderr)
        return 2
    ks = tuple(int(s) for s in args.recall_ks.split(","))
    report = evaluate_queries(test_queries, val_queries, recall_ks=ks,
                              n_thresholds=args.thresholds)
    Path(args.out).write_text(json.dumps(report.to_json(), indent=2) + "\n")
    for name, value in report.table_row().items():
        print(f"{name}: {value:.4f}")
    print(f"lambda*: {report.threshold:.6f} (validation F1 {report.threshold_f1:.4f})")
    print(f"report: {args.out}")
    return 0


def _cmd_genbench(args: argparse.Namespace) -> int:
    specs = default_benchmark_specs(args.meshes)
    meshes = generate_synthetic_benchmark(args.seed, specs)
    bench = write_benchmark_dir(args.out, meshes)
    total_queries = sum(len(m.queries) for m in meshes)
    print(f"meshes: {len(meshes)}")
    print(f"queries: {total_queries}")
    print(f"benchmark: {bench}")
    return 0


def _cmd_serve(args: argparse.Namespace) -> int:
    from .service import ServiceConfig, serve

    config = ServiceConfig(
        data_dir=Path(args.data_dir),
        resolution=args.resolution,
        candidates=args.candidates,
        backend=args.backend,
        head_checkpoint=args.head,
        space=args.space,
        cors_origins=tuple(args.cors_origin),
    )
    serve(config, host=args.host, port=args.port)
    return 0


# -- parser ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="partmatch",
        description="material-aware part grouping for segmented meshes",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    fmt = argparse.ArgumentDefaultsHelpFormatter

    p = sub.add_parser("segment", help="split a mesh into parts",
                       formatter_class=fmt)
    p.add_argument("input", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("dedup", help="group near-duplicate parts",
                       formatter_class=fmt)
    p.add_argument("input", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    _add_tolerance_flags(p)
    p.set_defaults(func=_cmd_dedup)

    p = sub.add_parser("views", help="render canonical part views",
                       formatter_class=fmt)
    p.add_argument("input", type=Path)
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--part", type=int, default=None,
                   help="single part id (default: every dedup exemplar)")
    _add_render_flags(p)
    _add_tolerance_flags(p)
    p.set_defaults(func=_cmd_views)

    p = sub.add_parser("embed", help="full pipeline: segment, dedup, render, embed",
                       formatter_class=fmt)
    p.add_argument("input", type=Path)
    p.add_argument("--out", type=Path, required=True, help="artifact directory")
    _add_render_flags(p)
    _add_tolerance_flags(p)
    _add_space_flags(p)
    p.add_argument("--backend", default="builtin",
                   help="feature backend: builtin or external:<sidecar dir>")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--save-views", action="store_true",
                   help="also write per-part view PNGs")
    p.add_argument("--jobs", type=int, default=1, help="render worker threads")
    p.set_defaults(func=_cmd_embed)

    p = sub.add_parser("train", help="train the projection head on a benchmark dir",
                       formatter_class=fmt)
    p.add_argument("--bench-dir", type=Path, required=True,
                   help="directory holding bench.json and meshes/")
    p.add_argument("--out", type=Path, required=True, help="checkpoint path")
    _add_render_flags(p)
    _add_tolerance_flags(p)
    p.add_argument("--steps", type=int, default=20000)
    p.add_argument("--batch-size", type=int, default=256)
    p.add_argument("--learning-rate", type=float, default=1e-5)
    p.add_argument("--temperature", type=float, default=0.07)
    p.add_argument("--floor", type=int, default=8,
                   help="minimum samples per material key")
    p.add_argument("--cap", type=int, default=100,
                   help="maximum samples per material key")
    p.add_argument("--max-ratio", type=float, default=5.0,
                   help="largest/smallest material ratio within a mesh")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("query", help="threshold selection around query parts",
                       formatter_class=fmt)
    p.add_argument("--index", type=Path, required=True, help="artifact directory")
    p.add_argument("--parts", required=True, help="comma-separated query part ids")
    p.add_argument("--lambda", dest="lam", type=float, required=True,
                   help="selection distance threshold")
    _add_space_flags(p)
    p.set_defaults(func=_cmd_query)

    p = sub.add_parser("rank", help="rank all parts against one query part",
                       formatter_class=fmt)
    p.add_argument("--index", type=Path, required=True, help="artifact directory")
    p.add_argument("--part", type=int, required=True)
    _add_space_flags(p)
    p.set_defaults(func=_cmd_rank)

    p = sub.add_parser("eval", help="score a benchmark and pick lambda on validation",
                       formatter_class=fmt)
    p.add_argument("--benchmark", type=Path, required=True, help="bench.json path")
    p.add_argument("--index-dir", type=Path, required=True,
                   help="directory of per-mesh artifact dirs")
    p.add_argument("--val-meshes", type=int, default=5,
                   help="leading meshes reserved for lambda selection")
    p.add_argument("--out", type=Path, required=True, help="report JSON path")
    p.add_argument("--thresholds", type=int, default=200)
    p.add_argument("--recall-ks", default="5,10,20,100")
    p.add_argument("--build-missing", action="store_true",
                   help="run the pipeline for meshes without artifacts")
    _add_render_flags(p)
    _add_tolerance_flags(p)
    _add_space_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("genbench", help="generate the synthetic benchmark",
                       formatter_class=fmt)
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--meshes", type=int, default=10)
    p.set_defaults(func=_cmd_genbench)

    p = sub.add_parser("serve", help="run the HTTP service",
                       formatter_class=fmt)
    p.add_argument("--host", default=os.environ.get("PARTMATCH_HOST", "127.0.0.1"))
    p.add_argument("--port", type=int,
                   default=int(os.environ.get("PARTMATCH_PORT", "8787")))
    p.add_argument("--data-dir", type=Path,
                   default=Path(os.environ.get("PARTMATCH_DATA_DIR",
                                               "partmatch-data")))
    p.add_argument("--resolution", type=int,
                   default=int(os.environ.get("PARTMATCH_RESOLUTION", "512")))
    p.add_argument("--candidates", type=int, default=16)
    p.add_argument("--backend",
                   default=os.environ.get("PARTMATCH_BACKEND", "builtin"))
    p.add_argument("--head", type=Path,
                   default=(Path(os.environ["PARTMATCH_HEAD"])
                            if "PARTMATCH_HEAD" in os.environ else None))
    p.add_argument("--space", choices=("x", "z"),
                   default=os.environ.get("PARTMATCH_SPACE", "x"))
    p.add_argument("--cors-origin", action="append", default=[],
                   help="origin allowed to call the API from a browser "
                        "(repeatable); off by default")
    p.set_defaults(func=_cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (PipelineConfigError, BenchmarkConfigError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except PipelineStageError as exc:
        print(f"pipeline error: {exc}", file=sys.stderr)
        return 1
    except (MeshError, TrainingError, PartNotFoundError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except FileNotFoundError as exc:
        print(f"missing file: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
