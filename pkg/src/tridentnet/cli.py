"""Command-line interface.

Subcommands cover the full pipeline: route planning, dataset construction,
training, evaluation, sample visualization, and synthetic-world generation.
Exit codes: 0 success, 1 runtime error, 2 unreachable destination, 64 usage.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_NO_ROUTE = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _apply_thread_cap() -> None:
    """Honor TRIDENT_THREADS by capping BLAS/OpenMP pools (default: all cores)."""
    cap = os.environ.get("TRIDENT_THREADS")
    if cap:
        for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ.setdefault(var, cap)


def _parse_xy(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ValueError(f"expected 'x,y', got {text!r}")
    return float(parts[0]), float(parts[1])


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="trident", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("route", help="shortest path between two map positions")
    p.add_argument("--osm", required=True)
    p.add_argument("--from-xy", required=True, metavar="X,Y")
    p.add_argument("--to-xy", required=True, metavar="X,Y")
    p.add_argument("--out", required=True)

    p = sub.add_parser("build-dataset", help="build samples + manifest from logs")
    p.add_argument("--osm", required=True)
    p.add_argument("--poses", required=True, action="append",
                   help="pose CSV; repeat for multiple tracks")
    p.add_argument("--semantic", required=True, help="semantic map PGM")
    p.add_argument("--meta", required=True, help="semantic map JSON sidecar")
    p.add_argument("--horizon", type=int, default=10)
    p.add_argument("--spacing", type=float, default=3.0)
    p.add_argument("--split", type=float, default=0.68)
    p.add_argument("--stride", type=int, default=1)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    p = sub.add_parser("train", help="train a model on a dataset directory")
    p.add_argument("--data", required=True)
    p.add_argument("--modes", type=int, default=12)
    p.add_argument("--epochs", type=int, default=100)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--batch", type=int, default=16)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out-ckpt", required=True)
    p.add_argument("--loss-csv", default=None,
                   help="loss log path (default: <out-ckpt>.loss.csv)")
    p.add_argument("--progress", action="store_true")

    p = sub.add_parser("eval", help="evaluate a checkpoint on the test split")
    p.add_argument("--data", required=True)
    p.add_argument("--ckpt", required=True)
    p.add_argument("--report", required=True,
                   help="report base path; writes <report>.txt and <report>.json")

    p = sub.add_parser("generate", help="run inference on one sample and plot it")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--sample", required=True)
    p.add_argument("--plot", required=True, help="output PPM path")

    p = sub.add_parser("gen-synth", help="materialize a synthetic test world")
    p.add_argument("--kind", required=True,
                   choices=["straight", "intersection", "u_turn", "curve"])
    p.add_argument("--maneuver", default="left", choices=["left", "right", "straight"],
                   help="track maneuver for the intersection kind")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)

    return parser


def cmd_route(args) -> int:
    from . import geo

    g = geo.parse_osm(Path(args.osm).read_text())
    src = geo.nearest_node(g, _parse_xy(args.from_xy))
    dst = geo.nearest_node(g, _parse_xy(args.to_xy))
    try:
        route = geo.shortest_path(g, src, dst)
    except geo.NoRoute as exc:
        print(f"no route: {exc}", file=sys.stderr)
        return EXIT_NO_ROUTE
    payload = {"node_ids": route.node_ids, "total_length_m": route.total_length}
    Path(args.out).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    print(f"route: {len(route.node_ids)} nodes, {route.total_length:.1f} m")
    return EXIT_OK


def cmd_build_dataset(args) -> int:
    from . import dataset, geo
    from .raster import SemanticMap

    if args.spacing <= 0:
        raise UsageError("--spacing must be positive")
    if args.horizon < 1:
        raise UsageError("--horizon must be >= 1")
    if args.stride < 1:
        raise UsageError("--stride must be >= 1")
    if not (0.0 < args.split < 1.0):
        raise UsageError("--split must be in (0, 1)")

    g = geo.parse_osm(Path(args.osm).read_text())
    smap = SemanticMap.load(args.semantic, args.meta)
    samples = []
    for track_id, poses_path in enumerate(args.poses):
        track = dataset.load_pose_log(Path(poses_path).read_text())
        src = geo.nearest_node(g, tuple(track.xy[0]))
        dst = geo.nearest_node(g, tuple(track.xy[-1]))
        route = geo.shortest_path(g, src, dst)
        samples.extend(
            dataset.build_samples(track, smap, g, route, args.horizon, args.spacing,
                                  stride=args.stride, track_id=track_id)
        )
    manifest = dataset.write_dataset(args.out, samples, args.horizon, args.spacing,
                                     args.split, args.seed, stride=args.stride)
    print(f"wrote {len(samples)} samples to {args.out} "
          f"(train {len(manifest.train)}, test {len(manifest.test)})")
    return EXIT_OK


def cmd_train(args) -> int:
    from . import cvae, dataset

    data_dir = Path(args.data)
    manifest = dataset.Manifest.load(data_dir / "manifest.json")
    plans, scenes, targets = dataset.load_split(data_dir, manifest, "train")
    horizon = int(manifest.config["H"])
    if targets.shape[1] != horizon:
        raise cvae.ConfigMismatch(
            f"manifest horizon {horizon} vs sample horizon {targets.shape[1]}")
    config = cvae.ModelConfig(
        horizon=horizon,
        num_modes=args.modes,
        scene_channels=scenes.shape[1],
    )
    model = cvae.CvaeModel(config, seed=args.seed)
    history = cvae.train_model(model, plans, scenes, targets, epochs=args.epochs,
                               batch_size=args.batch, lr=args.lr, progress=args.progress)
    cvae.save_checkpoint(model, args.out_ckpt)
    loss_csv = args.loss_csv or (args.out_ckpt + ".loss.csv")
    Path(loss_csv).write_text(cvae.history_csv(history))
    final = history[-1]
    print(f"trained {final['step']} steps on {len(plans)} samples; "
          f"final loss {final['total']:.4f} -> {args.out_ckpt}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from . import cvae, dataset, metrics

    model = cvae.load_checkpoint(args.ckpt)
    data_dir = Path(args.data)
    manifest = dataset.Manifest.load(data_dir / "manifest.json")
    if int(manifest.config["H"]) != model.config.horizon:
        raise cvae.ConfigMismatch(
            f"manifest horizon {manifest.config['H']} vs model horizon "
            f"{model.config.horizon}")
    report = metrics.evaluate(model, data_dir, manifest, "test")
    Path(str(args.report) + ".txt").write_text(report.to_text())
    Path(str(args.report) + ".json").write_text(report.to_json())
    print(report.to_text(), end="")
    return EXIT_OK


def cmd_generate(args) -> int:
    import numpy as np

    from . import cvae, dataset
    from .raster import class_rgb, waypoints_to_pixels, write_ppm

    model = cvae.load_checkpoint(args.ckpt)
    sample = dataset.read_sample(args.sample)
    traj = model.infer_map(sample.plan, sample.scene)

    classes = np.argmax(sample.scene, axis=0).astype(np.int32)
    rgb = class_rgb(classes)

    def stamp(waypoints: np.ndarray, color: tuple[int, int, int]) -> None:
        pixels, inside = waypoints_to_pixels(waypoints, size=rgb.shape[0])
        for (r, c), ok in zip(pixels, inside):
            if not ok:
                continue
            r0, r1 = max(0, r - 1), min(rgb.shape[0], r + 2)
            c0, c1 = max(0, c - 1), min(rgb.shape[1], c + 2)
            rgb[r0:r1, c0:c1] = color

    stamp(sample.target, (0, 0, 255))      # ground truth: blue
    stamp(traj.waypoints, (0, 255, 0))     # generated: green
    write_ppm(args.plot, rgb)
    print(f"wrote {args.plot}")
    return EXIT_OK


def cmd_gen_synth(args) -> int:
    from . import dataset

    world = dataset.gen_synthetic_world(args.seed, args.kind, maneuver=args.maneuver)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "map.osm").write_text(world.osm_xml)
    (out / "poses.csv").write_text(world.pose_csv)
    world.smap.save(out / "semantic.pgm", out / "semantic.json")
    print(f"wrote {args.kind} world to {out} "
          f"({len(world.graph.nodes)} nodes, {len(world.track)} poses)")
    return EXIT_OK


class UsageError(ValueError):
    pass


_HANDLERS = {
    "route": cmd_route,
    "build-dataset": cmd_build_dataset,
    "train": cmd_train,
    "eval": cmd_eval,
    "generate": cmd_generate,
    "gen-synth": cmd_gen_synth,
}


def main(argv: list[str] | None = None) -> int:
    _apply_thread_cap()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return _HANDLERS[args.command](args)
    except UsageError as exc:
        print(f"trident {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        print(f"trident {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
