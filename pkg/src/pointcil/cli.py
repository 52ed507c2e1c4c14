"""Command-line interface.

Subcommands: gen-data, render-depth, train, eval, metrics, dump-features.
Exit codes: 0 success, 1 user error (bad flags, bad files, bad values),
2 internal failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
import traceback
from pathlib import Path

import numpy as np

from .clouds import CATALOG_NAMES, load_xyz, make_dataset, normalize_unit_sphere
from .config import DEFAULTS, _coerce, load_config
from .metrics import avg_accuracy, display, forgetting
from .rendering import camera_views, compose_enhanced, detect_background, export_image, render_depth
from .training import (evaluate, load_run_networks, prepare_run, read_manifest,
                       run_all_tasks, save_run)


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise _UsageError(message)


def _cmd_gen_data(args) -> int:
    if args.classes.isdigit():
        count = int(args.classes)
        if not 1 <= count <= len(CATALOG_NAMES):
            raise ValueError(f"--classes count must be in [1, {len(CATALOG_NAMES)}]")
        classes = list(CATALOG_NAMES[:count])
    else:
        classes = [c.strip() for c in args.classes.split(",") if c.strip()]
    inventory = make_dataset(args.out, classes, args.train_per_class, args.test_per_class,
                             n_points=args.points, jitter=args.jitter, seed=args.seed)
    total = sum(len(v["train"]) + len(v["test"]) for v in inventory.values())
    print(f"wrote {total} samples for {len(inventory)} classes under {args.out}")
    return 0


def _cmd_render_depth(args) -> int:
    cloud = load_xyz(args.input)
    pts = normalize_unit_sphere(cloud.points)
    h, w = args.size
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for i, view in enumerate(camera_views(args.views, args.elevation)):
        dm = render_depth(pts, view, h, w, args.splat)
        export_image(dm, out_dir / f"view_{i:02d}.pgm")
        if args.color is not None:
            color = np.array([float(c) for c in args.color.split(",")])
            masks = detect_background(dm.pixels)
            export_image(compose_enhanced(dm.pixels, masks.background, color),
                         out_dir / f"view_{i:02d}.ppm")
    print(f"wrote {args.views} views to {out_dir}")
    return 0


def _cmd_train(args) -> int:
    cfg = load_config(args.config)
    state = prepare_run(cfg, args.data, variant=args.variant)
    run_all_tasks(state)
    save_run(state, args.out)
    for t, acc in enumerate(state.acc):
        print(f"task {t}: acc = {display(acc)}")
    print(f"AA = {display(avg_accuracy(state.acc))}")
    if len(state.acc) >= 2:
        print(f"delta_A = {display(forgetting(state.acc))}")
    print(f"run saved to {args.out}")
    return 0


def _cfg_from_manifest(manifest: dict) -> dict:
    cfg = dict(DEFAULTS)
    for key, value in manifest.items():
        if key.startswith("config."):
            name = key[len("config."):]
            if name in DEFAULTS:
                cfg[name] = _coerce(name, value)
    return cfg


def _restore_state(run_dir, data_dir):
    run_dir = Path(run_dir)
    manifest = read_manifest(run_dir / "manifest.txt")
    cfg = _cfg_from_manifest(manifest)
    net, net_b, disc = load_run_networks(cfg, run_dir / "checkpoint.bin")
    state = prepare_run(cfg, data_dir, variant=manifest.get("run.variant", "full"))
    state.net = net
    state.net_b = net_b
    state.disc = disc
    state.completed_task = state.schedule.num_tasks - 1
    return state, manifest


def _cmd_eval(args) -> int:
    state, manifest = _restore_state(args.run, args.data)
    t = state.schedule.num_tasks - 1
    acc = evaluate(state, t)
    print(f"task {t}: acc = {acc!r}")
    recorded = manifest.get(f"run.acc_{t}")
    if recorded is not None:
        print(f"manifest: acc = {recorded}")
    return 0


def _cmd_metrics(args) -> int:
    accs = [float(a) for a in args.acc.split(",") if a.strip()]
    print(f"AA = {display(avg_accuracy(accs))}")
    if len(accs) >= 2:
        print(f"delta_A = {display(forgetting(accs))}")
    return 0


def _cmd_dump_features(args) -> int:
    state, _ = _restore_state(args.run, args.data)
    from .training import collate  # local import to keep startup light
    import torch

    pairs = []
    for task in state.schedule.tasks:
        for c in task.classes:
            pairs.extend((c, sid) for sid in task.test[c])
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "id"] + [f"f{i}" for i in range(state.enc_cfg.dim)])
        with torch.no_grad():
            for start in range(0, len(pairs), 32):
                keys = pairs[start : start + 32]
                batch = collate(state.cache, keys)
                out = state.net.forward_batch(batch, state.proto_t, use_visual=False)
                for (c, sid), row in zip(keys, out.fused.numpy()):
                    writer.writerow([c, sid] + [repr(float(v)) for v in row])
    print(f"wrote features for {len(pairs)} samples to {args.out}")
    return 0


def _build_parser() -> _Parser:
    parser = _Parser(prog="pointcil", description="Incremental 3D shape recognition toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-data", help="synthesize a dataset of shape clouds")
    p.add_argument("--out", required=True)
    p.add_argument("--classes", default="12",
                   help="class count (catalog order) or comma-separated names")
    p.add_argument("--train-per-class", type=int, default=DEFAULTS["data.train_per_class"])
    p.add_argument("--test-per-class", type=int, default=DEFAULTS["data.test_per_class"])
    p.add_argument("--points", type=int, default=DEFAULTS["data.points"])
    p.add_argument("--jitter", type=float, default=DEFAULTS["data.jitter"])
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_gen_data)

    p = sub.add_parser("render-depth", help="render multi-view depth maps for one cloud")
    p.add_argument("--input", required=True)
    p.add_argument("--views", type=int, default=DEFAULTS["render.views"])
    p.add_argument("--size", type=int, nargs=2, default=[DEFAULTS["render.height"], DEFAULTS["render.width"]],
                   metavar=("H", "W"))
    p.add_argument("--splat", type=int, default=DEFAULTS["render.splat"])
    p.add_argument("--elevation", type=float, default=DEFAULTS["render.elevation_deg"])
    p.add_argument("--color", default=None, help="R,G,B in [0,1]; also write colored PPM views")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_render_depth)

    p = sub.add_parser("train", help="run the full incremental protocol")
    p.add_argument("--config", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--variant", choices=["full", "ft"], default="full")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("eval", help="re-evaluate a saved run on a dataset")
    p.add_argument("--run", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("metrics", help="summary metrics for an accuracy sequence")
    p.add_argument("--acc", required=True, help="comma-separated per-task accuracies")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("dump-features", help="export fused test-sample features as CSV")
    p.add_argument("--run", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_dump_features)
    return parser


def cli_main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        parser.print_usage(sys.stderr)
        return 1
    try:
        return args.func(args)
    except (ValueError, KeyError, OSError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception:
        traceback.print_exc()
        return 2


if __name__ == "__main__":
    sys.exit(cli_main())
