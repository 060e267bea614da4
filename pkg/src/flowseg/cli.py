"""Command-line interface.

Subcommands: retrieve-static, pseudo-label, cluster, evaluate, synth-gen,
train-deactivator, gradcheck. Every command is deterministic given its
inputs, config, and seed. Exit codes: 0 success, 1 usage error, 2 data error.
"""
from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import train as training
from .clustering import hdbscan
from .config import RunConfig
from .errors import FlowsegError
from .flow_io import read_flo, write_flo, write_label_map, write_mask
from .metrics import evaluate_dataset
from .pseudo_label import generate_pseudo_label
from .quasi_static import corner_stats, is_quasi_static
from .slots import DeactivationMlp, save_checkpoint
from .synth import ObjectSpec, SceneSpec, render

USAGE_ERROR = 1
DATA_ERROR = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(USAGE_ERROR)


def _load_config(args) -> RunConfig:
    cfg = RunConfig.from_file(args.config) if args.config else RunConfig()
    if args.seed is not None:
        cfg = RunConfig(**{**cfg.__dict__, "seed": args.seed})
    return cfg


def _cmd_retrieve_static(args) -> int:
    cfg = _load_config(args)
    tau = args.tau_static if args.tau_static is not None else cfg.tau_static
    fraction = args.patch_fraction if args.patch_fraction is not None else cfg.patch_fraction
    flow_dir = Path(args.flow_dir)
    files = sorted(flow_dir.glob("*.flo"))

    def classify(path: Path):
        stats = corner_stats(read_flo(path), fraction)
        return is_quasi_static(stats, tau), stats

    status = 0
    retained: list[str] = []
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(lambda p: _try(classify, p), files))
    for path, outcome in zip(files, results):
        if isinstance(outcome, Exception):
            print(f"error\t{path.name}\t{outcome}", file=sys.stderr)
            status = DATA_ERROR
            continue
        static, stats = outcome
        m = stats.mean_magnitudes
        verdict = "static" if static else "moving"
        print(f"{path.name}\t{verdict}\t{m[0]:.6f} {m[1]:.6f} {m[2]:.6f} {m[3]:.6f}")
        if static:
            retained.append(path.name)
    if args.manifest:
        Path(args.manifest).write_text("".join(f"{n}\n" for n in retained), encoding="ascii")
    return status


def _try(fn, *fn_args):
    try:
        return fn(*fn_args)
    except (FlowsegError, OSError) as exc:
        return exc


def _cmd_pseudo_label(args) -> int:
    cfg = _load_config(args)
    pcfg = cfg.pseudo_config()
    if args.flow:
        if not args.out:
            print("pseudo-label: --out is required with --flow", file=sys.stderr)
            return USAGE_ERROR
        label = generate_pseudo_label(read_flo(args.flow), pcfg, source_frame=Path(args.flow).name)
        write_label_map(label.instances, args.out)
        if args.fg:
            write_mask(label.fg, args.fg)
        print(f"{Path(args.flow).name}\t{label.instances.n_instances}")
        return 0
    if not (args.manifest and args.flow_dir and args.out_dir):
        print("pseudo-label: need either --flow or --manifest/--flow-dir/--out-dir", file=sys.stderr)
        return USAGE_ERROR
    out_dir = Path(args.out_dir)
    labels_dir = out_dir / "labels"
    fg_dir = out_dir / "fg"
    labels_dir.mkdir(parents=True, exist_ok=True)
    fg_dir.mkdir(parents=True, exist_ok=True)
    names = [line.strip() for line in Path(args.manifest).read_text().splitlines() if line.strip()]
    flow_dir = Path(args.flow_dir)

    def process(name: str):
        label = generate_pseudo_label(read_flo(flow_dir / name), pcfg, source_frame=name)
        stem = Path(name).stem
        write_label_map(label.instances, labels_dir / f"{stem}.pgm")
        write_mask(label.fg, fg_dir / f"{stem}.pgm")
        return label.instances.n_instances

    status = 0
    summary = []
    with ThreadPoolExecutor(max_workers=args.jobs) as pool:
        results = list(pool.map(lambda n: _try(process, n), names))
    for name, outcome in zip(names, results):
        if isinstance(outcome, Exception):
            print(f"error\t{name}\t{outcome}", file=sys.stderr)
            status = DATA_ERROR
            continue
        summary.append({"name": name, "instances": outcome})
    (out_dir / "summary.json").write_text(
        json.dumps({"frames": summary}, indent=2, sort_keys=True) + "\n", encoding="ascii"
    )
    return status


def _cmd_cluster(args) -> int:
    cfg = _load_config(args)
    rows = []
    for line in Path(args.csv).read_text().splitlines():
        line = line.strip()
        if line:
            rows.append([float(x) for x in line.split(",")])
    points = np.asarray(rows, dtype=np.float64)
    result = hdbscan(points, cfg.pseudo_config().clustering)
    for i, lab in enumerate(result.labels):
        print(f"{i}\t{lab}")
    return 0


def _cmd_evaluate(args) -> int:
    report = evaluate_dataset(args.pred, args.gt)
    text = report.to_json() + "\n"
    if args.out:
        Path(args.out).write_text(text, encoding="ascii")
    print(
        f"f1_50={report.f1_50:.6f} ap_50={report.ap_50:.6f} ar_50={report.ar_50:.6f} "
        f"fg_ari={'nan' if report.fg_ari is None else f'{report.fg_ari:.6f}'} all_ari={report.all_ari:.6f}"
    )
    return 0


def _scene_from_toml(path) -> SceneSpec:
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    objects = tuple(
        ObjectSpec(
            shape=o["shape"],
            position=tuple(o["position"]),
            size=tuple(o["size"]),
            velocity=tuple(o.get("velocity", (0.0, 0.0))),
            depth=int(o.get("depth", 0)),
        )
        for o in doc.get("objects", [])
    )
    return SceneSpec(
        width=int(doc["width"]),
        height=int(doc["height"]),
        objects=objects,
        camera_velocity=tuple(doc.get("camera_velocity", (0.0, 0.0))),
        noise_sigma=float(doc.get("noise_sigma", 0.0)),
        seed=int(doc.get("seed", 0)),
    )


def _cmd_synth_gen(args) -> int:
    spec = _scene_from_toml(args.spec)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    result = render(spec)
    write_flo(result.flow, out_dir / "flow.flo")
    write_label_map(result.labels, out_dir / "labels.pgm")
    write_mask(result.fg, out_dir / "fg.pgm")
    (out_dir / "scene.toml").write_bytes(Path(args.spec).read_bytes())
    print(f"rendered {spec.width}x{spec.height} scene with {result.labels.n_instances} instances")
    return 0


def _cmd_train_deactivator(args) -> int:
    cfg = _load_config(args)
    epochs = cfg.stage2_epochs if args.epochs is None else args.epochs
    lr = cfg.stage2_lr if args.lr is None else args.lr
    scenes = training.build_fixture_scenes(
        args.images, seed=cfg.seed, n_static=args.static_objects
    )
    fixtures = training.build_fixture_set(
        scenes, k=args.slots, slot_dim=args.slot_dim, separation=args.separation, seed=cfg.seed
    )
    mlp = DeactivationMlp.create(args.slot_dim, hidden_dim=args.hidden_dim, n_layers=4, seed=cfg.seed)
    log = training.train_deactivator(
        mlp, fixtures, epochs=epochs, lr=lr, batch_size=cfg.batch_size,
        cfg=cfg.loss_config(), use_drop_gate=not args.no_drop_gate,
    )
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    save_checkpoint(mlp, out_dir / "deactivator.ckpt")
    accuracy = training.slot_accuracy(mlp, fixtures)
    payload = {"accuracy": accuracy, "steps": log}
    (out_dir / "train_log.json").write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="ascii")
    print(f"trained {epochs} epochs, slot accuracy {accuracy:.4f}")
    return 0


def _cmd_gradcheck(args) -> int:
    cfg = _load_config(args)
    errors = training.run_gradcheck(seed=cfg.seed, n_instances=args.instances)
    worst = 0.0
    for name, err in sorted(errors.items()):
        print(f"{name}\tmax_rel_err={err:.3e}")
        worst = max(worst, err)
    return 0 if worst < 1e-4 else DATA_ERROR


def build_parser() -> _Parser:
    parser = _Parser(prog="flowseg", description=__doc__)
    parser.add_argument("--config", help="flat key=value run configuration file")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--jobs", type=int, default=1, help="worker threads for batch commands")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("retrieve-static", help="classify flow frames as static/moving")
    p.add_argument("--flow-dir", required=True)
    p.add_argument("--manifest", help="write retained (static) frame names here")
    p.add_argument("--tau-static", type=float, default=None)
    p.add_argument("--patch-fraction", type=float, default=None)
    p.set_defaults(func=_cmd_retrieve_static)

    p = sub.add_parser("pseudo-label", help="generate instance pseudo-labels from flow")
    p.add_argument("--flow", help="single .flo file")
    p.add_argument("--out", help="label map output (single mode)")
    p.add_argument("--fg", help="foreground mask output (single mode)")
    p.add_argument("--manifest", help="frame list (batch mode)")
    p.add_argument("--flow-dir", help="directory with .flo files (batch mode)")
    p.add_argument("--out-dir", help="output directory (batch mode)")
    p.set_defaults(func=_cmd_pseudo_label)

    p = sub.add_parser("cluster", help="run density clustering on CSV points")
    p.add_argument("--csv", required=True)
    p.set_defaults(func=_cmd_cluster)

    p = sub.add_parser("evaluate", help="compare predicted and ground-truth label maps")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--out", help="write the JSON report here")
    p.set_defaults(func=_cmd_evaluate)

    p = sub.add_parser("synth-gen", help="render a synthetic scene to flow/labels/fg files")
    p.add_argument("--spec", required=True, help="scene description (TOML)")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_synth_gen)

    p = sub.add_parser("train-deactivator", help="train the slot-deactivation MLP on fixtures")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--images", type=int, default=40)
    p.add_argument("--slots", type=int, default=60)
    p.add_argument("--slot-dim", type=int, default=32)
    p.add_argument("--hidden-dim", type=int, default=2048)
    p.add_argument("--separation", type=float, default=6.0)
    p.add_argument("--static-objects", type=int, default=0)
    p.add_argument("--epochs", type=int, default=None, help="override stage2_epochs")
    p.add_argument("--lr", type=float, default=None, help="override stage2_lr")
    p.add_argument("--no-drop-gate", action="store_true")
    p.set_defaults(func=_cmd_train_deactivator)

    p = sub.add_parser("gradcheck", help="finite-difference checks for all gradients")
    p.add_argument("--instances", type=int, default=100)
    p.set_defaults(func=_cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except FlowsegError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
