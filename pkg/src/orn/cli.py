"""Command-line entry point: ``python -m orn <command>``.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import asdict, fields
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from .data import (VARIANTS, DataError, LabeledImageSet, build_variant, concat, load_idx, load_mnist, read_meta,
                   rotate_image, subset, write_idx)
from .experiments import DeskProtocol, desk_experiment, summarize
from .network import ENCODINGS, SpecError, build_network, gradcheck_network, preset, tiny_specs
from .tensor import NonFiniteError
from .training import TrainConfig, TrainingDiverged, evaluate, load_checkpoint, save_checkpoint, train, write_metrics_csv

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

_TRAIN_KEYS = {f.name: f.type for f in fields(TrainConfig)}
CONFIG_KEYS = {
    "network": "baseline",
    "encoding": "oralign",
    "variant": "rot",
    "data_dir": "/root/data/mnist",
    "train_size": 0,  # 0 = use the whole split
    "out": "runs/default",
    "threads": 0,  # 0 = library default
    **{k: v for k, v in asdict(TrainConfig()).items()},
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

def _coerce(key: str, raw):
    default = CONFIG_KEYS[key]
    if isinstance(raw, str) and not isinstance(default, str):
        try:
            return type(default)(raw)
        except ValueError as e:
            raise UsageError(f"config key {key!r}: cannot parse {raw!r} as {type(default).__name__}") from e
    return raw


def parse_config_text(text: str, origin: str = "<config>") -> dict:
    """``key = value`` lines; ``#`` starts a comment.  Unknown keys are rejected."""
    out = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{origin}:{lineno}: expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in CONFIG_KEYS:
            raise UsageError(f"{origin}:{lineno}: unknown config key {key!r}; known keys: {', '.join(sorted(CONFIG_KEYS))}")
        out[key] = _coerce(key, value)
    return out


def resolve_config(args) -> dict:
    cfg = dict(CONFIG_KEYS)
    if getattr(args, "config", None):
        path = Path(args.config)
        if not path.exists():
            raise UsageError(f"config file {path} not found")
        cfg.update(parse_config_text(path.read_text(), str(path)))
    for key in ("epochs", "seed", "variant", "encoding", "threads", "out", "network", "data_dir", "train_size"):
        value = getattr(args, key, None)
        if value is not None:
            cfg[key] = _coerce(key, value)
    if cfg["variant"] not in VARIANTS:
        raise UsageError(f"unknown variant {cfg['variant']!r}; choose from {', '.join(VARIANTS)}")
    if cfg["encoding"] not in ENCODINGS:
        raise UsageError(f"unknown encoding {cfg['encoding']!r}; choose from {', '.join(ENCODINGS)}")
    return cfg


def format_config(cfg: dict) -> str:
    return "".join(f"{k} = {cfg[k]}\n" for k in sorted(cfg))


def train_config(cfg: dict) -> TrainConfig:
    try:
        return TrainConfig(**{k: cfg[k] for k in _TRAIN_KEYS})
    except ValueError as e:
        raise UsageError(str(e)) from e


def _load_dataset(cfg: dict, split: str, data_prefix: str | None) -> LabeledImageSet:
    if data_prefix:
        return load_idx(f"{data_prefix}-images-idx3-ubyte", f"{data_prefix}-labels-idx1-ubyte")
    return build_variant(_base(cfg, split), cfg["variant"], cfg["seed"])


def _base(cfg: dict, split: str) -> LabeledImageSet:
    # the rot12k pair is carved from all 70000 digits, so the split is ignored there
    if cfg["variant"].startswith("rot12k"):
        base = concat(load_mnist(cfg["data_dir"], "train"), load_mnist(cfg["data_dir"], "t10k"))
    else:
        base = load_mnist(cfg["data_dir"], split)
    if cfg["train_size"]:
        base = subset(base, int(cfg["train_size"]), cfg["seed"])
    return base


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_build_data(args, cfg) -> int:
    data = build_variant(_base(cfg, args.split), cfg["variant"], cfg["seed"])
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(cfg))
    paths = write_idx(data, out / f"{cfg['variant']}-{args.split}-seed{cfg['seed']}")
    meta = read_meta(paths["meta"])
    print(f"wrote {meta['count']} samples to {paths['images'].parent}")
    print(f"images sha256 {meta['images_sha256']}")
    print(f"labels sha256 {meta['labels_sha256']}")
    return EXIT_OK


def cmd_train(args, cfg) -> int:
    tcfg = train_config(cfg)
    out = Path(cfg["out"])
    resume = None
    if args.resume:
        resume = load_checkpoint(args.resume)
        spec = resume.spec
    else:
        spec = preset(cfg["network"], cfg["encoding"], tcfg.dropout)
    data = _load_dataset(cfg, "train", args.data)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(cfg))
    dtype = np.float64 if tcfg.precision == "float64" else np.float32
    net = build_network(spec, seed=tcfg.seed, dtype=dtype)
    print(f"{spec.name}: {net.param_count} parameters, {len(data)} samples, epochs {tcfg.epochs}")
    metrics_path = out / "metrics.csv"
    if resume is None:
        write_metrics_csv([], metrics_path)

    def log(m):
        write_metrics_csv([m], metrics_path, append=True)
        print(m.csv_row(), flush=True)

    try:
        res = train(net, data, tcfg, resume=resume, log=log)
    except TrainingDiverged as e:
        save_checkpoint(e.checkpoint, out / "last_good.ornc")
        print(f"training diverged: {e}; last good state saved to {out / 'last_good.ornc'}", file=sys.stderr)
        return EXIT_NUMERIC
    save_checkpoint(res.last, out / "last.ornc")
    start = 0 if resume is None else resume.epoch
    if res.best_epoch > start or not (out / "best.ornc").exists():
        save_checkpoint(res.best, out / "best.ornc")
    print(f"best validation epoch {res.best_epoch}; checkpoints in {out}")
    return EXIT_OK


def cmd_eval(args, cfg) -> int:
    if not Path(args.checkpoint).exists():
        raise DataError(f"checkpoint {args.checkpoint} not found")
    ckpt = load_checkpoint(args.checkpoint)
    data = _load_dataset(cfg, args.split, args.data)
    res = evaluate(ckpt.network(), data)
    print(res.format())
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(cfg))
    (out / "eval.txt").write_text(res.format() + "\n")
    np.savetxt(out / "confusion.csv", res.confusion, fmt="%d", delimiter=",")
    return EXIT_OK


def cmd_gradcheck(args, cfg) -> int:
    specs = tiny_specs()
    names = args.only or list(specs)
    unknown = set(names) - set(specs)
    if unknown:
        raise UsageError(f"unknown tiny spec(s) {sorted(unknown)}; choose from {', '.join(specs)}")
    ok = True
    for name in names:
        rep = gradcheck_network(specs[name], tolerance=args.tolerance, seed=cfg["seed"])
        print(f"== {name}")
        print(rep.format())
        ok &= rep.passed
    return EXIT_OK if ok else EXIT_NUMERIC


def write_pgm(path, image: np.ndarray) -> None:
    """Binary greyscale (P5); ``image`` is scaled from its own [min, max] to [0, 255]."""
    lo, hi = float(image.min()), float(image.max())
    scaled = np.zeros(image.shape) if hi <= lo else (image - lo) / (hi - lo)
    pixels = np.clip(np.rint(scaled * 255), 0, 255).astype(np.uint8)
    h, w = pixels.shape
    Path(path).write_bytes(f"P5\n{w} {h}\n255\n".encode() + pixels.tobytes())


def read_pgm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    if parts[0] != b"P5":
        raise DataError(f"{path}: not a binary PGM")
    w, h, maxval = int(parts[1]), int(parts[2]), int(parts[3])
    pixels = np.frombuffer(parts[4][:w * h], dtype=np.uint8)
    if pixels.size != w * h:
        raise DataError(f"{path}: truncated PGM payload")
    return pixels.reshape(h, w).astype(np.float32) / maxval


def tile_grid(maps: np.ndarray, gap: int = 1) -> np.ndarray:
    """``(rows, cols, H, W)`` tiles into one image with ``gap`` pixel separators at the minimum value."""
    rows, cols, h, w = maps.shape
    fill = maps.min() if maps.size else 0.0
    grid = np.full((rows * h + (rows - 1) * gap, cols * w + (cols - 1) * gap), fill, dtype=np.float64)
    for r in range(rows):
        for c in range(cols):
            grid[r * (h + gap):r * (h + gap) + h, c * (w + gap):c * (w + gap) + w] = maps[r, c]
    return grid


def feature_maps(net, image: np.ndarray, layer: int) -> np.ndarray:
    """Output of ``layer`` for one image, as ``(features, orientations, H, W)``."""
    x = net.forward(image[None, None], upto=layer + 1)[0]
    if x.ndim == 3:
        x = x[:, None]
    if x.ndim != 4:
        raise UsageError(f"layer {layer} ({net.spec.layers[layer].kind}) has no spatial output")
    return x


def dominant_channels(maps: np.ndarray) -> np.ndarray:
    """Per feature, the orientation channel holding the strongest spatial peak."""
    return maps.reshape(maps.shape[0], maps.shape[1], -1).max(axis=-1).argmax(axis=-1)


def cmd_visualize(args, cfg) -> int:
    if not Path(args.checkpoint).exists():
        raise DataError(f"checkpoint {args.checkpoint} not found")
    net = load_checkpoint(args.checkpoint).network()
    if args.image:
        image = read_pgm(args.image)
    else:
        image = load_mnist(cfg["data_dir"], "t10k").images[args.index]
    if args.angle:
        image = rotate_image(image, math.radians(args.angle))
    if not 0 <= args.layer < len(net.layers):
        raise UsageError(f"layer {args.layer} out of range 0..{len(net.layers) - 1}")
    maps = feature_maps(net, image, args.layer)
    if args.feature is not None:
        if not 0 <= args.feature < len(maps):
            raise UsageError(f"feature {args.feature} out of range 0..{len(maps) - 1}")
        maps = maps[args.feature:args.feature + 1]
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"layer{args.layer}.pgm"
    write_pgm(path, tile_grid(maps))
    print(f"{maps.shape[0]} feature(s) x {maps.shape[1]} orientation tile(s) written to {path}")
    print("dominant orientation channel per feature: " + " ".join(str(int(d)) for d in dominant_channels(maps)))
    return EXIT_OK


def cmd_experiment(args, cfg) -> int:
    protocol = DeskProtocol(epochs=cfg["epochs"], seed=cfg["seed"],
                            train_size=cfg["train_size"] or DeskProtocol.train_size)
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.txt").write_text(format_config(cfg))
    results = desk_experiment(cfg["data_dir"], out, protocol, log=lambda s: print(s, flush=True))
    print(summarize(results))
    (out / "summary.json").write_text(json.dumps(results, indent=2, sort_keys=True, default=str))
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _common(p):
    p.add_argument("--config", help="key = value file; command-line flags override it")
    p.add_argument("--epochs", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--variant", choices=VARIANTS)
    p.add_argument("--encoding", choices=ENCODINGS)
    p.add_argument("--network", choices=("baseline", "orn4", "orn8"))
    p.add_argument("--threads", type=int, help="BLAS threads; 1 guarantees determinism")
    p.add_argument("--out", help="run directory")
    p.add_argument("--data-dir", dest="data_dir", help="directory holding the raw MNIST IDX files")
    p.add_argument("--train-size", dest="train_size", type=int, help="draw this many base samples (0 = all)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="orn", description="Active rotating filters and oriented response networks")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-data", help="build a dataset variant as IDX files")
    _common(p)
    p.add_argument("--split", choices=("train", "t10k"), default="train")
    p.set_defaults(func=cmd_build_data)

    p = sub.add_parser("train", help="train a network; writes metrics.csv and checkpoints")
    _common(p)
    p.add_argument("--data", help="IDX prefix written by build-data (default: build from --data-dir)")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="error rate and confusion matrix of a checkpoint")
    _common(p)
    p.add_argument("checkpoint")
    p.add_argument("--data", help="IDX prefix written by build-data")
    p.add_argument("--split", choices=("train", "t10k"), default="t10k")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of tiny networks")
    _common(p)
    p.add_argument("--only", nargs="*", help="names of tiny specs to check")
    p.add_argument("--tolerance", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("visualize", help="write a PGM grid with one tile per orientation channel")
    _common(p)
    p.add_argument("checkpoint")
    p.add_argument("--layer", type=int, required=True, help="layer index whose output is shown")
    p.add_argument("--image", help="28x28 binary PGM input (default: a t10k digit)")
    p.add_argument("--index", type=int, default=0, help="t10k sample index when --image is not given")
    p.add_argument("--angle", type=float, default=0.0, help="rotate the input clockwise by this many degrees")
    p.add_argument("--feature", type=int, help="show only this feature channel")
    p.set_defaults(func=cmd_visualize)

    p = sub.add_parser("experiment", help="desk-scale rot / original->rot comparison")
    _common(p)
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args)
        with threadpool_limits(limits=cfg["threads"] or None):
            return args.func(args, cfg)
    except (UsageError, SpecError) as e:
        print(f"orn: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError) as e:
        print(f"orn: data error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (TrainingDiverged, NonFiniteError, FloatingPointError) as e:
        print(f"orn: numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
