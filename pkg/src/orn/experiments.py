"""Desk-scale rotated-MNIST protocol.

Two models (the baseline CNN and ORN-8 with ORAlign) are trained on a
10k-sample subset, once on rotated and once on upright digits, and both are
scored on a 10k-sample rotated test split.  Each run is cached under a key
derived from everything that determines its outcome, so repeated calls
(and the acceptance tests) reuse finished runs.
"""
from __future__ import annotations

import hashlib
import json
import time
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .data import build_variant, carve_validation, load_mnist, subset
from .network import build_network, preset
from .training import TrainConfig, evaluate, save_checkpoint, train, write_metrics_csv

MODELS = {"baseline": ("baseline", "none"), "orn8": ("orn8", "oralign")}


@dataclass(frozen=True)
class DeskProtocol:
    train_size: int = 10_000
    validation_size: int = 2_000
    test_size: int = 10_000
    epochs: int = 30
    seed: int = 0
    data_seed: int = 1
    batch_size: int = 128
    dropout: float = 0.5

    def key(self, model: str, train_variant: str) -> str:
        blob = json.dumps({"protocol": asdict(self), "model": model, "train_variant": train_variant,
                           "spec": preset(*MODELS[model]).fingerprint()}, sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:12]


def prepare_data(mnist_dir, protocol: DeskProtocol, train_variant: str):
    """(train, validation, rotated test) for one training variant.

    The upright and rotated training sets hold the same digits; only the
    rotation differs.
    """
    base = load_mnist(mnist_dir, "train")
    pool = subset(base, protocol.train_size + protocol.validation_size, protocol.data_seed)
    train_all = build_variant(pool, train_variant, protocol.data_seed)
    train_set, val_set = carve_validation(train_all, protocol.validation_size, protocol.data_seed)
    test_base = load_mnist(mnist_dir, "t10k")
    if protocol.test_size < len(test_base):
        test_base = subset(test_base, protocol.test_size, protocol.data_seed + 1)
    test_set = build_variant(test_base, "rot", protocol.data_seed + 1)
    return train_set, val_set, test_set


def run_model(mnist_dir, out_dir, protocol: DeskProtocol, model: str, train_variant: str,
              log=None, force: bool = False) -> dict:
    """Train one model on one variant and score it on the rotated test split (cached)."""
    run_dir = Path(out_dir) / f"{model}-{train_variant}-{protocol.key(model, train_variant)}"
    result_path = run_dir / "result.json"
    if result_path.exists() and not force:
        return json.loads(result_path.read_text())
    run_dir.mkdir(parents=True, exist_ok=True)
    train_set, val_set, test_set = prepare_data(mnist_dir, protocol, train_variant)
    spec = preset(*MODELS[model], dropout=protocol.dropout)
    net = build_network(spec, seed=protocol.seed)
    cfg = TrainConfig(epochs=protocol.epochs, batch_size=protocol.batch_size, dropout=protocol.dropout,
                      validation_size=0, seed=protocol.seed)
    t0 = time.perf_counter()
    res = train(net, train_set, cfg, validation=val_set,
                log=None if log is None else (lambda m: log(f"{model}/{train_variant} {m.csv_row()}")))
    wall = time.perf_counter() - t0
    write_metrics_csv(res.metrics, run_dir / "metrics.csv")
    save_checkpoint(res.best, run_dir / "best.ornc")
    best = res.best.network()
    ev = evaluate(best, test_set)
    result = {
        "model": model, "train_variant": train_variant, "spec_fingerprint": spec.fingerprint(),
        "params": best.param_count, "best_epoch": res.best_epoch,
        "val_error": float(res.best.extra["best_val_err"]), "test_error": ev.error, "test_loss": ev.loss,
        "train_seconds": wall, "protocol": asdict(protocol),
        "data": {"train": train_set.provenance, "test": test_set.provenance},
    }
    np.savetxt(run_dir / "confusion.csv", ev.confusion, fmt="%d", delimiter=",")
    result_path.write_text(json.dumps(result, indent=2, sort_keys=True, default=str))
    return result


def desk_experiment(mnist_dir, out_dir, protocol: DeskProtocol | None = None, log=None) -> dict:
    """All four runs; returns ``{(model, train_variant): result}`` keyed as ``"model/variant"``."""
    protocol = protocol or DeskProtocol()
    out = {}
    for train_variant in ("rot", "original"):
        for model in MODELS:
            out[f"{model}/{train_variant}"] = run_model(mnist_dir, out_dir, protocol, model, train_variant, log)
    return out


def summarize(results: dict) -> str:
    lines = ["model     trained on  test error (rot)  best epoch"]
    for key, r in results.items():
        model, variant = key.split("/")
        lines.append(f"{model:<9} {variant:<11} {100 * r['test_error']:>15.2f}%  {r['best_epoch']:>10d}")
    return "\n".join(lines)
