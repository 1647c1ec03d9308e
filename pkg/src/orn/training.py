"""Training loop, evaluation and the binary checkpoint format."""
from __future__ import annotations

import json
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .data import LabeledImageSet, carve_validation
from .network import Network, NetworkSpec, build_network
from .tensor import AdadeltaState, NonFiniteError, adadelta_step, softmax_cross_entropy

MAGIC = b"ORNC"
FORMAT_VERSION = 1
PRECISIONS = {"float32": np.float32, "float64": np.float64}


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 128
    dropout: float = 0.5
    validation_size: int = 2000
    seed: int = 0
    precision: str = "float32"
    rho: float = 0.9
    eps: float = 1e-6

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch size must be >= 1")
        if not 0 <= self.dropout < 1:
            raise ValueError(f"dropout {self.dropout} outside [0, 1)")
        if self.precision not in PRECISIONS:
            raise ValueError(f"precision must be one of {sorted(PRECISIONS)}")
        if self.epochs < 0 or self.validation_size < 0:
            raise ValueError("epochs and validation size must be non-negative")


@dataclass
class EpochMetrics:
    epoch: int
    train_loss: float
    train_err: float
    val_loss: float
    val_err: float
    wall_seconds: float

    CSV_HEADER = "epoch,train_loss,train_err,val_loss,val_err,wall_seconds"

    def csv_row(self) -> str:
        return (f"{self.epoch},{self.train_loss:.6f},{self.train_err:.6f},{self.val_loss:.6f},"
                f"{self.val_err:.6f},{self.wall_seconds:.3f}")


@dataclass
class Checkpoint:
    spec: NetworkSpec
    params: dict[str, np.ndarray]
    optimizer: dict[str, AdadeltaState]
    epoch: int = 0
    rng_state: dict | None = None
    config: dict = field(default_factory=dict)
    extra: dict = field(default_factory=dict)

    @property
    def fingerprint(self) -> str:
        return self.spec.fingerprint()

    def network(self, dtype=np.float32) -> Network:
        net = build_network(self.spec, dtype=dtype)
        net.load_state_dict(self.params)
        return net


class TrainingDiverged(RuntimeError):
    def __init__(self, message: str, checkpoint: Checkpoint):
        super().__init__(message)
        self.checkpoint = checkpoint


# ---------------------------------------------------------------------------
# checkpoint encoding
# ---------------------------------------------------------------------------

def _write_tensors(buf: bytearray, tensors: dict[str, np.ndarray]) -> None:
    buf += struct.pack("<I", len(tensors))
    for name, t in tensors.items():
        raw = name.encode()
        buf += struct.pack("<I", len(raw)) + raw
        buf += struct.pack("<I", t.ndim) + struct.pack(f"<{t.ndim}I", *t.shape)
        buf += np.ascontiguousarray(t, dtype="<f4").tobytes()


def _read_tensors(raw: bytes, pos: int):
    (count,) = struct.unpack_from("<I", raw, pos)
    pos += 4
    out = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        name = raw[pos:pos + nlen].decode()
        pos += nlen
        (rank,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        shape = struct.unpack_from(f"<{rank}I", raw, pos)
        pos += 4 * rank
        size = int(np.prod(shape)) * 4
        if pos + size > len(raw):
            raise ValueError(f"checkpoint truncated inside tensor {name!r}")
        out[name] = np.frombuffer(raw, dtype="<f4", count=size // 4, offset=pos).reshape(shape).astype(np.float32)
        pos += size
    return out, pos


def encode_checkpoint(ckpt: Checkpoint) -> bytes:
    """``ORNC`` | u16 version | params | optimizer state | u32-prefixed JSON metadata."""
    buf = bytearray(MAGIC + struct.pack("<H", FORMAT_VERSION))
    _write_tensors(buf, ckpt.params)
    opt = {}
    for name, st in ckpt.optimizer.items():
        opt[f"{name}/sq_grad"] = st.sq_grad
        opt[f"{name}/sq_update"] = st.sq_update
    _write_tensors(buf, opt)
    rho_eps = {k: [st.rho, st.eps, st.step] for k, st in ckpt.optimizer.items()}
    meta = {"fingerprint": ckpt.fingerprint, "spec": ckpt.spec.to_dict(), "epoch": ckpt.epoch,
            "rng_state": ckpt.rng_state, "config": ckpt.config, "extra": ckpt.extra, "optimizer": rho_eps}
    blob = json.dumps(meta, sort_keys=True).encode()
    buf += struct.pack("<I", len(blob)) + blob
    return bytes(buf)


def decode_checkpoint(raw: bytes) -> Checkpoint:
    if raw[:4] != MAGIC:
        raise ValueError(f"not a checkpoint: magic {raw[:4]!r}")
    (version,) = struct.unpack_from("<H", raw, 4)
    if version != FORMAT_VERSION:
        raise ValueError(f"unsupported checkpoint version {version}")
    params, pos = _read_tensors(raw, 6)
    opt_raw, pos = _read_tensors(raw, pos)
    (mlen,) = struct.unpack_from("<I", raw, pos)
    meta = json.loads(raw[pos + 4:pos + 4 + mlen].decode())
    spec = NetworkSpec.from_dict(meta["spec"])
    if spec.fingerprint() != meta["fingerprint"]:
        raise ValueError("checkpoint spec does not match its fingerprint")
    optimizer = {}
    for key in opt_raw:
        if not key.endswith("/sq_grad"):
            continue
        name = key[:-len("/sq_grad")]
        rho, eps, step = meta["optimizer"][name]
        optimizer[name] = AdadeltaState(opt_raw[f"{name}/sq_grad"], opt_raw[f"{name}/sq_update"], rho, eps, step)
    return Checkpoint(spec, params, optimizer, meta["epoch"], meta["rng_state"], meta["config"], meta["extra"])


def save_checkpoint(ckpt: Checkpoint, path) -> None:
    Path(path).write_bytes(encode_checkpoint(ckpt))


def load_checkpoint(path) -> Checkpoint:
    return decode_checkpoint(Path(path).read_bytes())


# ---------------------------------------------------------------------------
# evaluation
# ---------------------------------------------------------------------------

@dataclass
class EvalResult:
    error: float
    loss: float
    confusion: np.ndarray  # rows: true class, columns: predicted class
    count: int

    def format(self) -> str:
        lines = [f"samples {self.count}  error {100 * self.error:.2f}%  loss {self.loss:.4f}",
                 "confusion (rows true, columns predicted):"]
        lines += [" ".join(f"{v:5d}" for v in row) for row in self.confusion]
        return "\n".join(lines)


def evaluate(net: Network, data: LabeledImageSet, batch_size: int = 500, classes: int = 10) -> EvalResult:
    """Top-1 error with dropout disabled."""
    conf = np.zeros((classes, classes), dtype=np.int64)
    total_loss = 0.0
    for s in range(0, len(data), batch_size):
        x, y = data.images[s:s + batch_size], data.labels[s:s + batch_size]
        logits = net.forward(x, training=False)
        loss, _ = softmax_cross_entropy(logits, y)
        total_loss += loss * len(y)
        np.add.at(conf, (y, logits.argmax(axis=1)), 1)
    n = len(data)
    err = 1 - np.trace(conf) / n if n else 0.0
    return EvalResult(float(err), total_loss / max(n, 1), conf, n)


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------

@dataclass
class TrainResult:
    metrics: list[EpochMetrics]
    last: Checkpoint
    best: Checkpoint
    best_epoch: int


def _snapshot(net, optimizer, epoch, rng, cfg, extra=None) -> Checkpoint:
    return Checkpoint(net.spec, net.state_dict(),
                      {k: AdadeltaState(s.sq_grad.copy(), s.sq_update.copy(), s.rho, s.eps, s.step)
                       for k, s in optimizer.items()},
                      epoch, rng.bit_generator.state, asdict(cfg), dict(extra or {}))


def train(net: Network, data: LabeledImageSet, cfg: TrainConfig, validation: LabeledImageSet | None = None,
          resume: Checkpoint | None = None, log=None) -> TrainResult:
    """Mini-batch adadelta training with best-validation-epoch selection.

    When ``validation`` is not given, ``cfg.validation_size`` samples are
    carved from ``data``.  Returns per-epoch metrics, the final state (for
    resuming) and the state of the epoch with the lowest validation error.
    """
    if validation is None and cfg.validation_size:
        data, validation = carve_validation(data, cfg.validation_size, cfg.seed)
    if data.images.shape[1:] != tuple(net.spec.input_shape[1:]):
        raise ValueError(f"data images {data.images.shape[1:]} do not match network input {net.spec.input_shape}")
    for layer in net.layers:
        if hasattr(layer, "rate"):
            layer.rate = cfg.dropout

    rng = np.random.default_rng(cfg.seed)
    optimizer = {k: AdadeltaState.zeros_like(p, cfg.rho, cfg.eps) for k, p in net.named_params()}
    start, best_err, best_epoch, best = 0, np.inf, 0, None
    if resume is not None:
        if resume.fingerprint != net.spec.fingerprint():
            raise ValueError("checkpoint was produced by a different network spec")
        net.load_state_dict(resume.params)
        optimizer = {k: AdadeltaState(s.sq_grad.astype(net.dtype), s.sq_update.astype(net.dtype), s.rho, s.eps, s.step)
                     for k, s in resume.optimizer.items()}
        rng.bit_generator.state = resume.rng_state
        start = resume.epoch
        best_err = resume.extra.get("best_val_err", np.inf)
        best_epoch = resume.extra.get("best_epoch", 0)
    net.set_dropout_rng(rng)
    params = dict(net.named_params())

    metrics = []
    last_good = _snapshot(net, optimizer, start, rng, cfg, {"best_val_err": best_err, "best_epoch": best_epoch})
    best = last_good
    x_all, y_all = data.images, data.labels
    for epoch in range(start + 1, cfg.epochs + 1):
        t0 = time.perf_counter()
        perm = rng.permutation(len(data))
        tot_loss, tot_wrong = 0.0, 0
        for s in range(0, len(perm), cfg.batch_size):
            idx = perm[s:s + cfg.batch_size]
            x, y = x_all[idx], y_all[idx]
            logits = net.forward(x, training=True)
            loss, g = softmax_cross_entropy(logits, y)
            if not np.isfinite(loss):
                raise TrainingDiverged(f"non-finite loss in epoch {epoch}", last_good)
            net.backward(g.astype(net.dtype, copy=False))
            try:
                for name, grad in net.named_grads():
                    adadelta_step(params[name], grad, optimizer[name])
            except NonFiniteError as e:
                raise TrainingDiverged(f"epoch {epoch}: {e}", last_good) from e
            tot_loss += loss * len(idx)
            tot_wrong += int((logits.argmax(axis=1) != y).sum())
        if validation is not None and len(validation):
            ev = evaluate(net, validation)
            val_loss, val_err = ev.loss, ev.error
        else:
            val_loss = val_err = float("nan")
        m = EpochMetrics(epoch, tot_loss / len(data), tot_wrong / len(data), val_loss, val_err,
                         time.perf_counter() - t0)
        metrics.append(m)
        if log is not None:
            log(m)
        improved = not np.isnan(val_err) and val_err < best_err
        if improved or np.isnan(val_err):
            best_err = val_err if improved else best_err
            best_epoch = epoch
        extra = {"best_val_err": float(best_err), "best_epoch": best_epoch}
        last_good = _snapshot(net, optimizer, epoch, rng, cfg, extra)
        if best_epoch == epoch:
            best = last_good
    return TrainResult(metrics, last_good, best, best_epoch)


def write_metrics_csv(metrics: list[EpochMetrics], path, append: bool = False) -> None:
    path = Path(path)
    new = not append or not path.exists()
    with open(path, "w" if new else "a") as f:
        if new:
            f.write(EpochMetrics.CSV_HEADER + "\n")
        for m in metrics:
            f.write(m.csv_row() + "\n")
