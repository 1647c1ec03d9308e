"""MNIST ingestion (IDX format) and the rotated dataset variants.

Built variants are quantised to 8-bit pixel levels so that writing them
as IDX and reading them back is lossless.
"""
from __future__ import annotations

import gzip
import hashlib
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801

VARIANTS = ("original", "rot", "rot_plus", "half_rot", "rot12k_train", "rot12k_test")
ANGLE_RANGES = {
    "original": (0.0, 0.0),
    "rot": (0.0, 2 * math.pi),
    "rot_plus": (0.0, 2 * math.pi),
    "half_rot": (-math.pi / 2, math.pi / 2),
    "rot12k_train": (0.0, 2 * math.pi),
    "rot12k_test": (0.0, 2 * math.pi),
}
ROT12K_TRAIN, ROT12K_TEST, ROT12K_VALIDATION = 12_000, 50_000, 2_000


class DataError(ValueError):
    pass


class IdxMagicError(DataError):
    pass


class IdxTruncatedError(DataError):
    pass


class IdxCountMismatchError(DataError):
    pass


@dataclass
class LabeledImageSet:
    images: np.ndarray              # (n, H, W) float32 in [0, 1]
    labels: np.ndarray              # (n,) int64 in [0, 9]
    provenance: dict = field(default_factory=dict)
    angles: np.ndarray | None = None

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise DataError(f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self) -> int:
        return len(self.labels)

    def take(self, idx, **provenance) -> "LabeledImageSet":
        idx = np.asarray(idx)
        return LabeledImageSet(self.images[idx], self.labels[idx], {**self.provenance, **provenance},
                               None if self.angles is None else self.angles[idx])

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(to_bytes(self.images)).tobytes())
        h.update(self.labels.astype(np.uint8).tobytes())
        return h.hexdigest()


# ---------------------------------------------------------------------------
# IDX
# ---------------------------------------------------------------------------

def _read(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def _parse(raw: bytes, magic: int, path, ndim: int) -> np.ndarray:
    header = 4 + 4 * ndim
    if len(raw) < header:
        raise IdxTruncatedError(f"{path}: header needs {header} bytes, file has {len(raw)}")
    got = struct.unpack(">I", raw[:4])[0]
    if got != magic:
        raise IdxMagicError(f"{path}: magic 0x{got:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{ndim}I", raw[4:header])
    expected = header + int(np.prod(dims))
    if len(raw) != expected:
        raise IdxTruncatedError(f"{path}: expected {expected} bytes for dims {dims}, found {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8, offset=header).reshape(dims)


def load_idx(images_path, labels_path) -> LabeledImageSet:
    """Read an IDX image/label pair; pixels are scaled to [0, 1]."""
    raw_images, raw_labels = _read(images_path), _read(labels_path)
    images = _parse(raw_images, IMAGE_MAGIC, images_path, 3)
    labels = _parse(raw_labels, LABEL_MAGIC, labels_path, 1)
    if len(images) != len(labels):
        raise IdxCountMismatchError(
            f"{images_path} holds {len(images)} images but {labels_path} holds {len(labels)} labels")
    if labels.size and labels.max() > 9:
        raise DataError(f"{labels_path}: label {labels.max()} outside [0, 9]")
    digest = hashlib.sha256(raw_images + raw_labels).hexdigest()
    return LabeledImageSet(images.astype(np.float32) / 255, labels.astype(np.int64),
                           {"variant": "original", "source": digest})


def to_bytes(images: np.ndarray) -> np.ndarray:
    return np.clip(np.rint(images * 255), 0, 255).astype(np.uint8)


def quantize(images: np.ndarray) -> np.ndarray:
    return to_bytes(images).astype(np.float32) / 255


def write_idx(data: LabeledImageSet, prefix) -> dict[str, Path]:
    """Write ``<prefix>-images-idx3-ubyte``, ``<prefix>-labels-idx1-ubyte`` and ``<prefix>.meta.txt``."""
    prefix = Path(prefix)
    prefix.parent.mkdir(parents=True, exist_ok=True)
    n, h, w = data.images.shape
    paths = {"images": Path(f"{prefix}-images-idx3-ubyte"), "labels": Path(f"{prefix}-labels-idx1-ubyte"),
             "meta": Path(f"{prefix}.meta.txt")}
    paths["images"].write_bytes(struct.pack(">4I", IMAGE_MAGIC, n, h, w) + to_bytes(data.images).tobytes())
    paths["labels"].write_bytes(struct.pack(">2I", LABEL_MAGIC, n) + data.labels.astype(np.uint8).tobytes())
    meta = dict(data.provenance)
    meta["count"] = n
    meta["images_sha256"] = hashlib.sha256(paths["images"].read_bytes()).hexdigest()
    meta["labels_sha256"] = hashlib.sha256(paths["labels"].read_bytes()).hexdigest()
    paths["meta"].write_text("".join(f"{k}: {v}\n" for k, v in sorted(meta.items())))
    return paths


def read_meta(path) -> dict[str, str]:
    out = {}
    for line in Path(path).read_text().splitlines():
        if line.strip():
            k, _, v = line.partition(":")
            out[k.strip()] = v.strip()
    return out


def load_mnist(directory, split: str = "train") -> LabeledImageSet:
    """Load ``train`` or ``t10k`` from a directory holding the four standard files (optionally gzipped)."""
    directory = Path(directory)
    found = {}
    for kind, idx in (("images", "idx3"), ("labels", "idx1")):
        for suffix in ("", ".gz"):
            p = directory / f"{split}-{kind}-{idx}-ubyte{suffix}"
            if p.exists():
                found[kind] = p
                break
        else:
            raise DataError(f"{directory}: no {split}-{kind}-{idx}-ubyte file")
    data = load_idx(found["images"], found["labels"])
    data.provenance["split"] = split
    return data


# ---------------------------------------------------------------------------
# rotation
# ---------------------------------------------------------------------------

def _snap(a: np.ndarray) -> np.ndarray:
    r = np.rint(a)
    return np.where(np.abs(a - r) < 1e-9, r, a)


def rotate_images(images: np.ndarray, angles) -> np.ndarray:
    """Rotate each ``(H, W)`` image clockwise by its angle about the exact centre.

    Bilinear resampling; neighbours outside the image read as zero.
    """
    images = np.asarray(images)
    squeeze = images.ndim == 2
    if squeeze:
        images = images[None]
    n, h, w = images.shape
    angles = np.broadcast_to(np.asarray(angles, dtype=np.float64), (n,))
    if not np.all(np.isfinite(angles)):
        raise ValueError("rotation angles must be finite")
    cy, cx = (h - 1) / 2, (w - 1) / 2
    rows, cols = np.mgrid[0:h, 0:w]
    x, y = (cols - cx).ravel(), (cy - rows).ravel()
    cos = _snap(np.cos(angles))[:, None]
    sin = _snap(np.sin(angles))[:, None]
    sx = x * cos - y * sin
    sy = x * sin + y * cos
    src_r, src_c = _snap(cy - sy), _snap(sx + cx)
    r0, c0 = np.floor(src_r).astype(np.int64), np.floor(src_c).astype(np.int64)
    fr, fc = src_r - r0, src_c - c0
    flat = images.reshape(n, h * w).astype(np.float64)
    out = np.zeros((n, h * w))
    base = np.arange(n)[:, None] * (h * w)
    for dr, dc, wt in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc), (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        rr, cc = r0 + dr, c0 + dc
        ok = (rr >= 0) & (rr < h) & (cc >= 0) & (cc < w) & (wt > 0)
        idx = np.where(ok, base + rr * w + cc, 0)
        out += np.where(ok, flat.reshape(-1)[idx] * wt, 0)
    out = out.reshape(n, h, w).astype(images.dtype if images.dtype.kind == "f" else np.float32)
    return out[0] if squeeze else out


def rotate_image(img: np.ndarray, theta: float) -> np.ndarray:
    return rotate_images(img, theta)


def _rotate_chunked(images, angles, chunk=4096):
    out = np.empty(images.shape, dtype=np.float32)
    for s in range(0, len(images), chunk):
        out[s:s + chunk] = rotate_images(images[s:s + chunk], angles[s:s + chunk])
    return out


# ---------------------------------------------------------------------------
# variants
# ---------------------------------------------------------------------------

def build_variant(base: LabeledImageSet, variant: str, seed: int) -> LabeledImageSet:
    """Deterministically derive ``variant`` from the un-rotated ``base`` set.

    ``rot`` and ``rot_plus`` share their per-sample angles for a given seed;
    ``rot_plus`` adds the eight 45-degree offsets of each sample, sample-major.
    ``rot12k_*`` draw disjoint 12000/50000 subsets of one seeded permutation,
    so ``base`` must hold at least 62000 samples.
    """
    if variant not in VARIANTS:
        raise DataError(f"unknown variant {variant!r}; choose from {', '.join(VARIANTS)}")
    rng = np.random.default_rng(seed)
    n = len(base)
    lo, hi = ANGLE_RANGES[variant]
    prov = {**base.provenance, "variant": variant, "seed": seed, "angle_range": f"[{lo:.6f}, {hi:.6f}]",
            "source": base.provenance.get("source", base.digest())}
    if variant == "original":
        return LabeledImageSet(quantize(base.images), base.labels.copy(), prov, np.zeros(n))
    if variant in ("rot", "half_rot"):
        angles = rng.uniform(lo, hi, n)
        return LabeledImageSet(quantize(_rotate_chunked(base.images, angles)), base.labels.copy(), prov, angles)
    if variant == "rot_plus":
        angles = rng.uniform(lo, hi, n)
        offsets = np.arange(8) * (math.pi / 4)
        all_angles = (angles[:, None] + offsets[None, :]).ravel()
        images = _rotate_chunked(np.repeat(base.images, 8, axis=0), all_angles)
        return LabeledImageSet(quantize(images), np.repeat(base.labels, 8), prov, np.mod(all_angles, 2 * math.pi))
    if n < ROT12K_TRAIN + ROT12K_TEST:
        raise DataError(f"{variant} needs at least {ROT12K_TRAIN + ROT12K_TEST} base samples, got {n}")
    perm = rng.permutation(n)
    angles = rng.uniform(lo, hi, n)
    idx = perm[:ROT12K_TRAIN] if variant == "rot12k_train" else perm[ROT12K_TRAIN:ROT12K_TRAIN + ROT12K_TEST]
    images = _rotate_chunked(base.images[idx], angles[idx])
    return LabeledImageSet(quantize(images), base.labels[idx], prov, angles[idx])


def carve_validation(data: LabeledImageSet, size: int, seed: int):
    """Split off ``size`` random samples; returns ``(train, validation)``."""
    if not 0 <= size < len(data):
        raise DataError(f"validation size {size} incompatible with {len(data)} samples")
    perm = np.random.default_rng(seed).permutation(len(data))
    return data.take(np.sort(perm[size:]), role="train"), data.take(np.sort(perm[:size]), role="validation")


def subset(data: LabeledImageSet, size: int, seed: int) -> LabeledImageSet:
    if size > len(data):
        raise DataError(f"cannot draw {size} samples from {len(data)}")
    perm = np.random.default_rng(seed).permutation(len(data))
    return data.take(np.sort(perm[:size]), subset=size, subset_seed=seed)


def concat(a: LabeledImageSet, b: LabeledImageSet) -> LabeledImageSet:
    src = hashlib.sha256((a.provenance.get("source", "") + b.provenance.get("source", "")).encode()).hexdigest()
    return LabeledImageSet(np.concatenate([a.images, b.images]), np.concatenate([a.labels, b.labels]),
                           {"variant": "original", "source": src})
