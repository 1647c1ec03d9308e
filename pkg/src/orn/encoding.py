"""Rotation-invariant encodings of ``(..., C, N)`` oriented descriptors."""
from __future__ import annotations

import numpy as np

from .tensor import top2_gap


def _check(desc: np.ndarray) -> None:
    if desc.ndim < 1 or desc.shape[-1] == 0:
        raise ValueError(f"descriptor needs a non-empty orientation axis, got shape {desc.shape}")


def circular_shift(v: np.ndarray, s) -> np.ndarray:
    """``out[..., n] = v[..., (n - s) mod N]``; ``s`` may be an array broadcast over leading axes."""
    n = v.shape[-1]
    src = (np.arange(n) - np.asarray(s)[..., None]) % n
    return np.take_along_axis(v, np.broadcast_to(src, v.shape), axis=-1)


def dominant_orientation(desc: np.ndarray) -> np.ndarray:
    """Index of the strongest response per feature; ties go to the smallest index."""
    _check(desc)
    return desc.argmax(axis=-1)


def oralign(desc: np.ndarray):
    """Spin each feature so its dominant orientation lands on channel 0.

    Returns ``(aligned, D)`` with ``aligned[..., n] = desc[..., (n + D) mod N]``.
    """
    d = dominant_orientation(desc)
    return circular_shift(desc, -d), d


def oralign_backward(grad_out: np.ndarray, d: np.ndarray | None) -> np.ndarray:
    if d is None:
        raise ValueError("oralign_backward needs the dominant orientations of the forward pass")
    if np.shape(d) != grad_out.shape[:-1]:
        raise ValueError(f"D has shape {np.shape(d)}, expected {grad_out.shape[:-1]}")
    return circular_shift(grad_out, d)


def orpooling(desc: np.ndarray):
    """Max over orientation channels.  Returns ``(pooled, argmax)``."""
    idx = dominant_orientation(desc)
    return np.take_along_axis(desc, idx[..., None], axis=-1)[..., 0], idx


def orpooling_backward(grad_out: np.ndarray, idx: np.ndarray, n: int) -> np.ndarray:
    grad = np.zeros(grad_out.shape + (n,), dtype=grad_out.dtype)
    np.put_along_axis(grad, idx[..., None], grad_out[..., None], axis=-1)
    return grad


def argmax_margin(desc: np.ndarray) -> float:
    """Smallest gap between the top two responses of any feature."""
    return top2_gap(desc)
