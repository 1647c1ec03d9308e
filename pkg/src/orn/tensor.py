"""Dense-array kernels shared by every layer.

Arrays are plain ``numpy.ndarray`` objects in row-major order.  Image-like
tensors are batched as ``(B, C, H, W)``; unbatched ``(C, H, W)`` inputs are
accepted by the convolution and pooling entry points and returned unbatched.

Convolution means cross-correlation (no kernel flip).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


class ShapeError(ValueError):
    """Raised when array extents are inconsistent."""


class NonFiniteError(FloatingPointError):
    """Raised when a NaN or infinity reaches an optimizer step."""


def _check_rank(x: np.ndarray, ranks, name: str) -> None:
    if x.ndim not in ranks:
        raise ShapeError(f"{name}: expected rank in {tuple(ranks)}, got shape {x.shape}")


def _batched(x: np.ndarray, name: str):
    _check_rank(x, (3, 4), name)
    if x.ndim == 3:
        return x[None], True
    return x, False


# ---------------------------------------------------------------------------
# convolution
# ---------------------------------------------------------------------------

def im2col(x: np.ndarray, k: int, padding: int = 0) -> np.ndarray:
    """Unfold ``(B, C, H, W)`` into ``(B*H'*W', C*k*k)`` patch rows."""
    b, c, h, w = x.shape
    if padding:
        x = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    if x.shape[2] < k or x.shape[3] < k:
        raise ShapeError(f"kernel extent {k} exceeds padded input {x.shape[2:]}")
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # B, C, H', W', k, k
    ho, wo = win.shape[2], win.shape[3]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(b * ho * wo, c * k * k)


def _conv_checks(x: np.ndarray, kernels: np.ndarray, padding: int) -> None:
    _check_rank(kernels, (4,), "kernels")
    c_out, c_in, kh, kw = kernels.shape
    if kh != kw:
        raise ShapeError(f"kernels: non-square kernel {kh}x{kw} (axes 2, 3)")
    if kh % 2 == 0:
        raise ShapeError(f"kernels: kernel extent must be odd, got {kh}")
    if padding < 0:
        raise ShapeError(f"padding must be >= 0, got {padding}")
    if x.shape[1] != c_in:
        raise ShapeError(
            f"channel axis mismatch: input has {x.shape[1]} channels, kernels expect {c_in} (axis 1)")


def conv2d(x: np.ndarray, kernels: np.ndarray, padding: int = 0, cols: np.ndarray | None = None) -> np.ndarray:
    """Stride-1 cross-correlation.

    ``x`` is ``(B, C_in, H, W)`` or ``(C_in, H, W)``; ``kernels`` is
    ``(C_out, C_in, k, k)``.  Output extent is ``H + 2*padding - k + 1``.
    Pass precomputed ``cols`` (from :func:`im2col`) to skip the unfold.
    """
    xb, squeeze = _batched(x, "input")
    _conv_checks(xb, kernels, padding)
    b, _, h, w = xb.shape
    c_out, _, k, _ = kernels.shape
    ho, wo = h + 2 * padding - k + 1, w + 2 * padding - k + 1
    if ho < 1 or wo < 1:
        raise ShapeError(f"kernel extent {k} exceeds padded input ({h}, {w}) + {padding}")
    if cols is None:
        cols = im2col(xb, k, padding)
    out = cols @ kernels.reshape(c_out, -1).T
    out = out.reshape(b, ho, wo, c_out).transpose(0, 3, 1, 2)
    out = np.ascontiguousarray(out)
    return out[0] if squeeze else out


def conv2d_backward(x: np.ndarray, kernels: np.ndarray, grad_out: np.ndarray, padding: int = 0,
                    cols: np.ndarray | None = None):
    """Gradients of :func:`conv2d` w.r.t. its input and kernels.

    Returns ``(grad_x, grad_kernels)`` with the shapes of ``x`` and ``kernels``.
    """
    xb, squeeze = _batched(x, "input")
    gb, _ = _batched(grad_out, "grad_out")
    _conv_checks(xb, kernels, padding)
    b, c_in, h, w = xb.shape
    c_out, _, k, _ = kernels.shape
    ho, wo = h + 2 * padding - k + 1, w + 2 * padding - k + 1
    if gb.shape != (b, c_out, ho, wo):
        raise ShapeError(f"grad_out: expected shape {(b, c_out, ho, wo)}, got {gb.shape}")
    if cols is None:
        cols = im2col(xb, k, padding)
    g = gb.transpose(0, 2, 3, 1).reshape(b * ho * wo, c_out)
    grad_k = (g.T @ cols).reshape(kernels.shape)
    gcols = (g @ kernels.reshape(c_out, -1)).reshape(b, ho, wo, c_in, k, k)
    gpad = np.zeros((b, c_in, h + 2 * padding, w + 2 * padding), dtype=gcols.dtype)
    for di in range(k):
        for dj in range(k):
            gpad[:, :, di:di + ho, dj:dj + wo] += gcols[:, :, :, :, di, dj].transpose(0, 3, 1, 2)
    grad_x = gpad[:, :, padding:padding + h, padding:padding + w] if padding else gpad
    grad_x = np.ascontiguousarray(grad_x)
    return (grad_x[0] if squeeze else grad_x), grad_k


# ---------------------------------------------------------------------------
# pooling and pointwise ops
# ---------------------------------------------------------------------------

def maxpool2(x: np.ndarray):
    """2x2 non-overlapping max pooling.

    Returns ``(pooled, argmax)`` where ``argmax`` holds the winning position
    (0..3, row-major inside the window) for the backward pass.  Ties go to
    the first position.
    """
    xb, squeeze = _batched(x, "input")
    b, c, h, w = xb.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool2 needs even spatial extents, got ({h}, {w})")
    win = xb.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    if squeeze:
        return out[0], idx[0]
    return out, idx


def maxpool2_backward(grad_out: np.ndarray, argmax: np.ndarray) -> np.ndarray:
    gb, squeeze = _batched(grad_out, "grad_out")
    ib, _ = _batched(argmax, "argmax")
    if gb.shape != ib.shape:
        raise ShapeError(f"grad_out {gb.shape} does not match argmax {ib.shape}")
    b, c, h2, w2 = gb.shape
    win = np.zeros((b, c, h2, w2, 4), dtype=gb.dtype)
    np.put_along_axis(win, ib[..., None], gb[..., None], axis=-1)
    out = win.reshape(b, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, 2 * h2, 2 * w2)
    return out[0] if squeeze else out


def maxpool2_margin(x: np.ndarray) -> float:
    """Smallest gap between the largest and second-largest entry of any window.

    Windows whose top two entries are both exactly zero are skipped: such
    zeros come from an upstream rectifier whose own margin keeps them fixed.
    """
    xb, _ = _batched(x, "input")
    b, c, h, w = xb.shape
    win = xb.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(-1, 4)
    return top2_gap(win)


def top2_gap(rows: np.ndarray) -> float:
    """Minimum over rows of (largest - second largest), ignoring rows tied at exactly zero."""
    if rows.shape[-1] < 2 or rows.size == 0:
        return np.inf
    top2 = np.sort(rows.reshape(-1, rows.shape[-1]), axis=-1)[:, -2:]
    live = ~((top2[:, 0] == 0) & (top2[:, 1] == 0))
    gaps = top2[live, 1] - top2[live, 0]
    return float(gaps.min()) if gaps.size else np.inf


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Average over the two trailing spatial axes."""
    return x.mean(axis=(-2, -1))


def global_avg_pool_backward(grad_out: np.ndarray, spatial: tuple[int, int]) -> np.ndarray:
    h, w = spatial
    g = grad_out[..., None, None] / (h * w)
    return np.broadcast_to(g, grad_out.shape + (h, w)).copy()


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(grad_out: np.ndarray, x: np.ndarray) -> np.ndarray:
    if grad_out.shape != x.shape:
        raise ShapeError(f"grad_out {grad_out.shape} does not match input {x.shape}")
    return grad_out * (x > 0)


def dropout(x: np.ndarray, rate: float, training: bool, rng: np.random.Generator | None = None):
    """Inverted dropout.  Returns ``(y, mask)``; ``mask`` is ``None`` in eval mode.

    Kept units are scaled by ``1 / (1 - rate)`` so evaluation is the identity.
    """
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if not training or rate == 0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs an explicit generator")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / (1 - rate)
    return x * mask, mask


def dropout_backward(grad_out: np.ndarray, mask: np.ndarray | None) -> np.ndarray:
    return grad_out if mask is None else grad_out * mask


def linear(x: np.ndarray, weight: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """``x @ weight.T + bias`` with ``weight`` shaped ``(out, in)``."""
    _check_rank(x, (2,), "input")
    _check_rank(weight, (2,), "weight")
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"feature axis mismatch: input has {x.shape[1]}, weight expects {weight.shape[1]} (axis 1)")
    y = x @ weight.T
    if bias is not None:
        if bias.shape != (weight.shape[0],):
            raise ShapeError(f"bias: expected shape {(weight.shape[0],)}, got {bias.shape}")
        y = y + bias
    return y


def linear_backward(x: np.ndarray, weight: np.ndarray, grad_out: np.ndarray):
    """Returns ``(grad_x, grad_weight, grad_bias)``."""
    if grad_out.shape != (x.shape[0], weight.shape[0]):
        raise ShapeError(f"grad_out: expected {(x.shape[0], weight.shape[0])}, got {grad_out.shape}")
    return grad_out @ weight, grad_out.T @ x, grad_out.sum(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray):
    """Mean cross-entropy over the batch and its gradient w.r.t. ``logits``."""
    _check_rank(logits, (2,), "logits")
    labels = np.asarray(labels)
    if labels.shape != (logits.shape[0],):
        raise ShapeError(f"labels: expected shape {(logits.shape[0],)}, got {labels.shape}")
    n = logits.shape[0]
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = -logp[np.arange(n), labels].mean()
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1
    return float(loss), grad / n


# ---------------------------------------------------------------------------
# adadelta
# ---------------------------------------------------------------------------

@dataclass
class AdadeltaState:
    """Running averages for one parameter tensor."""

    sq_grad: np.ndarray
    sq_update: np.ndarray
    rho: float = 0.9
    eps: float = 1e-6
    step: int = field(default=0)

    @classmethod
    def zeros_like(cls, param: np.ndarray, rho: float = 0.9, eps: float = 1e-6) -> "AdadeltaState":
        return cls(np.zeros_like(param), np.zeros_like(param), rho, eps)


def adadelta_step(param: np.ndarray, grad: np.ndarray, state: AdadeltaState) -> np.ndarray:
    """Apply one adadelta update to ``param`` in place and return it.

    E[g^2] <- rho E[g^2] + (1 - rho) g^2
    dx     <- -sqrt(E[dx^2] + eps) / sqrt(E[g^2] + eps) * g
    E[dx^2] <- rho E[dx^2] + (1 - rho) dx^2
    """
    if param.shape != grad.shape or state.sq_grad.shape != param.shape or state.sq_update.shape != param.shape:
        raise ShapeError(
            f"adadelta shapes disagree: param {param.shape}, grad {grad.shape}, state {state.sq_grad.shape}")
    if not np.all(np.isfinite(grad)):
        bad = np.argwhere(~np.isfinite(grad))
        raise NonFiniteError(f"non-finite gradient at {len(bad)} entries, first at {tuple(bad[0])}")
    rho, eps = state.rho, state.eps
    state.sq_grad *= rho
    state.sq_grad += (1 - rho) * grad * grad
    update = np.sqrt(state.sq_update + eps) / np.sqrt(state.sq_grad + eps) * grad
    state.sq_update *= rho
    state.sq_update += (1 - rho) * update * update
    param -= update
    state.step += 1
    return param


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------

def numerical_gradient(f, x: np.ndarray, h: float = 1e-6, indices=None) -> np.ndarray:
    """Central-difference gradient of the scalar function ``f`` at ``x``.

    ``x`` is perturbed in place and restored.  It must be float64.  If
    ``indices`` is given only those flat coordinates are evaluated; the
    rest of the result is zero.
    """
    if x.dtype != np.float64:
        raise TypeError("finite differences run in float64 only")
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in (range(flat.size) if indices is None else indices):
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> float:
    """Normwise relative error ``max|a - n| / max(max|a|, max|n|)``."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0))
    if scale == 0:
        return 0.0
    return float(np.abs(analytic - numeric).max() / scale)
