"""Oriented response convolution.

Oriented feature maps are shaped ``(B, C, N, H, W)`` (or ``(C, N, H, W)``
unbatched): ``C`` feature channels, each with ``N`` orientation channels.
Output orientation channel ``k`` of output feature ``o`` is

    sum_i sum_n  F[o, i]_{theta_k}^{(n)}  *  M[i]^{(n)},   theta_k = k 2 pi / N

where ``F[o, i]`` is the ARF linking input feature ``i`` to output feature
``o``.  Only the canonical ARFs are stored; the ``N`` rotated copies form a
virtual bank that is rebuilt on every forward call.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .arf import fast_path_supported, fast_rotation_index, grid_angle, interpolation_matrix, spin_matrix
from .tensor import ShapeError, conv2d, conv2d_backward, im2col


class RotationPlan:
    """Rotations of a ``(..., W, W, N)`` bank to every ``theta_k``.

    Uses index permutations when ``(W, N)`` admits them and the
    interpolating exact rotation otherwise.  ``align`` is the adjoint of
    ``rotate_all`` so the backward pass differentiates exactly what the
    forward pass computed.
    """

    def __init__(self, w: int, n: int, fast: bool | None = None):
        self.w, self.n = w, n
        self.fast = fast_path_supported(w, n) if fast is None else fast
        if self.fast and not fast_path_supported(w, n):
            raise ValueError(f"no fast rotation path for W={w}, N={n}")
        if self.fast:
            self.index = np.stack([fast_rotation_index(w, n, k) for k in range(n)])
        else:
            self.interp = np.stack([interpolation_matrix(w, grid_angle(k, n)) for k in range(n)])
            self.spin = np.stack([spin_matrix(n, grid_angle(k, n)) for k in range(n)])

    def rotate_all(self, f: np.ndarray) -> np.ndarray:
        """``(..., W, W, N) -> (N_k, ..., W, W, N)``."""
        w, n = self.w, self.n
        lead = f.shape[:-3]
        if self.fast:
            flat = f.reshape(lead + (w * w * n,))
            out = flat[..., self.index]  # (..., N_k, WWN)
            out = np.moveaxis(out, -2, 0)
            return out.reshape((n,) + f.shape)
        flat = f.reshape(lead + (w * w, n))
        out = np.einsum("kps,...sm,knm->k...pn", self.interp, flat, self.spin, optimize=True)
        return out.reshape((n,) + f.shape).astype(f.dtype, copy=False)

    def align(self, deltas: np.ndarray) -> np.ndarray:
        """Bring each ``delta[k]`` back to the canonical frame and sum over ``k``.

        For the permutation path this is rotation of ``delta[k]`` by
        ``-theta_k``; for the interpolating path it is the transpose of the
        forward rotation operator.
        """
        w, n = self.w, self.n
        shape = deltas.shape[1:]
        lead = shape[:-3]
        if self.fast:
            acc = np.zeros(lead + (w * w * n,), dtype=deltas.dtype)
            flat = deltas.reshape((n,) + lead + (w * w * n,))
            for k in range(n):
                acc += flat[k][..., fast_rotation_index(w, n, (-k) % n)]
            return acc.reshape(shape)
        flat = deltas.reshape((n,) + lead + (w * w, n))
        out = np.einsum("kps,k...pn,knm->...sm", self.interp, flat, self.spin, optimize=True)
        return out.reshape(shape).astype(deltas.dtype, copy=False)


@dataclass
class ARFBank:
    """``C_out x C_in`` ARFs sharing ``(W, N)`` plus a per-feature bias."""

    weights: np.ndarray  # (C_out, C_in, W, W, N)
    bias: np.ndarray | None = None
    plan: RotationPlan = field(init=False, repr=False)

    def __post_init__(self):
        if self.weights.ndim != 5:
            raise ShapeError(f"ARF bank weights must be (C_out, C_in, W, W, N), got {self.weights.shape}")
        c_out, _, w, w2, n = self.weights.shape
        if w != w2 or w % 2 == 0:
            raise ShapeError(f"ARF bank spatial extent must be odd and square, got {w}x{w2}")
        if self.bias is not None and self.bias.shape != (c_out,):
            raise ShapeError(f"bias: expected shape {(c_out,)}, got {self.bias.shape}")
        self.plan = RotationPlan(w, n)

    @classmethod
    def init(cls, c_out: int, c_in: int, w: int, n: int, rng: np.random.Generator,
             bias: bool = True, dtype=np.float32) -> "ARFBank":
        """Uniform init with bound ``sqrt(6 / fan_in)``, fan-in ``W*W*N*C_in``."""
        bound = np.sqrt(6.0 / (w * w * n * c_in))
        weights = rng.uniform(-bound, bound, size=(c_out, c_in, w, w, n)).astype(dtype)
        return cls(weights, np.zeros(c_out, dtype=dtype) if bias else None)

    @property
    def c_out(self) -> int:
        return self.weights.shape[0]

    @property
    def c_in(self) -> int:
        return self.weights.shape[1]

    @property
    def W(self) -> int:
        return self.weights.shape[2]

    @property
    def N(self) -> int:
        return self.weights.shape[4]

    @property
    def param_count(self) -> int:
        return self.weights.size + (0 if self.bias is None else self.bias.size)

    def virtual_kernels(self) -> np.ndarray:
        """The emulated bank as a plain ``(C_out*N, C_in*N, W, W)`` conv kernel."""
        rot = self.plan.rotate_all(self.weights)  # (N_k, C_out, C_in, W, W, N)
        v = rot.transpose(1, 0, 2, 5, 3, 4)  # C_out, N_k, C_in, N, W, W
        return np.ascontiguousarray(v).reshape(self.c_out * self.N, self.c_in * self.N, self.W, self.W)


@dataclass
class ORConvGrad:
    weights: np.ndarray
    bias: np.ndarray | None
    input: np.ndarray


def _check_input(bank: ARFBank, x: np.ndarray):
    if x.ndim == 4:
        x, squeeze = x[None], True
    elif x.ndim == 5:
        squeeze = False
    else:
        raise ShapeError(f"oriented feature map must be (B, C, N, H, W) or (C, N, H, W), got {x.shape}")
    if x.shape[2] != bank.N:
        raise ShapeError(f"orientation axis mismatch: input has N={x.shape[2]}, bank has N={bank.N}")
    if x.shape[1] != bank.c_in:
        raise ShapeError(f"feature axis mismatch: input has C={x.shape[1]}, bank expects C_in={bank.c_in}")
    return x, squeeze


def orconv_forward(bank: ARFBank, x: np.ndarray, padding: int = 0, virtual: np.ndarray | None = None,
                   cols: np.ndarray | None = None) -> np.ndarray:
    xb, squeeze = _check_input(bank, x)
    b, c, n, h, w = xb.shape
    if virtual is None:
        virtual = bank.virtual_kernels()
    y = conv2d(xb.reshape(b, c * n, h, w), virtual, padding, cols=cols)
    y = y.reshape(b, bank.c_out, n, y.shape[-2], y.shape[-1])
    if bank.bias is not None:
        y += bank.bias[None, :, None, None, None]
    return y[0] if squeeze else y


def orconv_backward(bank: ARFBank, x: np.ndarray, grad_out: np.ndarray, padding: int = 0,
                    virtual: np.ndarray | None = None, cols: np.ndarray | None = None) -> ORConvGrad:
    """Collective filter gradient plus the input gradient.

    The virtual-bank gradient for orientation ``k`` is aligned back to the
    canonical frame and the ``N`` aligned copies are summed.
    """
    xb, squeeze = _check_input(bank, x)
    gb = grad_out[None] if squeeze else grad_out
    b, c, n, h, w = xb.shape
    if gb.ndim != 5 or gb.shape[:3] != (b, bank.c_out, n):
        raise ShapeError(f"grad_out: expected leading axes {(b, bank.c_out, n)}, got {gb.shape}")
    if virtual is None:
        virtual = bank.virtual_kernels()
    go = gb.reshape(b, bank.c_out * n, gb.shape[-2], gb.shape[-1])
    gx, gv = conv2d_backward(xb.reshape(b, c * n, h, w), virtual, go, padding, cols=cols)
    # gv: (C_out*N_k, C_in*N, W, W) -> deltas (N_k, C_out, C_in, W, W, N)
    gv = gv.reshape(bank.c_out, n, bank.c_in, n, bank.W, bank.W)
    deltas = gv.transpose(1, 0, 2, 4, 5, 3)
    gweights = bank.plan.align(np.ascontiguousarray(deltas))
    gbias = None if bank.bias is None else gb.sum(axis=(0, 2, 3, 4))
    gx = gx.reshape(xb.shape)
    return ORConvGrad(gweights, gbias, gx[0] if squeeze else gx)


def orconv_cols(x: np.ndarray, w: int, padding: int) -> np.ndarray:
    """Unfolded patches of a batched oriented map, reusable across forward/backward."""
    b, c, n, h, ww = x.shape
    return im2col(x.reshape(b, c * n, h, ww), w, padding)


def extend_to_omnidirectional(image: np.ndarray, n: int) -> np.ndarray:
    """Lift ``(..., C, H, W)`` to ``(..., C, N, H, W)`` by copying each pixel to all orientations."""
    if n < 1:
        raise ValueError(f"orientation count must be >= 1, got {n}")
    out = np.repeat(np.expand_dims(image, -3), n, axis=-3)
    return out


def extend_backward(grad: np.ndarray) -> np.ndarray:
    return grad.sum(axis=-3)
