"""Active rotating filters and their rotated variants.

An ARF is a ``W x W x N`` array: ``N`` orientation channels on a ``W x W``
grid.  Grid points are addressed by signed coordinates ``(i, j)`` with
``|i|, |j| <= (W - 1) / 2`` where ``i`` runs to the right and ``j`` runs up;
array storage is ``weights[row, col, n]`` with ``row = c - j`` and
``col = c + i`` (``c`` the centre index).  All rotations are clockwise.

Every function here accepts extra leading axes, so a whole bank shaped
``(C_out, C_in, W, W, N)`` rotates in one call.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

TWO_PI = 2 * math.pi
_SNAP = 1e-9

# ring positions of the 3x3 fast path, clockwise from (0, 1); -1 marks the centre
RING_INDEX_TABLE = np.array([[7, 0, 1],
                             [6, -1, 2],
                             [5, 4, 3]])


def ring_index_table() -> np.ndarray:
    return RING_INDEX_TABLE.copy()


def ring_cell(position: int) -> tuple[int, int]:
    """Signed grid coordinate ``(i, j)`` of ring position 0..7."""
    row, col = np.argwhere(RING_INDEX_TABLE == position)[0]
    return index_to_grid(int(row), int(col), 3)


def grid_to_index(i: int, j: int, w: int) -> tuple[int, int]:
    c = (w - 1) // 2
    if max(abs(i), abs(j)) > c:
        raise IndexError(f"grid point ({i}, {j}) outside a {w}x{w} filter")
    return c - j, c + i


def index_to_grid(row: int, col: int, w: int) -> tuple[int, int]:
    c = (w - 1) // 2
    if not (0 <= row < w and 0 <= col < w):
        raise IndexError(f"array index ({row}, {col}) outside a {w}x{w} filter")
    return col - c, c - row


def reduce_angle(theta: float) -> float:
    """Reduce ``theta`` to ``[0, 2*pi)``."""
    r = math.fmod(theta, TWO_PI)
    if r < 0:
        r += TWO_PI
    return 0.0 if r >= TWO_PI else r


def grid_angle(k: int, n: int) -> float:
    """The angle ``k * 2*pi / n``, reduced."""
    return TWO_PI * (k % n) / n


def _check_filter(f: np.ndarray) -> tuple[int, int]:
    if f.ndim < 3:
        raise ValueError(f"ARF arrays need trailing (W, W, N) axes, got shape {f.shape}")
    w, w2, n = f.shape[-3:]
    if w != w2 or w % 2 == 0 or w < 1:
        raise ValueError(f"ARF spatial extent must be odd and square, got {w}x{w2}")
    if n < 1:
        raise ValueError("ARF needs at least one orientation channel")
    return w, n


@dataclass
class ARF:
    """A canonical filter; only this copy is stored and learned."""

    weights: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights)
        if self.weights.ndim != 3:
            raise ValueError(f"ARF weights must be (W, W, N), got {self.weights.shape}")
        _check_filter(self.weights)

    @property
    def W(self) -> int:
        return self.weights.shape[0]

    @property
    def N(self) -> int:
        return self.weights.shape[2]

    def at(self, i: int, j: int, n: int) -> float:
        row, col = grid_to_index(i, j, self.W)
        return self.weights[row, col, n]

    def rotate(self, theta: float) -> "ARF":
        return ARF(rotate_arf_exact(self.weights, theta))

    def rotate_fast(self, k: int) -> "ARF":
        return ARF(rotate_arf_fast(self.weights, k))


# ---------------------------------------------------------------------------
# coordinate rotation
# ---------------------------------------------------------------------------

def _snap(x: float) -> float:
    r = round(x)
    return float(r) if abs(x - r) < _SNAP else x


@lru_cache(maxsize=512)
def _interpolation_matrix(w: int, theta: float) -> np.ndarray:
    # out[p] = sum_s R[p, s] * src[s] over flattened (row, col) grid cells
    c = (w - 1) // 2
    cos, sin = _snap(math.cos(theta)), _snap(math.sin(theta))
    r = np.zeros((w * w, w * w))
    for row in range(w):
        for col in range(w):
            p, q = index_to_grid(row, col, w)
            ps = _snap(p * cos - q * sin)
            qs = _snap(p * sin + q * cos)
            if max(abs(ps), abs(qs)) > c + _SNAP:
                continue
            u, v = math.floor(ps), math.floor(qs)
            mu, om = ps - u, qs - v
            for du, dv, wt in ((0, 0, (1 - mu) * (1 - om)), (0, 1, (1 - mu) * om),
                               (1, 0, mu * (1 - om)), (1, 1, mu * om)):
                uu, vv = u + du, v + dv
                if wt == 0 or max(abs(uu), abs(vv)) > c:
                    continue
                rs, cs = grid_to_index(uu, vv, w)
                r[row * w + col, rs * w + cs] += wt
    r.setflags(write=False)
    return r


def interpolation_matrix(w: int, theta: float) -> np.ndarray:
    """Linear map of a flattened ``W x W`` grid performing the coordinate rotation."""
    return _interpolation_matrix(w, reduce_angle(theta))


def coordinate_rotate(f: np.ndarray, theta: float) -> np.ndarray:
    """Resample the grid of ``f`` rotated clockwise by ``theta``.

    Output point ``(p, q)`` reads source ``(p', q') = (p cos - q sin, p sin + q cos)``
    by bilinear interpolation of whole channel vectors.  Sources outside the
    square ``max(|p'|, |q'|) <= (W-1)/2`` contribute zero.
    """
    w, n = _check_filter(f)
    r = interpolation_matrix(w, theta)
    flat = f.reshape(f.shape[:-3] + (w * w, n))
    out = np.einsum("ps,...sn->...pn", r, flat)
    return out.reshape(f.shape)


# ---------------------------------------------------------------------------
# orientation spin
# ---------------------------------------------------------------------------

def dft(v: np.ndarray) -> np.ndarray:
    """``X(k) = sum_n v[n] exp(-j k 2 pi n / N)`` along the last axis."""
    n = v.shape[-1]
    idx = np.arange(n)
    basis = np.exp(-1j * TWO_PI * np.outer(idx, idx) / n)
    return v @ basis.T


def idft(x: np.ndarray) -> np.ndarray:
    n = x.shape[-1]
    idx = np.arange(n)
    basis = np.exp(1j * TWO_PI * np.outer(idx, idx) / n)
    return x @ basis.T / n


def _spin_phases(n: int, theta: float) -> np.ndarray:
    # signed frequencies so the shift interpolates with the lowest harmonics;
    # the Nyquist bin of even n takes the mean of its two aliases (a cosine)
    k = np.arange(n)
    freq = np.where(k <= n // 2, k, k - n).astype(float)
    phase = np.exp(-1j * freq * theta)
    if n % 2 == 0:
        phase[n // 2] = math.cos(n / 2 * theta)
    return phase


@lru_cache(maxsize=512)
def _spin_matrix(n: int, theta: float) -> np.ndarray:
    eye = np.eye(n)
    cols = idft(dft(eye) * _spin_phases(n, theta))  # row m = spin of e_m
    if np.abs(cols.imag).max() > 1e-9:
        raise ArithmeticError("orientation spin produced a complex residue")
    s = np.ascontiguousarray(cols.real.T)
    # grid angles are exact circular shifts
    steps = theta * n / TWO_PI
    if abs(steps - round(steps)) < _SNAP:
        s = np.roll(eye, int(round(steps)) % n, axis=0)
    s.setflags(write=False)
    return s


def spin_matrix(n: int, theta: float) -> np.ndarray:
    """``S`` such that ``spun = S @ v`` for a length-``n`` channel vector."""
    return _spin_matrix(n, reduce_angle(theta))


def orientation_spin(f: np.ndarray, theta: float) -> np.ndarray:
    """Spin every channel vector clockwise by ``theta`` via the DFT shift property.

    At ``theta = k * 2*pi / N`` this is the circular shift
    ``out[n] = f[(n - k) mod N]``; between grid angles it is the
    band-limited interpolation of that shift.
    """
    n = f.shape[-1]
    return f @ spin_matrix(n, theta).T


def orientation_spin_dft(f: np.ndarray, theta: float) -> np.ndarray:
    """Reference spin straight from the transform pair (no caching or snapping)."""
    n = f.shape[-1]
    spun = idft(dft(f) * _spin_phases(n, theta))
    return spun.real


# ---------------------------------------------------------------------------
# full rotations
# ---------------------------------------------------------------------------

def rotate_arf_exact(f: np.ndarray, theta: float) -> np.ndarray:
    """Coordinate rotation followed by orientation spin, for any ``theta``."""
    return orientation_spin(coordinate_rotate(f, theta), theta)


def fast_path_supported(w: int, n: int) -> bool:
    return w == 1 or (w == 3 and n == 8)


@lru_cache(maxsize=256)
def fast_rotation_index(w: int, n: int, k: int) -> np.ndarray:
    """Flat gather index: ``rotated.ravel() == f.ravel()[index]`` for one ARF."""
    if not fast_path_supported(w, n):
        raise ValueError(
            f"no fast rotation for W={w}, N={n}; it exists for W=1 (any N) and W=3 with N=8. "
            "Use rotate_arf_exact instead")
    k %= n
    cell = np.arange(w * w)
    if w == 3:
        src_cell = cell.copy()
        for row in range(3):
            for col in range(3):
                pos = RING_INDEX_TABLE[row, col]
                if pos < 0:
                    continue
                srow, scol = np.argwhere(RING_INDEX_TABLE == (pos - k) % 8)[0]
                src_cell[row * 3 + col] = srow * 3 + scol
    else:
        src_cell = cell
    src_chan = (np.arange(n) - k) % n
    index = (src_cell[:, None] * n + src_chan[None, :]).reshape(-1)
    index.setflags(write=False)
    return index


def rotate_arf_fast(f: np.ndarray, k: int) -> np.ndarray:
    """Rotate by ``k * 2*pi / N`` with pure index shifts (ring then channels)."""
    w, n = _check_filter(f)
    index = fast_rotation_index(w, n, k % n)
    flat = f.reshape(f.shape[:-3] + (w * w * n,))
    return flat[..., index].reshape(f.shape)
