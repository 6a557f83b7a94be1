"""Dense float64 tensors and the raw numeric kernels everything else uses.

Conventions shared by every kernel:
  * values are 64-bit floats in row-major (C) order, rank 1 to 4;
  * no implicit broadcasting beyond the row-bias addition in `add_bias`;
  * deterministic: the same inputs produce the same bits within one build.

Kernels are expressed through numpy/BLAS rather than scalar loops; all
bit-exactness guarantees in this package compare identical operation
sequences on identical values, which BLAS satisfies (and the test suite
asserts).
"""

from __future__ import annotations

import numpy as np

from .errors import IndexRangeError, ShapeError


def validate_shape(shape) -> tuple[int, ...]:
    """Check rank 1..4 with every dim a positive integer; return a tuple."""
    dims = tuple(shape)
    if not 1 <= len(dims) <= 4:
        raise ShapeError(f"rank must be 1..4, got shape {dims}")
    for d in dims:
        if not isinstance(d, (int, np.integer)) or d < 1:
            raise ShapeError(f"dims must be positive integers, got shape {dims}")
    return tuple(int(d) for d in dims)


class Tensor:
    """Row-major float64 array, rank 1..4.

    Treat tensors as immutable once built; the only sanctioned in-place
    writes are optimizer parameter updates, each owned by a single training
    run.  `data` exposes the flat row-major view.
    """

    __slots__ = ("array",)

    def __init__(self, array):
        arr = np.ascontiguousarray(array, dtype=np.float64)
        validate_shape(arr.shape)
        self.array = arr

    @property
    def shape(self) -> tuple[int, ...]:
        return self.array.shape

    @property
    def data(self) -> np.ndarray:
        return self.array.reshape(-1)

    def copy(self) -> "Tensor":
        return Tensor(self.array.copy())

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape})"


def create(shape, fill_value: float) -> Tensor:
    """Tensor of the given shape with every element equal to fill_value."""
    dims = validate_shape(shape)
    return Tensor(np.full(dims, float(fill_value)))


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product of a [m, k] and b [k, n]."""
    if len(a.shape) != 2 or len(b.shape) != 2:
        raise ShapeError(f"matmul needs rank-2 inputs, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner dims differ: {a.shape} vs {b.shape}")
    return Tensor(a.array @ b.array)


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a per-column bias [n] to every row of x [m, n]."""
    if len(x.shape) != 2 or len(bias.shape) != 1 or x.shape[1] != bias.shape[0]:
        raise ShapeError(f"add_bias shapes incompatible: {x.shape} vs {bias.shape}")
    return Tensor(x.array + bias.array)


def conv2d_forward(x: Tensor, w: Tensor, bias: Tensor) -> Tensor:
    """3x3 cross-correlation, stride 1, zero padding 1, plus per-filter bias.

    x: [B, C, H, W], w: [F, C, 3, 3], bias: [F] -> [B, F, H, W].
    """
    if len(x.shape) != 4 or len(w.shape) != 4:
        raise ShapeError(f"conv2d needs rank-4 x and w, got {x.shape} and {w.shape}")
    if w.shape[2] != 3 or w.shape[3] != 3:
        raise ShapeError(f"conv2d kernel must be 3x3, got {w.shape}")
    if w.shape[1] != x.shape[1]:
        raise ShapeError(f"conv2d channel mismatch: x has {x.shape[1]}, w expects {w.shape[1]}")
    if len(bias.shape) != 1 or bias.shape[0] != w.shape[0]:
        raise ShapeError(f"conv2d bias must be [{w.shape[0]}], got {bias.shape}")
    batch, _, height, width = x.shape
    xp = np.pad(x.array, ((0, 0), (0, 0), (1, 1), (1, 1)))
    out = np.zeros((batch, w.shape[0], height, width))
    for kh in range(3):
        for kw in range(3):
            patch = xp[:, :, kh:kh + height, kw:kw + width]
            tap = np.tensordot(w.array[:, :, kh, kw], patch, axes=([1], [1]))
            out += tap.transpose(1, 0, 2, 3)
    out += bias.array[None, :, None, None]
    return Tensor(out)


def conv2d_backward(x: np.ndarray, w: np.ndarray, gout: np.ndarray):
    """Gradients of conv2d_forward w.r.t. (x, w, bias) given upstream gout."""
    batch, channels, height, width = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    gxp = np.zeros_like(xp)
    gw = np.zeros_like(w)
    for kh in range(3):
        for kw in range(3):
            tap = np.tensordot(gout, w[:, :, kh, kw], axes=([1], [0]))
            gxp[:, :, kh:kh + height, kw:kw + width] += tap.transpose(0, 3, 1, 2)
            patch = xp[:, :, kh:kh + height, kw:kw + width]
            gw[:, :, kh, kw] = np.tensordot(gout, patch, axes=([0, 2, 3], [0, 2, 3]))
    gx = gxp[:, :, 1:height + 1, 1:width + 1]
    gb = gout.sum(axis=(0, 2, 3))
    return gx, gw, gb


def _pool_windows(x: np.ndarray) -> np.ndarray:
    batch, channels, height, width = x.shape
    win = x.reshape(batch, channels, height // 2, 2, width // 2, 2)
    # last axis enumerates the window in original flat order:
    # top-left, top-right, bottom-left, bottom-right
    return win.transpose(0, 1, 2, 4, 3, 5).reshape(batch, channels, height // 2, width // 2, 4)


def maxpool2_forward(x: Tensor):
    """2x2 non-overlapping max pool; returns (pooled, window argmax).

    Ties resolve to the smallest flat input index so the backward scatter is
    deterministic.  The argmax array holds per-window positions in 0..3.
    """
    if len(x.shape) != 4:
        raise ShapeError(f"maxpool2 needs rank-4 input, got {x.shape}")
    if x.shape[2] % 2 != 0 or x.shape[3] % 2 != 0:
        raise ShapeError(f"maxpool2 needs even H and W, got {x.shape}")
    windows = _pool_windows(x.array)
    argmax = windows.argmax(axis=-1)
    pooled = np.take_along_axis(windows, argmax[..., None], axis=-1)[..., 0]
    return Tensor(pooled), argmax


def maxpool2_backward(argmax: np.ndarray, gout: np.ndarray, in_shape) -> np.ndarray:
    """Route pooled gradients back to the stored argmax positions."""
    batch, channels, height, width = in_shape
    gwin = np.zeros((batch, channels, height // 2, width // 2, 4))
    np.put_along_axis(gwin, argmax[..., None], gout[..., None], axis=-1)
    gwin = gwin.reshape(batch, channels, height // 2, width // 2, 2, 2)
    return gwin.transpose(0, 1, 2, 4, 3, 5).reshape(batch, channels, height, width)


def check_row_indices(idx, batch: int) -> np.ndarray:
    indices = np.asarray(idx, dtype=np.int64).reshape(-1)
    if indices.size and (indices.min() < 0 or indices.max() >= batch):
        raise IndexRangeError(f"row index out of range [0, {batch})")
    return indices


def gather_rows(x: Tensor, idx) -> Tensor:
    """Copy rows of x (axis 0) in the order given by idx."""
    indices = check_row_indices(idx, x.shape[0])
    return Tensor(x.array[indices])
