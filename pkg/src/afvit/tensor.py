"""Dense f64 tensor primitives.

Tensors are plain ``numpy.ndarray`` objects of dtype float64 (complex128 for
spectra). The helpers here add the shape checks and fixed conventions the
rest of the package relies on.
"""

from __future__ import annotations

import numpy as np


class ShapeError(ValueError):
    """Raised when operand shapes are incompatible."""


def as_tensor(x) -> np.ndarray:
    """Return ``x`` as a float64 array with all extents >= 1."""
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if any(n < 1 for n in arr.shape):
        raise ShapeError(f"all extents must be >= 1, got {arr.shape}")
    return arr


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Matrix product of ``a`` [M x K] and ``b`` [K x P]."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} x {b.shape}")
    return a @ b


def conv2d_circular(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Stride-1 cross-correlation with wrap-around padding.

    ``x`` is [C, H, W], ``kernel`` is [O, C, k, k] with odd ``k`` and
    ``bias`` is [O]. Output is [O, H, W]::

        out[o, y, x] = bias[o] + sum_{c,i,j} kernel[o, c, i, j] * x[c, y + i - r, x + j - r]

    with indices taken modulo H and W and ``r = k // 2``.
    """
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if x.ndim != 3 or kernel.ndim != 4:
        raise ShapeError(f"expected x [C,H,W] and kernel [O,C,k,k], got {x.shape} and {kernel.shape}")
    out_c, in_c, kh, kw = kernel.shape
    if kh != kw or kh % 2 == 0:
        raise ShapeError(f"kernel must be square with odd size, got {kh}x{kw}")
    if in_c != x.shape[0]:
        raise ShapeError(f"kernel expects {in_c} input channels, x has {x.shape[0]}")
    r = kh // 2
    out = np.zeros((out_c,) + x.shape[1:])
    for i in range(kh):
        for j in range(kw):
            # x[c, y + i - r, x + j - r] == roll by (r - i, r - j)
            shifted = np.roll(x, (r - i, r - j), axis=(1, 2))
            out += np.tensordot(kernel[:, :, i, j], shifted, axes=(1, 0))
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float64)
        if bias.shape != (out_c,):
            raise ShapeError(f"bias must have shape ({out_c},), got {bias.shape}")
        out += bias[:, None, None]
    return out


def depthwise_conv2d_circular(x: np.ndarray, kernel: np.ndarray, bias: np.ndarray | None = None) -> np.ndarray:
    """Per-channel circular cross-correlation; ``kernel`` is [C, 1, k, k]."""
    x = np.asarray(x, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if x.ndim != 3 or kernel.ndim != 4 or kernel.shape[1] != 1 or kernel.shape[0] != x.shape[0]:
        raise ShapeError(f"expected x [C,H,W] and kernel [C,1,k,k], got {x.shape} and {kernel.shape}")
    k = kernel.shape[2]
    if kernel.shape[3] != k or k % 2 == 0:
        raise ShapeError(f"kernel must be square with odd size, got {kernel.shape[2:]}")
    r = k // 2
    out = np.zeros_like(x)
    for i in range(k):
        for j in range(k):
            out += kernel[:, 0, i, j][:, None, None] * np.roll(x, (r - i, r - j), axis=(1, 2))
    if bias is not None:
        out += np.asarray(bias, dtype=np.float64)[:, None, None]
    return out


def softmax_rows(m: np.ndarray) -> np.ndarray:
    """Row-wise softmax with per-row max subtraction."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise ShapeError(f"softmax_rows expects a matrix, got shape {m.shape}")
    if np.isnan(m).any():
        raise ValueError("softmax_rows input contains NaN")
    z = np.exp(m - m.max(axis=1, keepdims=True))
    return z / z.sum(axis=1, keepdims=True)


def roll_int(x: np.ndarray, dy: int, dx: int) -> np.ndarray:
    """Integer cyclic shift of the last two axes: ``out[..., n, m] = x[..., n + dy, m + dx]``.

    This is the integer case of the fractional shift operator, so positive
    offsets move content toward lower indices.
    """
    return np.roll(x, (-int(dy), -int(dx)), axis=(-2, -1))


class TokenMap:
    """N x D token matrix whose rows are laid out row-major on an ht x wt grid.

    Column ``j`` is channel ``j`` of an ht x wt signal.
    """

    __slots__ = ("tokens", "ht", "wt")

    def __init__(self, tokens: np.ndarray, ht: int, wt: int):
        tokens = np.asarray(tokens, dtype=np.float64)
        if tokens.ndim != 2:
            raise ShapeError(f"tokens must be a matrix, got shape {tokens.shape}")
        if ht * wt != tokens.shape[0]:
            raise ShapeError(f"grid {ht}x{wt} does not match {tokens.shape[0]} tokens")
        self.tokens = tokens
        self.ht = int(ht)
        self.wt = int(wt)

    @property
    def n(self) -> int:
        return self.tokens.shape[0]

    @property
    def dim(self) -> int:
        return self.tokens.shape[1]

    @classmethod
    def from_grid(cls, grid: np.ndarray) -> "TokenMap":
        """Build from a [D, H, W] feature map."""
        grid = np.asarray(grid, dtype=np.float64)
        d, h, w = grid.shape
        return cls(grid.reshape(d, h * w).T.copy(), h, w)

    def grid(self) -> np.ndarray:
        """Return the [D, ht, wt] view of the tokens."""
        return self.tokens.T.reshape(self.dim, self.ht, self.wt)

    def with_tokens(self, tokens: np.ndarray) -> "TokenMap":
        return TokenMap(tokens, self.ht, self.wt)

    def __repr__(self):
        return f"TokenMap(n={self.n}, dim={self.dim}, grid={self.ht}x{self.wt})"
