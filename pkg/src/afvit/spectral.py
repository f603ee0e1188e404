"""Fourier-domain resampling and the fractional cyclic shift operator.

All operators act on the last two axes of an array (``[..., H, W]``) and
require power-of-two spatial extents. Two FFT kernels are available: a
vectorized radix-2 Cooley-Tukey transform written here, and pocketfft
(via ``scipy.fft``, the default). Both are checked against the brute-force :func:`dft2`.

Nyquist convention: :func:`downsample_af` drops the new Nyquist row/column,
:func:`upsample_af` splits an existing Nyquist bin into two conjugate
half-weight bins, and :func:`cyclic_shift_fractional` scales a Nyquist bin
by ``cos(pi * d)``, i.e. it shifts the symmetric bandlimited interpolant.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.fft as sfft

from .tensor import ShapeError, TokenMap, roll_int

__all__ = [
    "ShiftVector",
    "dft2",
    "fft2",
    "ifft2",
    "rfft2",
    "irfft2",
    "fft_radix2",
    "set_fft_backend",
    "get_fft_backend",
    "fft_backend",
    "lowpass_ideal",
    "downsample_af",
    "upsample_af",
    "cyclic_shift_fractional",
    "fractional_shift_by_upsampling",
    "is_power_of_two",
    "shift_tokens",
]

_BACKENDS = ("pocketfft", "radix2")
_backend = "pocketfft"

# relative bound on the imaginary residue accepted by ifft2
REAL_TOL = 1e-10


@dataclass(frozen=True)
class ShiftVector:
    """Translation in samples of the grid it acts on.

    ``tau_d x[n] = z(n + d)`` where ``z`` is the bandlimited interpolant of
    ``x``; an integer ``d`` therefore reads the sample ``d`` positions ahead.
    """

    dy: float = 0.0
    dx: float = 0.0

    def __post_init__(self):
        if not (np.isfinite(self.dy) and np.isfinite(self.dx)):
            raise ValueError(f"shift must be finite, got ({self.dy}, {self.dx})")

    def scaled(self, factor: float) -> "ShiftVector":
        return ShiftVector(self.dy * factor, self.dx * factor)

    def __neg__(self) -> "ShiftVector":
        return ShiftVector(-self.dy, -self.dx)

    def __add__(self, other: "ShiftVector") -> "ShiftVector":
        return ShiftVector(self.dy + other.dy, self.dx + other.dx)


def _as_shift(d) -> ShiftVector:
    if isinstance(d, ShiftVector):
        return d
    dy, dx = d
    return ShiftVector(float(dy), float(dx))


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


def _check_pow2(shape):
    h, w = shape[-2:]
    if not (is_power_of_two(h) and is_power_of_two(w)):
        raise ShapeError(f"spatial extents must be powers of two, got {h}x{w}")


def set_fft_backend(name: str) -> None:
    """Select the FFT kernel used by :func:`fft2` / :func:`ifft2`."""
    global _backend
    if name not in _BACKENDS:
        raise ValueError(f"unknown FFT backend {name!r}; choose from {_BACKENDS}")
    _backend = name


def get_fft_backend() -> str:
    return _backend


@contextlib.contextmanager
def fft_backend(name: str):
    previous = _backend
    set_fft_backend(name)
    try:
        yield
    finally:
        set_fft_backend(previous)


# --------------------------------------------------------------------------
# transforms


def dft2(x: np.ndarray) -> np.ndarray:
    """Unnormalized 2-D DFT by direct summation (reference oracle).

    ``X[u, v] = sum_{m,n} x[m, n] exp(-2 pi i (u m / H + v n / W))``
    """
    x = np.asarray(x)
    h, w = x.shape[-2:]
    out = np.zeros(x.shape, dtype=np.complex128)
    m = np.arange(h)
    n = np.arange(w)
    for u in range(h):
        row_phase = np.exp(-2j * np.pi * u * m / h)
        for v in range(w):
            col_phase = np.exp(-2j * np.pi * v * n / w)
            out[..., u, v] = np.sum(x * row_phase[:, None] * col_phase[None, :], axis=(-2, -1))
    return out


@lru_cache(maxsize=None)
def _bit_reversal(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    rev.flags.writeable = False
    return rev


@lru_cache(maxsize=None)
def _twiddles(m: int, inverse: bool) -> np.ndarray:
    sign = 1.0 if inverse else -1.0
    tw = np.exp(sign * 1j * np.pi * np.arange(m) / m)
    tw.flags.writeable = False
    return tw


def fft_radix2(x: np.ndarray, axis: int = -1, inverse: bool = False) -> np.ndarray:
    """Iterative decimation-in-time radix-2 FFT along one axis.

    Unnormalized in both directions; the inverse uses the conjugate
    twiddles, so ``fft_radix2(fft_radix2(x), inverse=True) == n * x``.
    """
    y = np.moveaxis(np.asarray(x, dtype=np.complex128), axis, -1)
    n = y.shape[-1]
    if not is_power_of_two(n):
        raise ShapeError(f"radix-2 FFT needs a power-of-two length, got {n}")
    lead = y.shape[:-1]
    y = y[..., _bit_reversal(n)]
    m = 1
    while m < n:
        y = y.reshape(lead + (n // (2 * m), 2, m))
        even = y[..., 0, :]
        odd = y[..., 1, :] * _twiddles(m, inverse)
        y = np.stack([even + odd, even - odd], axis=-2)
        m *= 2
    return np.moveaxis(y.reshape(lead + (n,)), -1, axis)


def fft2(x: np.ndarray) -> np.ndarray:
    """Forward 2-D FFT over the last two axes (unnormalized)."""
    x = np.asarray(x)
    _check_pow2(x.shape)
    if _backend == "radix2":
        return fft_radix2(fft_radix2(x, axis=-1), axis=-2)
    return sfft.fft2(x, axes=(-2, -1))


def ifft2_complex(spec: np.ndarray) -> np.ndarray:
    spec = np.asarray(spec)
    _check_pow2(spec.shape)
    if _backend == "radix2":
        h, w = spec.shape[-2:]
        return fft_radix2(fft_radix2(spec, axis=-1, inverse=True), axis=-2, inverse=True) / (h * w)
    return sfft.ifft2(spec, axes=(-2, -1))


def ifft2(spec: np.ndarray) -> np.ndarray:
    """Inverse 2-D FFT of a conjugate-symmetric spectrum, returned as real.

    Raises ``ValueError`` if the imaginary residue exceeds ``REAL_TOL``
    relative to the output scale.
    """
    out = ifft2_complex(spec)
    scale = max(1.0, float(np.abs(out.real).max(initial=0.0)))
    residue = float(np.abs(out.imag).max(initial=0.0))
    if residue > REAL_TOL * scale:
        raise ValueError(f"spectrum is not conjugate-symmetric (imaginary residue {residue:.3e})")
    return np.ascontiguousarray(out.real)


# --------------------------------------------------------------------------
# filtering and resampling


def _signed_bins(n: int) -> np.ndarray:
    # integer frequency of each bin; the Nyquist bin (n even) is reported as -n/2
    return np.fft.fftfreq(n, d=1.0 / n).round().astype(np.int64)


def rfft2(x: np.ndarray) -> np.ndarray:
    """Half spectrum of a real array: bins 0..W/2 along the last axis."""
    x = np.asarray(x, dtype=np.float64)
    _check_pow2(x.shape)
    if _backend == "radix2":
        return fft2(x)[..., : x.shape[-1] // 2 + 1]
    return sfft.rfft2(x, axes=(-2, -1))


def irfft2(half: np.ndarray, w: int) -> np.ndarray:
    """Real inverse of :func:`rfft2` for an output of width ``w``."""
    h = half.shape[-2]
    if _backend == "radix2":
        full = np.zeros(half.shape[:-1] + (w,), dtype=np.complex128)
        full[..., : w // 2 + 1] = half
        if w > 2:
            # Hermitian completion: X[u, w - k] = conj(X[-u, k])
            mirrored = np.conj(half[..., (-np.arange(h)) % h, 1 : (w + 1) // 2])
            full[..., w // 2 + 1 :] = mirrored[..., ::-1]
        return np.ascontiguousarray(ifft2_complex(full).real)
    return sfft.irfft2(half, s=(h, w), axes=(-2, -1), overwrite_x=True)


def lowpass_ideal(x: np.ndarray, cutoff: float) -> np.ndarray:
    """Zero every bin whose per-axis frequency magnitude is >= ``cutoff`` cycles/sample."""
    if not 0.0 < cutoff <= 0.5:
        raise ValueError(f"cutoff must lie in (0, 0.5], got {cutoff}")
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[-2:]
    keep_h = np.abs(np.fft.fftfreq(h)) < cutoff
    keep_w = np.arange(w // 2 + 1) / w < cutoff
    return irfft2(rfft2(x) * (keep_h[:, None] & keep_w[None, :]), w)


def _crop_axis(spec: np.ndarray, new: int, axis: int) -> np.ndarray:
    """Keep bins with |k| < new/2 along ``axis``; the new Nyquist bin stays zero."""
    spec = np.moveaxis(spec, axis, -1)
    n = spec.shape[-1]
    out = np.zeros(spec.shape[:-1] + (new,), dtype=np.complex128)
    half = new // 2
    if new == 1:
        out[..., 0] = spec[..., 0]
    else:
        out[..., :half] = spec[..., :half]
        out[..., new - half + 1:] = spec[..., n - half + 1:]
    return np.moveaxis(out, -1, axis)


def _pad_axis(spec: np.ndarray, new: int, axis: int) -> np.ndarray:
    """Zero-pad bins along ``axis``, splitting an existing Nyquist bin in two."""
    spec = np.moveaxis(spec, axis, -1)
    n = spec.shape[-1]
    out = np.zeros(spec.shape[:-1] + (new,), dtype=np.complex128)
    if n == 1:
        out[..., 0] = spec[..., 0]
    else:
        half = n // 2
        out[..., :half] = spec[..., :half]
        out[..., new - half + 1:] = spec[..., half + 1:]
        out[..., half] = 0.5 * spec[..., half]
        out[..., new - half] = 0.5 * spec[..., half]
    return np.moveaxis(out, -1, axis)


# Half-spectrum counterparts along the last axis. Only bins 0..n/2 are
# stored; the negative half is implied by Hermitian symmetry.


def _crop_half(spec: np.ndarray, new: int) -> np.ndarray:
    out = np.zeros(spec.shape[:-1] + (new // 2 + 1,), dtype=np.complex128)
    if new == 1:
        out[..., 0] = spec[..., 0]
    else:
        out[..., : new // 2] = spec[..., : new // 2]
    return out


def _pad_half(spec: np.ndarray, n: int, new: int) -> np.ndarray:
    out = np.zeros(spec.shape[:-1] + (new // 2 + 1,), dtype=np.complex128)
    if n == 1:
        out[..., 0] = spec[..., 0]
    else:
        out[..., : n // 2] = spec[..., : n // 2]
        # the implied conjugate bin at -n/2 carries the other half
        out[..., n // 2] = 0.5 * spec[..., n // 2]
    return out


def _check_factor(s: int):
    if int(s) != s or s < 2 or not is_power_of_two(int(s)):
        raise ValueError(f"resampling factor must be a power of two >= 2, got {s}")


def downsample_af(x: np.ndarray, s: int = 2) -> np.ndarray:
    """Alias-free decimation by ``s`` via spectrum truncation.

    The central (H/s) x (W/s) block of the spectrum is kept with its new
    Nyquist row/column zeroed; the result is scaled so constants are kept.
    """
    _check_factor(s)
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[-2:]
    _check_pow2(x.shape)
    if h % s or w % s:
        raise ShapeError(f"factor {s} does not divide extents {h}x{w}")
    spec = _crop_axis(rfft2(x), h // s, axis=-2)
    spec = _crop_half(spec, w // s)
    return irfft2(spec, w // s) / (s * s)


def upsample_af(x: np.ndarray, s: int = 2) -> np.ndarray:
    """Ideal (sinc) interpolation by ``s`` via spectrum zero-padding."""
    _check_factor(s)
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[-2:]
    _check_pow2(x.shape)
    spec = _pad_axis(rfft2(x), h * s, axis=-2)
    spec = _pad_half(spec, w, w * s)
    return irfft2(spec, w * s) * (s * s)


def _phase_axis(n: int, d: float) -> np.ndarray:
    k = _signed_bins(n)
    phase = np.exp(2j * np.pi * k * d / n)
    if n % 2 == 0 and n > 1:
        phase[n // 2] = np.cos(np.pi * d)
    return phase


def cyclic_shift_fractional(x: np.ndarray, d) -> np.ndarray:
    """Apply the bandlimited cyclic shift ``tau_d`` to the last two axes.

    Every bin (u, v) is multiplied by ``exp(2 pi i (u dy / H + v dx / W))``;
    Nyquist bins get the real factor ``cos(pi d)`` along their axis so the
    output stays real and integer ``d`` is an exact index roll.
    """
    d = _as_shift(d)
    x = np.asarray(x, dtype=np.float64)
    if d.dy == 0.0 and d.dx == 0.0:
        return x.copy()
    h, w = x.shape[-2:]
    phase = _phase_axis(h, d.dy)[:, None] * _phase_axis(w, d.dx)[None, : w // 2 + 1]
    return irfft2(rfft2(x) * phase, w)


def fractional_shift_by_upsampling(x: np.ndarray, m, n: int) -> np.ndarray:
    """Shift by ``m / n`` samples: upsample by ``n``, roll by ``m``, downsample by ``n``.

    ``m`` is an integer or a ``(my, mx)`` pair.
    """
    if isinstance(m, (tuple, list)):
        my, mx = (int(v) for v in m)
    else:
        my = mx = int(m)
    if n < 1 or not is_power_of_two(int(n)):
        raise ValueError(f"upsampling factor must be a power of two, got {n}")
    x = np.asarray(x, dtype=np.float64)
    if n == 1:
        return roll_int(x, my, mx)
    return downsample_af(roll_int(upsample_af(x, n), my, mx), n)


def shift_tokens(x: TokenMap, d) -> TokenMap:
    """Fractional cyclic shift of a token map on its ht x wt grid."""
    return TokenMap.from_grid(cyclic_shift_fractional(x.grid(), d))
