"""Translation families, adversarial grids and the synthetic image source."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ..rng import SplitMix64
from ..spectral import fractional_shift_by_upsampling, irfft2, is_power_of_two, rfft2
from ..tensor import roll_int

SHIFT_KINDS = ("cyclic_int", "cyclic_frac", "crop", "bilinear")
GRID_KINDS = ("integer", "half")
DEFAULT_BILINEAR_DIVISOR = 6


@dataclass(frozen=True)
class ShiftSpec:
    """One image translation, offsets in pixels of the input image.

    ``cyclic_frac`` offsets are multiples of ``1 / frac_denominator``; ``crop`` and
    ``bilinear`` read a window of a source image carrying ``margin`` extra
    pixels on every side.
    """

    kind: str
    dy: float = 0.0
    dx: float = 0.0
    frac_denominator: int = 1
    margin: int = 0

    def __post_init__(self):
        if self.kind not in SHIFT_KINDS:
            raise ValueError(f"unknown shift kind {self.kind!r}")
        if self.kind == "cyclic_int" and (self.dy != int(self.dy) or self.dx != int(self.dx)):
            raise ValueError(f"cyclic_int needs integer offsets, got ({self.dy}, {self.dx})")
        if self.kind == "cyclic_frac":
            n = self.frac_denominator
            if n < 1 or not is_power_of_two(n):
                raise ValueError(f"denominator must be a power of two, got {n}")
            for v in (self.dy, self.dx):
                if abs(v * n - round(v * n)) > 1e-9:
                    raise ValueError(f"offset {v} is not a multiple of 1/{n}")
        if self.kind == "crop" and (self.dy != int(self.dy) or self.dx != int(self.dx)):
            raise ValueError("crop offsets must be integers")
        if self.kind in ("crop", "bilinear") and max(abs(self.dy), abs(self.dx)) > self.margin:
            raise ValueError(f"offset ({self.dy}, {self.dx}) exceeds margin {self.margin}")

    @property
    def is_cyclic(self) -> bool:
        return self.kind in ("cyclic_int", "cyclic_frac")

    @classmethod
    def fractional(cls, dy, dx, max_denominator: int = 64) -> "ShiftSpec":
        """Cyclic shift by rational offsets; picks the smallest power-of-two denominator."""
        fy = Fraction(dy).limit_denominator(max_denominator)
        fx = Fraction(dx).limit_denominator(max_denominator)
        n = 1
        while (fy * n).denominator != 1 or (fx * n).denominator != 1:
            n *= 2
            if n > max_denominator:
                raise ValueError(f"({dy}, {dx}) is not a dyadic rational within 1/{max_denominator}")
        if n == 1:
            return cls("cyclic_int", float(fy), float(fx))
        return cls("cyclic_frac", float(fy), float(fx), frac_denominator=n)

    def zero(self) -> "ShiftSpec":
        """The untranslated member of this family (same margin)."""
        if self.is_cyclic:
            return ShiftSpec("cyclic_int")
        return ShiftSpec(self.kind, 0.0, 0.0, self.frac_denominator, self.margin)


def apply_shift(img: np.ndarray, spec: ShiftSpec) -> np.ndarray:
    """Translate ``img`` [C, H, W]; content at ``p + d`` moves to ``p``."""
    img = np.asarray(img, dtype=np.float64)
    if spec.kind == "cyclic_int":
        return roll_int(img, int(spec.dy), int(spec.dx))
    if spec.kind == "cyclic_frac":
        n = spec.frac_denominator
        return fractional_shift_by_upsampling(img, (round(spec.dy * n), round(spec.dx * n)), n)
    m = spec.margin
    h, w = img.shape[-2] - 2 * m, img.shape[-1] - 2 * m
    if h < 1 or w < 1:
        raise ValueError(f"source {img.shape[-2:]} is too small for margin {m}")
    if spec.kind == "crop":
        y0, x0 = m + int(spec.dy), m + int(spec.dx)
        return img[..., y0 : y0 + h, x0 : x0 + w].copy()
    return _bilinear(img, m + spec.dy, m + spec.dx, h, w)


def _axis_weights(start: float, count: int, size: int):
    pos = start + np.arange(count)
    lo = np.floor(pos).astype(np.intp)
    frac = pos - lo
    hi = np.minimum(lo + 1, size - 1)
    return lo, hi, frac


def _bilinear(img: np.ndarray, y0: float, x0: float, h: int, w: int) -> np.ndarray:
    ylo, yhi, fy = _axis_weights(y0, h, img.shape[-2])
    xlo, xhi, fx = _axis_weights(x0, w, img.shape[-1])
    rows = img[..., ylo, :] * (1 - fy)[:, None] + img[..., yhi, :] * fy[:, None]
    return rows[..., xlo] * (1 - fx) + rows[..., xhi] * fx


@dataclass(frozen=True)
class GridSpec:
    """Offsets ``(i, j)`` (integer) or ``(i/2, j/2)`` (half) with ``-radius <= i, j <= radius``."""

    kind: str = "integer"
    radius: int = 6

    def __post_init__(self):
        if self.kind not in GRID_KINDS:
            raise ValueError(f"unknown grid kind {self.kind!r}")
        if self.radius < 0:
            raise ValueError("grid radius must be >= 0")

    @property
    def step(self) -> float:
        return 1.0 if self.kind == "integer" else 0.5

    def offsets(self) -> list:
        r = range(-self.radius, self.radius + 1)
        return [(i * self.step, j * self.step) for i in r for j in r]

    def __len__(self) -> int:
        return (2 * self.radius + 1) ** 2


def grid_shifts(grid: GridSpec, shift_kind: str = "cyclic", divisor: int = DEFAULT_BILINEAR_DIVISOR) -> list:
    """Materialize a grid as shift specs of the requested family.

    ``cyclic`` maps integer offsets to index rolls and half offsets to 1/2
    fractional shifts; ``crop`` uses integer offsets ``(i, j)`` with margin
    equal to the radius; ``bilinear`` uses ``(i / divisor, j / divisor)``
    with margin ``max(1, ceil(radius / divisor))``.
    """
    r = range(-grid.radius, grid.radius + 1)
    if shift_kind == "cyclic":
        return [ShiftSpec.fractional(dy, dx) for dy, dx in grid.offsets()]
    if shift_kind == "crop":
        return [ShiftSpec("crop", float(i), float(j), margin=grid.radius) for i in r for j in r]
    if shift_kind == "bilinear":
        margin = max(1, int(np.ceil(grid.radius / divisor)))
        return [ShiftSpec("bilinear", i / divisor, j / divisor, margin=margin) for i in r for j in r]
    raise ValueError(f"unknown shift family {shift_kind!r}")


# --------------------------------------------------------------------------
# samplers for random-translation consistency


def grid_sampler(grid: GridSpec, shift_kind: str = "cyclic", divisor: int = DEFAULT_BILINEAR_DIVISOR):
    """Draw one shift uniformly from ``grid_shifts(grid, ...)``."""
    shifts = grid_shifts(grid, shift_kind, divisor)

    def sample(rng: np.random.Generator) -> ShiftSpec:
        return shifts[int(rng.integers(len(shifts)))]

    sample.shifts = shifts
    return sample


def zero_sampler(kind: str = "cyclic_int"):
    spec = ShiftSpec(kind)

    def sample(rng: np.random.Generator) -> ShiftSpec:
        return spec

    return sample


def fractional_sampler(denominator: int = 4, max_shift: int = 6):
    """Uniform ``m / n`` offsets with ``|m / n| <= max_shift`` on each axis."""

    def sample(rng: np.random.Generator) -> ShiftSpec:
        m = rng.integers(-max_shift * denominator, max_shift * denominator + 1, size=2)
        return ShiftSpec.fractional(m[0] / denominator, m[1] / denominator)

    return sample


# --------------------------------------------------------------------------
# synthetic images


def _bandlimited(seed: int, size: int, channels: int, bandlimit: float) -> np.ndarray:
    noise = SplitMix64(seed).normal(channels * size * size).reshape(channels, size, size)
    spec = rfft2(noise)
    keep_h = np.abs(np.fft.fftfreq(size)) < bandlimit
    keep_w = np.arange(size // 2 + 1) / size < bandlimit
    return irfft2(spec * (keep_h[:, None] & keep_w[None, :]), size)


def _normalize(x: np.ndarray) -> np.ndarray:
    lo, hi = x.min(), x.max()
    return (x - lo) / (hi - lo) if hi > lo else np.zeros_like(x)


def synth_image(seed: int, size: int = 64, channels: int = 3, bandlimit: float = 0.25) -> np.ndarray:
    """Random periodic image with all energy strictly below ``bandlimit`` cycles/pixel.

    White noise is low-passed in the Fourier domain (which keeps conjugate
    symmetry) and rescaled to [0, 1].
    """
    if not 0.0 < bandlimit <= 0.25:
        raise ValueError(f"bandlimit must lie in (0, 0.25], got {bandlimit}")
    if not is_power_of_two(size):
        raise ValueError(f"size must be a power of two, got {size}")
    return _normalize(_bandlimited(seed, size, channels, bandlimit))


def synth_source(seed: int, size: int = 64, margin: int = 6, channels: int = 3, bandlimit: float = 0.25) -> np.ndarray:
    """A ``(size + 2 margin)``-wide smooth scene for crop and bilinear shifts.

    Cut from a larger periodic bandlimited image, so the window is not
    itself periodic.
    """
    if not 0.0 < bandlimit <= 0.25:
        raise ValueError(f"bandlimit must lie in (0, 0.25], got {bandlimit}")
    big = 1
    while big < 2 * (size + 2 * margin):
        big *= 2
    full = _bandlimited(seed, big, channels, bandlimit)
    return _normalize(full[:, : size + 2 * margin, : size + 2 * margin])
