"""Non-attention building blocks of the alias-free transformer.

Everything that touches a spatial grid is expressed through lossless
spectral resampling (:mod:`afvit.spectral`) and circular convolutions, so
each layer commutes with the bandlimited shift operator. The APS pooling
and the plain LayerNorm are kept for the baseline variants.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import erf

from .spectral import downsample_af, is_power_of_two, upsample_af
from .tensor import (
    ShapeError,
    TokenMap,
    conv2d_circular,
    depthwise_conv2d_circular,
)

# Continuous least-squares fit of GELU on [-3, 3] (ascending degree); the
# cubic fit has a zero leading term since GELU(x) - x/2 is even.
GELU_FIT_QUADRATIC = (0.1448856320226157, 0.5, 0.17406569826928214)
GELU_FIT_CUBIC = GELU_FIT_QUADRATIC + (0.0,)

AF_LN_EPS = 1e-6


def _horner(x: np.ndarray, coefficients) -> np.ndarray:
    out = np.full_like(x, coefficients[-1])
    for c in coefficients[-2::-1]:
        out *= x
        out += c
    return out


def _next_power_of_two(n: int) -> int:
    p = 1
    while p < n:
        p *= 2
    return p


@dataclass(frozen=True)
class ActivationSpec:
    """Nonlinearity wrapped by ``up_factor`` upsampling and alias-free downsampling.

    ``coefficients`` are ascending-degree polynomial coefficients (poly only).
    A degree-``d`` polynomial needs ``up_factor >= d`` to stay alias-free.
    """

    kind: str = "gelu"
    coefficients: tuple = ()
    up_factor: int = 2

    def __post_init__(self):
        object.__setattr__(self, "coefficients", tuple(float(c) for c in self.coefficients))
        if not is_power_of_two(int(self.up_factor)):
            raise ValueError(f"up_factor must be a power of two, got {self.up_factor}")
        if self.kind == "gelu":
            if self.up_factor < 2:
                raise ValueError("gelu activation needs up_factor >= 2")
        elif self.kind == "poly":
            if not 1 <= self.degree <= 3:
                raise ValueError(f"polynomial degree must be 1..3, got {self.degree}")
            if self.up_factor < self.degree:
                raise ValueError(f"up_factor {self.up_factor} is below polynomial degree {self.degree}")
        else:
            raise ValueError(f"unknown activation kind {self.kind!r}")

    @property
    def degree(self) -> int:
        return len(self.coefficients) - 1

    @classmethod
    def gelu(cls, up_factor: int = 2) -> "ActivationSpec":
        return cls("gelu", (), up_factor)

    @classmethod
    def poly(cls, coefficients=GELU_FIT_QUADRATIC, up_factor: int | None = None) -> "ActivationSpec":
        coefficients = tuple(coefficients)
        if up_factor is None:
            up_factor = _next_power_of_two(max(len(coefficients) - 1, 1))
        return cls("poly", coefficients, up_factor)

    def pointwise(self, x: np.ndarray) -> np.ndarray:
        if self.kind == "gelu":
            return gelu_pointwise(x)
        return _horner(np.asarray(x, dtype=np.float64), self.coefficients)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "coefficients": list(self.coefficients), "up_factor": self.up_factor}

    @classmethod
    def from_dict(cls, d: dict) -> "ActivationSpec":
        return cls(d["kind"], tuple(d.get("coefficients", ())), int(d["up_factor"]))


@dataclass
class NormParams:
    gamma: np.ndarray
    beta: np.ndarray
    eps: float = AF_LN_EPS

    def __post_init__(self):
        if self.eps <= 0:
            raise ValueError("eps must be positive")


@dataclass
class AffineNormParams:
    """Per-channel affine standing in for an inference-mode batch norm."""

    scale: np.ndarray
    bias: np.ndarray

    def apply(self, x: np.ndarray) -> np.ndarray:
        return x * self.scale[:, None, None] + self.bias[:, None, None]


# --------------------------------------------------------------------------
# normalization


def af_layernorm_tokens(t: np.ndarray, p: NormParams) -> np.ndarray:
    mu = t.mean(axis=1, keepdims=True)
    centered = t - mu
    var = np.mean(centered * centered)
    return p.gamma * centered / np.sqrt(var + p.eps) + p.beta


def af_layernorm(x: TokenMap, p: NormParams) -> TokenMap:
    """Alias-free LayerNorm: per-token mean, one variance over every entry."""
    return x.with_tokens(af_layernorm_tokens(x.tokens, p))


def layernorm_tokens(t: np.ndarray, p: NormParams) -> np.ndarray:
    """Standard per-token LayerNorm (baseline only)."""
    mu = t.mean(axis=1, keepdims=True)
    centered = t - mu
    var = np.mean(centered * centered, axis=1, keepdims=True)
    return p.gamma * centered / np.sqrt(var + p.eps) + p.beta


# --------------------------------------------------------------------------
# activations


def gelu_pointwise(x):
    """Exact GELU ``x * Phi(x)``."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def af_activation(x: np.ndarray, spec: ActivationSpec) -> np.ndarray:
    """Upsample by ``spec.up_factor``, apply the nonlinearity, downsample back."""
    x = np.asarray(x, dtype=np.float64)
    s = spec.up_factor
    if s == 1:
        return spec.pointwise(x)
    return downsample_af(spec.pointwise(upsample_af(x, s)), s)


def _activate(x: np.ndarray, spec: ActivationSpec, alias_free: bool) -> np.ndarray:
    return af_activation(x, spec) if alias_free else spec.pointwise(x)


# --------------------------------------------------------------------------
# token-wise blocks


def mlp_apply(x: TokenMap, w1, b1, w2, b2, spec: ActivationSpec) -> TokenMap:
    """Two-layer MLP whose hidden activation is alias-free on the token grid."""
    if w1.shape[0] != x.dim or w2.shape[1] != x.dim or w1.shape[1] != w2.shape[0]:
        raise ShapeError(f"MLP weights {w1.shape}, {w2.shape} do not fit dim {x.dim}")
    hidden = x.with_tokens(x.tokens @ w1 + b1)
    hidden = TokenMap.from_grid(af_activation(hidden.grid(), spec))
    return x.with_tokens(hidden.tokens @ w2 + b2)


def mlp_pointwise(t: np.ndarray, w1, b1, w2, b2, act=gelu_pointwise) -> np.ndarray:
    """Plain token-wise MLP with a pointwise activation."""
    return act(t @ w1 + b1) @ w2 + b2


@dataclass
class LPIParams:
    conv1: np.ndarray  # [D, 1, k, k]
    conv1_bias: np.ndarray
    norm: AffineNormParams
    conv2: np.ndarray
    conv2_bias: np.ndarray
    spec: ActivationSpec = field(default_factory=ActivationSpec.gelu)
    alias_free: bool = True


def lpi_apply(x: TokenMap, p: LPIParams) -> TokenMap:
    """Local patch interaction: depthwise conv, affine, activation, depthwise conv."""
    g = x.grid()
    if p.conv1.shape[0] != g.shape[0]:
        raise ShapeError(f"LPI expects {p.conv1.shape[0]} channels, got {g.shape[0]}")
    g = depthwise_conv2d_circular(g, p.conv1, p.conv1_bias)
    g = p.norm.apply(g)
    g = _activate(g, p.spec, p.alias_free)
    g = depthwise_conv2d_circular(g, p.conv2, p.conv2_bias)
    return TokenMap.from_grid(g)


# --------------------------------------------------------------------------
# patch embedding and pooling


@dataclass
class PatchStageParams:
    conv: np.ndarray  # [O, C, k, k]
    conv_bias: np.ndarray
    norm: AffineNormParams


@dataclass
class PatchEmbedParams:
    stages: list = field(default_factory=list)
    spec: ActivationSpec = field(default_factory=ActivationSpec.gelu)
    alias_free: bool = True
    downsample: str = "af"  # "af" or "aps"


def patch_embed_features(img: np.ndarray, p: PatchEmbedParams, trace: list | None = None) -> np.ndarray:
    """Run the convolutional stem and return the final [D, H/p, W/p] map."""
    x = np.asarray(img, dtype=np.float64)
    if p.downsample not in ("af", "aps"):
        raise ValueError(f"unknown downsampling {p.downsample!r}")
    for i, st in enumerate(p.stages):
        h, w = x.shape[-2:]
        if h % 2 or w % 2:
            raise ShapeError(f"stage {i} input {h}x{w} is not divisible by 2")
        x = conv2d_circular(x, st.conv, st.conv_bias)
        x = st.norm.apply(x)
        x = _activate(x, p.spec, p.alias_free)
        x = downsample_af(x, 2) if p.downsample == "af" else aps_downsample(x, 2)
        if trace is not None:
            trace.append((f"patch_embed.stages.{i}", TokenMap.from_grid(x)))
    return x


def patch_embed(img: np.ndarray, p: PatchEmbedParams, patch_size: int | None = None) -> TokenMap:
    """Convolutional patch embedding; each stage halves the grid."""
    img = np.asarray(img, dtype=np.float64)
    if patch_size is not None:
        if not is_power_of_two(patch_size) or 2 ** len(p.stages) != patch_size:
            raise ShapeError(f"{len(p.stages)} stages cannot realize patch size {patch_size}")
        if img.shape[-2] % patch_size or img.shape[-1] % patch_size:
            raise ShapeError(f"image {img.shape[-2:]} is not divisible by patch size {patch_size}")
    return TokenMap.from_grid(patch_embed_features(img, p))


def aps_downsample(x: np.ndarray, s: int = 2) -> np.ndarray:
    """Adaptive polyphase sampling: keep the polyphase grid with the largest l2 norm.

    Ties go to the lexicographically smallest (row, col) phase.
    """
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[-2:]
    if h % s or w % s:
        raise ShapeError(f"extents {h}x{w} are not divisible by {s}")
    best, best_norm = None, -1.0
    for a in range(s):
        for b in range(s):
            comp = x[..., a::s, b::s]
            norm = float(np.sum(comp * comp))
            if norm > best_norm:
                best, best_norm = comp, norm
    return best.copy()


def avgpool_head(x: TokenMap) -> np.ndarray:
    """Mean over the token rows."""
    return x.tokens.mean(axis=0)
