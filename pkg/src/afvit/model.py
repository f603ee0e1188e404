"""Model assembly: the alias-free transformer and two contrast variants.

Variants
--------
``aft``
    Alias-free patch embedding, AF-LN, XCA, AF-LPI and AF-MLP blocks, then
    either AF class attention (``afca``) or average pooling.
``baseline_vit``
    Strided patch projection, absolute positional encodings, prepended
    class token, standard LayerNorm, softmax attention and a GELU MLP.
``aps_vit``
    The XCA backbone with polyphase (APS) downsampling in the stem,
    pointwise activations, standard LayerNorm and softmax class attention.

Weights are a flat ``dict`` mapping dotted parameter paths to float64
arrays; :func:`param_shapes` is the single source of truth for that set.
"""

from __future__ import annotations

import json
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .attention import (
    AttentionParams,
    class_attention_apply,
    class_attention_standard,
    sa_sequence,
    xca_apply,
)
from .layers import (
    GELU_FIT_CUBIC,
    GELU_FIT_QUADRATIC,
    ActivationSpec,
    AffineNormParams,
    LPIParams,
    NormParams,
    PatchEmbedParams,
    PatchStageParams,
    af_layernorm_tokens,
    avgpool_head,
    layernorm_tokens,
    lpi_apply,
    mlp_apply,
    mlp_pointwise,
    patch_embed_features,
)
from .rng import SplitMix64
from .spectral import is_power_of_two
from .tensor import ShapeError, TokenMap

VARIANTS = ("aft", "baseline_vit", "aps_vit")
HEAD_KINDS = ("afca", "avgpool")
FORMAT_VERSION = 1
INIT_STD = 0.02


class WeightFormatError(ValueError):
    """Raised for malformed or inconsistent weight files."""


@dataclass
class ModelConfig:
    image_size: int = 64
    in_channels: int = 3
    patch_size: int = 16
    dim: int = 128
    depth: int = 2
    heads: int = 4
    ca_depth: int = 2
    num_classes: int = 10
    activation: ActivationSpec = field(default_factory=ActivationSpec.gelu)
    # stem activation; None means "same as activation"
    pe_activation: ActivationSpec | None = None
    head_kind: str = "afca"
    variant: str = "aft"
    mlp_ratio: int = 4
    pe_channels: tuple | None = None
    pe_kernels: tuple | None = None

    def __post_init__(self):
        if isinstance(self.activation, dict):
            self.activation = ActivationSpec.from_dict(self.activation)
        if isinstance(self.pe_activation, dict):
            self.pe_activation = ActivationSpec.from_dict(self.pe_activation)
        if self.pe_channels is not None:
            self.pe_channels = tuple(int(c) for c in self.pe_channels)
        if self.pe_kernels is not None:
            self.pe_kernels = tuple(int(k) for k in self.pe_kernels)
        self.validate()

    def validate(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.head_kind not in HEAD_KINDS:
            raise ValueError(f"unknown head kind {self.head_kind!r}")
        if not is_power_of_two(self.image_size) or not is_power_of_two(self.patch_size):
            raise ValueError("image_size and patch_size must be powers of two")
        if self.patch_size < 2 or self.image_size % self.patch_size:
            raise ValueError(f"patch size {self.patch_size} must divide image size {self.image_size}")
        if self.dim % self.heads:
            raise ValueError(f"{self.heads} heads do not divide dim {self.dim}")
        n = self.num_stages
        if len(self.stage_channels) != n or len(self.stage_kernels) != n:
            raise ValueError(f"patch embedding needs {n} stages")
        if self.stage_channels[-1] != self.dim:
            raise ValueError("last stem stage must output dim channels")
        if any(k % 2 == 0 for k in self.stage_kernels):
            raise ValueError("stem kernels must be odd")

    @property
    def num_stages(self) -> int:
        return self.patch_size.bit_length() - 1

    @property
    def grid(self) -> int:
        return self.image_size // self.patch_size

    @property
    def num_tokens(self) -> int:
        return self.grid * self.grid

    @property
    def stage_channels(self) -> tuple:
        if self.pe_channels is not None:
            return self.pe_channels
        s = self.num_stages
        return tuple(max(self.dim >> (s - 1 - i), 1) for i in range(s))

    @property
    def stage_kernels(self) -> tuple:
        if self.pe_kernels is not None:
            return self.pe_kernels
        return (7,) + (3,) * (self.num_stages - 1)

    @property
    def stem_activation(self) -> ActivationSpec:
        return self.pe_activation if self.pe_activation is not None else self.activation

    @classmethod
    def desk(cls, activation: str = "gelu", variant: str = "aft", **overrides) -> "ModelConfig":
        """Desk-scale default: 64px images, p=16, D=128, L=2, 4 heads, 10 classes.

        ``activation="poly"`` uses quadratic fits in the blocks and a cubic in
        the stem.
        """
        if activation == "poly":
            kw = dict(activation=ActivationSpec.poly(GELU_FIT_QUADRATIC), pe_activation=ActivationSpec.poly(GELU_FIT_CUBIC))
        elif activation == "gelu":
            kw = dict(activation=ActivationSpec.gelu(), pe_activation=None)
        else:
            raise ValueError(f"unknown activation {activation!r}")
        kw.update(variant=variant)
        kw.update(overrides)
        return cls(**kw)

    def to_dict(self) -> dict:
        return {
            "image_size": self.image_size,
            "in_channels": self.in_channels,
            "patch_size": self.patch_size,
            "dim": self.dim,
            "depth": self.depth,
            "heads": self.heads,
            "ca_depth": self.ca_depth,
            "num_classes": self.num_classes,
            "activation": self.activation.to_dict(),
            "pe_activation": None if self.pe_activation is None else self.pe_activation.to_dict(),
            "head_kind": self.head_kind,
            "variant": self.variant,
            "mlp_ratio": self.mlp_ratio,
            "pe_channels": None if self.pe_channels is None else list(self.pe_channels),
            "pe_kernels": None if self.pe_kernels is None else list(self.pe_kernels),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        d = {k: v for k, v in d.items() if k != "format_version"}
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown config fields: {sorted(unknown)}")
        return cls(**d)


@dataclass
class ForwardTrace:
    layers: list = field(default_factory=list)  # (name, TokenMap) in execution order
    logits: np.ndarray | None = None

    def names(self) -> list:
        return [name for name, _ in self.layers]


# --------------------------------------------------------------------------
# parameter layout


def _norm(prefix, d):
    return {f"{prefix}.gamma": (d,), f"{prefix}.beta": (d,)}


def _attn(prefix, d, heads, temperature=True):
    shapes = {f"{prefix}.{w}": (d, d) for w in ("w_q", "w_k", "w_v", "w_proj")}
    shapes[f"{prefix}.proj_bias"] = (d,)
    if temperature:
        shapes[f"{prefix}.temperature"] = (heads,)
    return shapes


def _mlp(prefix, d, hidden):
    return {f"{prefix}.w1": (d, hidden), f"{prefix}.b1": (hidden,), f"{prefix}.w2": (hidden, d), f"{prefix}.b2": (d,)}


def param_shapes(config: ModelConfig) -> dict:
    """Every parameter path of ``config`` mapped to its shape."""
    d, h = config.dim, config.heads
    hidden = config.mlp_ratio * d
    shapes = {}
    if config.variant == "baseline_vit":
        p = config.patch_size
        shapes["patch_embed.proj.weight"] = (config.in_channels * p * p, d)
        shapes["patch_embed.proj.bias"] = (d,)
        shapes["pos_embed"] = (config.num_tokens + 1, d)
        shapes["cls_token"] = (d,)
        for i in range(config.depth):
            shapes.update(_norm(f"blocks.{i}.norm1", d))
            shapes.update(_attn(f"blocks.{i}.attn", d, h, temperature=False))
            shapes.update(_norm(f"blocks.{i}.norm2", d))
            shapes.update(_mlp(f"blocks.{i}.mlp", d, hidden))
    else:
        c_in = config.in_channels
        for i, (c_out, k) in enumerate(zip(config.stage_channels, config.stage_kernels)):
            pre = f"patch_embed.stages.{i}"
            shapes[f"{pre}.conv.weight"] = (c_out, c_in, k, k)
            shapes[f"{pre}.conv.bias"] = (c_out,)
            shapes[f"{pre}.norm.scale"] = (c_out,)
            shapes[f"{pre}.norm.bias"] = (c_out,)
            c_in = c_out
        for i in range(config.depth):
            pre = f"blocks.{i}"
            shapes.update(_norm(f"{pre}.norm1", d))
            shapes.update(_attn(f"{pre}.xca", d, h))
            shapes.update(_norm(f"{pre}.norm2", d))
            shapes[f"{pre}.lpi.conv1.weight"] = (d, 1, 3, 3)
            shapes[f"{pre}.lpi.conv1.bias"] = (d,)
            shapes[f"{pre}.lpi.norm.scale"] = (d,)
            shapes[f"{pre}.lpi.norm.bias"] = (d,)
            shapes[f"{pre}.lpi.conv2.weight"] = (d, 1, 3, 3)
            shapes[f"{pre}.lpi.conv2.bias"] = (d,)
            shapes.update(_norm(f"{pre}.norm3", d))
            shapes.update(_mlp(f"{pre}.mlp", d, hidden))
        if config.head_kind == "afca":
            shapes["cls_token"] = (d,)
            for i in range(config.ca_depth):
                pre = f"cls_blocks.{i}"
                shapes.update(_norm(f"{pre}.norm1", d))
                if config.variant == "aft":
                    shapes.update(_attn(f"{pre}.xca", d, h))
                else:
                    shapes.update(_attn(f"{pre}.attn", d, h, temperature=False))
                shapes.update(_norm(f"{pre}.norm2", d))
                shapes.update(_mlp(f"{pre}.mlp", d, hidden))
    shapes.update(_norm("norm", d))
    shapes["head.weight"] = (d, config.num_classes)
    shapes["head.bias"] = (config.num_classes,)
    return shapes


def _init_kind(path: str) -> str:
    leaf = path.rsplit(".", 1)[-1]
    if leaf in ("gamma", "scale", "temperature"):
        return "ones"
    if leaf in ("bias", "beta", "proj_bias", "b1", "b2"):
        return "zeros"
    return "normal"


def init_weights(config: ModelConfig, seed: int) -> dict:
    """Deterministic initialization.

    Parameters are visited in sorted path order; weight matrices, kernels and
    embeddings draw ``0.02 * N(0, 1)`` from one SplitMix64 stream, biases are
    zero, norm gains and temperatures are one.
    """
    rng = SplitMix64(seed)
    weights = {}
    for path, shape in sorted(param_shapes(config).items()):
        kind = _init_kind(path)
        size = int(np.prod(shape))
        if kind == "ones":
            weights[path] = np.ones(shape)
        elif kind == "zeros":
            weights[path] = np.zeros(shape)
        else:
            weights[path] = INIT_STD * rng.normal(size).reshape(shape)
    return weights


def check_weights(config: ModelConfig, weights: dict):
    expected = param_shapes(config)
    missing = sorted(set(expected) - set(weights))
    extra = sorted(set(weights) - set(expected))
    if missing or extra:
        raise ShapeError(f"weights do not match config: missing={missing[:5]} extra={extra[:5]}")
    for path, shape in expected.items():
        if tuple(weights[path].shape) != tuple(shape):
            raise ShapeError(f"{path}: expected shape {shape}, got {weights[path].shape}")


# --------------------------------------------------------------------------
# forward


def _norm_params(w, prefix):
    return NormParams(w[f"{prefix}.gamma"], w[f"{prefix}.beta"])


def _mlp_args(w, prefix):
    return w[f"{prefix}.w1"], w[f"{prefix}.b1"], w[f"{prefix}.w2"], w[f"{prefix}.b2"]


def _stem_params(config: ModelConfig, w: dict) -> PatchEmbedParams:
    stages = [
        PatchStageParams(
            w[f"patch_embed.stages.{i}.conv.weight"],
            w[f"patch_embed.stages.{i}.conv.bias"],
            AffineNormParams(w[f"patch_embed.stages.{i}.norm.scale"], w[f"patch_embed.stages.{i}.norm.bias"]),
        )
        for i in range(config.num_stages)
    ]
    aps = config.variant == "aps_vit"
    return PatchEmbedParams(stages, config.stem_activation, alias_free=not aps, downsample="aps" if aps else "af")


def _lpi_params(config, w, prefix, alias_free):
    return LPIParams(
        w[f"{prefix}.conv1.weight"],
        w[f"{prefix}.conv1.bias"],
        AffineNormParams(w[f"{prefix}.norm.scale"], w[f"{prefix}.norm.bias"]),
        w[f"{prefix}.conv2.weight"],
        w[f"{prefix}.conv2.bias"],
        config.activation,
        alias_free,
    )


def _forward_xcit(img, config, w, layers):
    aps = config.variant == "aps_vit"
    norm = layernorm_tokens if aps else af_layernorm_tokens
    act = config.activation

    feats = patch_embed_features(img, _stem_params(config, w), trace=layers)
    x = TokenMap.from_grid(feats)
    for i in range(config.depth):
        pre = f"blocks.{i}"
        attn = AttentionParams.from_weights(w, f"{pre}.xca", config.heads)
        x = x.with_tokens(x.tokens + xca_apply(x.with_tokens(norm(x.tokens, _norm_params(w, f"{pre}.norm1"))), attn).tokens)
        layers.append((f"{pre}.xca", x))
        y = x.with_tokens(norm(x.tokens, _norm_params(w, f"{pre}.norm2")))
        x = x.with_tokens(x.tokens + lpi_apply(y, _lpi_params(config, w, f"{pre}.lpi", not aps)).tokens)
        layers.append((f"{pre}.lpi", x))
        y = x.with_tokens(norm(x.tokens, _norm_params(w, f"{pre}.norm3")))
        if aps:
            upd = mlp_pointwise(y.tokens, *_mlp_args(w, f"{pre}.mlp"), act=act.pointwise)
        else:
            upd = mlp_apply(y, *_mlp_args(w, f"{pre}.mlp"), act).tokens
        x = x.with_tokens(x.tokens + upd)
        layers.append((f"{pre}.mlp", x))
    return xcit_head(x, config, w)


def xcit_head(x: TokenMap, config: ModelConfig, w: dict) -> np.ndarray:
    """Pooled representation of the final token map (before the linear classifier)."""
    aps = config.variant == "aps_vit"
    norm = layernorm_tokens if aps else af_layernorm_tokens
    act = config.activation
    if config.head_kind == "avgpool":
        return avgpool_head(x.with_tokens(norm(x.tokens, _norm_params(w, "norm"))))

    # class attention: patch tokens stay frozen, only the class row is updated
    cls = w["cls_token"].copy()
    for i in range(config.ca_depth):
        pre = f"cls_blocks.{i}"
        seq = norm(np.vstack([x.tokens, cls]), _norm_params(w, f"{pre}.norm1"))
        patches = x.with_tokens(seq[:-1])
        if aps:
            attn = AttentionParams.from_weights(w, f"{pre}.attn", config.heads)
            cls = cls + class_attention_standard(patches, seq[-1], attn)
        else:
            attn = AttentionParams.from_weights(w, f"{pre}.xca", config.heads)
            cls = cls + class_attention_apply(patches, seq[-1], attn)[1]
        z = norm(np.vstack([x.tokens, cls]), _norm_params(w, f"{pre}.norm2"))[-1]
        cls = cls + mlp_pointwise(z, *_mlp_args(w, f"{pre}.mlp"), act=act.pointwise)
    return norm(np.vstack([x.tokens, cls]), _norm_params(w, "norm"))[-1]


def _patchify(img: np.ndarray, p: int) -> np.ndarray:
    c, h, w = img.shape
    patches = img.reshape(c, h // p, p, w // p, p).transpose(1, 3, 0, 2, 4)
    return patches.reshape((h // p) * (w // p), c * p * p)


def _forward_baseline(img, config, w, layers):
    g = config.grid
    act = config.activation
    tokens = _patchify(img, config.patch_size) @ w["patch_embed.proj.weight"] + w["patch_embed.proj.bias"]
    seq = np.vstack([w["cls_token"], tokens]) + w["pos_embed"]
    layers.append(("patch_embed", TokenMap(seq[1:], g, g)))
    for i in range(config.depth):
        pre = f"blocks.{i}"
        attn = AttentionParams.from_weights(w, f"{pre}.attn", config.heads)
        seq = seq + sa_sequence(layernorm_tokens(seq, _norm_params(w, f"{pre}.norm1")), attn)
        layers.append((f"{pre}.attn", TokenMap(seq[1:], g, g)))
        y = layernorm_tokens(seq, _norm_params(w, f"{pre}.norm2"))
        seq = seq + mlp_pointwise(y, *_mlp_args(w, f"{pre}.mlp"), act=act.pointwise)
        layers.append((f"{pre}.mlp", TokenMap(seq[1:], g, g)))
    return layernorm_tokens(seq, _norm_params(w, "norm"))[0]


def forward(img: np.ndarray, config: ModelConfig, weights: dict, trace: bool = False):
    """Classify one [C, H, W] image; returns ``(logits, ForwardTrace or None)``."""
    img = np.asarray(img, dtype=np.float64)
    expected = (config.in_channels, config.image_size, config.image_size)
    if img.shape != expected:
        raise ShapeError(f"image shape {img.shape} does not match config {expected}")
    check_weights(config, weights)
    layers = []
    if config.variant == "baseline_vit":
        rep = _forward_baseline(img, config, weights, layers)
    else:
        rep = _forward_xcit(img, config, weights, layers)
    logits = rep @ weights["head.weight"] + weights["head.bias"]
    return logits, (ForwardTrace(layers, logits) if trace else None)


def predict(img, config, weights) -> np.ndarray:
    return forward(img, config, weights)[0]


# --------------------------------------------------------------------------
# serialization


def _blob_path(path: Path) -> Path:
    return path.with_suffix(".bin")


def save_weights(weights: dict, path, config: ModelConfig | None = None) -> Path:
    """Write ``<path>`` (JSON manifest) and ``<path stem>.bin`` (little-endian f64 blob)."""
    path = Path(path)
    blob_path = _blob_path(path)
    entries, chunks, offset = [], [], 0
    for name in sorted(weights):
        data = np.ascontiguousarray(weights[name], dtype="<f8").tobytes()
        entries.append(
            {"path": name, "shape": list(weights[name].shape), "dtype": "f64", "byte_offset": offset, "byte_len": len(data)}
        )
        chunks.append(data)
        offset += len(data)
    blob = b"".join(chunks)
    manifest = {
        "format_version": FORMAT_VERSION,
        "config": None if config is None else config.to_dict(),
        "blob": blob_path.name,
        "tensors": entries,
        "crc32": zlib.crc32(blob),
    }
    blob_path.write_bytes(blob)
    path.write_text(json.dumps(manifest, indent=1, sort_keys=True) + "\n")
    return path


def read_manifest(path) -> dict:
    manifest = json.loads(Path(path).read_text())
    if manifest.get("format_version") != FORMAT_VERSION:
        raise WeightFormatError(f"unsupported format_version {manifest.get('format_version')!r}")
    return manifest


def load_weights(path) -> dict:
    """Read a manifest/blob pair written by :func:`save_weights`."""
    path = Path(path)
    manifest = read_manifest(path)
    blob = (path.parent / manifest["blob"]).read_bytes()
    if zlib.crc32(blob) != manifest["crc32"]:
        raise WeightFormatError(f"checksum mismatch for {manifest['blob']}")
    weights = {}
    for entry in manifest["tensors"]:
        name, shape = entry["path"], tuple(entry["shape"])
        if entry.get("dtype") != "f64":
            raise WeightFormatError(f"{name}: unsupported dtype {entry.get('dtype')!r}")
        start, length = entry["byte_offset"], entry["byte_len"]
        if length != 8 * int(np.prod(shape)):
            raise WeightFormatError(f"{name}: byte_len {length} does not match shape {list(shape)}")
        if start + length > len(blob):
            raise WeightFormatError(f"{name}: extends past end of blob ({start + length} > {len(blob)})")
        weights[name] = np.frombuffer(blob, dtype="<f8", count=length // 8, offset=start).astype(np.float64).reshape(shape)
    return weights
