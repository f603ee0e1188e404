"""Attention operators on token maps.

``sea_apply`` is the generic ``Q f(K^T V)`` family, ``xca_apply`` the
cross-covariance instance used by the alias-free model, ``sa_apply`` plain
softmax self-attention (not shift-equivariant) and the two class-attention
variants update a class token against a patch sequence.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor import ShapeError, TokenMap, softmax_rows

NORM_EPS = 1e-12


@dataclass
class AttentionParams:
    w_q: np.ndarray
    w_k: np.ndarray
    w_v: np.ndarray
    w_proj: np.ndarray
    proj_bias: np.ndarray
    temperature: np.ndarray
    heads: int = 1

    def __post_init__(self):
        d = self.w_q.shape[0]
        for name in ("w_q", "w_k", "w_v", "w_proj"):
            if getattr(self, name).shape != (d, d):
                raise ShapeError(f"{name} must be {d}x{d}, got {getattr(self, name).shape}")
        if self.proj_bias.shape != (d,):
            raise ShapeError(f"proj_bias must have shape ({d},), got {self.proj_bias.shape}")
        if self.heads < 1 or d % self.heads:
            raise ShapeError(f"{self.heads} heads do not divide dim {d}")
        self.temperature = np.broadcast_to(np.asarray(self.temperature, dtype=np.float64), (self.heads,))
        if np.any(self.temperature <= 0):
            raise ValueError("temperature must be strictly positive")

    @property
    def dim(self) -> int:
        return self.w_q.shape[0]

    @classmethod
    def from_weights(cls, weights: dict, prefix: str, heads: int) -> "AttentionParams":
        d = weights[f"{prefix}.w_q"].shape[0]
        temperature = weights.get(f"{prefix}.temperature", np.ones(heads))
        return cls(
            w_q=weights[f"{prefix}.w_q"],
            w_k=weights[f"{prefix}.w_k"],
            w_v=weights[f"{prefix}.w_v"],
            w_proj=weights[f"{prefix}.w_proj"],
            proj_bias=weights.get(f"{prefix}.proj_bias", np.zeros(d)),
            temperature=temperature,
            heads=heads,
        )


def _check_dim(x: np.ndarray, p: AttentionParams):
    if x.shape[1] != p.dim:
        raise ShapeError(f"tokens have dim {x.shape[1]}, parameters expect {p.dim}")


def _project_out(o: np.ndarray, p: AttentionParams) -> np.ndarray:
    return o @ p.w_proj + p.proj_bias


def project_qkv(x: TokenMap, p: AttentionParams):
    """Return ``(Q, K, V) = (X W_q, X W_k, X W_v)``."""
    _check_dim(x.tokens, p)
    t = x.tokens
    return t @ p.w_q, t @ p.w_k, t @ p.w_v


def sea_apply(x: TokenMap, p: AttentionParams, f: Callable[[np.ndarray], np.ndarray]) -> TokenMap:
    """Shift-equivariant attention ``Q f(K^T V)`` followed by the output projection."""
    q, k, v = project_qkv(x, p)
    kv = k.T @ v
    fkv = np.asarray(f(kv), dtype=np.float64)
    if fkv.shape != kv.shape:
        raise ShapeError(f"f must map {kv.shape} to {kv.shape}, returned {fkv.shape}")
    return x.with_tokens(_project_out(q @ fkv, p))


def l2_normalize_columns(m: np.ndarray) -> np.ndarray:
    """Divide each column by ``max(||column||_2, NORM_EPS)``."""
    norms = np.sqrt(np.sum(m * m, axis=0))
    return m / np.maximum(norms, NORM_EPS)


def xca_attention_maps(q: np.ndarray, k: np.ndarray, p: AttentionParams) -> list[np.ndarray]:
    """Per-head ``softmax_rows(K_hat^T Q_hat / tau)`` matrices (d_h x d_h)."""
    dh = p.dim // p.heads
    maps = []
    for h in range(p.heads):
        cols = slice(h * dh, (h + 1) * dh)
        qn = l2_normalize_columns(q[:, cols])
        kn = l2_normalize_columns(k[:, cols])
        maps.append(softmax_rows(kn.T @ qn / p.temperature[h]))
    return maps


def _xca_tokens(t: np.ndarray, p: AttentionParams) -> np.ndarray:
    _check_dim(t, p)
    q, k, v = t @ p.w_q, t @ p.w_k, t @ p.w_v
    dh = p.dim // p.heads
    out = np.empty_like(v)
    for h, a in enumerate(xca_attention_maps(q, k, p)):
        cols = slice(h * dh, (h + 1) * dh)
        out[:, cols] = v[:, cols] @ a
    return _project_out(out, p)


def xca_apply(x: TokenMap, p: AttentionParams) -> TokenMap:
    """Cross-covariance attention ``V softmax(K_hat^T Q_hat / tau)`` per head."""
    return x.with_tokens(_xca_tokens(x.tokens, p))


def _sa_tokens(t: np.ndarray, p: AttentionParams) -> np.ndarray:
    _check_dim(t, p)
    q, k, v = t @ p.w_q, t @ p.w_k, t @ p.w_v
    dh = p.dim // p.heads
    out = np.empty_like(v)
    for h in range(p.heads):
        cols = slice(h * dh, (h + 1) * dh)
        a = softmax_rows(q[:, cols] @ k[:, cols].T / np.sqrt(dh))
        out[:, cols] = a @ v[:, cols]
    return _project_out(out, p)


def sa_apply(x: TokenMap, p: AttentionParams) -> TokenMap:
    """Multi-head softmax self-attention ``softmax(Q K^T / sqrt(d_h)) V``."""
    return x.with_tokens(_sa_tokens(x.tokens, p))


def sa_sequence(seq: np.ndarray, p: AttentionParams) -> np.ndarray:
    """Self-attention over an arbitrary token sequence (e.g. with a class row)."""
    return _sa_tokens(np.asarray(seq, dtype=np.float64), p)


def class_attention_apply(x: TokenMap, cls: np.ndarray, p: AttentionParams):
    """XCA over the sequence ``[X; cls]``.

    Column norms and ``K^T Q`` are taken over all N + 1 rows. Returns the
    updated patch rows as a token map and the updated class row.
    """
    cls = np.asarray(cls, dtype=np.float64).reshape(1, -1)
    seq = np.concatenate([x.tokens, cls], axis=0)
    out = _xca_tokens(seq, p)
    return x.with_tokens(out[:-1]), out[-1]


def class_attention_standard(x: TokenMap, cls: np.ndarray, p: AttentionParams) -> np.ndarray:
    """Softmax class attention: only the class row queries ``[cls; X]``.

    Invariant to any permutation of the patch tokens, hence to integer
    cyclic token shifts, but not to fractional ones.
    """
    cls = np.asarray(cls, dtype=np.float64).reshape(1, -1)
    seq = np.concatenate([cls, x.tokens], axis=0)
    _check_dim(seq, p)
    q = cls @ p.w_q
    k, v = seq @ p.w_k, seq @ p.w_v
    dh = p.dim // p.heads
    out = np.empty((1, p.dim))
    for h in range(p.heads):
        cols = slice(h * dh, (h + 1) * dh)
        a = softmax_rows(q[:, cols] @ k[:, cols].T / np.sqrt(dh))
        out[:, cols] = a @ v[:, cols]
    return _project_out(out, p)[0]
