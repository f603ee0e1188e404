"""Fast oracle checks run by ``afvit selftest``.

Each check returns ``(measured, tolerance)`` and passes when
``measured <= tolerance``. They are deliberately small so the whole suite
finishes in a few seconds; the full-size versions live in the test suite.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from ..attention import AttentionParams, xca_apply
from ..model import ModelConfig, forward, init_weights, load_weights, save_weights
from ..rng import SplitMix64
from ..spectral import (
    ShiftVector,
    cyclic_shift_fractional,
    dft2,
    downsample_af,
    fft2,
    fft_backend,
    fractional_shift_by_upsampling,
    shift_tokens,
)
from ..tensor import TokenMap
from .shifts import synth_image


def _rel(a, b) -> float:
    return float(np.max(np.abs(a - b)) / max(float(np.max(np.abs(b))), 1e-300))


def check_fft() -> tuple:
    rng = np.random.default_rng(0)
    worst = 0.0
    for backend in ("radix2", "pocketfft"):
        with fft_backend(backend):
            for h, w in [(1, 1), (2, 8), (16, 4), (16, 16)]:
                x = rng.standard_normal((h, w)) + 1j * rng.standard_normal((h, w))
                worst = max(worst, _rel(fft2(x), dft2(x)))
    return worst, 1e-10


def check_splitmix() -> tuple:
    mask = (1 << 64) - 1
    state, ref = 1234567, []
    for _ in range(8):
        state = (state + 0x9E3779B97F4A7C15) & mask
        z = state
        z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & mask
        z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & mask
        ref.append(z ^ (z >> 31))
    got = [int(v) for v in SplitMix64(1234567).next_u64(8)]
    return float(sum(a != b for a, b in zip(got, ref))), 0.0


def check_shift_group() -> tuple:
    x = synth_image(1, 16, 2, 0.25)
    a, b = ShiftVector(0.3, -1.7), ShiftVector(-2.25, 0.6)
    lhs = cyclic_shift_fractional(cyclic_shift_fractional(x, a), b)
    rhs = cyclic_shift_fractional(x, a + b)
    return _rel(lhs, rhs), 1e-9


def check_mn_equivalence() -> tuple:
    x = synth_image(2, 16, 1, 0.25)
    worst = 0.0
    for n in (2, 4):
        for m in (-5, -1, 3, 6):
            worst = max(worst, _rel(fractional_shift_by_upsampling(x, (m, -m), n), cyclic_shift_fractional(x, (m / n, -m / n))))
    return worst, 1e-10


def check_downsample_commutes() -> tuple:
    x = synth_image(3, 32, 1, 0.2)
    d = ShiftVector(1.3, -0.7)
    lhs = downsample_af(cyclic_shift_fractional(x, d), 2)
    rhs = cyclic_shift_fractional(downsample_af(x, 2), d.scaled(0.5))
    return _rel(lhs, rhs), 1e-9


def check_xca_equivariance() -> tuple:
    rng = np.random.default_rng(4)
    d = 8
    g = synth_image(4, 8, d, 0.25) - 0.5
    x = TokenMap.from_grid(g)
    p = AttentionParams(*(rng.standard_normal((d, d)) for _ in range(4)), np.zeros(d), np.ones(2), heads=2)
    delta = ShiftVector(0.4, 1.3)
    lhs = xca_apply(shift_tokens(x, delta), p).tokens
    rhs = shift_tokens(xca_apply(x, p), delta).tokens
    return _rel(lhs, rhs), 1e-8


def check_model_invariance() -> tuple:
    cfg = ModelConfig.desk("poly", image_size=16, patch_size=4, dim=16, depth=1, heads=2, ca_depth=1)
    w = init_weights(cfg, 0)
    x = synth_image(5, 16, 3, 0.25)
    base = forward(x, cfg, w)[0]
    moved = forward(cyclic_shift_fractional(x, (0.5, -1.25)), cfg, w)[0]
    return _rel(moved, base), 1e-6


def check_serialization() -> tuple:
    cfg = ModelConfig.desk("gelu", image_size=16, patch_size=4, dim=16, depth=1, heads=2, ca_depth=1)
    w = init_weights(cfg, 7)
    with tempfile.TemporaryDirectory() as tmp:
        path = save_weights(w, Path(tmp) / "w.json", cfg)
        back = load_weights(path)
    diff = sum(not np.array_equal(w[k], back[k]) for k in w) + len(set(w) ^ set(back))
    return float(diff), 0.0


CHECKS = {
    "fft_vs_dft": check_fft,
    "splitmix64_oracle": check_splitmix,
    "shift_group_action": check_shift_group,
    "mn_equivalence": check_mn_equivalence,
    "downsample_shift_commute": check_downsample_commutes,
    "xca_equivariance": check_xca_equivariance,
    "poly_model_invariance": check_model_invariance,
    "weights_round_trip": check_serialization,
}


def run_selftest() -> list:
    """Run every check; returns ``[(name, passed, measured, tolerance)]``."""
    results = []
    for name, fn in CHECKS.items():
        measured, tol = fn()
        results.append((name, bool(measured <= tol), measured, tol))
    return results
