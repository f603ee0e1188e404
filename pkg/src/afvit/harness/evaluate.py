"""Equivariance probes and prediction-consistency evaluators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..model import FORMAT_VERSION, ModelConfig, forward
from ..spectral import ShiftVector, cyclic_shift_fractional, shift_tokens
from .shifts import GridSpec, ShiftSpec, apply_shift, grid_shifts

REL_EPS = 1e-12

CONSISTENCY_NOTE = (
    "consistency = fraction of (image, shift) pairs whose argmax prediction is unchanged"
)
WORST_CASE_NOTE = (
    "no labels exist: adversarial accuracy over the grid is replaced by worst-case consistency, "
    "the fraction of images whose prediction survives every grid shift"
)


def relative_error(a: np.ndarray, ref: np.ndarray, eps: float = REL_EPS) -> float:
    """``||a - ref|| / max(||ref||, eps)``."""
    return float(np.linalg.norm(a - ref) / max(float(np.linalg.norm(ref)), eps))


def _argmax(logits: np.ndarray) -> int:
    return int(np.argmax(logits))


# --------------------------------------------------------------------------
# equivariance probe


@dataclass
class EquivarianceReport:
    """Per-layer relative errors of ``f(shift x)`` against ``shift f(x)``."""

    dy: float
    dx: float
    kind: str
    layers: list = field(default_factory=list)  # (name, rel_error)
    logit_deviation: float = 0.0

    @property
    def errors(self) -> np.ndarray:
        return np.array([e for _, e in self.layers])

    @property
    def mean_layer_error(self) -> float:
        return float(self.errors.mean()) if self.layers else 0.0

    @property
    def max_layer_error(self) -> float:
        return float(self.errors.max()) if self.layers else 0.0

    def as_dict(self) -> dict:
        return {
            "dy": self.dy,
            "dx": self.dx,
            "kind": self.kind,
            "layers": [{"layer": n, "rel_error": e} for n, e in self.layers],
            "logit_deviation": self.logit_deviation,
        }


def _probe_shift(delta):
    """Normalize ``delta`` to ``(ShiftSpec or None, dy, dx)``; None means a plain phase ramp."""
    if isinstance(delta, ShiftSpec):
        if not delta.is_cyclic:
            raise ValueError(f"equivariance probes need a cyclic shift, got {delta.kind!r}")
        return delta, delta.dy, delta.dx
    d = delta if isinstance(delta, ShiftVector) else ShiftVector(*delta)
    return None, float(d.dy), float(d.dx)


def equivariance_probe(config: ModelConfig, weights: dict, img: np.ndarray, delta) -> EquivarianceReport:
    """Compare traced forwards on ``img`` and its cyclic translate, layer by layer.

    ``delta`` is a cyclic :class:`ShiftSpec` or any ``(dy, dx)`` in input
    pixels (then applied as an exact phase ramp). Each reference snapshot is
    shifted by ``delta`` scaled to its own grid before the comparison; the
    final entry compares logits directly, since they should be invariant.
    """
    spec, dy, dx = _probe_shift(delta)
    img = np.asarray(img, dtype=np.float64)
    moved = apply_shift(img, spec) if spec is not None else cyclic_shift_fractional(img, ShiftVector(dy, dx))
    logits0, tr0 = forward(img, config, weights, trace=True)
    logits1, tr1 = forward(moved, config, weights, trace=True)
    layers = []
    for (name, ref), (_, out) in zip(tr0.layers, tr1.layers):
        scale = ref.ht / config.image_size
        aligned = ref if dy == 0 and dx == 0 else shift_tokens(ref, ShiftVector(dy * scale, dx * scale))
        layers.append((name, relative_error(out.tokens, aligned.tokens)))
    kind = spec.kind if spec is not None else "phase"
    return EquivarianceReport(dy, dx, kind, layers, relative_error(logits1, logits0))


# --------------------------------------------------------------------------
# consistency


@dataclass
class ConsistencyReport:
    """Prediction stability of a classifier under a set of translations.

    ``shift_preds[i][t]`` is image ``i``'s prediction under its ``t``-th
    shift and ``deviations`` the matching relative logit deviations.
    """

    image_ids: list
    base_preds: list
    shifts: list  # per image: list of (dy, dx, kind)
    shift_preds: list
    deviations: list
    note: str = CONSISTENCY_NOTE

    @property
    def per_image_consistency(self) -> list:
        return [float(np.mean([p == b for p in preds])) for b, preds in zip(self.base_preds, self.shift_preds)]

    @property
    def consistency(self) -> float:
        flags = [p == b for b, preds in zip(self.base_preds, self.shift_preds) for p in preds]
        return float(np.mean(flags))

    @property
    def worst_case_consistency(self) -> float:
        return float(np.mean([c == 1.0 for c in self.per_image_consistency]))

    @property
    def mean_deviation(self) -> float:
        return float(np.mean([d for row in self.deviations for d in row]))

    @property
    def max_deviation(self) -> float:
        return float(max(d for row in self.deviations for d in row))

    def per_image_max_deviation(self) -> list:
        return [float(max(row)) for row in self.deviations]

    def summary(self) -> dict:
        return {
            "format_version": FORMAT_VERSION,
            "note": self.note,
            "images": len(self.image_ids),
            "consistency": self.consistency,
            "worst_case_consistency": self.worst_case_consistency,
            "mean_logit_deviation": self.mean_deviation,
            "max_logit_deviation": self.max_deviation,
        }

    def as_dict(self) -> dict:
        out = self.summary()
        out["per_image"] = [
            {
                "image_id": i,
                "base_pred": b,
                "shifts": [list(s) for s in sh],
                "preds": p,
                "deviations": d,
            }
            for i, b, sh, p, d in zip(self.image_ids, self.base_preds, self.shifts, self.shift_preds, self.deviations)
        ]
        return out


class _Evaluator:
    """Caches the unshifted logits of each image per shift family."""

    def __init__(self, config: ModelConfig, weights: dict):
        self.config, self.weights = config, weights

    def logits(self, img, spec: ShiftSpec) -> np.ndarray:
        return forward(apply_shift(img, spec), self.config, self.weights)[0]

    def run(self, images, image_ids, specs_per_image, note) -> ConsistencyReport:
        base_preds, shifts, preds, devs = [], [], [], []
        for img, specs in zip(images, specs_per_image):
            bases = {}
            row_p, row_d, row_s = [], [], []
            for spec in specs:
                key = (spec.kind in ("crop", "bilinear"), spec.margin)
                if key not in bases:
                    bases[key] = self.logits(img, spec.zero())
                base = bases[key]
                out = self.logits(img, spec)
                row_p.append(_argmax(out))
                row_d.append(relative_error(out, base))
                row_s.append((spec.dy, spec.dx, spec.kind))
            base_preds.append(_argmax(next(iter(bases.values()))))
            shifts.append(row_s)
            preds.append(row_p)
            devs.append(row_d)
        return ConsistencyReport(list(image_ids), base_preds, shifts, preds, devs, note)


def _ids(images, image_ids):
    if len(images) == 0:
        raise ValueError("image set is empty")
    ids = list(range(len(images))) if image_ids is None else list(image_ids)
    if len(ids) != len(images):
        raise ValueError(f"{len(ids)} ids for {len(images)} images")
    return ids


def consistency_eval(
    config: ModelConfig,
    weights: dict,
    images: Sequence[np.ndarray],
    sampler: Callable[[np.random.Generator], ShiftSpec],
    trials: int = 1,
    seed: int = 0,
    image_ids: Sequence | None = None,
) -> ConsistencyReport:
    """Base prediction vs the prediction under ``trials`` sampled shifts per image.

    Shifts come from ``sampler(rng)`` with one seeded generator for the whole
    run, so reports are reproducible.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    ids = _ids(images, image_ids)
    rng = np.random.default_rng(seed)
    specs = [[sampler(rng) for _ in range(trials)] for _ in images]
    return _Evaluator(config, weights).run(images, ids, specs, CONSISTENCY_NOTE)


def adversarial_eval(
    config: ModelConfig,
    weights: dict,
    images: Sequence[np.ndarray],
    grid: GridSpec,
    shift_kind: str = "cyclic",
    divisor: int = 6,
    image_ids: Sequence | None = None,
) -> ConsistencyReport:
    """Worst-case consistency: every shift of ``grid`` is tried on every image.

    For ``crop`` and ``bilinear`` the images must be margined sources (see
    :func:`synth_source`).
    """
    ids = _ids(images, image_ids)
    specs = grid_shifts(grid, shift_kind, divisor)
    return _Evaluator(config, weights).run(images, ids, [specs] * len(images), WORST_CASE_NOTE)

__all__ = [
    "ConsistencyReport",
    "EquivarianceReport",
    "adversarial_eval",
    "consistency_eval",
    "equivariance_probe",
    "relative_error",
]
