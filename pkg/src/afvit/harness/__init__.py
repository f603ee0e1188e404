"""Shift families, evaluators, the selftest suite and the CLI."""

from .evaluate import (
    ConsistencyReport,
    EquivarianceReport,
    adversarial_eval,
    consistency_eval,
    equivariance_probe,
    relative_error,
)
from .shifts import (
    GridSpec,
    ShiftSpec,
    apply_shift,
    fractional_sampler,
    grid_sampler,
    grid_shifts,
    synth_image,
    synth_source,
    zero_sampler,
)

__all__ = [
    "ConsistencyReport",
    "EquivarianceReport",
    "GridSpec",
    "ShiftSpec",
    "adversarial_eval",
    "apply_shift",
    "consistency_eval",
    "equivariance_probe",
    "fractional_sampler",
    "grid_sampler",
    "grid_shifts",
    "relative_error",
    "synth_image",
    "synth_source",
    "zero_sampler",
]
