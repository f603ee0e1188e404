import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afvit.harness import (
    GridSpec,
    ShiftSpec,
    adversarial_eval,
    apply_shift,
    consistency_eval,
    equivariance_probe,
    fractional_sampler,
    grid_sampler,
    grid_shifts,
    synth_image,
    synth_source,
    zero_sampler,
)
from afvit.harness.evaluate import WORST_CASE_NOTE
from afvit.model import init_weights, predict
from afvit.spectral import cyclic_shift_fractional


# ---------------------------------------------------------------- synthetic images


def test_synth_image_deterministic_and_normalized():
    a, b = synth_image(3, 32, 2, 0.2), synth_image(3, 32, 2, 0.2)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, synth_image(4, 32, 2, 0.2))
    assert a.shape == (2, 32, 32)
    assert a.min() == 0.0 and a.max() == 1.0


@pytest.mark.parametrize("bandlimit", [0.25, 0.1])
def test_synth_image_bandlimited(bandlimit):
    x = synth_image(7, 32, 3, bandlimit)
    spec = np.fft.fft2(x - x.mean())
    f = np.abs(np.fft.fftfreq(32))
    above = (f[:, None] >= bandlimit) | (f[None, :] >= bandlimit)
    assert np.abs(spec[:, above]).max() < 1e-12


def test_synth_image_shift_round_trip():
    x = synth_image(1, 64, 3)
    back = cyclic_shift_fractional(cyclic_shift_fractional(x, (0.37, -2.6)), (-0.37, 2.6))
    assert np.allclose(back, x, atol=1e-10)


@pytest.mark.parametrize("bandlimit", [0.0, -0.1, 0.26, 0.5])
def test_synth_image_rejects_bandlimit(bandlimit):
    with pytest.raises(ValueError):
        synth_image(0, 16, 1, bandlimit)


def test_synth_image_rejects_size():
    with pytest.raises(ValueError):
        synth_image(0, 24, 1)


def test_synth_source_shape():
    src = synth_source(2, 16, 3, channels=2)
    assert src.shape == (2, 22, 22)
    assert src.min() == 0.0 and src.max() == 1.0


# ---------------------------------------------------------------- shifts


def test_shift_spec_validation():
    with pytest.raises(ValueError):
        ShiftSpec("cyclic_int", 0.5, 0)
    with pytest.raises(ValueError):
        ShiftSpec("cyclic_frac", 0.3, 0, frac_denominator=2)
    with pytest.raises(ValueError):
        ShiftSpec("cyclic_frac", 0.5, 0, frac_denominator=3)
    with pytest.raises(ValueError):
        ShiftSpec("crop", 3, 0, margin=2)
    with pytest.raises(ValueError):
        ShiftSpec("crop", 0.5, 0, margin=2)
    with pytest.raises(ValueError):
        ShiftSpec("bilinear", 1.5, 0, margin=1)
    with pytest.raises(ValueError):
        ShiftSpec("rotate")


def test_fractional_constructor():
    assert ShiftSpec.fractional(2, -3) == ShiftSpec("cyclic_int", 2.0, -3.0)
    s = ShiftSpec.fractional(0.75, -1.5)
    assert (s.kind, s.frac_denominator) == ("cyclic_frac", 4)
    with pytest.raises(ValueError):
        ShiftSpec.fractional(1 / 3, 0)


def test_crop_center_and_offset():
    src = np.arange(2 * 8 * 8, dtype=float).reshape(2, 8, 8)
    assert np.array_equal(apply_shift(src, ShiftSpec("crop", 0, 0, margin=2)), src[:, 2:6, 2:6])
    assert np.array_equal(apply_shift(src, ShiftSpec("crop", -1, 2, margin=2)), src[:, 1:5, 4:8])


def test_bilinear_half_is_horizontal_average():
    src = np.random.default_rng(0).standard_normal((1, 6, 6))
    out = apply_shift(src, ShiftSpec("bilinear", 0, 0.5, margin=1))
    want = 0.5 * (src[:, 1:5, 1:5] + src[:, 1:5, 2:6])
    assert np.allclose(out, want, atol=1e-15)


@pytest.mark.parametrize("dy,dx", [(1, 0), (0, -1), (-1, 1)])
def test_bilinear_integer_equals_crop(dy, dx):
    src = synth_source(3, 16, 1)
    a = apply_shift(src, ShiftSpec("bilinear", dy, dx, margin=1))
    b = apply_shift(src, ShiftSpec("crop", dy, dx, margin=1))
    assert np.allclose(a, b, atol=1e-12)


def test_margin_too_large_for_source():
    with pytest.raises(ValueError):
        apply_shift(np.zeros((1, 4, 4)), ShiftSpec("crop", 0, 0, margin=2))


@settings(max_examples=50, deadline=None)
@given(st.integers(-40, 40), st.integers(-40, 40))
def test_cyclic_int_inverse_exact(dy, dx):
    x = np.random.default_rng(abs(dy * 100 + dx)).standard_normal((2, 8, 16))
    y = apply_shift(apply_shift(x, ShiftSpec("cyclic_int", dy, dx)), ShiftSpec("cyclic_int", -dy, -dx))
    assert np.array_equal(y, x)


def test_cyclic_frac_matches_phase_shift():
    x = synth_image(5, 32, 2)
    y = apply_shift(x, ShiftSpec("cyclic_frac", 1.25, -0.5, frac_denominator=4))
    assert np.allclose(y, cyclic_shift_fractional(x, (1.25, -0.5)), atol=1e-10)


def test_grid_enumeration():
    g = GridSpec("integer", 6)
    assert len(g) == len(g.offsets()) == 169
    assert g.offsets()[0] == (-6.0, -6.0) and g.offsets()[-1] == (6.0, 6.0)
    h = GridSpec("half", 6)
    assert len(h.offsets()) == 169 and (-3.0, 0.5) in h.offsets()
    assert GridSpec("integer", 0).offsets() == [(0.0, 0.0)]
    with pytest.raises(ValueError):
        GridSpec("third", 1)
    with pytest.raises(ValueError):
        GridSpec("half", -1)


def test_grid_shift_families():
    kinds = {s.kind for s in grid_shifts(GridSpec("half", 1))}
    assert kinds == {"cyclic_int", "cyclic_frac"}
    crop = grid_shifts(GridSpec("integer", 3), "crop")
    assert all(s.margin == 3 for s in crop)
    bil = grid_shifts(GridSpec("integer", 6), "bilinear", divisor=6)
    assert max(abs(s.dx) for s in bil) == 1.0 and bil[0].margin == 1
    with pytest.raises(ValueError):
        grid_shifts(GridSpec(), "warp")


def test_samplers_are_seeded():
    s = grid_sampler(GridSpec("half", 6))
    a = [s(np.random.default_rng(4)) for _ in range(3)]
    b = [s(np.random.default_rng(4)) for _ in range(3)]
    assert a == b
    f = fractional_sampler(4, 6)
    r = np.random.default_rng(0)
    for _ in range(20):
        spec = f(r)
        assert spec.is_cyclic and max(abs(spec.dy), abs(spec.dx)) <= 6


# ---------------------------------------------------------------- probes


def test_probe_zero_shift(tiny_cfg):
    w = init_weights(tiny_cfg, 0)
    rep = equivariance_probe(tiny_cfg, w, synth_image(1, 16, 3), ShiftSpec("cyclic_int"))
    assert rep.max_layer_error < 1e-14 and rep.logit_deviation < 1e-14
    assert all(e >= 0 for e in rep.errors)


def test_probe_poly_aft(desk_models, desk_images):
    cfg, w = desk_models["poly", "aft"]
    rng = np.random.default_rng(3)
    for img in desk_images[:2]:
        d = tuple(rng.uniform(-8, 8, 2))
        rep = equivariance_probe(cfg, w, img, d)
        assert rep.max_layer_error < 1e-7
        assert [n for n, _ in rep.layers][0] == "patch_embed.stages.0"


def test_probe_baseline_negative_control(desk_models, desk_images):
    cfg, w = desk_models["gelu", "baseline_vit"]
    rep = equivariance_probe(cfg, w, desk_images[0], ShiftSpec("cyclic_frac", 0.5, 0.5, frac_denominator=2))
    assert rep.max_layer_error > 1e-2


def test_probe_rejects_non_cyclic(tiny_cfg):
    with pytest.raises(ValueError):
        equivariance_probe(tiny_cfg, init_weights(tiny_cfg, 0), np.zeros((3, 16, 16)), ShiftSpec("crop", 1, 0, margin=1))


# ---------------------------------------------------------------- consistency


def tiny_images(n=3):
    return [synth_image(s, 16, 3) for s in range(n)]


def test_zero_sampler_consistency(tiny_cfg):
    rep = consistency_eval(tiny_cfg, init_weights(tiny_cfg, 1), tiny_images(), zero_sampler(), trials=3)
    assert rep.consistency == 1.0 and rep.worst_case_consistency == 1.0
    assert rep.max_deviation == 0.0


def test_poly_fractional_consistency(tiny_cfg):
    w = init_weights(tiny_cfg, 2)
    imgs = tiny_images(4)
    rep = consistency_eval(tiny_cfg, w, imgs, fractional_sampler(4, 6), trials=4, seed=9)
    assert rep.consistency == 1.0
    assert rep.max_deviation < 1e-6
    # the argmax stability hypothesis: a top-two gap well above the deviation
    for img in imgs:
        top2 = np.sort(predict(img, tiny_cfg, w))[-2:]
        assert top2[1] - top2[0] > 1e-4


def test_consistency_fractions_in_unit_interval(tiny_cfg):
    cfg = tiny_cfg.__class__.desk("gelu", "baseline_vit", image_size=16, patch_size=4, dim=16, depth=1, heads=2)
    rep = consistency_eval(cfg, init_weights(cfg, 0), tiny_images(), grid_sampler(GridSpec("half", 3)), trials=5)
    for v in (rep.consistency, rep.worst_case_consistency, *rep.per_image_consistency):
        assert 0.0 <= v <= 1.0
    assert rep.summary()["format_version"] == 1


def test_consistency_errors(tiny_cfg):
    w = init_weights(tiny_cfg, 0)
    with pytest.raises(ValueError):
        consistency_eval(tiny_cfg, w, [], zero_sampler(), trials=1)
    with pytest.raises(ValueError):
        consistency_eval(tiny_cfg, w, tiny_images(1), zero_sampler(), trials=0)


def test_consistency_reproducible(tiny_cfg):
    w = init_weights(tiny_cfg, 0)
    s = grid_sampler(GridSpec("half", 6))
    a = consistency_eval(tiny_cfg, w, tiny_images(2), s, trials=3, seed=5)
    b = consistency_eval(tiny_cfg, w, tiny_images(2), s, trials=3, seed=5)
    assert a.as_dict() == b.as_dict()


def test_adversarial_radius_zero(tiny_cfg):
    rep = adversarial_eval(tiny_cfg, init_weights(tiny_cfg, 0), tiny_images(), GridSpec("half", 0))
    assert rep.worst_case_consistency == 1.0
    assert rep.note == WORST_CASE_NOTE
    assert "worst-case consistency" in rep.summary()["note"]


def test_adversarial_enumerates_full_grid(tiny_cfg):
    rep = adversarial_eval(tiny_cfg, init_weights(tiny_cfg, 0), tiny_images(1), GridSpec("integer", 6))
    assert len(rep.shifts[0]) == 169
    assert rep.worst_case_consistency == 1.0


def test_adversarial_crop_and_bilinear_report(tiny_cfg):
    w = init_weights(tiny_cfg, 0)
    srcs = [synth_source(s, 16, 2) for s in range(2)]
    crop = adversarial_eval(tiny_cfg, w, srcs, GridSpec("integer", 2), "crop")
    assert len(crop.shifts[0]) == 25 and 0 <= crop.worst_case_consistency <= 1
    assert crop.max_deviation > 0  # content leaves the view: no invariance is claimed
    srcs = [synth_source(s, 16, 1) for s in range(2)]
    bil = adversarial_eval(tiny_cfg, w, srcs, GridSpec("integer", 3), "bilinear", divisor=6)
    assert len(bil.shifts[0]) == 49 and bil.max_deviation > 0
