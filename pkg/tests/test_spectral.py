import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from afvit.spectral import (
    ShiftVector,
    cyclic_shift_fractional,
    dft2,
    downsample_af,
    fft2,
    fft_backend,
    fft_radix2,
    fractional_shift_by_upsampling,
    get_fft_backend,
    ifft2,
    irfft2,
    lowpass_ideal,
    rfft2,
    set_fft_backend,
    shift_tokens,
    upsample_af,
)
from afvit.tensor import TokenMap, roll_int

from conftest import bandlimited

BACKENDS = ("radix2", "pocketfft")

n8 = np.arange(8)


def test_dft2_examples():
    x = np.full((1, 4, 8), 2.0)
    spec = dft2(x)
    assert np.isclose(spec[0, 0, 0], 64.0)
    spec[0, 0, 0] = 0
    assert np.allclose(spec, 0, atol=1e-12)
    delta = np.zeros((4, 4))
    delta[0, 0] = 1
    assert np.allclose(dft2(delta), 1)
    c = np.cos(2 * np.pi * np.arange(8) / 8)[:, None] * np.ones((1, 4))
    mag = np.abs(dft2(c))
    assert np.isclose(mag[1, 0], 16) and np.isclose(mag[7, 0], 16)
    mag[1, 0] = mag[7, 0] = 0
    assert np.allclose(mag, 0, atol=1e-11)


@pytest.mark.parametrize("backend", BACKENDS)
@pytest.mark.parametrize("shape", [(1, 1), (2, 4), (4, 4), (8, 2), (16, 16)])
def test_fft2_matches_dft2(backend, shape, rng):
    x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
    with fft_backend(backend):
        assert np.allclose(fft2(x), dft2(x), rtol=1e-10, atol=1e-10 * np.abs(dft2(x)).max())


@pytest.mark.parametrize("backend", BACKENDS)
def test_fft_round_trip_and_zeros(backend, rng):
    x = rng.standard_normal((3, 8, 8))
    with fft_backend(backend):
        assert np.allclose(ifft2(fft2(x)), x, rtol=1e-10, atol=1e-12)
        assert np.array_equal(fft2(np.zeros((4, 4))), np.zeros((4, 4)))
        assert np.allclose(irfft2(rfft2(x), 8), x, atol=1e-12)


def test_radix2_inverse_and_axis(rng):
    x = rng.standard_normal((4, 16)) + 1j * rng.standard_normal((4, 16))
    assert np.allclose(fft_radix2(x, axis=0), np.fft.fft(x, axis=0), atol=1e-12)
    assert np.allclose(fft_radix2(fft_radix2(x), inverse=True) / 16, x, atol=1e-12)


def test_fft_rejects_non_power_of_two():
    for backend in BACKENDS:
        with fft_backend(backend), pytest.raises(ValueError):
            fft2(np.zeros((6, 8)))


def test_ifft2_rejects_non_hermitian():
    spec = np.zeros((4, 4), dtype=complex)
    spec[0, 1] = 1.0
    with pytest.raises(ValueError):
        ifft2(spec)


def test_backend_switching():
    assert get_fft_backend() == "pocketfft"
    with fft_backend("radix2"):
        assert get_fft_backend() == "radix2"
    assert get_fft_backend() == "pocketfft"
    with pytest.raises(ValueError):
        set_fft_backend("fftw")


def test_lowpass_examples(rng):
    x = bandlimited(rng, (2, 8, 8), 0.5)
    assert np.allclose(lowpass_ideal(x, 0.5), x, atol=1e-10)
    c = np.cos(2 * np.pi * 3 * n8 / 8)[None, :] * np.ones((8, 1))
    assert np.allclose(lowpass_ideal(c, 0.25), 0, atol=1e-12)
    assert np.allclose(lowpass_ideal(np.full((4, 4), 1.5), 0.1), 1.5)
    with pytest.raises(ValueError):
        lowpass_ideal(x, 0.0)


def test_downsample_examples():
    assert np.allclose(downsample_af(np.full((2, 8, 8), 3.0), 2), 3.0)
    c8 = np.cos(2 * np.pi * n8 / 8)[None, :] * np.ones((8, 1))
    c4 = np.cos(2 * np.pi * np.arange(4) / 4)[None, :] * np.ones((4, 1))
    assert np.allclose(downsample_af(c8, 2), c4, atol=1e-10)
    c3 = np.cos(2 * np.pi * 3 * n8 / 8)[None, :] * np.ones((8, 1))
    assert np.allclose(downsample_af(c3, 2), 0, atol=1e-12)
    with pytest.raises(ValueError):
        downsample_af(np.zeros((6, 6)), 4)
    with pytest.raises(ValueError):
        downsample_af(np.zeros((8, 8)), 3)


def test_upsample_examples(rng):
    assert np.allclose(upsample_af(np.full((4, 4), -2.0), 2), -2.0)
    c4 = np.cos(2 * np.pi * np.arange(4) / 4)[None, :] * np.ones((4, 1))
    c8 = np.cos(2 * np.pi * n8 / 8)[None, :] * np.ones((4, 1))
    assert np.allclose(upsample_af(c4, 2)[::2], c8, atol=1e-10)
    x = bandlimited(rng, (3, 8, 8), 0.5)
    assert np.allclose(downsample_af(upsample_af(x, 2), 2), x, atol=1e-10)


@pytest.mark.parametrize("s", [2, 4])
def test_upsample_interpolates_every_signal(s, rng):
    # Nyquist splitting keeps the original samples even when Nyquist carries energy
    x = rng.standard_normal((2, 8, 16))
    assert np.allclose(upsample_af(x, s)[..., ::s, ::s], x, atol=1e-10)


def test_shift_examples(rng):
    x = rng.standard_normal((2, 8, 8))
    assert np.allclose(cyclic_shift_fractional(x, ShiftVector(0, 0)), x, atol=1e-12)
    assert np.allclose(cyclic_shift_fractional(np.full((4, 4), 7.0), (0.3, -2.2)), 7.0)
    c = np.cos(2 * np.pi * n8 / 8)[None, :] * np.ones((8, 1))
    want = np.cos(2 * np.pi * (n8 + 0.5) / 8)[None, :] * np.ones((8, 1))
    assert np.allclose(cyclic_shift_fractional(c, (0, 0.5)), want, atol=1e-10)


def test_shift_phase_ramp_matches_dft_oracle(rng):
    x = bandlimited(rng, (8, 8))
    d = ShiftVector(1.25, -0.6)
    u = np.fft.fftfreq(8)[:, None]
    v = np.fft.fftfreq(8)[None, :]
    phase = np.exp(2j * np.pi * (u * d.dy + v * d.dx))
    # inverse DFT written out through the forward oracle: idft(X) = conj(dft(conj X)) / N
    ref = np.conj(dft2(np.conj(dft2(x) * phase))).real / 64
    assert np.allclose(cyclic_shift_fractional(x, d), ref, atol=1e-12)


@pytest.mark.parametrize("dy,dx", [(1, 0), (-3, 5), (8, 8), (17, -9)])
def test_integer_shift_is_roll(dy, dx, rng):
    x = rng.standard_normal((2, 8, 16))
    assert np.allclose(cyclic_shift_fractional(x, (dy, dx)), roll_int(x, dy, dx), atol=1e-12)


def test_half_shift_stays_real_with_nyquist_energy():
    x = np.cos(np.pi * n8)[None, :] * np.ones((8, 1))  # pure Nyquist column signal
    y = cyclic_shift_fractional(x, (0, 0.5))
    assert y.dtype == np.float64
    assert np.allclose(y, 0, atol=1e-12)  # cos(pi (n + 1/2)) vanishes on the grid


shift_st = st.floats(-20, 20, allow_nan=False, allow_infinity=False)


@settings(max_examples=40, deadline=None)
@given(shift_st, shift_st, shift_st, shift_st, st.integers(0, 2**31))
def test_group_action(a, b, c, d, seed):
    x = bandlimited(np.random.default_rng(seed), (2, 8, 16), 0.5)
    lhs = cyclic_shift_fractional(cyclic_shift_fractional(x, (a, b)), (c, d))
    assert np.allclose(lhs, cyclic_shift_fractional(x, (a + c, b + d)), rtol=1e-10, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(shift_st, shift_st, st.integers(0, 2**31))
def test_parseval_inner_product(dy, dx, seed):
    r = np.random.default_rng(seed)
    a, b = bandlimited(r, (8, 8), 0.5), bandlimited(r, (8, 8), 0.5)
    lhs = np.sum(cyclic_shift_fractional(a, (dy, dx)) * cyclic_shift_fractional(b, (dy, dx)))
    assert np.isclose(lhs, np.sum(a * b), rtol=1e-10, atol=1e-10)


@settings(max_examples=40, deadline=None)
@given(shift_st, shift_st, st.sampled_from([2, 4]), st.integers(0, 2**31))
def test_downsample_commutes_with_shift(dy, dx, s, seed):
    x = bandlimited(np.random.default_rng(seed), (16, 16), 0.5 / s)
    lhs = downsample_af(cyclic_shift_fractional(x, (dy, dx)), s)
    rhs = cyclic_shift_fractional(downsample_af(x, s), ShiftVector(dy, dx).scaled(1 / s))
    assert np.allclose(lhs, rhs, rtol=1e-9, atol=1e-10)


def test_fractional_by_upsampling_examples(rng):
    x = bandlimited(rng, (2, 8, 8), 0.5)
    assert np.allclose(fractional_shift_by_upsampling(x, 2, 2), roll_int(x, 1, 1), atol=1e-10)
    assert np.allclose(fractional_shift_by_upsampling(x, 0, 4), x, atol=1e-10)
    assert np.array_equal(fractional_shift_by_upsampling(x, (3, -1), 1), roll_int(x, 3, -1))
    for n in (2, 4):
        for m in (-5, 3):
            ref = cyclic_shift_fractional(x, (m / n, m / n))
            assert np.allclose(fractional_shift_by_upsampling(x, m, n), ref, atol=1e-10)
    with pytest.raises(ValueError):
        fractional_shift_by_upsampling(x, 1, 3)


def test_shift_tokens_matches_grid_shift(rng):
    g = bandlimited(rng, (4, 8, 8), 0.5)
    t = TokenMap.from_grid(g)
    out = shift_tokens(t, (0.5, -1.5))
    assert np.allclose(out.grid(), cyclic_shift_fractional(g, (0.5, -1.5)))


def test_shift_vector_algebra():
    a = ShiftVector(1.0, -2.0)
    assert a + ShiftVector(0.5, 0.5) == ShiftVector(1.5, -1.5)
    assert a.scaled(0.25) == ShiftVector(0.25, -0.5)
    assert -a == ShiftVector(-1.0, 2.0)
    with pytest.raises(ValueError):
        ShiftVector(np.inf, 0)
