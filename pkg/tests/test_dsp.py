"""STFT analysis/synthesis tests: round-trips, closed forms, energy."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weakdns.dsp import StftConfig, apply_mask, frame_count, istft, stft
from weakdns.errors import DomainError

CFG = StftConfig()


def test_config_invariants():
    assert CFG.frame_len == 384 and CFG.hop == 192 and CFG.fft_size == 512
    assert CFG.physical_bins == 257 and CFG.total_bins == 260
    with pytest.raises(DomainError):
        StftConfig(frame_len=384, hop=100, fft_size=512)
    with pytest.raises(DomainError):
        StftConfig(frame_len=384, hop=192, fft_size=256)


def test_window_is_periodic_hann_and_cola():
    w = CFG.window()
    assert w[0] == 0.0
    assert len(w) == 384
    # periodic Hann: w[n] + w[n + hop] == 1 for all n in the first hop
    np.testing.assert_allclose(w[: CFG.hop] + w[CFG.hop :], 1.0, atol=1e-12)


def test_zero_input_two_frames():
    spec = stft(np.zeros(576), CFG)
    assert spec.shape == (2, 260)
    assert np.all(spec == 0)


def test_frame_count_formula():
    assert frame_count(576, CFG) == 2
    assert frame_count(384, CFG) == 1
    assert frame_count(385, CFG) == 2
    assert frame_count(100, CFG) == 1  # shorter than a frame: one padded frame
    assert frame_count(16000, CFG) == 83


def test_dc_frame_bin0_matches_window_sum():
    c = 0.3
    spec = stft(np.full(384, c), CFG)
    assert spec.shape[0] == 1
    np.testing.assert_allclose(abs(spec[0, 0]), c * CFG.window().sum(), rtol=1e-9)
    # the windowed constant's full spectrum equals the DFT closed form of
    # the zero-padded Hann window scaled by c
    w = np.zeros(CFG.fft_size)
    w[:384] = CFG.window() * c
    expected = np.fft.rfft(w)
    np.testing.assert_allclose(spec[0, :257], expected, atol=1e-9)


def test_redundant_bins_copy_bin_256():
    rng = np.random.default_rng(1)
    spec = stft(rng.normal(size=4000), CFG)
    for k in range(257, 260):
        np.testing.assert_array_equal(spec[:, k], spec[:, 256])


def test_round_trip_interior_exact():
    rng = np.random.default_rng(7)
    x = rng.uniform(-1, 1, 16000)
    y = istft(stft(x, CFG), CFG, out_len=x.size)
    interior = slice(CFG.frame_len, -CFG.frame_len)
    assert np.max(np.abs(y[interior] - x[interior])) < 1e-6


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(500, 6000))
def test_round_trip_property(seed, n):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, n)
    y = istft(stft(x, CFG), CFG, out_len=n)
    # exact everywhere except the very first sample, where the window is 0
    assert np.max(np.abs(y[1:] - x[1:])) < 1e-6


def test_linearity():
    rng = np.random.default_rng(3)
    x, y = rng.normal(size=2000), rng.normal(size=2000)
    a, b = 0.7, -1.3
    lhs = stft(a * x + b * y, CFG)
    rhs = a * stft(x, CFG) + b * stft(y, CFG)
    scale = np.max(np.abs(rhs)) or 1.0
    assert np.max(np.abs(lhs - rhs)) / scale < 1e-6


def test_parseval_energy_per_frame():
    rng = np.random.default_rng(5)
    x = rng.normal(size=384)  # one whole frame
    spec = stft(x, CFG)[0, :257]
    windowed = x * CFG.window()
    time_energy = np.sum(windowed**2)
    # reconstruct the two-sided energy from the one-sided layout
    spectral = np.abs(spec[0]) ** 2 + np.abs(spec[256]) ** 2 + 2 * np.sum(np.abs(spec[1:256]) ** 2)
    np.testing.assert_allclose(time_energy, spectral / CFG.fft_size, rtol=1e-6)


def test_istft_zero_spectrogram():
    out = istft(np.zeros((4, 260), dtype=complex), CFG, out_len=900)
    assert out.shape == (900,)
    assert np.all(out == 0)


def test_istft_single_frame_closed_form():
    w = CFG.window()
    t = np.arange(CFG.frame_len)
    s = 0.4 * np.sin(2 * np.pi * 5 * t / CFG.frame_len)
    spec = np.fft.rfft(w * s, n=CFG.fft_size)
    spec = np.concatenate([spec, np.repeat(spec[-1:], 3)])[None, :]
    out = istft(spec, CFG, out_len=CFG.frame_len)
    # independent closed form: (w * (w s)) / w^2 wherever the window is live
    expected = np.where(w > 0, s, 0.0)
    assert np.max(np.abs(out - expected)) < 1e-6


def test_stft_rejects_bad_input():
    with pytest.raises(DomainError):
        stft(np.array([]), CFG)
    with pytest.raises(DomainError):
        stft(np.array([0.1, np.nan]), CFG)
    with pytest.raises(DomainError):
        stft(np.full(100, np.inf), CFG)


def test_istft_rejects_bad_shape():
    with pytest.raises(DomainError):
        istft(np.zeros((4, 257), dtype=complex), CFG, out_len=100)
    with pytest.raises(DomainError):
        istft(np.zeros(260, dtype=complex), CFG, out_len=100)


def test_apply_mask_identity_zero_and_hand_product():
    rng = np.random.default_rng(11)
    spec = stft(rng.normal(size=1000), CFG)
    ones = np.ones_like(spec)
    np.testing.assert_array_equal(apply_mask(spec, ones), spec)
    np.testing.assert_array_equal(apply_mask(spec, np.zeros_like(spec)), np.zeros_like(spec))
    y = np.array([[2 + 0j]])
    m = np.array([[0 + 0.5j]])
    np.testing.assert_array_equal(apply_mask(y, m), np.array([[0 + 1j]]))


def test_apply_mask_shape_mismatch():
    with pytest.raises(DomainError):
        apply_mask(np.zeros((2, 260), dtype=complex), np.zeros((3, 260), dtype=complex))


def test_apply_mask_unit_magnitude_preserves_magnitude():
    rng = np.random.default_rng(13)
    spec = stft(rng.normal(size=1000), CFG)
    # exactly representable unit masks preserve magnitudes bit-for-bit
    for unit in (1.0, -1.0, 1j, -1j):
        np.testing.assert_array_equal(np.abs(apply_mask(spec, np.full_like(spec, unit))),
                                      np.abs(spec))
    phases = np.exp(1j * rng.uniform(0, 2 * np.pi, size=spec.shape))
    out = apply_mask(spec, phases)
    np.testing.assert_allclose(np.abs(out), np.abs(spec), rtol=1e-12)
