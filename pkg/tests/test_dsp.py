import math

import numpy as np
import pytest

from spelaudio.dsp import (
    ComplexSpectrum,
    MelImage,
    Signal,
    StftConfig,
    fix_length,
    frame_count,
    hz_to_mel,
    mel_filterbank,
    normalize_minmax,
    power_to_db,
    preprocess,
    stft,
)


def stft_direct(x, config):
    """Brute-force transform oracle: per frame and bin, sum the windowed
    signal against a complex exponential over *absolute* sample indices.
    Deliberately avoids any FFT machinery."""
    win = 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(config.win_length) / config.win_length))
    n_frames = (len(x) - config.win_length) // config.hop + 1
    bins = np.arange(config.n_fft // 2 + 1)
    out = np.empty((n_frames, bins.size), dtype=np.complex128)
    for m in range(n_frames):
        n = m * config.hop + np.arange(config.win_length)
        phases = np.exp(-2j * np.pi * np.outer(bins, n) / config.n_fft)
        out[m] = phases @ (x[n] * win)
    return out


class TestSignal:
    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Signal(np.array([]), 16000)

    def test_rejects_nan(self):
        with pytest.raises(ValueError):
            Signal(np.array([0.0, np.nan]), 16000)

    def test_rejects_bad_rate(self):
        with pytest.raises(ValueError):
            Signal(np.zeros(4), 0)


class TestFixLength:
    def test_zero_right_pad(self):
        out = fix_length(Signal(np.array([1.0, 2.0, 3.0]), 8000), 5)
        assert np.array_equal(out.samples, [1.0, 2.0, 3.0, 0.0, 0.0])

    def test_symmetric_center_crop(self):
        out = fix_length(Signal(np.array([1.0, 2.0, 3.0, 4.0, 5.0]), 8000), 3)
        assert np.array_equal(out.samples, [2.0, 3.0, 4.0])

    def test_odd_surplus_trims_extra_from_end(self):
        out = fix_length(Signal(np.arange(1.0, 7.0), 8000), 3)
        assert np.array_equal(out.samples, [2.0, 3.0, 4.0])

    def test_identity_when_lengths_match(self):
        x = np.random.default_rng(0).normal(size=64000)
        sig = Signal(x, 16000)
        out = fix_length(sig, 64000)
        assert out is sig
        assert len(out) == 64000


class TestStft:
    def test_zero_signal_zero_spectrum(self):
        cfg = StftConfig(n_fft=256, hop=64, win_length=128)
        spec = stft(Signal(np.zeros(1024), 8000), cfg)
        assert np.all(spec.values == 0)

    def test_frame_count_law(self):
        cfg = StftConfig(n_fft=1024, hop=64, win_length=512)
        assert frame_count(4096, cfg) == (4096 - 512) // 64 + 1
        spec = stft(Signal(np.ones(4096), 16000), cfg)
        assert spec.n_frames == frame_count(4096, cfg)
        assert spec.values.shape == (spec.n_frames, 513)

    def test_too_short_signal_raises(self):
        cfg = StftConfig(n_fft=512, hop=128, win_length=512)
        with pytest.raises(ValueError):
            stft(Signal(np.ones(511), 8000), cfg)

    def test_bin_centered_cosine_concentrates(self):
        # A cosine exactly on bin 8, analyzed with win_length == n_fft, leaks
        # only into the raised-cosine kernel's three bins {7, 8, 9}; all other
        # bins are numerically zero relative to the peak.
        n = 256
        cfg = StftConfig(n_fft=n, hop=n, win_length=n)
        t = np.arange(n)
        x = np.cos(2.0 * np.pi * 8.0 * t / n)
        mag = np.abs(stft(Signal(x, 8000), cfg).values[0])
        peak = mag[8]
        others = np.delete(mag, [7, 8, 9])
        assert peak > 0
        assert others.max() <= 1e-9 * peak
        # Hann side bins carry half the peak weight.
        assert mag[7] == pytest.approx(0.5 * peak, rel=1e-9)
        assert mag[9] == pytest.approx(0.5 * peak, rel=1e-9)

    def test_matches_direct_summation_oracle(self):
        cfg = StftConfig(n_fft=1024, hop=64, win_length=512)
        x = np.random.default_rng(7).normal(size=4096)
        got = stft(Signal(x, 16000), cfg).values
        want = stft_direct(x, cfg)
        assert np.max(np.abs(got - want)) < 1e-9

    def test_linearity(self):
        cfg = StftConfig(n_fft=256, hop=32, win_length=128)
        rng = np.random.default_rng(3)
        x = rng.normal(size=1500)
        y = rng.normal(size=1500)
        a, b = 0.37, -1.91
        combined = stft(Signal(a * x + b * y, 8000), cfg).values
        separate = a * stft(Signal(x, 8000), cfg).values + b * stft(Signal(y, 8000), cfg).values
        scale = np.abs(separate).max()
        assert np.max(np.abs(combined - separate)) < 1e-9 * scale

    def test_hop_delay_shifts_frames(self):
        # Delaying by one hop shifts the frame axis; with the absolute-time
        # phase reference the delayed frames carry a constant per-bin rotation,
        # so the comparison is on magnitudes.
        cfg = StftConfig(n_fft=256, hop=64, win_length=128)
        rng = np.random.default_rng(11)
        x = rng.normal(size=2000)
        delayed = np.concatenate([np.zeros(cfg.hop), x])
        orig = np.abs(stft(Signal(x, 8000), cfg).values)
        shifted = np.abs(stft(Signal(delayed, 8000), cfg).values)
        assert shifted.shape[0] == orig.shape[0] + 1
        assert np.max(np.abs(shifted[1:] - orig)) < 1e-9

    def test_spectrum_shape_validation(self):
        cfg = StftConfig(n_fft=256, hop=64, win_length=128)
        with pytest.raises(ValueError):
            ComplexSpectrum(np.zeros((4, 10), dtype=complex), cfg)


class TestPowerToDb:
    def test_unit_power_is_zero_db(self):
        assert power_to_db(np.array([[1.0]]))[0, 0] == 0.0

    def test_hundred_is_twenty_db(self):
        assert power_to_db(np.array([[100.0]]))[0, 0] == pytest.approx(20.0, abs=1e-12)

    def test_eps_floor_then_top_db_clip(self):
        out = power_to_db(np.array([1.0, 1e-12]), eps=1e-10, top_db=80.0)
        assert out[0] == 0.0
        assert out[1] == -80.0

    def test_negative_entry_rejected(self):
        with pytest.raises(ValueError):
            power_to_db(np.array([1.0, -0.5]))


class TestMelFilterbank:
    def test_mel_of_zero(self):
        assert hz_to_mel(0.0) == 0.0

    def test_mel_of_700(self):
        assert hz_to_mel(700.0) == pytest.approx(2595.0 * math.log10(2.0), abs=1e-12)
        assert hz_to_mel(700.0) == pytest.approx(781.17, abs=0.01)

    def test_default_bank_shape_and_peaks(self):
        fb = mel_filterbank(256, 1024, 16000)
        assert fb.weights.shape == (256, 513)
        assert np.allclose(fb.weights.max(axis=1), 1.0)
        assert np.all(fb.weights >= 0)

    def test_filters_ordered_by_center_frequency(self):
        fb = mel_filterbank(40, 512, 16000)
        centers = np.argmax(fb.weights, axis=1)
        assert np.all(np.diff(centers) >= 0)

    def test_coverage_of_interior_bins(self):
        fb = mel_filterbank(256, 1024, 16000)
        bin_hz = np.arange(513) * (16000 / 1024)
        interior = (bin_hz > fb.fmin) & (bin_hz < fb.fmax)
        assert np.all(fb.weights.sum(axis=0)[interior] > 0)

    def test_fmax_above_nyquist_rejected(self):
        with pytest.raises(ValueError):
            mel_filterbank(32, 512, 16000, fmax=9000.0)

    def test_bad_range_rejected(self):
        with pytest.raises(ValueError):
            mel_filterbank(32, 512, 16000, fmin=5000.0, fmax=4000.0)


class TestNormalizeMinmax:
    def test_endpoints_map_to_unit_interval(self):
        assert np.array_equal(normalize_minmax(np.array([0.0, 5.0, 10.0])), [-1.0, 0.0, 1.0])

    def test_constant_maps_to_zeros(self):
        assert np.array_equal(normalize_minmax(np.full((3, 3), 4.2)), np.zeros((3, 3)))

    def test_two_point_case(self):
        assert np.array_equal(normalize_minmax(np.array([-3.0, 1.0])), [-1.0, 1.0])

    def test_exact_extremes_for_nonconstant_input(self):
        rng = np.random.default_rng(5)
        for _ in range(20):
            m = rng.normal(size=(7, 9)) * rng.uniform(0.1, 100)
            out = normalize_minmax(m)
            assert out.min() == -1.0
            assert out.max() == 1.0


class TestPreprocess:
    def _defaults(self):
        cfg = StftConfig(n_fft=1024, hop=64, win_length=512)
        fb = mel_filterbank(256, 1024, 16000)
        return cfg, fb

    def test_zero_signal_gives_zero_image(self):
        cfg, fb = self._defaults()
        img = preprocess(Signal(np.zeros(4000), 16000), cfg, fb, 16000)
        assert np.all(img.values == 0.0)

    def test_default_parameter_shape(self):
        cfg, fb = self._defaults()
        sig = Signal(np.random.default_rng(2).normal(size=64000), 16000)
        img = preprocess(sig, cfg, fb, 64000)
        assert img.values.shape == ((64000 - 512) // 64 + 1, 256)

    def test_entries_within_unit_interval(self):
        cfg, fb = self._defaults()
        sig = Signal(np.random.default_rng(9).normal(size=20000), 16000)
        img = preprocess(sig, cfg, fb, 16000)
        assert img.values.min() >= -1.0
        assert img.values.max() <= 1.0

    def test_bitwise_deterministic(self):
        cfg, fb = self._defaults()
        x = np.random.default_rng(4).normal(size=9000)
        a = preprocess(Signal(x, 16000), cfg, fb, 12000)
        b = preprocess(Signal(x.copy(), 16000), cfg, fb, 12000)
        assert np.array_equal(a.values, b.values)

    def test_mel_image_validation(self):
        cfg, _ = self._defaults()
        with pytest.raises(ValueError):
            MelImage(np.full((4, 8), 1.5), cfg, 8)
