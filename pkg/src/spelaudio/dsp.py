"""Waveform to normalized mel-spectrogram frontend.

Pipeline: fix the clip length, short-time Fourier transform, squared
magnitude, projection onto triangular mel filters, decibel scaling, and
min-max normalization onto [-1, 1]. Everything here is a pure function of
its inputs, so the whole chain is deterministic and thread-safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Signal",
    "StftConfig",
    "ComplexSpectrum",
    "MelFilterbank",
    "MelImage",
    "fix_length",
    "frame_count",
    "stft",
    "power_to_db",
    "hz_to_mel",
    "mel_to_hz",
    "mel_filterbank",
    "normalize_minmax",
    "preprocess",
]


@dataclass(frozen=True)
class Signal:
    """A finite discrete-time waveform with its sample rate in Hz."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        object.__setattr__(self, "samples", samples)
        if samples.ndim != 1 or samples.size < 1:
            raise ValueError("signal needs at least one sample in a 1-D array")
        if not np.all(np.isfinite(samples)):
            raise ValueError("signal contains non-finite samples")
        if int(self.sample_rate) != self.sample_rate or self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be a positive integer, got {self.sample_rate!r}")
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return self.samples.size


@dataclass(frozen=True)
class StftConfig:
    """Short-time transform geometry: transform length, hop, window length.

    The window kind is fixed to a periodic Hann window; n_fft must be a
    power of two so the transform stays fast.
    """

    n_fft: int = 1024
    hop: int = 64
    win_length: int = 512
    window: str = "hann"

    def __post_init__(self):
        if self.n_fft < 1 or (self.n_fft & (self.n_fft - 1)) != 0:
            raise ValueError(f"n_fft must be a positive power of two, got {self.n_fft}")
        if not (1 <= self.hop <= self.win_length <= self.n_fft):
            raise ValueError(
                f"need 1 <= hop <= win_length <= n_fft, got hop={self.hop}, "
                f"win_length={self.win_length}, n_fft={self.n_fft}"
            )
        if self.window != "hann":
            raise ValueError(f"unsupported window kind: {self.window!r}")

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1


@dataclass(frozen=True)
class ComplexSpectrum:
    """Complex short-time spectrum, frames along axis 0, bins along axis 1."""

    values: np.ndarray
    config: StftConfig

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.complex128)
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.shape[1] != self.config.n_bins:
            raise ValueError(
                f"spectrum must have shape (frames, {self.config.n_bins}), got {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("spectrum contains non-finite entries")

    @property
    def n_frames(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class MelFilterbank:
    """Triangular mel filters as a (n_mels, n_fft//2 + 1) weight matrix."""

    weights: np.ndarray
    n_mels: int
    fmin: float
    fmax: float

    def __post_init__(self):
        weights = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", weights)
        if weights.ndim != 2 or weights.shape[0] != self.n_mels:
            raise ValueError("weights must be a (n_mels, n_bins) matrix")
        if np.any(weights < 0):
            raise ValueError("filter weights must be non-negative")
        if np.any(weights.max(axis=1) == 0):
            raise ValueError("every filter must have at least one nonzero weight")


@dataclass(frozen=True)
class MelImage:
    """Normalized time-by-mel matrix in [-1, 1], plus the settings that made it."""

    values: np.ndarray
    config: StftConfig
    n_mels: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", values)
        if values.ndim != 2 or values.shape[1] != self.n_mels:
            raise ValueError(f"mel image must have shape (frames, {self.n_mels})")
        if not np.all(np.isfinite(values)):
            raise ValueError("mel image contains non-finite entries")
        if values.size and (values.min() < -1.0 or values.max() > 1.0):
            raise ValueError("mel image entries must lie in [-1, 1]")


def fix_length(signal: Signal, target_samples: int) -> Signal:
    """Right-pad with zeros or center-crop so the clip has exactly target_samples.

    When cropping an odd surplus, the extra sample comes off the end.
    """
    if target_samples < 1:
        raise ValueError("target_samples must be positive")
    x = signal.samples
    n = x.size
    if n == target_samples:
        return signal
    if n < target_samples:
        out = np.zeros(target_samples, dtype=np.float64)
        out[:n] = x
    else:
        start = (n - target_samples) // 2
        out = x[start : start + target_samples].copy()
    return Signal(out, signal.sample_rate)


def frame_count(n_samples: int, config: StftConfig) -> int:
    """Number of analysis frames fully inside a signal of n_samples samples."""
    if n_samples < config.win_length:
        raise ValueError(
            f"signal of {n_samples} samples is shorter than the {config.win_length}-sample window"
        )
    return (n_samples - config.win_length) // config.hop + 1


def _hann_periodic(length: int) -> np.ndarray:
    # Periodic form: denominator is the window length, not length - 1.
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * np.arange(length) / length))


def stft(signal: Signal, config: StftConfig) -> ComplexSpectrum:
    """Short-time Fourier transform with an absolute-time phase reference.

    Frame m covers samples [m*hop, m*hop + win_length); the windowed frame
    is zero-padded to n_fft and transformed. The phase exponential runs over
    absolute sample indices, so frame m's rfft output is rotated by
    exp(-2j*pi*k*m*hop/n_fft). Only the n_fft//2 + 1 non-negative-frequency
    bins are kept (the input is real).
    """
    x = signal.samples
    n_frames = frame_count(x.size, config)
    window = _hann_periodic(config.win_length)
    starts = config.hop * np.arange(n_frames)
    idx = starts[:, None] + np.arange(config.win_length)[None, :]
    frames = x[idx] * window
    spec = np.fft.rfft(frames, n=config.n_fft, axis=1)
    bins = np.arange(config.n_bins)
    rotation = np.exp(-2j * np.pi * np.outer(starts, bins) / config.n_fft)
    return ComplexSpectrum(values=spec * rotation, config=config)


def power_to_db(power: np.ndarray, eps: float = 1e-10, top_db: float = 80.0) -> np.ndarray:
    """10*log10(max(power, eps)), then floored at (global max - top_db) dB."""
    if eps <= 0 or top_db <= 0:
        raise ValueError("eps and top_db must be positive")
    p = np.asarray(power, dtype=np.float64)
    if p.size == 0:
        raise ValueError("power matrix is empty")
    if np.any(p < 0):
        raise ValueError("power entries must be non-negative")
    db = 10.0 * np.log10(np.maximum(p, eps))
    return np.maximum(db, db.max() - top_db)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(
    n_mels: int,
    n_fft: int,
    sample_rate: int,
    fmin: float = 0.0,
    fmax: float | None = None,
) -> MelFilterbank:
    """Triangular filters with centers equally spaced on the mel axis.

    Each filter is peak-normalized to 1. Filters whose triangle is narrower
    than one FFT bin (dense filterbanks at low frequencies) would otherwise
    sample to all zeros; those get their full weight at the bin nearest the
    center frequency.
    """
    if n_mels < 1:
        raise ValueError("n_mels must be >= 1")
    nyquist = sample_rate / 2.0
    if fmax is None:
        fmax = nyquist
    if fmax > nyquist:
        raise ValueError(f"fmax={fmax} exceeds the Nyquist frequency {nyquist}")
    if not 0 <= fmin < fmax:
        raise ValueError(f"need 0 <= fmin < fmax, got fmin={fmin}, fmax={fmax}")

    n_bins = n_fft // 2 + 1
    bin_hz = np.arange(n_bins) * (sample_rate / n_fft)
    points = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lo, center, hi = points[:-2], points[1:-1], points[2:]

    rising = (bin_hz[None, :] - lo[:, None]) / (center - lo)[:, None]
    falling = (hi[:, None] - bin_hz[None, :]) / (hi - center)[:, None]
    weights = np.clip(np.minimum(rising, falling), 0.0, None)

    empty = weights.max(axis=1) == 0.0
    if np.any(empty):
        nearest = np.clip(
            np.rint(center[empty] / (sample_rate / n_fft)).astype(int), 0, n_bins - 1
        )
        weights[np.nonzero(empty)[0], nearest] = 1.0
    weights /= weights.max(axis=1, keepdims=True)

    return MelFilterbank(weights=weights, n_mels=n_mels, fmin=float(fmin), fmax=float(fmax))


def normalize_minmax(matrix: np.ndarray) -> np.ndarray:
    """Affinely map [min, max] onto [-1, 1]; a constant matrix maps to zeros."""
    m = np.asarray(matrix, dtype=np.float64)
    if not np.all(np.isfinite(m)):
        raise ValueError("matrix contains non-finite entries")
    lo = m.min()
    hi = m.max()
    if hi == lo:
        return np.zeros_like(m)
    return 2.0 * (m - lo) / (hi - lo) - 1.0


def preprocess(
    signal: Signal,
    config: StftConfig,
    fb: MelFilterbank,
    target_samples: int,
) -> MelImage:
    """Full frontend: fixed-length clip to normalized mel image of shape (L, n_mels)."""
    clip = fix_length(signal, target_samples)
    spectrum = stft(clip, config)
    power = np.abs(spectrum.values) ** 2
    mel_power = power @ fb.weights.T
    db = power_to_db(mel_power)
    return MelImage(values=normalize_minmax(db), config=config, n_mels=fb.n_mels)
