"""
Constant-Q analysis and Shepard-tone synthesis.

The CQT here is evaluated directly: every bin is a Hann-windowed complex
inner product whose window length follows the constant-Q rule, centred on
an arbitrary time. This is slower than kernel-matrix implementations but
lets frames be placed anywhere (beat-synchronous framing) and keeps the
per-bin response exact.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "AudioSignal",
    "CqtConfig",
    "CqtFrame",
    "Spectrogram",
    "ShepardConfig",
    "num_bins",
    "bin_frequency",
    "cqt_frame_raw",
    "normalize_frame",
    "beat_sync_spectrogram",
    "pitch_class_frequency",
    "shepard_tone",
    "shepard_chord",
    "concatenate",
    "SILENCE_THRESHOLD",
]

SILENCE_THRESHOLD = 1e-8


@dataclass(frozen=True, eq=False)
class AudioSignal:
    """Mono audio with values roughly in [-1, 1]."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("AudioSignal must be mono (1-d samples)")
        if self.sample_rate <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        if not np.all(np.isfinite(samples)):
            raise ValueError("AudioSignal samples must be finite")
        object.__setattr__(self, "samples", samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate

    def __len__(self):
        return len(self.samples)


@dataclass(frozen=True)
class CqtConfig:
    f_min: float = 27.5
    f_max: float = 16744.04
    bins_per_octave: int = 36
    window_kind: str = "hann"

    def __post_init__(self):
        if not 0 < self.f_min < self.f_max:
            raise ValueError("need 0 < f_min < f_max")
        if self.bins_per_octave < 1:
            raise ValueError("bins_per_octave must be >= 1")
        if self.window_kind != "hann":
            raise ValueError(f"unsupported window {self.window_kind!r}")

    @property
    def q(self) -> float:
        return 1.0 / (2.0 ** (1.0 / self.bins_per_octave) - 1.0)

    @property
    def n_bins(self) -> int:
        return num_bins(self)

    def check_sample_rate(self, sample_rate: int):
        if not self.f_max < sample_rate / 2:
            raise ValueError(
                f"f_max={self.f_max} Hz is not below Nyquist for {sample_rate} Hz audio")


@dataclass(frozen=True, eq=False)
class CqtFrame:
    values: np.ndarray
    center_time: float


@dataclass(eq=False)
class Spectrogram:
    """Time-ordered normalized CQT frames.

    ``values`` is a ``(T, N)`` array, ``times`` the matching centre times.
    """

    values: np.ndarray
    times: np.ndarray
    piece_id: str = ""

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.times = np.asarray(self.times, dtype=np.float64)
        if self.values.ndim != 2 or len(self.values) != len(self.times):
            raise ValueError("values must be (T, N) with one time per frame")
        if len(self.times) > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("frame centre times must be strictly increasing")

    def __len__(self):
        return len(self.times)

    @property
    def frames(self) -> list[CqtFrame]:
        return [CqtFrame(v, float(t)) for v, t in zip(self.values, self.times)]


@dataclass(frozen=True)
class ShepardConfig:
    """Octave-spaced sinusoids under a raised-cosine log-frequency envelope.

    The base frequency of every tone is folded into the octave
    ``[band_low, 2 * band_low)``; the envelope spans ``component_count``
    octaves starting at ``band_low``.
    """

    component_count: int = 5
    band_low: float = 77.78
    amplitude: float = 0.5
    ramp: float = 0.010

    @property
    def band(self) -> tuple[float, float]:
        return self.band_low, 2.0 * self.band_low


def num_bins(config: CqtConfig) -> int:
    # small tolerance keeps f_max values rounded to 2 decimals on the grid
    octaves = math.log2(config.f_max / config.f_min)
    return int(math.floor(config.bins_per_octave * octaves + 1e-6)) + 1


def bin_frequency(config: CqtConfig, k: int) -> float:
    n = num_bins(config)
    if not 0 <= k < n:
        raise IndexError(f"bin index {k} out of range [0, {n})")
    return config.f_min * 2.0 ** (k / config.bins_per_octave)


def _bin_frequencies(config: CqtConfig) -> np.ndarray:
    k = np.arange(num_bins(config))
    return config.f_min * 2.0 ** (k / config.bins_per_octave)


@lru_cache(maxsize=8)
def _kernels(config: CqtConfig, sample_rate: int):
    """Per-bin ``(length, window, window_sum, kernel)``; kernel rows are [w*cos, w*sin]."""
    config.check_sample_rate(sample_rate)
    kernels = []
    for f in _bin_frequencies(config):
        length = int(math.ceil(config.q * sample_rate / f))
        window = np.hanning(length + 2)[1:-1] if length > 1 else np.ones(1)
        phase = 2.0 * np.pi * f * np.arange(length) / sample_rate
        kern = np.stack([window * np.cos(phase), window * np.sin(phase)])
        kernels.append((length, window, float(window.sum()), kern))
    return tuple(kernels)


def cqt_frame_raw(signal: AudioSignal, center_time: float, config: CqtConfig) -> np.ndarray:
    """Unnormalized CQT magnitudes of one frame centred at ``center_time``.

    Windows that run past either end of the signal are truncated and the
    magnitude is divided by the sum of the window coefficients actually
    used, so a unit sinusoid at a bin centre reads close to 0.5 there.
    """
    if not 0.0 <= center_time <= signal.duration:
        raise ValueError(
            f"center_time {center_time} s outside signal [0, {signal.duration}] s")
    x = signal.samples
    n_samples = len(x)
    center = int(round(center_time * signal.sample_rate))
    kernels = _kernels(config, signal.sample_rate)
    out = np.empty(len(kernels))
    for k, (length, window, window_sum, kern) in enumerate(kernels):
        start = center - length // 2
        lo = max(start, 0)
        hi = min(start + length, n_samples)
        if hi <= lo:
            out[k] = 0.0
            continue
        if lo == start and hi == start + length:
            re, im = kern @ x[lo:hi]
            norm = window_sum
        else:
            re, im = kern[:, lo - start:hi - start] @ x[lo:hi]
            norm = window[lo - start:hi - start].sum()
        out[k] = math.hypot(re, im) / norm if norm > 0 else 0.0
    return out


def normalize_frame(raw, silence_threshold: float = SILENCE_THRESHOLD) -> np.ndarray:
    raw = np.asarray(raw, dtype=np.float64)
    peak = raw.max(initial=0.0)
    if peak < silence_threshold:
        return np.zeros_like(raw)
    return raw / peak


def beat_sync_spectrogram(signal: AudioSignal, frame_times: Sequence[float],
                          config: CqtConfig, piece_id: str = "") -> Spectrogram:
    """One normalized CQT frame per entry of ``frame_times``."""
    times = np.asarray(frame_times, dtype=np.float64)
    if times.size == 0:
        raise ValueError("frame_times is empty")
    if np.any(np.diff(times) <= 0):
        raise ValueError("frame_times must be strictly increasing")
    if times[0] < 0 or times[-1] > signal.duration:
        raise ValueError("frame time outside the signal")
    values = np.stack([normalize_frame(cqt_frame_raw(signal, t, config)) for t in times])
    return Spectrogram(values, times, piece_id)


def pitch_class_frequency(pitch_class: int, band_low: float) -> float:
    """Equal-tempered frequency of ``pitch_class`` (C=0) folded into ``[band_low, 2*band_low)``."""
    f = 440.0 * 2.0 ** (((pitch_class % 12) - 9) / 12.0)
    octaves = math.log2(f / band_low)
    return band_low * 2.0 ** (octaves - math.floor(octaves))


def _envelope(freq: np.ndarray, config: ShepardConfig) -> np.ndarray:
    pos = np.log2(freq / config.band_low) / config.component_count
    return 0.5 * (1.0 - np.cos(2.0 * np.pi * pos))


def _ramp(n: int, sample_rate: int, ramp: float) -> np.ndarray:
    env = np.ones(n)
    r = min(int(round(ramp * sample_rate)), n // 2)
    if r > 0:
        up = np.arange(1, r + 1) / r
        env[:r] = up
        env[n - r:] = up[::-1]
    return env


def _peak_normalize(x: np.ndarray, amplitude: float) -> np.ndarray:
    peak = np.max(np.abs(x)) if x.size else 0.0
    return x * (amplitude / peak) if peak > 0 else x


def shepard_tone(pitch_class: int, duration: float, sample_rate: int = 44100,
                 config: ShepardConfig = ShepardConfig()) -> AudioSignal:
    if duration <= 0:
        raise ValueError("duration must be positive")
    n = int(round(duration * sample_rate))
    base = pitch_class_frequency(pitch_class, config.band_low)
    freqs = base * 2.0 ** np.arange(config.component_count)
    amps = _envelope(freqs, config)
    t = np.arange(n) / sample_rate
    x = np.zeros(n)
    for f, a in zip(freqs, amps):
        x += a * np.sin(2.0 * np.pi * f * t)
    x *= _ramp(n, sample_rate, config.ramp)
    return AudioSignal(_peak_normalize(x, config.amplitude), sample_rate)


def shepard_chord(pitch_classes: Iterable[int], duration: float, sample_rate: int = 44100,
                  config: ShepardConfig = ShepardConfig()) -> AudioSignal:
    pcs = sorted({int(p) % 12 for p in pitch_classes})
    if not pcs:
        raise ValueError("shepard_chord needs at least one pitch class")
    x = np.zeros(int(round(duration * sample_rate)))
    for p in pcs:
        x += shepard_tone(p, duration, sample_rate, config).samples
    return AudioSignal(_peak_normalize(x, config.amplitude), sample_rate)


def concatenate(signals: Sequence[AudioSignal]) -> AudioSignal:
    if not signals:
        raise ValueError("nothing to concatenate")
    rates = {s.sample_rate for s in signals}
    if len(rates) != 1:
        raise ValueError("sample rates differ")
    return AudioSignal(np.concatenate([s.samples for s in signals]), rates.pop())
