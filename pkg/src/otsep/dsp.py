"""Time-frequency front end: windows, STFT/ISTFT, power spectrograms,
fractional delays and 16-bit WAV I/O."""

from __future__ import annotations

import wave
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "TimeSignal",
    "StftConfig",
    "ComplexSpectrogram",
    "PowerSpectrogram",
    "make_window",
    "stft",
    "istft",
    "power_spectrogram",
    "fractional_delay",
    "load_wav",
    "save_wav",
]


@dataclass(frozen=True)
class TimeSignal:
    """Mono real-valued signal sampled at ``sample_rate`` Hz."""

    samples: np.ndarray
    sample_rate: float

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=float)
        if x.ndim != 1 or x.size < 1:
            raise ValueError("samples must be a non-empty 1-D sequence")
        if not np.all(np.isfinite(x)):
            raise ValueError("samples must be finite")
        if not self.sample_rate > 0:
            raise ValueError("sample_rate must be positive")
        object.__setattr__(self, "samples", x)

    def __len__(self):
        return self.samples.size

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate


@dataclass(frozen=True)
class StftConfig:
    window_length: int = 256
    hop: int = 200
    fft_size: int = 256
    window_kind: str = "hann"

    def __post_init__(self):
        if self.window_kind != "hann":
            raise ValueError(f"unsupported window kind {self.window_kind!r}")
        if not 0 < self.hop <= self.window_length <= self.fft_size:
            raise ValueError("need 0 < hop <= window_length <= fft_size")

    @property
    def n_bins(self) -> int:
        return self.fft_size // 2 + 1


@dataclass(frozen=True)
class ComplexSpectrogram:
    """One-sided STFT laid out as ``values[frame, bin]``.

    ``frame_times`` are frame left edges in seconds.
    """

    values: np.ndarray
    frame_times: np.ndarray
    bin_freqs: np.ndarray
    config: StftConfig
    sample_rate: float
    n_samples: int

    def __post_init__(self):
        _check_layout(self.values, self.frame_times, self.bin_freqs)
        if self.values.shape[1] != self.config.n_bins:
            raise ValueError("bin count does not match fft_size")

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True)
class PowerSpectrogram:
    """Nonnegative time-frequency mass, ``mass[frame, bin]``."""

    mass: np.ndarray
    frame_times: np.ndarray
    bin_freqs: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=float)
        _check_layout(m, self.frame_times, self.bin_freqs)
        if not np.all(np.isfinite(m)) or np.any(m < 0):
            raise ValueError("power spectrogram must be finite and nonnegative")
        object.__setattr__(self, "mass", m)

    @property
    def shape(self):
        return self.mass.shape

    def with_mass(self, mass) -> "PowerSpectrogram":
        return PowerSpectrogram(mass, self.frame_times, self.bin_freqs, dict(self.meta))


def _check_layout(values, frame_times, bin_freqs):
    if values.ndim != 2:
        raise ValueError("spectrogram values must be a 2-D (frames, bins) array")
    n_frames, n_bins = values.shape
    if len(frame_times) != n_frames or len(bin_freqs) != n_bins:
        raise ValueError("inconsistent spectrogram shape metadata")


def make_window(config: StftConfig) -> np.ndarray:
    """Periodic Hann window, ``0.5 - 0.5 cos(2 pi n / N)``."""
    n = config.window_length
    if n == 1:
        return np.ones(1)
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _frame_count(n_samples, config):
    return (n_samples - config.window_length) // config.hop + 1


def stft(signal: TimeSignal, config: StftConfig) -> ComplexSpectrogram:
    """Short-time Fourier transform without centering or edge padding.

    Frame ``t`` covers samples ``[t*hop, t*hop + window_length)``.
    """
    x = signal.samples
    if x.size < config.window_length:
        raise ValueError("signal too short")
    n_frames = _frame_count(x.size, config)
    idx = np.arange(config.window_length)[None, :] + config.hop * np.arange(n_frames)[:, None]
    frames = x[idx] * make_window(config)
    values = np.fft.rfft(frames, n=config.fft_size, axis=1)
    fs = signal.sample_rate
    return ComplexSpectrogram(
        values=values,
        frame_times=np.arange(n_frames) * config.hop / fs,
        bin_freqs=np.fft.rfftfreq(config.fft_size, d=1.0 / fs),
        config=config,
        sample_rate=fs,
        n_samples=x.size,
    )


def istft(spec: ComplexSpectrogram) -> TimeSignal:
    """Weighted overlap-add inverse of :func:`stft`.

    Samples where the summed squared window falls below ``1e-8`` of its
    maximum (e.g. the very first sample, or the tail past the last frame)
    are set to zero.
    """
    cfg = spec.config
    n_frames = spec.values.shape[0]
    if _frame_count(spec.n_samples, cfg) != n_frames:
        raise ValueError("frame count inconsistent with n_samples")
    win = make_window(cfg)
    frames = np.fft.irfft(spec.values, n=cfg.fft_size, axis=1)[:, : cfg.window_length]
    out = np.zeros(spec.n_samples)
    norm = np.zeros(spec.n_samples)
    for t in range(n_frames):
        sl = slice(t * cfg.hop, t * cfg.hop + cfg.window_length)
        out[sl] += frames[t] * win
        norm[sl] += win**2
    good = norm > 1e-8 * norm.max()
    out[good] /= norm[good]
    out[~good] = 0.0
    return TimeSignal(out, spec.sample_rate)


def power_spectrogram(spec: ComplexSpectrogram) -> PowerSpectrogram:
    """Squared magnitude, one-sided and not doubled for interior bins."""
    mass = spec.values.real**2 + spec.values.imag**2
    return PowerSpectrogram(mass, spec.frame_times, spec.bin_freqs)


def fractional_delay(signal: TimeSignal, delay: float) -> TimeSignal:
    """Delay ``signal`` by ``delay`` seconds with an FFT phase ramp.

    The shift is circular over the full signal length, so content pushed
    past one edge re-enters at the other; callers pad beforehand. The
    Nyquist bin of even-length signals only keeps its real part, so
    fractional delays are exactly invertible for band-limited content only.
    """
    n = len(signal)
    fs = signal.sample_rate
    if abs(delay) >= n / fs:
        raise ValueError("delay must be shorter than the signal duration")
    if delay == 0:
        return TimeSignal(signal.samples.copy(), fs)
    shift = delay * fs
    if abs(shift - round(shift)) < 1e-9:
        return TimeSignal(np.roll(signal.samples, int(round(shift))), fs)
    k = np.arange(n // 2 + 1)
    ramp = np.exp(-2j * np.pi * k * shift / n)
    y = np.fft.irfft(np.fft.rfft(signal.samples) * ramp, n=n)
    return TimeSignal(y, fs)


def load_wav(path) -> TimeSignal:
    """Read a mono 16-bit PCM WAV file, scaled to [-1, 1)."""
    with wave.open(str(path), "rb") as wf:
        if wf.getnchannels() != 1:
            raise ValueError(f"{path}: expected a mono file, got {wf.getnchannels()} channels")
        if wf.getsampwidth() != 2:
            raise ValueError(f"{path}: expected 16-bit PCM")
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    x = np.frombuffer(raw, dtype="<i2").astype(float) / 32768.0
    return TimeSignal(x, float(rate))


def save_wav(path, signal: TimeSignal) -> None:
    """Write ``signal`` as mono 16-bit PCM; values outside [-1, 1) are clipped."""
    rate = signal.sample_rate
    if not float(rate).is_integer():
        raise ValueError("WAV files need an integer sample rate")
    q = np.clip(np.round(signal.samples * 32768.0), -32768, 32767).astype("<i2")
    path = Path(path)
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(int(rate))
        wf.writeframes(q.tobytes())
