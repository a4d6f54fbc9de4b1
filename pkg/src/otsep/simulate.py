"""Multichannel mixture simulation: delayed sources, sensor noise at a
target SNR, and the matching spectrograms."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dsp import (
    ComplexSpectrogram,
    PowerSpectrogram,
    StftConfig,
    TimeSignal,
    fractional_delay,
    power_spectrogram,
    stft,
)

__all__ = [
    "Scenario",
    "MixtureData",
    "check_delays",
    "simulate",
    "snr_of",
    "delay_grid",
    "sample_delays",
    "synthetic_source",
]


def check_delays(delays, duration=None) -> np.ndarray:
    """Validate a K x L delay matrix (seconds) and return it as floats.

    Column 0 belongs to the reference microphone and must be zero.
    """
    d = np.array(delays, dtype=float)
    if d.ndim != 2 or d.shape[0] < 1 or d.shape[1] < 1:
        raise ValueError("delays must be a K x L matrix")
    if not np.all(np.isfinite(d)):
        raise ValueError("delays must be finite")
    if np.any(d[:, 0] != 0):
        raise ValueError("reference-microphone delays (column 0) must be zero")
    if duration is not None and np.any(np.abs(d) >= duration):
        raise ValueError("delays must be shorter than the duration")
    return d


@dataclass(frozen=True)
class Scenario:
    """One experiment draw.

    ``snr_db=None`` means no sensor noise at all.
    """

    sources: tuple
    true_delays: np.ndarray
    snr_db: float | None
    stft: StftConfig
    duration: float
    seed: int = 0

    def __post_init__(self):
        srcs = tuple(self.sources)
        if len(srcs) < 1:
            raise ValueError("need at least one source")
        rates = {s.sample_rate for s in srcs}
        if len(rates) != 1:
            raise ValueError("all sources must share one sample rate")
        d = check_delays(self.true_delays, self.duration)
        if d.shape[0] != len(srcs):
            raise ValueError("delay matrix needs one row per source")
        if d.shape[1] < 2:
            raise ValueError("need at least two receivers")
        if self.snr_db is not None and not math.isfinite(self.snr_db):
            raise ValueError("snr_db must be finite; use None for a noise-free scenario")
        object.__setattr__(self, "sources", srcs)
        object.__setattr__(self, "true_delays", d)

    @property
    def sample_rate(self) -> float:
        return self.sources[0].sample_rate

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def n_sources(self) -> int:
        return len(self.sources)

    @property
    def n_receivers(self) -> int:
        return self.true_delays.shape[1]


@dataclass(frozen=True)
class MixtureData:
    receiver_signals: list
    receiver_specs: list
    receiver_cplx: list
    source_specs_ref: list
    scenario: Scenario
    padded_sources: list
    clean_receivers: list


def _pad(sig: TimeSignal, n: int) -> TimeSignal:
    if len(sig) > n:
        raise ValueError("source longer than the scenario duration")
    return TimeSignal(np.pad(sig.samples, (0, n - len(sig))), sig.sample_rate)


def _support(x):
    nz = np.flatnonzero(x)
    return (nz[0], nz[-1]) if nz.size else (0, -1)


def simulate(scenario: Scenario) -> MixtureData:
    """Render receiver signals and spectrograms for ``scenario``.

    Each source is zero-padded to the scenario duration and delayed with
    :func:`fractional_delay`. Noise at receiver ``l`` is white Gaussian with
    variance ``P_l / 10**(snr_db/10)``, ``P_l`` being the mean power of the
    clean mixture at that receiver.
    """
    fs = scenario.sample_rate
    n = scenario.n_samples
    padded = [_pad(s, n) for s in scenario.sources]
    delays = scenario.true_delays

    for k, src in enumerate(padded):
        first, last = _support(src.samples)
        for d in delays[k]:
            shift = d * fs
            if first + shift < 0 or last + shift > n - 1:
                raise ValueError(
                    f"delay {d:g} s pushes source {k} outside the {scenario.duration:g} s window"
                )

    rng = np.random.default_rng(scenario.seed)
    clean, noisy = [], []
    for ell in range(scenario.n_receivers):
        x = np.zeros(n)
        for k, src in enumerate(padded):
            x += fractional_delay(src, delays[k, ell]).samples
        clean.append(TimeSignal(x, fs))
        if scenario.snr_db is None:
            noisy.append(TimeSignal(x.copy(), fs))
        else:
            sigma = math.sqrt(np.mean(x**2) / 10.0 ** (scenario.snr_db / 10.0))
            noisy.append(TimeSignal(x + sigma * rng.standard_normal(n), fs))

    cplx = [stft(x, scenario.stft) for x in noisy]
    return MixtureData(
        receiver_signals=noisy,
        receiver_specs=[power_spectrogram(c) for c in cplx],
        receiver_cplx=cplx,
        source_specs_ref=[power_spectrogram(stft(s, scenario.stft)) for s in padded],
        scenario=scenario,
        padded_sources=padded,
        clean_receivers=clean,
    )


def snr_of(clean: TimeSignal, noisy: TimeSignal) -> float:
    """SNR in dB of ``noisy`` against ``clean``; ``inf`` when they coincide."""
    if len(clean) != len(noisy):
        raise ValueError("signals must have equal length")
    noise = np.sum((noisy.samples - clean.samples) ** 2)
    if noise == 0:
        return math.inf
    return 10.0 * math.log10(np.sum(clean.samples**2) / noise)


def delay_grid(duration, hop, sample_rate, max_fraction=0.1) -> np.ndarray:
    """Integer multiples of one frame hop within ``+-max_fraction * duration``."""
    step = hop / sample_rate
    m = int(math.floor(max_fraction * duration / step + 1e-9))
    return step * np.arange(-m, m + 1)


def sample_delays(rng, n_sources, n_receivers, grid) -> np.ndarray:
    """Draw a delay matrix from ``grid``, distinct across sources per receiver."""
    grid = np.asarray(grid, dtype=float)
    if n_sources > grid.size:
        raise ValueError("grid too small for distinct per-source delays")
    d = np.zeros((n_sources, n_receivers))
    for ell in range(1, n_receivers):
        d[:, ell] = rng.choice(grid, size=n_sources, replace=False)
    return d


def synthetic_source(
    rng,
    duration,
    sample_rate=8000.0,
    f0=120.0,
    lead=0.3,
    tail=0.3,
    level=0.1,
) -> TimeSignal:
    """Speech-like test signal: syllables of amplitude-modulated harmonic
    stacks separated by pauses.

    Each syllable draws its own pitch around ``f0`` with a glide and a
    little vibrato, and three formants that shape a harmonic spectrum
    falling off as ``1/h`` (roughly -6 dB per octave, as in voiced speech).
    The first ``lead`` and last ``tail`` seconds are silent so the signal
    can be delayed in either direction without leaving the window. The
    active part is scaled to RMS ``level``.
    """
    fs = float(sample_rate)
    n = int(round(duration * fs))
    x = np.zeros(n)
    start = int(lead * fs)
    stop = n - int(tail * fs)
    if stop <= start:
        raise ValueError("lead and tail leave no room for speech")
    nyq_limit = min(3800.0, 0.475 * fs)
    pos = start + int(rng.uniform(0.0, 0.15) * fs)
    while True:
        length = int(rng.uniform(0.10, 0.25) * fs)
        if pos + length > stop:
            break
        t = np.arange(length) / fs
        p0 = f0 * rng.uniform(0.85, 1.2)
        pitch = p0 * (1.0 + rng.uniform(-0.2, 0.2) * t / t[-1])
        pitch = pitch * (1.0 + 0.02 * np.sin(2 * np.pi * rng.uniform(4, 7) * t))
        phase = 2 * np.pi * np.cumsum(pitch) / fs
        formants = rng.uniform([300, 900, 2200], [900, 2200, 3200])
        voiced = np.zeros(length)
        for h in range(1, int(nyq_limit // (p0 * 1.25))):
            fh = h * p0
            gain = sum(a * np.exp(-0.5 * ((fh - fc) / 90.0) ** 2) for fc, a in zip(formants, (1.0, 0.5, 0.25)))
            voiced += (gain + 0.005) / h * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
        x[pos : pos + length] += voiced * np.hanning(length) ** 0.5
        pos += length + int(rng.uniform(0.05, 0.3) * fs)
    rms = np.sqrt(np.mean(x[start:stop] ** 2))
    if rms == 0:
        raise ValueError("duration too short for a single syllable")
    x *= level / rms
    return TimeSignal(x, fs)
