"""Reference methods: GCC-PHAT delay estimation and delay-and-sum
beamforming."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dsp import TimeSignal, fractional_delay

__all__ = ["GccConfig", "gcc_phat", "gcc_phat_peaks", "phat_correlation", "delay_and_sum"]

_MAG_FLOOR = 1e-12


@dataclass(frozen=True)
class GccConfig:
    """``max_delay`` bounds the lag search (seconds); ``interp_factor``
    upsamples the correlation, and values above 1 also enable parabolic
    peak refinement."""

    max_delay: float
    interp_factor: int = 1

    def __post_init__(self):
        if not self.max_delay > 0:
            raise ValueError("max_delay must be positive")
        if int(self.interp_factor) != self.interp_factor or self.interp_factor < 1:
            raise ValueError("interp_factor must be a positive integer")


def _check_pair(x: TimeSignal, y: TimeSignal, cfg: GccConfig):
    if len(x) != len(y) or x.sample_rate != y.sample_rate:
        raise ValueError("signals must share length and sample rate")
    if cfg.max_delay >= x.duration:
        raise ValueError("max_delay must be shorter than the signals")
    if not np.any(x.samples) or not np.any(y.samples):
        raise ValueError("degenerate signal")


def phat_correlation(x: TimeSignal, y: TimeSignal, cfg: GccConfig):
    """Phase-transform cross-correlation restricted to ``+-max_delay``.

    Returns ``(lags, values)``: lags in seconds on a grid of
    ``1 / (fs * interp_factor)``, positive where ``y`` lags ``x``.
    """
    _check_pair(x, y, cfg)
    n = len(x)
    nfft = 2 * n
    cross = np.conj(np.fft.rfft(x.samples, nfft)) * np.fft.rfft(y.samples, nfft)
    cross /= np.maximum(np.abs(cross), _MAG_FLOOR)
    up = int(cfg.interp_factor)
    cc = np.fft.irfft(cross, nfft * up) * up
    step = 1.0 / (x.sample_rate * up)
    m = min(int(np.floor(cfg.max_delay / step + 1e-9)), n * up - 1)
    values = np.concatenate([cc[-m:], cc[: m + 1]]) if m > 0 else cc[:1]
    lags = step * np.arange(-m, m + 1)
    return lags, values


def _refine(lags, values, idx, refine):
    if not refine or idx == 0 or idx == values.size - 1:
        return lags[idx]
    a, b, c = values[idx - 1], values[idx], values[idx + 1]
    den = a - 2 * b + c
    if den >= 0:
        return lags[idx]
    return lags[idx] + 0.5 * (a - c) / den * (lags[1] - lags[0])


def gcc_phat(x: TimeSignal, y: TimeSignal, cfg: GccConfig) -> float:
    """Delay of ``y`` relative to ``x`` in seconds (positive: ``y`` later).

    Examples
    --------
    >>> import numpy as np
    >>> from otsep.dsp import TimeSignal
    >>> rng = np.random.default_rng(0)
    >>> s = rng.standard_normal(4000)
    >>> x = TimeSignal(s, 8000.0)
    >>> y = TimeSignal(np.roll(s, 10), 8000.0)
    >>> round(gcc_phat(x, y, GccConfig(max_delay=0.01)) * 8000)
    10
    """
    lags, values = phat_correlation(x, y, cfg)
    return float(_refine(lags, values, int(np.argmax(values)), cfg.interp_factor > 1))


def gcc_phat_peaks(x: TimeSignal, y: TimeSignal, cfg: GccConfig, n_peaks: int, min_separation: float) -> np.ndarray:
    """The ``n_peaks`` strongest correlation peaks at least ``min_separation``
    seconds apart, in decreasing peak height.

    Peaks are chosen greedily among local maxima. If fewer distinct local
    maxima exist, the remaining entries repeat the strongest lag.
    """
    lags, values = phat_correlation(x, y, cfg)
    inner = np.flatnonzero((values[1:-1] >= values[:-2]) & (values[1:-1] >= values[2:])) + 1
    cands = np.concatenate([inner, [0, values.size - 1]]) if values.size > 1 else np.array([0])
    cands = cands[np.argsort(-values[cands], kind="stable")]
    chosen = []
    for idx in cands:
        if all(abs(lags[idx] - lags[c]) >= min_separation - 1e-12 for c in chosen):
            chosen.append(int(idx))
        if len(chosen) == n_peaks:
            break
    while len(chosen) < n_peaks:
        chosen.append(chosen[0])
    return np.array([_refine(lags, values, i, cfg.interp_factor > 1) for i in chosen])


def delay_and_sum(receivers, delays) -> TimeSignal:
    """Advance receiver ``l`` by ``delays[l]`` seconds and average."""
    receivers = list(receivers)
    delays = np.asarray(delays, dtype=float)
    if len(receivers) == 0 or delays.shape != (len(receivers),):
        raise ValueError("need one delay per receiver")
    n, fs = len(receivers[0]), receivers[0].sample_rate
    if any(len(r) != n or r.sample_rate != fs for r in receivers):
        raise ValueError("receivers must share length and sample rate")
    out = np.zeros(n)
    for sig, d in zip(receivers, delays):
        out += fractional_delay(sig, -d).samples
    return TimeSignal(out / len(receivers), fs)
