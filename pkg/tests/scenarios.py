"""Scenario builders shared by several test modules."""

import numpy as np

from otsep.dsp import PowerSpectrogram, StftConfig, TimeSignal
from otsep.simulate import Scenario, simulate

FS = 8000.0
N = 16000
HOP_S = 0.025


def burst(rng, freqs, start, stop, n=N, fs=FS):
    """Sum of sinusoids under a random piecewise-linear envelope, silent
    outside ``[start, stop)`` seconds.

    The irregular envelope gives every frame a distinct level, so no
    combination of wrong frame shifts can imitate the true one.
    """
    t = np.arange(n) / fs
    x = np.zeros(n)
    seg = slice(int(start * fs), int(stop * fs))
    tt = t[seg] - start
    span = stop - start
    knots = rng.uniform(0, 1, int(span / 0.0125) + 2) ** 2
    env = np.interp(tt, np.linspace(0, span, knots.size), knots) * np.sin(np.pi * tt / span) ** 2
    for f in freqs:
        x[seg] += env * np.sin(2 * np.pi * f * tt)
    return TimeSignal(x, fs)


def exact_pair(seed=1, spans=((0.3, 0.85), (1.15, 1.7))):
    """Two sources with disjoint bands and disjoint activity.

    Disjoint activity keeps the receiver spectrograms exact sums of shifted
    source spectrograms despite window leakage, so a zero objective is
    attainable at the true delays.
    """
    rng = np.random.default_rng(seed)
    a = burst(rng, [400, 650, 900], *spans[0])
    b = burst(rng, [2500, 2900, 3300], *spans[1])
    return a, b


def exact_mixture(delays_frames=(1, -2), seed=1):
    a, b = exact_pair(seed)
    d = np.array([[0.0, delays_frames[0] * HOP_S], [0.0, delays_frames[1] * HOP_S]])
    return simulate(Scenario((a, b), d, None, StftConfig(), N / FS, 0))


def random_specs(rng, n_src=2, n_rx=2, n_freq=4, n_t=24, max_shift=3, noise=0.0):
    """Receiver spectrograms built as sums of shifted random sources.

    Returns ``(specs, sources, shifts)`` with ``shifts`` in frames.
    """
    src = rng.uniform(0, 1, (n_src, n_t, n_freq)) ** 2
    src[:, : max_shift + 1] = 0.0
    src[:, n_t - max_shift - 1 :] = 0.0
    shifts = np.zeros((n_src, n_rx), int)
    for ell in range(1, n_rx):
        shifts[:, ell] = rng.choice(np.arange(-max_shift, max_shift + 1), n_src, replace=False)
    times = HOP_S * np.arange(n_t)
    freqs = 100.0 * np.arange(n_freq)
    specs = []
    for ell in range(n_rx):
        m = sum(np.roll(src[k], shifts[k, ell], axis=0) for k in range(n_src))
        m = m + noise * rng.uniform(0, 1, m.shape)
        specs.append(PowerSpectrogram(m, times, freqs))
    return specs, src, shifts
