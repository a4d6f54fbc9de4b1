"""Time-domain recovery by masking receiver STFTs with estimated source
spectrograms and averaging delay-compensated outputs."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .dsp import fractional_delay, istft
from .transport import frame_spacing

__all__ = ["WienerMaskSet", "shift_rows", "build_masks", "reconstruct_sources"]


@dataclass(frozen=True)
class WienerMaskSet:
    """``masks[k, l]`` is the ``(frames, bins)`` mask of source ``k`` at
    receiver ``l``."""

    masks: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.masks, dtype=float)
        if m.ndim != 4:
            raise ValueError("masks must be a (K, L, frames, bins) array")
        if np.any(m < 0) or np.any(m > 1 + 1e-12):
            raise ValueError("mask entries must lie in [0, 1]")
        object.__setattr__(self, "masks", m)

    @property
    def n_sources(self):
        return self.masks.shape[0]

    @property
    def n_receivers(self):
        return self.masks.shape[1]


def shift_rows(mass: np.ndarray, n: int) -> np.ndarray:
    """Move frames ``n`` rows later (earlier for negative ``n``), zero-filling."""
    out = np.zeros_like(mass)
    t = mass.shape[0]
    if abs(n) >= t:
        return out
    if n >= 0:
        out[n:] = mass[: t - n]
    else:
        out[: t + n] = mass[-n:]
    return out


def build_masks(est_source_specs, est_delays, noise_floor: float = 0.0) -> WienerMaskSet:
    """Power-ratio masks per source and receiver.

    Each source spectrogram is moved to receiver ``l`` by rounding its delay
    to whole frames; ``mask = S_k / (sum_j S_j + noise_floor)``, and bins
    with a zero denominator get 0.
    """
    specs = list(est_source_specs)
    delays = np.asarray(est_delays, dtype=float)
    if noise_floor < 0:
        raise ValueError("noise_floor must be nonnegative")
    if delays.ndim != 2 or delays.shape[0] != len(specs):
        raise ValueError("need one delay row per source")
    shape = specs[0].mass.shape
    if any(s.mass.shape != shape for s in specs):
        raise ValueError("source spectrograms must share a shape")
    h = frame_spacing(specs[0].frame_times) if shape[0] > 1 else 1.0
    n_rx = delays.shape[1]
    shifted = np.empty((len(specs), n_rx) + shape)
    for k, s in enumerate(specs):
        for ell in range(n_rx):
            shifted[k, ell] = shift_rows(s.mass, int(round(delays[k, ell] / h)))
    den = shifted.sum(axis=0, keepdims=True) + noise_floor
    masks = np.divide(shifted, den, out=np.zeros_like(shifted), where=den > 0)
    return WienerMaskSet(np.minimum(masks, 1.0))


def reconstruct_sources(receiver_cplx, masks: WienerMaskSet, est_delays) -> list:
    """Masked ISTFT per receiver, delay compensation, then averaging over
    receivers; one signal per source with the receivers' length."""
    cplx = list(receiver_cplx)
    delays = np.asarray(est_delays, dtype=float)
    if masks.n_receivers != len(cplx) or delays.shape != masks.masks.shape[:2]:
        raise ValueError("masks, delays and receivers disagree in size")
    out = []
    for k in range(masks.n_sources):
        acc = None
        for ell, spec in enumerate(cplx):
            sig = istft(replace(spec, values=spec.values * masks.masks[k, ell]))
            sig = fractional_delay(sig, -delays[k, ell])
            acc = sig.samples if acc is None else acc + sig.samples
        out.append(type(sig)(acc / len(cplx), sig.sample_rate))
    return out
