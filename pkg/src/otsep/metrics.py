"""Evaluation: source alignment, TDOA RMSE, spectrogram error and SDR
improvement."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "EvalReport",
    "align_permutation",
    "align_by_delays",
    "tdoa_rmse",
    "spectrogram_error",
    "delta_sdr",
    "mean_delta_sdr",
]

_MAX_PERMUTED = 8


@dataclass(frozen=True)
class EvalReport:
    """Metrics for one trial. ``permutation[k]`` is the estimate matched
    to true source ``k``; unavailable metrics are ``nan``."""

    tdoa_rmse: float
    spec_err: float
    delta_sdr: np.ndarray
    permutation: tuple


def _mass(s):
    return np.asarray(getattr(s, "mass", s), dtype=float)


def _search(k, score):
    if k > _MAX_PERMUTED:
        raise ValueError("permutation search too large")
    best, best_val = None, math.inf
    for perm in itertools.permutations(range(k)):
        val = score(perm)
        if val < best_val:
            best, best_val = perm, val
    return best


def align_permutation(true_specs, est_specs) -> tuple:
    """Permutation minimizing the summed normalized spectrogram error,
    by exhaustive search (at most 8 sources)."""
    t = [_mass(s) for s in true_specs]
    e = [_mass(s) for s in est_specs]
    if len(t) != len(e):
        raise ValueError("need as many estimates as true sources")
    if any(a.shape != b.shape for a in t for b in e):
        raise ValueError("spectrogram shapes differ")
    norms = [np.sum(a**2) for a in t]
    err = np.array([[np.sum((a - b) ** 2) / n for b in e] for a, n in zip(t, norms)])
    return _search(len(t), lambda p: sum(err[k, p[k]] for k in range(len(p))))


def align_by_delays(true_delays, est_delays) -> tuple:
    """Permutation minimizing the squared TDOA error; used for methods that
    return delays but no spectrograms."""
    td, ed = np.asarray(true_delays, float), np.asarray(est_delays, float)
    if td.shape != ed.shape:
        raise ValueError("delay matrices differ in shape")
    return _search(td.shape[0], lambda p: float(np.sum((td - ed[list(p)]) ** 2)))


def tdoa_rmse(true_delays, est_delays, permutation=None) -> float:
    """Root mean squared TDOA error over sources and non-reference receivers.

    Examples
    --------
    >>> tdoa_rmse([[0, 0.003], [0, 0.0]], [[0, 0.0], [0, 0.004]])
    0.0035355339059327377
    """
    td, ed = np.asarray(true_delays, float), np.asarray(est_delays, float)
    if td.shape != ed.shape or td.ndim != 2:
        raise ValueError("delay matrices must share a K x L shape")
    if permutation is not None:
        ed = ed[list(permutation)]
    if td.shape[1] < 2:
        return 0.0
    return float(np.sqrt(np.mean((td[:, 1:] - ed[:, 1:]) ** 2)))


def spectrogram_error(true_specs, est_specs, permutation=None) -> float:
    """Mean over sources of ``||S_k - S_hat_k||_F^2 / ||S_k||_F^2``."""
    t = [_mass(s) for s in true_specs]
    e = [_mass(s) for s in est_specs]
    if len(t) != len(e):
        raise ValueError("need as many estimates as true sources")
    if permutation is not None:
        e = [e[p] for p in permutation]
    total = 0.0
    for a, b in zip(t, e):
        if a.shape != b.shape:
            raise ValueError("spectrogram shapes differ")
        norm = np.sum(a**2)
        if norm == 0:
            raise ValueError("true source spectrogram has zero norm")
        total += np.sum((a - b) ** 2) / norm
    return float(total / len(t))


def delta_sdr(true_sources, est_sources, mixture, permutation=None) -> np.ndarray:
    """SDR improvement per source in dB, ``10 log10(D_mix / D_est)``.

    ``D_mix`` and ``D_est`` are the mean squared differences of the
    reference mixture and of the estimate from the true source. A perfect
    estimate gives ``+inf``.
    """
    srcs = [np.asarray(getattr(s, "samples", s), float) for s in true_sources]
    ests = [np.asarray(getattr(s, "samples", s), float) for s in est_sources]
    mix = np.asarray(getattr(mixture, "samples", mixture), float)
    if len(srcs) != len(ests):
        raise ValueError("need as many estimates as true sources")
    if permutation is not None:
        ests = [ests[p] for p in permutation]
    out = np.empty(len(srcs))
    for k, (s, e) in enumerate(zip(srcs, ests)):
        if s.shape != e.shape or s.shape != mix.shape:
            raise ValueError("signals must have equal lengths")
        d_mix = np.mean((mix - s) ** 2)
        d_est = np.mean((e - s) ** 2)
        if d_est == 0:
            out[k] = math.inf
        elif d_mix == 0:
            out[k] = -math.inf
        else:
            out[k] = 10.0 * math.log10(d_mix / d_est)
    return out


def mean_delta_sdr(values) -> float:
    """Average of per-source SDR gains; ``inf`` if any source is perfect."""
    v = np.asarray(values, float)
    return float(np.inf) if np.any(np.isposinf(v)) else float(np.mean(v))
