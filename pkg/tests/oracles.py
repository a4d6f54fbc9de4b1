"""Independent reference computations used by the tests.

None of these share code with the package beyond plain numpy.
"""

import itertools

import numpy as np


def brute_force_two_receiver(counts_ref, counts_rx, delays_frames):
    """Exact optimum of the coupled program for two receivers.

    With a single non-reference receiver the source row marginals are free
    apart from summing to the reference column, so the program is ordinary
    optimal transport under the cost ``min_k (j - i - tau_k)**2``. Integer
    atom counts make an optimal permutation of unit atoms optimal for the
    transportation polytope (its vertices are integral), so enumerating all
    permutations gives the exact value in frame-squared units.
    """
    src = [i for i, c in enumerate(counts_ref) for _ in range(int(c))]
    dst = [j for j, c in enumerate(counts_rx) for _ in range(int(c))]
    assert len(src) == len(dst)
    taus = np.asarray(delays_frames, dtype=float)

    def cost(i, j):
        return float(np.min((j - i - taus) ** 2))

    table = {(i, j): cost(i, j) for i in set(src) for j in set(dst)}
    best = np.inf
    for perm in itertools.permutations(range(len(dst))):
        total = 0.0
        for a, b in zip(src, perm):
            total += table[(a, dst[b])]
            if total >= best:
                break
        else:
            best = min(best, total)
    return best


def compositions(total, parts):
    """All ways of writing ``total`` as an ordered sum of ``parts``
    nonnegative integers."""
    for cuts in itertools.combinations(range(total + parts - 1), parts - 1):
        prev, out = -1, []
        for c in cuts:
            out.append(c - prev - 1)
            prev = c
        out.append(total + parts - 2 - prev)
        yield tuple(out)


def grid_argmin_delay(plan_slices, frame_times, grid):
    """Delay on ``grid`` minimizing ``sum_f <C(tau), M_f>`` by direct
    evaluation of the quadratic cost, with no algebraic shortcut."""
    t = np.asarray(frame_times, dtype=float)
    best, best_val = None, np.inf
    for tau in grid:
        val = 0.0
        for m in plan_slices:
            for i in range(t.size):
                for j in range(t.size):
                    if m[i, j]:
                        val += m[i, j] * ((t[j] - t[i]) - tau) ** 2
        if val < best_val:
            best, best_val = tau, val
    return best


def direct_stft(x, window, hop, nfft):
    """STFT by an explicit DFT sum per frame (no FFT)."""
    n_frames = (len(x) - len(window)) // hop + 1
    k = np.arange(nfft // 2 + 1)
    n = np.arange(len(window))
    basis = np.exp(-2j * np.pi * np.outer(n, k) / nfft)
    out = np.empty((n_frames, k.size), dtype=complex)
    for t in range(n_frames):
        out[t] = (x[t * hop : t * hop + len(window)] * window) @ basis
    return out


def xcorr_lag(x, y, max_lag):
    """Integer lag maximizing the plain time-domain cross-correlation
    ``sum_n x[n] y[n + lag]``."""
    best, best_val = 0, -np.inf
    for lag in range(-max_lag, max_lag + 1):
        if lag >= 0:
            val = np.dot(x[: len(x) - lag], y[lag:])
        else:
            val = np.dot(x[-lag:], y[: len(y) + lag])
        if val > best_val:
            best, best_val = lag, val
    return best
