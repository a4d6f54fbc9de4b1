"""
Joint separation and delay estimation
=====================================

Block-coordinate descent alternates the transport step with the closed-form
delay update, annealing the entropic weight. On a noise-free mixture of two
sources with disjoint bands and disjoint activity, the objective reaches
zero at the true delays of +1 and -2 frames.
"""

import time

import numpy as np

from otsep.bcd import SolverConfig, bcd_separate
from otsep.dsp import StftConfig, TimeSignal
from otsep.metrics import align_permutation, spectrogram_error
from otsep.simulate import Scenario, simulate

fs, n, h = 8000.0, 16000, 0.025
rng = np.random.default_rng(1)


def burst(freqs, start, stop):
    # tones under an irregular envelope so every frame has its own level
    t = np.arange(n) / fs
    x = np.zeros(n)
    seg = slice(int(start * fs), int(stop * fs))
    tt = t[seg] - start
    knots = rng.uniform(0, 1, int((stop - start) / 0.0125) + 2) ** 2
    env = np.interp(tt, np.linspace(0, stop - start, knots.size), knots) * np.sin(np.pi * tt / (stop - start)) ** 2
    for f in freqs:
        x[seg] += env * np.sin(2 * np.pi * f * tt)
    return TimeSignal(x, fs)


low = burst([400, 650, 900], 0.3, 0.85)
high = burst([2500, 2900, 3300], 1.15, 1.7)
mix = simulate(Scenario((low, high), [[0, h], [0, -2 * h]], None, StftConfig(), 2.0))

cfg = SolverConfig(
    epsilon_anneal=(10.0, 1.0),
    marginal_tol=1e-6,
    inner_max_iters=50000,
    bcd_obj_tol=1e-12,
    mass_floor=1e-6,
    lp_polish=True,
)
t0 = time.perf_counter()
est = bcd_separate(mix.receiver_specs, 2, cfg)
print(f"solved in {time.perf_counter() - t0:.1f} s, {est.iterations} inner solves")
print("estimated delays (frames):", np.round(est.est_delays[:, 1] / h, 9))
print(f"final objective: {est.objective / (est.scale * h * h):.1e} x mass x h^2")

perm = align_permutation(mix.source_specs_ref, est.source_specs)
print("spectrogram error:", spectrogram_error(mix.source_specs_ref, est.source_specs, perm))

# objective after every half-step; each entropic stage restarts the sequence
for row in est.trace:
    if row.step == "delays":
        print(f"  stage {row.stage} iteration {row.iteration}: {row.regularized:.4g}")
