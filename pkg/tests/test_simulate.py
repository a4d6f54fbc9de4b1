import math

import numpy as np
import pytest

from otsep.dsp import StftConfig, TimeSignal
from otsep.simulate import (
    Scenario,
    check_delays,
    delay_grid,
    sample_delays,
    simulate,
    snr_of,
    synthetic_source,
)

FS = 8000.0
CFG = StftConfig()


def _source(seed=0, f0=150.0):
    return synthetic_source(np.random.default_rng(seed), 2.0, FS, f0=f0)


# ---- validation ------------------------------------------------------------


@pytest.mark.parametrize(
    "delays",
    [[0.0, 0.1], [[0.01, 0.0]], [[0.0, np.nan]], [[0.0, 3.0]]],
)
def test_check_delays_rejects(delays):
    with pytest.raises(ValueError):
        check_delays(delays, duration=2.0)


def test_scenario_validation():
    s = _source()
    with pytest.raises(ValueError, match="one row per source"):
        Scenario((s,), [[0, 0], [0, 0.025]], None, CFG, 2.0)
    with pytest.raises(ValueError, match="two receivers"):
        Scenario((s,), [[0.0]], None, CFG, 2.0)
    with pytest.raises(ValueError, match="finite"):
        Scenario((s,), [[0, 0.025]], math.inf, CFG, 2.0)
    with pytest.raises(ValueError, match="sample rate"):
        Scenario((s, TimeSignal(s.samples, 16000.0)), [[0, 0], [0, 0]], None, CFG, 2.0)


def test_delay_pushing_source_out_is_rejected():
    x = np.zeros(16000)
    x[15990] = 1.0
    sc = Scenario((TimeSignal(x, FS),), [[0, 0.025]], None, CFG, 2.0)
    with pytest.raises(ValueError, match="outside"):
        simulate(sc)


# ---- mixing ----------------------------------------------------------------


def test_single_source_zero_delay_no_noise():
    s = _source()
    mix = simulate(Scenario((s,), [[0.0, 0.0]], None, CFG, 2.0))
    for r in mix.receiver_signals:
        np.testing.assert_array_equal(r.samples, s.samples)


def test_frame_delay_shifts_spectrogram_rows():
    s = _source()
    mix = simulate(Scenario((s,), [[0.0, 0.025]], None, CFG, 2.0))
    r1, r2 = (m.mass for m in mix.receiver_specs)
    # a 25 ms delay is exactly one 200-sample hop
    assert np.max(np.abs(r2[1:] - r1[:-1])) <= 1e-6 * r1.max()


def test_receivers_are_sums_of_shifted_sources():
    a, b = _source(0, 200.0), _source(1, 120.0)
    d = [[0.0, 0.05], [0.0, -0.0375]]
    mix = simulate(Scenario((a, b), d, None, CFG, 2.0))
    want = np.roll(a.samples, 400) + np.roll(b.samples, -300)
    np.testing.assert_allclose(mix.receiver_signals[1].samples, want, atol=1e-12)
    np.testing.assert_allclose(mix.receiver_signals[0].samples, a.samples + b.samples, atol=1e-15)


@pytest.mark.parametrize("snr", [0.0, 10.0, -10.0])
def test_realized_snr(snr):
    mix = simulate(Scenario((_source(),), [[0.0, 0.025]], snr, CFG, 2.0, seed=11))
    for clean, noisy in zip(mix.clean_receivers, mix.receiver_signals):
        assert abs(snr_of(clean, noisy) - snr) <= 0.2


def test_snr_of_examples():
    x = TimeSignal(np.ones(100), FS)
    assert snr_of(x, x) == math.inf
    noisy = TimeSignal(np.ones(100) + np.r_[np.ones(50), -np.ones(50)], FS)
    assert snr_of(x, noisy) == pytest.approx(0.0, abs=1e-12)


def test_simulation_is_deterministic():
    sc = Scenario((_source(),), [[0.0, 0.05]], 5.0, CFG, 2.0, seed=3)
    a, b = simulate(sc), simulate(sc)
    for x, y in zip(a.receiver_signals, b.receiver_signals):
        np.testing.assert_array_equal(x.samples, y.samples)
    other = simulate(Scenario((_source(),), [[0.0, 0.05]], 5.0, CFG, 2.0, seed=4))
    assert not np.array_equal(a.receiver_signals[0].samples, other.receiver_signals[0].samples)


def test_reference_spectrograms_are_undelayed_sources():
    s = _source()
    mix = simulate(Scenario((s,), [[0.0, 0.05]], 0.0, CFG, 2.0))
    from otsep.dsp import power_spectrogram, stft

    np.testing.assert_array_equal(mix.source_specs_ref[0].mass, power_spectrogram(stft(s, CFG)).mass)


# ---- delay sampling ----------------------------------------------------------


def test_delay_grid():
    g = delay_grid(2.0, 200, FS, 0.1)
    # +-0.2 s in 25 ms steps
    assert g.size == 17
    np.testing.assert_allclose(g, 0.025 * np.arange(-8, 9))


def test_sample_delays_distinct_per_receiver():
    g = delay_grid(2.0, 200, FS)
    rng = np.random.default_rng(0)
    for _ in range(20):
        d = sample_delays(rng, 3, 4, g)
        assert np.all(d[:, 0] == 0)
        for ell in range(1, 4):
            assert len(set(d[:, ell])) == 3
            assert set(d[:, ell]) <= set(g)
    with pytest.raises(ValueError):
        sample_delays(rng, 5, 2, g[:3])


# ---- synthetic source ------------------------------------------------------------


def test_synthetic_source_layout():
    s = _source(5)
    x = s.samples
    assert len(x) == 16000
    assert not np.any(x[: int(0.3 * FS)]) and not np.any(x[-int(0.3 * FS) :])
    assert np.sqrt(np.mean(x[2400:-2400] ** 2)) == pytest.approx(0.1, rel=1e-12)
    np.testing.assert_array_equal(x, _source(5).samples)


def test_synthetic_source_rejects_no_room():
    with pytest.raises(ValueError):
        synthetic_source(np.random.default_rng(0), 0.5, FS, lead=0.3, tail=0.3)
