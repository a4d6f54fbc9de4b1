import numpy as np
import pytest

from otsep.dsp import PowerSpectrogram, StftConfig, TimeSignal, istft, power_spectrogram, stft
from otsep.metrics import delta_sdr
from otsep.reconstruct import WienerMaskSet, build_masks, reconstruct_sources, shift_rows
from otsep.simulate import Scenario, simulate, synthetic_source

FS = 8000.0
CFG = StftConfig()
H = 0.025


def _spec(mass):
    mass = np.asarray(mass, float)
    return PowerSpectrogram(mass, H * np.arange(mass.shape[0]), np.arange(mass.shape[1]) * 1.0)


def test_mask_set_bounds():
    with pytest.raises(ValueError):
        WienerMaskSet(np.full((1, 1, 2, 2), 1.5))
    with pytest.raises(ValueError):
        WienerMaskSet(np.zeros((2, 2)))


def test_shift_rows():
    m = np.arange(12.0).reshape(4, 3)
    np.testing.assert_array_equal(shift_rows(m, 1)[1:], m[:-1])
    assert not np.any(shift_rows(m, 1)[0])
    np.testing.assert_array_equal(shift_rows(m, -2)[:2], m[2:])
    assert not np.any(shift_rows(m, 9))


def test_mask_examples():
    a = np.random.default_rng(0).uniform(0.5, 1, (6, 4))
    d = np.zeros((2, 2))
    m = build_masks([_spec(a), _spec(a)], d).masks
    np.testing.assert_allclose(m, 0.5)
    b = a.copy()
    b[2] = 0.0
    m = build_masks([_spec(b)], np.zeros((1, 2))).masks
    assert np.all(m[0, :, 2] == 0) and np.all(np.delete(m[0], 2, axis=1) == 1)
    m = build_masks([_spec(a)], np.zeros((1, 2)), noise_floor=a[1, 1]).masks
    assert m[0, 0, 1, 1] == pytest.approx(0.5)


def test_masks_follow_delays_and_sum_to_one():
    rng = np.random.default_rng(1)
    specs = [_spec(rng.uniform(0.1, 1, (10, 3))) for _ in range(3)]
    d = np.array([[0, 0.025, -0.05], [0, 0.0, 0.075], [0, -0.025, 0.0]])
    m = build_masks(specs, d).masks
    assert np.all((m >= 0) & (m <= 1))
    # at receiver 2 source 0 sits one frame later
    shifted = [shift_rows(s.mass, n) for s, n in zip(specs, [1, 0, -1])]
    np.testing.assert_allclose(m[0, 1], np.divide(shifted[0], sum(shifted), out=np.zeros((10, 3)), where=sum(shifted) > 0))
    total = m.sum(axis=0)
    assert np.all((np.abs(total - 1) < 1e-12) | (total == 0))


def _pair(snr=None):
    a = synthetic_source(np.random.default_rng(10), 2.0, FS, f0=210.0)
    b = synthetic_source(np.random.default_rng(11), 2.0, FS, f0=110.0)
    return simulate(Scenario((a, b), [[0.0, 0.05], [0.0, -0.075]], snr, CFG, 2.0, seed=3))


def test_zero_masks_give_silence():
    mix = _pair()
    masks = WienerMaskSet(np.zeros((2, 2) + mix.receiver_cplx[0].shape))
    out = reconstruct_sources(mix.receiver_cplx, masks, mix.scenario.true_delays)
    assert all(not np.any(o.samples) for o in out)


def test_identity_chain():
    x = TimeSignal(np.random.default_rng(2).standard_normal(4000), FS)
    spec = stft(x, CFG)
    out = reconstruct_sources([spec], WienerMaskSet(np.ones((1, 1) + spec.shape)), np.zeros((1, 1)))
    np.testing.assert_array_equal(out[0].samples, istft(spec).samples)


def test_single_source_perfect_estimates():
    src = synthetic_source(np.random.default_rng(3), 2.0, FS)
    d = np.array([[0.0, 0.05]])
    mix = simulate(Scenario((src,), d, None, CFG, 2.0))
    masks = build_masks(mix.source_specs_ref, d)
    out = reconstruct_sources(mix.receiver_cplx, masks, d)[0].samples
    s = mix.padded_sources[0].samples
    assert np.sqrt(np.mean((out - s) ** 2) / np.mean(s**2)) <= 1e-3


def test_oracle_masks_reach_ten_db():
    mix = _pair()
    d = mix.scenario.true_delays
    masks = build_masks(mix.source_specs_ref, d)
    out = reconstruct_sources(mix.receiver_cplx, masks, d)
    gains = delta_sdr(mix.padded_sources, out, mix.receiver_signals[0])
    assert np.all(gains >= 10.0)


def test_masked_energy_does_not_grow_and_is_linear():
    mix = _pair(snr=10.0)
    rng = np.random.default_rng(4)
    masks = WienerMaskSet(rng.uniform(0, 1, (2, 2) + mix.receiver_cplx[0].shape))
    for k in range(2):
        for ell, spec in enumerate(mix.receiver_cplx):
            assert np.sum(np.abs(spec.values * masks.masks[k, ell]) ** 2) <= np.sum(np.abs(spec.values) ** 2)
    d = mix.scenario.true_delays
    a = reconstruct_sources(mix.receiver_cplx, masks, d)
    from dataclasses import replace

    doubled = [replace(c, values=3.0 * c.values) for c in mix.receiver_cplx]
    b = reconstruct_sources(doubled, masks, d)
    for x, y in zip(a, b):
        np.testing.assert_allclose(y.samples, 3.0 * x.samples, atol=1e-10)


def test_reconstruct_checks_sizes():
    mix = _pair()
    masks = build_masks(mix.source_specs_ref, mix.scenario.true_delays)
    with pytest.raises(ValueError):
        reconstruct_sources(mix.receiver_cplx[:1], masks, mix.scenario.true_delays)
    spec = power_spectrogram(mix.receiver_cplx[0])
    with pytest.raises(ValueError):
        build_masks([spec], mix.scenario.true_delays)
