import math
import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from otsep.metrics import (
    align_by_delays,
    align_permutation,
    delta_sdr,
    mean_delta_sdr,
    spectrogram_error,
    tdoa_rmse,
)


def _specs(seed, k=3, shape=(20, 8)):
    rng = np.random.default_rng(seed)
    return [rng.uniform(0, 1, shape) for _ in range(k)]


# ---- alignment -------------------------------------------------------------------


def test_alignment_examples():
    s = _specs(0, k=2)
    assert align_permutation(s, s) == (0, 1)
    assert align_permutation(s, s[::-1]) == (1, 0)


@pytest.mark.parametrize("perm", list(itertools.permutations(range(4))))
def test_alignment_recovers_generating_permutation(perm):
    rng = np.random.default_rng(1)
    s = _specs(1, k=4)
    est = [None] * 4
    for k, p in enumerate(perm):
        est[p] = s[k] + 0.05 * rng.uniform(0, 1, s[k].shape)
    assert align_permutation(s, est) == perm


def test_alignment_limits():
    s = _specs(2, k=9, shape=(2, 2))
    with pytest.raises(ValueError, match="too large"):
        align_permutation(s, s)
    with pytest.raises(ValueError):
        align_permutation(s[:2], s[:3])


def test_align_by_delays():
    true = np.array([[0, 0.01], [0, -0.02], [0, 0.03]])
    assert align_by_delays(true, true[[2, 0, 1]]) == (1, 2, 0)


# ---- TDOA RMSE -----------------------------------------------------------------


def test_rmse_examples():
    d = np.array([[0, 0.01], [0, -0.02]])
    assert tdoa_rmse(d, d) == 0.0
    assert tdoa_rmse([[0, 0.003], [0, 0.0]], [[0, 0.0], [0, 0.004]]) == pytest.approx(math.sqrt(12.5) * 1e-3, rel=1e-12)
    assert tdoa_rmse([[0, 0.005]], [[0, 0.0]]) == pytest.approx(0.005, rel=1e-12)


@given(st.floats(-0.01, 0.01), st.integers(0, 2), st.integers(1, 2))
def test_rmse_perturbation_bound(delta, k, ell):
    rng = np.random.default_rng(0)
    true = np.c_[np.zeros(3), rng.uniform(-0.1, 0.1, (3, 2))]
    est = true + np.c_[np.zeros(3), rng.uniform(-0.01, 0.01, (3, 2))]
    moved = est.copy()
    moved[k, ell] += delta
    assert abs(tdoa_rmse(true, moved) - tdoa_rmse(true, est)) <= abs(delta) + 1e-15


def test_rmse_uses_permutation():
    true = np.array([[0, 0.01], [0, -0.02]])
    assert tdoa_rmse(true, true[::-1], (1, 0)) == 0.0


# ---- spectrogram error -------------------------------------------------------------


def test_spec_err_examples():
    s = _specs(3)
    assert spectrogram_error(s, s) == 0.0
    assert spectrogram_error(s, [np.zeros_like(x) for x in s]) == 1.0
    assert spectrogram_error(s, [2 * x for x in s]) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError, match="zero norm"):
        spectrogram_error([np.zeros((2, 2))], [np.ones((2, 2))])


@given(st.permutations(range(3)))
def test_metrics_invariant_to_estimate_order(perm):
    s = _specs(4)
    rng = np.random.default_rng(5)
    est = [x + 0.1 * rng.uniform(0, 1, x.shape) for x in s]
    shuffled = [est[p] for p in perm]
    p_hat = align_permutation(s, shuffled)
    assert spectrogram_error(s, shuffled, p_hat) == pytest.approx(spectrogram_error(s, est), rel=1e-12)


# ---- SDR ---------------------------------------------------------------------------


def test_delta_sdr_examples():
    rng = np.random.default_rng(6)
    s = rng.standard_normal((2, 500))
    mix = s.sum(axis=0)
    np.testing.assert_allclose(delta_sdr(s, [mix, mix], mix), 0.0, atol=1e-12)
    half = s[0] + (mix - s[0]) / math.sqrt(2)
    assert delta_sdr(s[:1], [half], mix)[0] == pytest.approx(10 * math.log10(2), abs=1e-9)
    assert delta_sdr(s, s, mix)[0] == math.inf
    assert mean_delta_sdr([1.0, math.inf]) == math.inf
    assert mean_delta_sdr([1.0, 3.0]) == 2.0


def test_delta_sdr_permutation_and_checks():
    rng = np.random.default_rng(7)
    s = rng.standard_normal((2, 300))
    est = s[::-1] + 0.1
    mix = s.sum(axis=0)
    np.testing.assert_allclose(delta_sdr(s, est, mix, (1, 0)), delta_sdr(s, est[::-1], mix))
    with pytest.raises(ValueError):
        delta_sdr(s, est[:, :10], mix)
