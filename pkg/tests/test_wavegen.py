import math

import numpy as np
import pytest

from distana.wavegen import (
    NoiseInjector,
    WaveConfig,
    add_noise,
    dataset_digest,
    laplacian,
    leapfrog,
    make_dataset,
    measured_snr,
    rmsa,
    simulate_wave,
)


def test_zero_amplitude_is_all_zero():
    seq = simulate_wave(WaveConfig(amplitude=0.0, length=20))
    assert seq.shape == (20, 16, 16)
    assert not seq.any()


def test_raw_update_is_linear_in_amplitude():
    a = simulate_wave(WaveConfig(amplitude=1.0, normalize=False, source=(5.3, 9.1)))
    b = simulate_wave(WaveConfig(amplitude=2.0, normalize=False, source=(5.3, 9.1)))
    np.testing.assert_allclose(b, 2 * a, rtol=1e-12, atol=1e-15)


def test_three_by_three_impulse_one_step():
    # u1 = 2 u0 - u0 + 0.25 * lap(u0); cells outside the grid are zero
    u0 = np.zeros((3, 3))
    u0[1, 1] = 1.0
    u1 = leapfrog(u0, 2, 0.5)[1]
    assert u1[1, 1] == pytest.approx(0.0, abs=1e-15)
    for r, c in [(0, 1), (1, 0), (1, 2), (2, 1)]:
        assert u1[r, c] == pytest.approx(0.25)
    for r, c in [(0, 0), (0, 2), (2, 0), (2, 2)]:
        assert u1[r, c] == 0.0


def test_laplacian_of_constant_interior():
    lap = laplacian(np.ones((4, 4)))
    assert lap[1, 1] == 0.0
    assert lap[0, 0] == -2.0


def test_cfl_violation_rejected():
    with pytest.raises(ValueError, match="CFL"):
        WaveConfig(courant=0.75)


def test_source_must_be_inside():
    with pytest.raises(ValueError):
        WaveConfig(source=(0.0, 5.0))


def test_normalized_peak_is_one():
    seq = simulate_wave(WaveConfig(source=(11.2, 12.7), length=60))
    assert np.abs(seq).max() == pytest.approx(1.0)


def test_rmsa_values():
    assert rmsa(np.full((2, 3, 3), 2.0)) == pytest.approx(2.0)
    assert rmsa(np.zeros((1, 2, 2))) == 0.0
    assert rmsa(np.array([3.0, 4.0]).reshape(2, 1, 1)) == pytest.approx(math.sqrt(12.5))


def test_near_noise_free():
    seq = simulate_wave(WaveConfig(length=40, source=(4.5, 6.5)))
    noisy = add_noise(seq, 1e5, seed=0)
    assert np.std(noisy - seq) < 1e-4 * rmsa(seq)


@pytest.mark.parametrize("snr", [0.25, 4.0, 100.0])
def test_noise_hits_target_snr(snr):
    seq = simulate_wave(WaveConfig(length=150, source=(10.1, 3.4)))
    noisy = add_noise(seq, snr, seed=7)
    assert measured_snr(seq, noisy) == pytest.approx(snr, rel=0.01)


def test_noise_is_seeded():
    seq = simulate_wave(WaveConfig(length=10))
    assert np.array_equal(add_noise(seq, 2.0, seed=5), add_noise(seq, 2.0, seed=5))
    assert not np.array_equal(add_noise(seq, 2.0, seed=5), add_noise(seq, 2.0, seed=6))


def test_zero_power_signal_rejected():
    with pytest.raises(ValueError):
        add_noise(np.zeros((3, 4, 4)), 1.0, seed=0)


def test_dataset_shapes():
    assert make_dataset(100, WaveConfig(length=40), seed=0).shape == (100, 40, 16, 16)
    assert make_dataset(20, WaveConfig(length=150), seed=1).shape == (20, 150, 16, 16)


def test_dataset_is_reproducible():
    a = make_dataset(3, WaveConfig(length=12), seed=9)
    b = make_dataset(3, WaveConfig(length=12), seed=9)
    assert dataset_digest(a) == dataset_digest(b)
    assert dataset_digest(a) != dataset_digest(make_dataset(3, WaveConfig(length=12), seed=10))


def test_mirror_symmetry():
    cfg = WaveConfig(length=80, source=(6.0, 3.25))
    mirrored = WaveConfig(length=80, source=(6.0, 16 - 1 - 3.25))
    np.testing.assert_allclose(simulate_wave(mirrored), simulate_wave(cfg)[:, :, ::-1], atol=1e-12)


def test_energy_stays_bounded():
    seq = simulate_wave(WaveConfig(length=300, courant=1 / math.sqrt(2), source=(7.7, 8.2)))
    energy = (seq**2).sum(axis=(1, 2))
    assert np.all(np.isfinite(energy))
    assert energy.max() <= 2 * energy[0]


def test_probe_trace_silent_until_arrival():
    seq = simulate_wave(WaveConfig(length=150, source=(12.0, 12.0)))
    trace = seq[:, 3, 3]
    # the 4-point stencil moves information one Manhattan step per frame;
    # the two frames before arrival carry only the Gaussian tail
    arrival = (12 - 3) + (12 - 3)
    assert np.abs(trace[: arrival - 2]).max() < 1e-9
    assert np.abs(trace[arrival:]).max() > 0.05


def test_noise_injector_estimator():
    X = make_dataset(2, WaveConfig(length=40), seed=2)
    inj = NoiseInjector(snr=4.0, random_state=3)
    out = inj.fit_transform(X)
    assert out.shape == X.shape
    for clean, noisy in zip(X, out):
        assert measured_snr(clean, noisy) == pytest.approx(4.0, rel=0.05)
    assert inj.get_params() == {"snr": 4.0, "random_state": 3}
