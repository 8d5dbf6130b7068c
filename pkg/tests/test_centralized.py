from __future__ import annotations

import numpy as np
import pytest

from app.filters import CentralizedGPF, CentralizedPF, GaussianBelief, LinearDynamics, ParticleSet, cpf_step, stream_rng
from app.filters.centralized import STREAM_PREDICT

Q_DRIVE = 0.1
R_NOISE = 0.5


def _random_walk():
    return LinearDynamics(np.eye(1), np.eye(1), Q_DRIVE)


def _gaussian_jlf(z):
    z0 = float(np.ravel(z)[0])
    return lambda x: -0.5 * (z0 - x[:, 0]) ** 2 / R_NOISE


def _kalman(zs, m0=0.0, p0=1.0):
    m, p = m0, p0
    means, variances = [], []
    for z in zs:
        p = p + Q_DRIVE
        gain = p / (p + R_NOISE)
        m = m + gain * (z - m)
        p = (1.0 - gain) * p
        means.append(m)
        variances.append(p)
    return np.array(means), np.array(variances)


@pytest.fixture
def walk_measurements(rng):
    x, zs = 0.0 + rng.normal(), []
    for _ in range(50):
        x += np.sqrt(Q_DRIVE) * rng.normal()
        zs.append(x + np.sqrt(R_NOISE) * rng.normal())
    return np.array(zs)


@pytest.mark.parametrize("cls", [CentralizedPF, CentralizedGPF])
def test_tracks_kalman_filter_on_linear_gaussian_model(cls, walk_measurements):
    J = 5000
    tracker = cls(_random_walk(), _gaussian_jlf, J, seed=3)
    tracker.initialize(GaussianBelief(np.zeros(1), np.eye(1)))
    est = np.array([tracker.step(n, np.array([z]))[0, 0] for n, z in enumerate(walk_measurements, start=1)])
    kf_mean, kf_var = _kalman(walk_measurements)
    # Monte Carlo error of the weighted mean
    tol = 5.0 * np.sqrt(2.0 * kf_var / J)
    assert (np.abs(est - kf_mean) <= tol).all()
    assert not tracker.diverged


def test_flat_likelihood_only_predicts():
    tracker = CentralizedGPF(_random_walk(), lambda z: (lambda x: np.zeros(x.shape[0])), 20_000, seed=1)
    tracker.initialize(GaussianBelief(np.array([2.0]), np.eye(1)))
    for n in range(1, 11):
        est = tracker.step(n, np.zeros(1))
    assert est.shape == (1, 1)
    assert abs(est[0, 0] - 2.0) <= 0.15
    assert tracker.belief.cov[0, 0] == pytest.approx(1.0 + 10 * Q_DRIVE, rel=0.1)


def test_zero_likelihood_resets_weights_and_flags():
    tracker = CentralizedPF(_random_walk(), lambda z: (lambda x: np.full(x.shape[0], -np.inf)), 50, seed=2)
    tracker.initialize(GaussianBelief(np.zeros(1), np.eye(1)))
    est = tracker.step(1, np.zeros(1))
    assert tracker.diverged
    np.testing.assert_allclose(tracker.particles.weights, 1 / 50)
    assert np.isfinite(est).all()


def test_step_requires_initialize():
    with pytest.raises(RuntimeError):
        CentralizedPF(_random_walk(), _gaussian_jlf, 10, seed=0).step(1, np.zeros(1))
    with pytest.raises(ValueError):
        CentralizedGPF(_random_walk(), _gaussian_jlf, 0, seed=0)


def test_cpf_step_matches_tracker():
    prior = GaussianBelief(np.zeros(1), np.eye(1))
    tracker = CentralizedPF(_random_walk(), _gaussian_jlf, 200, seed=9)
    tracker.initialize(prior)
    start = ParticleSet(tracker.particles.particles.copy(), tracker.particles.weights.copy())
    _, est = cpf_step(start, _random_walk(), _gaussian_jlf(np.array([0.7])), stream_rng(9, STREAM_PREDICT, 0, 1))
    np.testing.assert_allclose(tracker.step(1, np.array([0.7]))[0], est)
