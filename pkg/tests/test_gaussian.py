import math

import numpy as np
import pytest

from sinkbridge.clouds import PointCloud
from sinkbridge.gaussian import (
    GaussianBridgeDrift,
    GaussianPair,
    cross_covariance,
    gaussian_bridge_drift,
    gaussian_bridge_marginal,
    random_spd,
    sample_gaussian,
)
from sinkbridge.sde import SdeConfig, marginal_at, simulate

from oracles import grid_sinkhorn_drift_1d


def _pair_1d(s0_sq, s1_sq, eps):
    return GaussianPair(
        np.zeros(1), np.zeros(1), s0_sq * np.eye(1), s1_sq * np.eye(1), eps
    )


def test_pair_validation():
    with pytest.raises(ValueError):
        GaussianPair(np.zeros(2), np.zeros(3), np.eye(2), np.eye(2), 1.0)
    with pytest.raises(ValueError):
        GaussianPair(np.zeros(2), np.zeros(2), np.eye(2), -np.eye(2), 1.0)
    with pytest.raises(ValueError):
        GaussianPair(np.zeros(2), np.zeros(2), np.eye(2), np.eye(2), 0.0)
    bad = np.array([[1.0, 0.5], [0.0, 1.0]])
    with pytest.raises(ValueError):
        GaussianPair(np.zeros(2), np.zeros(2), bad, np.eye(2), 1.0)


def test_json_round_trip():
    rng = np.random.default_rng(0)
    pair = GaussianPair(
        rng.standard_normal(3), rng.standard_normal(3),
        random_spd(3, 1), random_spd(3, 2), 0.37,
    )
    back = GaussianPair.from_json(pair.to_json())
    np.testing.assert_array_equal(back.mean0, pair.mean0)
    np.testing.assert_array_equal(back.cov1, pair.cov1)
    assert back.epsilon == pair.epsilon


def test_cross_covariance_first_order_condition():
    # the optimal C satisfies eps * cov0^{-1} C = cov1 - C^T cov0^{-1} C
    for seed in range(3):
        pair = GaussianPair(
            np.zeros(3), np.zeros(3), random_spd(3, seed), random_spd(3, seed + 10), 0.3
        )
        c = cross_covariance(pair)
        inv0 = np.linalg.inv(pair.cov0)
        lhs = pair.epsilon * inv0 @ c
        rhs = pair.cov1 - c.T @ inv0 @ c
        np.testing.assert_allclose(lhs, rhs, atol=1e-10)


def test_cross_covariance_1d_closed_form():
    # scalar case: C(C + eps) = s0^2 s1^2
    pair = _pair_1d(1.0, 2.0, 0.1)
    c = float(cross_covariance(pair)[0, 0])
    assert c * (c + 0.1) == pytest.approx(2.0, abs=1e-12)


def test_marginal_boundary_conditions():
    rng = np.random.default_rng(1)
    pair = GaussianPair(
        rng.standard_normal(3), rng.standard_normal(3),
        random_spd(3, 3), random_spd(3, 4), 0.5,
    )
    m0, c0 = gaussian_bridge_marginal(pair, 0.0)
    np.testing.assert_allclose(m0, pair.mean0, atol=1e-12)
    np.testing.assert_allclose(c0, pair.cov0, atol=1e-10)
    m1, c1 = gaussian_bridge_marginal(pair, 1.0)
    np.testing.assert_allclose(m1, pair.mean1, atol=1e-12)
    np.testing.assert_allclose(c1, pair.cov1, atol=1e-10)


def test_drift_symmetric_instance_zero_at_origin():
    pair = _pair_1d(1.5, 1.5, 0.2)
    np.testing.assert_allclose(gaussian_bridge_drift(pair, np.zeros(1), 0.4), 0.0, atol=1e-12)


def test_drift_is_affine():
    rng = np.random.default_rng(2)
    pair = GaussianPair(
        rng.standard_normal(2), rng.standard_normal(2),
        random_spd(2, 5), random_spd(2, 6), 0.4,
    )
    z1 = rng.standard_normal(2)
    z2 = rng.standard_normal(2)
    for alpha in (0.0, 0.3, 1.0, 1.7):
        mix = alpha * z1 + (1 - alpha) * z2
        expect = alpha * gaussian_bridge_drift(pair, z1, 0.6) + (1 - alpha) * (
            gaussian_bridge_drift(pair, z2, 0.6)
        )
        np.testing.assert_allclose(gaussian_bridge_drift(pair, mix, 0.6), expect, atol=1e-10)


def test_drift_time_range():
    pair = _pair_1d(1.0, 1.0, 1.0)
    gaussian_bridge_drift(pair, np.zeros(1), 0.0)
    with pytest.raises(ValueError):
        gaussian_bridge_drift(pair, np.zeros(1), 1.0)


def test_drift_matches_grid_sinkhorn_oracle():
    # independent cross-check of the transcribed closed form (1-D)
    pair = _pair_1d(1.0, 2.0, 0.1)
    cf = float(gaussian_bridge_drift(pair, np.array([0.7]), 0.3)[0])
    grid = grid_sinkhorn_drift_1d(1.0, math.sqrt(2.0), 0.1, 0.7, 0.3, n_grid=801)
    assert abs(cf - grid) <= 1e-3


def test_simulation_reproduces_marginal_moments():
    pair = _pair_1d(1.0, 2.0, 0.1)
    field = GaussianBridgeDrift(pair)
    n = 20_000
    rng = np.random.default_rng(7)
    init = PointCloud(rng.standard_normal((n, 1)))
    cfg = SdeConfig(tau=0.5, steps=200, epsilon=0.1, seed=3)
    batch = simulate(field, init, cfg, n_paths=n, initial_sampler=lambda k, g: init.points[:k])
    mean_t, cov_t = gaussian_bridge_marginal(pair, 0.5)
    pts = marginal_at(batch, 0.5).points
    se_mean = math.sqrt(cov_t[0, 0] / n)
    assert abs(float(pts.mean()) - mean_t[0]) <= 3 * se_mean
    # variance standard error ~ var * sqrt(2/(n-1))
    se_var = cov_t[0, 0] * math.sqrt(2.0 / (n - 1))
    assert abs(float(pts.var()) - cov_t[0, 0]) <= 3 * se_var + 0.01


def test_sampler_moments():
    pair = GaussianPair(np.zeros(2), np.zeros(2), np.eye(2), np.diag([1.0, 4.0]), 1.0)
    cloud = sample_gaussian(pair, "target", 100_000, seed=5)
    np.testing.assert_allclose(cloud.points.mean(axis=0), 0.0, atol=4 * 2 / math.sqrt(100_000))
    np.testing.assert_allclose(cloud.points.var(axis=0), [1.0, 4.0], rtol=0.1)


def test_sampler_seed_reproducible():
    pair = _pair_1d(1.0, 1.0, 1.0)
    a = sample_gaussian(pair, "source", 1, seed=9)
    b = sample_gaussian(pair, "source", 1, seed=9)
    np.testing.assert_array_equal(a.points, b.points)


def test_sampler_side_validation():
    pair = _pair_1d(1.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        sample_gaussian(pair, "middle", 3, seed=0)


def test_random_spd_spectrum():
    for seed in range(5):
        b = random_spd(4, seed, eig_range=(0.5, 2.0))
        np.testing.assert_allclose(b, b.T, atol=1e-12)
        eig = np.linalg.eigvalsh(b)
        assert np.all(eig >= 0.5 - 1e-10)
        assert np.all(eig <= 2.0 + 1e-10)
