import math

import numpy as np
import pytest

from sinkbridge.clouds import EotProblem, PointCloud
from sinkbridge.drift import (
    BrownianBridgeSampler,
    DriftField,
    markovian_projection_oracle,
    softmax,
)
from sinkbridge.sinkhorn import (
    StoppingRule,
    coupling_density,
    hilbert_metric,
    run_sinkhorn,
)


def _field(targets, g, eps=1.0, tau_max=0.99):
    return DriftField(PointCloud(np.asarray(targets, float)), np.asarray(g, float), eps, tau_max)


# ------------------------------------------------------------ bridge weights


def test_single_target_weight_is_one():
    f = _field([[2.0, 1.0]], [0.7])
    w = f.bridge_weights(np.array([0.3, -0.2]), 0.4).weights
    np.testing.assert_allclose(w, [1.0])


def test_symmetric_targets_split_evenly():
    f = _field([-1.0, 1.0], [0.0, 0.0])
    w = f.bridge_weights(np.array([0.0]), 0.3).weights
    np.testing.assert_allclose(w, [0.5, 0.5], atol=1e-12)


def test_weights_hand_value():
    # targets {0, 1}, g = 0, z = 0, t = 0, eps = 1 -> weights proportional to (1, e^{-1/2})
    f = _field([0.0, 1.0], [0.0, 0.0])
    w = f.bridge_weights(np.array([0.0]), 0.0).weights
    expect = np.array([1.0, math.exp(-0.5)])
    np.testing.assert_allclose(w, expect / expect.sum(), atol=1e-12)


def test_weights_sum_to_one_under_extreme_logits():
    rng = np.random.default_rng(0)
    for _ in range(20):
        lw = rng.uniform(-1e6, 1e6, 30)
        w = softmax(lw)
        assert np.all(w >= 0)
        assert np.sum(w) == pytest.approx(1.0, abs=1e-12)


def test_time_range_enforced():
    f = _field([0.0], [0.0], tau_max=0.9)
    with pytest.raises(ValueError):
        f.bridge_weights(np.array([0.0]), 0.95)
    with pytest.raises(ValueError):
        f.drift(np.array([0.0]), -0.01)
    f.drift(np.array([0.0]), 0.0)  # t = 0 is fine
    f.drift(np.array([0.0]), 0.9)  # boundary is fine


# -------------------------------------------------------------------- drift


def test_single_target_drift_formula():
    y = np.array([1.5, -2.0])
    f = _field([y], [3.3])
    z = np.array([0.5, 0.5])
    for t in (0.0, 0.3, 0.8):
        np.testing.assert_allclose(f.drift(z, t), (y - z) / (1 - t), atol=1e-12)


def test_symmetric_drift_vanishes_at_origin():
    f = _field([[-2.0, 0.0], [2.0, 0.0]], [0.4, 0.4])
    np.testing.assert_allclose(f.drift(np.zeros(2), 0.5), 0.0, atol=1e-12)


def test_drift_shift_invariance():
    rng = np.random.default_rng(1)
    targets = rng.standard_normal((8, 3))
    g = rng.standard_normal(8)
    z = rng.standard_normal(3)
    base = _field(targets, g).drift(z, 0.4)
    for c in (-5.0, 0.01, 42.0):
        shifted = _field(targets, g + c).drift(z, 0.4)
        np.testing.assert_allclose(shifted, base, atol=1e-12)


def test_drift_batch_matches_loop():
    rng = np.random.default_rng(2)
    targets = rng.standard_normal((6, 2))
    g = rng.standard_normal(6)
    f = _field(targets, g)
    zs = rng.standard_normal((5, 2))
    batch = f.drift(zs, 0.2)
    for i in range(5):
        np.testing.assert_allclose(batch[i], f.drift(zs[i], 0.2), atol=1e-12)


def test_drift_stays_in_target_hull():
    rng = np.random.default_rng(3)
    targets = rng.standard_normal((10, 3))
    g = rng.standard_normal(10)
    f = _field(targets, g)
    max_norm = float(np.max(np.linalg.norm(targets, axis=1)))
    for _ in range(50):
        z = 3.0 * rng.standard_normal(3)
        t = float(rng.uniform(0, 0.99))
        avg = (1 - t) * f.drift(z, t) + z
        assert np.linalg.norm(avg) <= max_norm + 1e-9


def test_field_csv_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    f = _field(rng.standard_normal((7, 2)), rng.standard_normal(7), eps=0.3)
    path = tmp_path / "field.csv"
    f.to_csv(path)
    back = DriftField.from_csv(path, epsilon=0.3)
    np.testing.assert_array_equal(back.targets.points, f.targets.points)
    np.testing.assert_array_equal(back.g, f.g)


def test_field_validates_lengths():
    with pytest.raises(ValueError):
        _field([[0.0], [1.0]], [0.0])


# -------------------------------------------------- softmax Lipschitz lemma


def test_softmax_lipschitz_lemma():
    rng = np.random.default_rng(5)
    violations = 0
    for _ in range(10_000):
        n = int(rng.integers(2, 51))
        lam = float(rng.uniform(0.1, 10.0))
        x = rng.uniform(-5, 5, n)
        y = rng.uniform(-5, 5, n)
        lhs = np.sum(np.abs(softmax(lam * x) - softmax(lam * y)))
        rhs = lam * np.max(np.abs(x - y))
        if lhs > rhs + 1e-12:
            violations += 1
    assert violations == 0


def test_l1_bounded_by_half_hilbert():
    rng = np.random.default_rng(6)
    violations = 0
    for _ in range(10_000):
        n = int(rng.integers(2, 30))
        u = rng.uniform(0.01, 1.0, n)
        u /= u.sum()
        w = rng.uniform(0.01, 1.0, n)
        w /= w.sum()
        if np.sum(np.abs(u - w)) > 0.5 * hilbert_metric(u, w) + 1e-12:
            violations += 1
    assert violations == 0


def test_hilbert_elementwise_product_invariance():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        n = int(rng.integers(2, 20))
        u = rng.uniform(0.01, 5.0, n)
        w = rng.uniform(0.01, 5.0, n)
        c = rng.uniform(0.01, 5.0, n)
        assert hilbert_metric(c * u, c * w) == pytest.approx(hilbert_metric(u, w))
        assert hilbert_metric(u, w) == pytest.approx(hilbert_metric(w, u))


# --------------------------------------------------- brownian bridge sampler


def test_bridge_sampler_zero_volatility_exact():
    s = BrownianBridgeSampler(0.0, np.random.default_rng(0))
    x0 = np.array([1.0, 2.0])
    x1 = np.array([3.0, -2.0])
    np.testing.assert_array_equal(s.sample(x0, x1, 0.25), 0.75 * x0 + 0.25 * x1)


def test_bridge_sampler_moments():
    s = BrownianBridgeSampler(1.0, np.random.default_rng(1))
    n = 100_000
    zeros = np.zeros((n, 2))
    draws = s.sample(zeros, zeros, 0.5)
    sigma = math.sqrt(0.25)
    assert np.all(np.abs(draws.mean(axis=0)) < 4 * sigma / math.sqrt(n))
    np.testing.assert_allclose(draws.var(axis=0), 0.25, rtol=0.05)


def test_bridge_sampler_time_symmetry():
    # the marginal at t from (x0, x1) matches the marginal at 1-t from (x1, x0)
    x0 = np.array([1.0])
    x1 = np.array([5.0])
    a = BrownianBridgeSampler(0.7, np.random.default_rng(2)).sample(x0, x1, 0.3)
    b = BrownianBridgeSampler(0.7, np.random.default_rng(2)).sample(x1, x0, 0.7)
    np.testing.assert_allclose(a, b, atol=1e-12)


def test_bridge_sampler_rejects_boundary_times():
    s = BrownianBridgeSampler(1.0, np.random.default_rng(3))
    with pytest.raises(ValueError):
        s.sample(np.zeros(1), np.zeros(1), 0.0)
    with pytest.raises(ValueError):
        s.sample(np.zeros(1), np.zeros(1), 1.0)


# ------------------------------------------------ markovian projection oracle


def test_oracle_single_pair_exact():
    source = PointCloud(np.array([[0.0, 0.0]]))
    targets = PointCloud(np.array([[2.0, 2.0]]))
    z = np.array([0.5, 0.5])
    est = markovian_projection_oracle(
        np.array([[1.0]]), source, targets, 0.5, z, 0.5, 500,
        np.random.default_rng(0),
    )
    np.testing.assert_allclose(est.estimate, (targets.points[0] - z) / 0.5, atol=1e-12)
    np.testing.assert_allclose(est.std_error, 0.0, atol=1e-12)


def test_oracle_symmetric_instance_near_zero():
    source = PointCloud(np.array([[0.0]]))
    targets = PointCloud(np.array([[-1.0], [1.0]]))
    est = markovian_projection_oracle(
        np.array([[0.5, 0.5]]), source, targets, 1.0, np.array([0.0]), 0.5, 20_000,
        np.random.default_rng(1),
    )
    assert abs(est.estimate[0]) <= 3 * max(est.std_error[0], 1e-12)


def test_oracle_agrees_with_drift_eval():
    rng = np.random.default_rng(2)
    hits, total = 0, 0
    for seed in range(5):
        r = np.random.default_rng(seed)
        src = PointCloud(r.uniform(-1, 1, (4, 2)))
        tgt = PointCloud(r.uniform(-1, 1, (5, 2)))
        eps = 0.5
        prob = EotProblem(src, tgt, eps)
        pot, _ = run_sinkhorn(prob, StoppingRule(marginal_tol=1e-12))
        mass = coupling_density(prob, pot) / 20.0
        field = DriftField(tgt, pot.g, eps)
        for _ in range(4):
            z = r.uniform(-1, 1, 2)
            t = float(r.uniform(0.2, 0.8))
            est = markovian_projection_oracle(
                mass, src, tgt, eps, z, t, 20_000, np.random.default_rng(seed + 100)
            )
            ref = field.drift(z, t)
            total += 1
            if np.all(np.abs(est.estimate - ref) <= 3 * np.maximum(est.std_error, 1e-9)):
                hits += 1
    assert hits / total >= 0.95


def test_oracle_degenerate_flag():
    # probe near the bridge of a rare cell at small volatility: nearly all
    # importance weight lands on the handful of draws from that cell
    source = PointCloud(np.array([[0.0], [10.0]]))
    targets = PointCloud(np.array([[0.0], [10.0]]))
    mass = np.array([[0.97, 0.01], [0.01, 0.01]])
    est = markovian_projection_oracle(
        mass, source, targets, 0.01, np.array([10.0]), 0.5, 500,
        np.random.default_rng(3),
    )
    assert est.degenerate


def test_oracle_validates_coupling():
    source = PointCloud(np.array([[0.0]]))
    targets = PointCloud(np.array([[1.0]]))
    with pytest.raises(ValueError):
        markovian_projection_oracle(
            np.array([[0.5]]), source, targets, 1.0, np.array([0.0]), 0.5, 10,
            np.random.default_rng(0),
        )
