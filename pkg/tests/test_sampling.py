import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import grid_scan_root
from privamp.kmeans import LloydConfig, lloyd_profile
from privamp.privacy import power_profile
from privamp.sampling import (
    DataStats,
    SamplerSpec,
    WeightedDataset,
    data_stats,
    draw,
    estimate_objective,
    make_coreset,
    make_full,
    make_optimal,
    make_uniform,
    point_uniforms,
)


def centered(n=100, d=3, seed=0):
    X = np.random.default_rng(seed).normal(size=(n, d))
    return X - X.mean(axis=0)


class TestWeightedDataset:
    def test_rejects_small_weights(self):
        with pytest.raises(ValueError, match=">= 1"):
            WeightedDataset([0.5], [[1.0]])

    def test_shape_checks(self):
        with pytest.raises(ValueError):
            WeightedDataset([1.0, 2.0], [[1.0]])
        with pytest.raises(ValueError):
            WeightedDataset([1.0], [1.0])

    def test_iteration(self):
        data = WeightedDataset([1.0, 2.0], [[1.0, 0.0], [0.0, 1.0]])
        assert data.dimension == 2 and len(data) == 2
        assert [w for w, _ in data] == [1.0, 2.0]


class TestUniform:
    def test_full_rate(self):
        assert make_uniform(10, 10)(np.zeros(2)) == 1.0

    def test_paper_scale(self):
        assert make_uniform(49_990, 5000)(np.zeros(22)) == pytest.approx(5000 / 49_990)
        assert make_uniform(49_990, 5000)(np.zeros(22)) == pytest.approx(0.10002, abs=1e-5)

    @pytest.mark.parametrize("m", [0, 101])
    def test_rejects(self, m):
        with pytest.raises(ValueError):
            make_uniform(100, m)

    def test_m_equals_n_draws_everything(self):
        X = centered(20)
        out = draw(make_uniform(20, 20), X, 7)
        assert out.realized_size == 20 and np.all(out.items.weights == 1.0)


class TestCoreset:
    def test_lambda_one_is_uniform(self):
        X = centered()
        stats = data_stats(X)
        np.testing.assert_array_equal(make_coreset(stats, 30, 1.0).probabilities(X),
                                      make_uniform(stats.n, 30).probabilities(X))

    def test_balances_at_mean_norm(self):
        stats = DataStats(n=1000, d=2, radius=5.0, mean_norm=2.0)
        assert make_coreset(stats, 100, 0.5)(np.array([1.0, -1.0])) == pytest.approx(0.1)

    def test_plug_in(self):
        stats = DataStats(n=1000, d=2, radius=5.0, mean_norm=2.0)
        assert make_coreset(stats, 100, 0.5)(np.array([2.5, -2.5])) == pytest.approx(0.175)

    def test_expected_size_is_m(self):
        X = centered(200)
        spec = make_coreset(data_stats(X), 20, 0.3)
        assert spec.probabilities(X).sum() == pytest.approx(20.0, rel=1e-12)

    def test_precondition(self):
        stats = DataStats(n=1000, d=2, radius=5.0, mean_norm=2.0)
        with pytest.raises(ValueError, match="exceeds"):
            make_coreset(stats, 401, 0.5)

    def test_boundary_rate_is_one(self):
        stats = DataStats(n=1000, d=2, radius=5.0, mean_norm=2.0)
        spec = make_coreset(stats, 400, 0.0)
        assert spec(np.array([5.0, 0.0])) == 1.0

    def test_uncentered_rejected(self):
        X = centered() + 0.1
        with pytest.raises(ValueError, match="centered"):
            make_coreset(data_stats(X), 10, 0.5)

    def test_zero_probability_points_never_drawn(self):
        X = np.array([[0.0, 0.0], [1.0, 0.0], [-1.0, 0.0]])
        spec = make_coreset(data_stats(X), 1, 0.0)
        for seed in range(200):
            assert 0 not in draw(spec, X, seed).indices


class TestDraw:
    def test_full(self):
        X = centered(30)
        out = draw(make_full(30), X, 123)
        np.testing.assert_array_equal(out.items.points, X)
        assert np.all(out.items.weights == 1.0)

    def test_deterministic(self):
        X = centered()
        spec = make_uniform(100, 40)
        a, b = draw(spec, X, 5), draw(spec, X, 5)
        np.testing.assert_array_equal(a.indices, b.indices)
        assert a.items.weights.tobytes() == b.items.weights.tobytes()

    def test_weights_are_exact_reciprocals(self):
        X = centered()
        spec = make_coreset(data_stats(X), 25, 0.5)
        out = draw(spec, X, 11)
        q = spec.probabilities(X)[out.indices]
        assert out.items.weights.tobytes() == (1.0 / q).tobytes()

    def test_counter_based_slices(self):
        full = point_uniforms(99, 50)
        for start in (0, 1, 3, 4, 17):
            np.testing.assert_array_equal(point_uniforms(99, 10, start=start), full[start : start + 10])

    def test_bad_probability_reports_row(self):
        spec = SamplerSpec("uniform", lambda X: np.array([0.5, 1.5]), expected_size=2.0, m=2.0)
        with pytest.raises(ValueError, match="row 1"):
            draw(spec, np.zeros((2, 1)), 0)

    def test_expected_size_binomial(self):
        X = centered(5000, 2)
        spec = make_uniform(5000, 500)
        sizes = np.array([draw(spec, X, s).realized_size for s in range(2000)])
        sigma = math.sqrt(500 * 0.9)
        assert abs(sizes.mean() - 500) <= 3 * sigma / math.sqrt(len(sizes))


class TestOptimal:
    def test_single_point_pow2(self):
        prof = power_profile(lambda x: math.log(2.0), 1.0)
        spec = make_optimal(prof, np.zeros((1, 1)), math.log(3.0))
        assert spec(np.zeros(1)) == pytest.approx(1 / 2.659861177919182, rel=1e-8)
        assert spec(np.zeros(1)) == pytest.approx(0.376, abs=5e-4)

    def test_max_point_sits_at_one(self):
        prof = power_profile(lambda x: float(np.abs(x).sum()), 1.0)
        X = np.array([[0.2], [0.5], [1.0]])
        spec = make_optimal(prof, X, 1.0)
        assert spec(np.array([1.0])) == 1.0

    def test_small_norm_gets_smaller_rate(self):
        cfg = LloydConfig(k=2, T=10, beta_sum=4.0, beta_count=6.0, r=1.0)
        X = np.array([[0.0, 0.0], [0.5, -0.5]])
        eps_star = cfg.per_point_rate(1.0)
        spec = make_optimal(lloyd_profile(cfg), X, eps_star)
        q = spec.probabilities(X)
        assert q[0] < q[1]
        oracle = grid_scan_root(lambda w: cfg.per_point_rate(0.0) * w, eps_star, 10.0)
        assert 1 / q[0] == pytest.approx(oracle, rel=1e-5)

    def test_unseen_rows_solved_on_demand(self):
        cfg = LloydConfig(k=2, T=1, beta_sum=4.0, beta_count=6.0, r=1.0)
        X = np.array([[0.1, 0.2]])
        spec = make_optimal(lloyd_profile(cfg), X, cfg.per_point_rate(1.0))
        a = spec(np.array([0.3, 0.3]))
        other = make_optimal(lloyd_profile(cfg), np.array([[0.3, 0.3]]), cfg.per_point_rate(1.0))
        assert a == other(np.array([0.3, 0.3]))

    def test_amplified_loss_within_target(self):
        cfg = LloydConfig(k=2, T=10, beta_sum=4.0, beta_count=6.0, r=1.0)
        X = centered(50, 2)
        X /= np.abs(X).sum(axis=1).max()
        eps_star = cfg.per_point_rate(1.0)
        spec = make_optimal(lloyd_profile(cfg), X, eps_star)
        q = spec.probabilities(X)
        psi = np.log1p(q * np.expm1(cfg.per_point_rate(np.abs(X).sum(axis=1)) / q))
        assert psi.max() <= eps_star + 1e-9


class TestEstimate:
    def test_full_is_exact(self):
        X = centered(40)
        out = draw(make_full(40), X, 0)
        loss = lambda x: float(x @ x)
        assert estimate_objective(out, loss) == pytest.approx(sum(loss(x) for x in X), rel=1e-12)

    def test_empty(self):
        empty = WeightedDataset(np.ones(0), np.empty((0, 2)))
        assert estimate_objective(empty, lambda x: 1.0) == 0.0

    def test_vectorized_matches_loop(self):
        X = centered()
        out = draw(make_uniform(100, 30), X, 3)
        a = estimate_objective(out, lambda x: float(np.abs(x).sum()))
        b = estimate_objective(out, lambda Y: np.abs(Y).sum(axis=1), vectorized=True)
        assert a == pytest.approx(b, rel=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**63 - 1), st.floats(0.0, 1.0))
    def test_weights_at_least_one(self, seed, lam):
        X = centered(60)
        stats = data_stats(X)
        m = max(1, int(stats.n * stats.mean_norm / stats.radius))
        out = draw(make_coreset(stats, m, lam), X, seed)
        assert np.all(out.items.weights >= 1.0)
