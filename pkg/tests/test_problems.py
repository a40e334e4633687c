"""
Tests for synthetic problems, gradient oracles and reference optima

Usage:
    pytest tests/test_problems.py -v -s
"""

import numpy as np
import pytest

from app.models import ProblemKind, ProblemSpec, Regularizer, RegularizerKind
from app.problems import (
    Dataset,
    ProblemConstants,
    build_problem,
    estimate_constants,
    estimate_gradient_variance,
    export_dataset,
    full_gradient,
    global_gradient,
    import_dataset,
    local_loss,
    loss,
    nonconvex_surrogate,
    objective,
    partition,
    prox,
    reference_optimum,
    stochastic_gradient,
    synthesize_logistic,
    synthesize_ridge,
)
from app.rng import StreamPurpose, random_stream


class TestPartition:
    """Row sharding"""

    def test_shards_are_contiguous_and_balanced(self):
        dataset, shards, _, _ = synthesize_ridge(23, 4, 5, 0.1, 0.1, seed=0)
        sizes = [shard.rows for shard in shards]
        assert sum(sizes) == 23
        assert max(sizes) - min(sizes) <= 1
        assert shards[0].start == 0 and shards[-1].stop == 23
        for left, right in zip(shards, shards[1:]):
            assert left.stop == right.start
        print(f"✓ shard sizes: {sizes}")

    def test_more_workers_than_rows_is_rejected(self):
        dataset, _, _, _ = synthesize_ridge(6, 3, 2, 0.1, 0.1, seed=0)
        with pytest.raises(ValueError):
            partition(dataset, 7)


class TestDataset:
    """Dataset validation"""

    def test_non_finite_entries_are_rejected(self):
        with pytest.raises(ValueError, match="NaN or Inf"):
            Dataset(ProblemKind.ridge, np.array([[1.0, np.nan]]), np.array([0.0]))

    def test_logistic_targets_must_be_signs(self):
        with pytest.raises(ValueError, match="±1"):
            Dataset(ProblemKind.logistic, np.ones((2, 2)), np.array([1.0, 0.0]))

    def test_arrays_are_read_only(self):
        dataset = Dataset(ProblemKind.ridge, np.ones((3, 2)), np.zeros(3))
        with pytest.raises(ValueError):
            dataset.features[0, 0] = 5.0

    def test_csv_export_import(self, tmp_path):
        dataset, _ = synthesize_logistic(30, 4, 3, l2=0.01, seed=2)
        path = export_dataset(dataset, tmp_path / "data.csv")
        loaded = import_dataset(path, ProblemKind.logistic, l2=0.01)
        assert np.array_equal(loaded.features, dataset.features)
        assert np.array_equal(loaded.targets, dataset.targets)

    def test_import_rejects_bad_header(self, tmp_path):
        path = tmp_path / "bad.csv"
        path.write_text("label,a\n1,2\n")
        with pytest.raises(ValueError, match="header"):
            import_dataset(path, ProblemKind.ridge)


class TestOracles:
    """Losses and gradients"""

    @pytest.fixture
    def ridge(self):
        return synthesize_ridge(40, 6, 4, 0.2, 0.3, seed=1, normalize=False)

    def test_unnormalized_average_matches_global_least_squares(self, ridge):
        dataset, shards, _, _ = ridge
        x = np.linspace(-1.0, 1.0, 6)
        A, b = dataset.features, dataset.targets
        expected = 2.0 * A.T @ (A @ x - b) + 2.0 * 0.3 * x
        assert np.allclose(global_gradient(shards, x), expected, rtol=1e-12, atol=1e-10)
        assert loss(shards, x) == pytest.approx(float((A @ x - b) @ (A @ x - b)) + 0.3 * float(x @ x))

    def test_gradient_matches_finite_differences(self):
        dataset, shards = nonconvex_surrogate(30, 5, 3, lambda_nc=0.5, seed=4)
        x = np.array([0.3, -0.2, 0.1, 0.5, -0.4])
        step = 1e-6
        numeric = np.array([
            (local_loss(shards[1], x + step * e) - local_loss(shards[1], x - step * e)) / (2 * step)
            for e in np.eye(5)
        ])
        assert np.allclose(full_gradient(shards[1], x), numeric, atol=1e-6)

    def test_full_batch_returns_exact_gradient(self, ridge):
        _, shards, _, _ = ridge
        x = np.ones(6)
        rng = random_stream(0, StreamPurpose.gradient, node=0)
        assert np.array_equal(stochastic_gradient(shards[0], x, shards[0].rows, rng), full_gradient(shards[0], x))

    def test_minibatch_gradient_is_unbiased(self, ridge):
        _, shards, _, _ = ridge
        x = np.ones(6)
        rng = random_stream(0, StreamPurpose.gradient, node=0)
        draws = np.array([stochastic_gradient(shards[0], x, 3, rng) for _ in range(20_000)])
        exact = full_gradient(shards[0], x)
        standard_error = draws.std(axis=0) / np.sqrt(len(draws))
        assert np.all(np.abs(draws.mean(axis=0) - exact) <= 5 * standard_error + 1e-9)

    def test_batch_size_out_of_range(self, ridge):
        _, shards, _, _ = ridge
        rng = random_stream(0, StreamPurpose.gradient)
        with pytest.raises(ValueError):
            stochastic_gradient(shards[0], np.ones(6), shards[0].rows + 1, rng)

    def test_gradient_variance_estimate(self, ridge):
        _, shards, _, _ = ridge
        assert estimate_gradient_variance(shards, np.zeros(6), shards[0].rows, seed=0) == 0.0
        assert estimate_gradient_variance(shards, np.zeros(6), 2, seed=0, draws=200) > 0.0

    def test_dimension_mismatch(self, ridge):
        _, shards, _, _ = ridge
        with pytest.raises(ValueError):
            full_gradient(shards[0], np.ones(5))


class TestProx:
    """Proximal operators"""

    def test_soft_threshold(self):
        reg = Regularizer(kind=RegularizerKind.l1, lam=0.5)
        result = prox(reg, 2.0, np.array([3.0, -0.5, 1.0, -2.5]))
        assert np.allclose(result, [2.0, 0.0, 0.0, -1.5])

    def test_l2_shrink(self):
        reg = Regularizer(kind=RegularizerKind.l2, lam=0.25)
        assert np.allclose(prox(reg, 2.0, np.array([2.0, -4.0])), [1.0, -2.0])

    def test_none_is_identity(self):
        v = np.array([1.0, 2.0])
        assert np.array_equal(prox(Regularizer(), 1.0, v), v)

    def test_gamma_must_be_positive(self):
        with pytest.raises(ValueError):
            prox(Regularizer(), 0.0, np.ones(2))


class TestConstants:
    """Smoothness and strong convexity estimates"""

    def test_ridge_constants_match_dense_eigenvalues(self):
        _, shards, constants, _ = synthesize_ridge(60, 5, 3, 0.1, 0.2, seed=5)
        largest = []
        smallest = []
        for shard in shards:
            hessian = 2.0 * shard.features.T @ shard.features / shard.rows + 0.4 * np.eye(5)
            eigenvalues = np.linalg.eigvalsh(hessian)
            largest.append(eigenvalues[-1])
            smallest.append(eigenvalues[0])
        assert constants.L == pytest.approx(max(largest), rel=1e-5)
        assert constants.mu == pytest.approx(min(smallest), rel=1e-5)

    def test_wide_shards_fall_back_to_l2_curvature(self):
        _, shards, constants, _ = synthesize_ridge(20, 10, 4, 0.1, 1.0, seed=0)
        assert constants.mu == pytest.approx(2.0)

    def test_nonconvex_surrogate_has_no_strong_convexity(self):
        _, shards = nonconvex_surrogate(40, 4, 2, lambda_nc=0.1, seed=0)
        constants = estimate_constants(shards, Regularizer())
        assert constants.mu == 0.0
        assert constants.L > 0.2

    def test_l2_regularizer_adds_curvature(self):
        _, shards = synthesize_logistic(40, 4, 2, l2=0.0, seed=0)
        plain = estimate_constants(shards, Regularizer())
        curved = estimate_constants(shards, Regularizer(kind=RegularizerKind.l2, lam=0.5))
        assert curved.L == pytest.approx(plain.L + 1.0)
        assert curved.mu == pytest.approx(plain.mu + 1.0)

    def test_ridge_is_strongly_convex_with_the_estimated_mu(self):
        _, shards, constants, _ = synthesize_ridge(60, 5, 3, 0.1, 0.2, seed=5)
        assert constants.mu > 0
        rng = np.random.default_rng(9)
        for _ in range(200):
            x, y = 3.0 * rng.standard_normal((2, 5))
            gap = y - x
            for value, gradient in (
                (lambda z: loss(shards, z), lambda z: global_gradient(shards, z)),
                (lambda z: local_loss(shards[2], z), lambda z: full_gradient(shards[2], z)),
            ):
                lower = value(x) + gradient(x) @ gap + 0.5 * constants.mu * float(gap @ gap)
                assert value(y) >= lower - 1e-9 * (1.0 + abs(value(y)))
        print(f"✓ 200 random pairs respect mu={constants.mu:.4f}")

    def test_nonconvex_penalty_is_bounded(self):
        lambda_nc = 0.5
        _, nonconvex = nonconvex_surrogate(30, 5, 3, lambda_nc=lambda_nc, seed=2)
        _, plain = synthesize_logistic(30, 5, 3, l2=0.0, seed=2)
        rng = np.random.default_rng(4)
        for scale in (0.1, 1.0, 10.0, 100.0):
            for x in scale * rng.standard_normal((20, 5)):
                penalty = loss(nonconvex, x) - loss(plain, x)
                assert penalty == pytest.approx(lambda_nc * np.sum(x * x / (1.0 + x * x)), rel=1e-6, abs=1e-9)
                assert penalty <= lambda_nc * 5 + 1e-9

    def test_invalid_constants(self):
        with pytest.raises(ValueError):
            ProblemConstants(L=1.0, mu=2.0)
        with pytest.raises(ValueError):
            ProblemConstants(L=0.0, mu=0.0)


class TestReferenceOptimum:
    """High-precision minimizers"""

    def test_ridge_solution_zeroes_the_gradient(self):
        _, shards, _, x_star = synthesize_ridge(50, 8, 5, 0.1, 0.1, seed=3)
        assert np.linalg.norm(global_gradient(shards, x_star)) <= 1e-10

    def test_l1_solution_is_a_prox_fixed_point(self):
        _, shards, constants, _ = synthesize_ridge(50, 8, 5, 0.1, 0.1, seed=3)
        reg = Regularizer(kind=RegularizerKind.l1, lam=0.05)
        x_star = reference_optimum(shards, reg)
        step = 1.0 / constants.L
        fixed_point = prox(reg, step, x_star - step * global_gradient(shards, x_star))
        assert np.allclose(fixed_point, x_star, atol=1e-9)
        nearby = x_star + 1e-3
        assert objective(shards, reg, nearby) > objective(shards, reg, x_star)

    def test_logistic_newton_solution(self):
        _, shards = synthesize_logistic(80, 4, 4, l2=0.05, seed=6)
        x_star = reference_optimum(shards, Regularizer())
        assert np.linalg.norm(global_gradient(shards, x_star)) <= 1e-9

    def test_nonconvex_has_no_reference(self):
        _, shards = nonconvex_surrogate(40, 4, 2, lambda_nc=0.1, seed=0)
        assert reference_optimum(shards, Regularizer()) is None


class TestBuildProblem:
    """Cached problem bundles"""

    def test_bundle_is_cached_and_read_only(self):
        spec = ProblemSpec(kind=ProblemKind.ridge, m=24, d=5, noise_std=0.1, l2=0.5, data_seed=9)
        first = build_problem(spec, 3, Regularizer())
        second = build_problem(spec, 3, Regularizer())
        assert first is second
        assert not first.x_star.flags.writeable
        assert all(not grad.flags.writeable for grad in first.grad_star)
        assert first.n_workers == 3 and first.d == 5

    def test_local_gradients_at_optimum_average_to_zero(self):
        spec = ProblemSpec(kind=ProblemKind.ridge, m=24, d=5, noise_std=0.1, l2=0.5, data_seed=9)
        problem = build_problem(spec, 3, Regularizer())
        assert np.linalg.norm(np.mean(problem.grad_star, axis=0)) <= 1e-10
        assert max(np.linalg.norm(grad) for grad in problem.grad_star) > 1e-3

    def test_minibatch_problem_estimates_sigma(self):
        spec = ProblemSpec(kind=ProblemKind.logistic, m=60, d=4, l2=0.01, data_seed=1)
        problem = build_problem(spec, 3, Regularizer(), batch_size=4)
        assert problem.constants.sigma_sq > 0.0
