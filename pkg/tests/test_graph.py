import numpy as np
import pytest

from conftest import random_class_attr
from dagda.errors import DimensionError, DomainError, IsolatedNodeError, NegativeWeightError
from dagda.graph import (
    build_graph,
    closed_form_diffusion,
    diffusion_objective,
    diffusion_objective_grad,
    diffusion_objective_trace,
    spectral_radius_estimate,
    truncated_diffusion,
)
from dagda.numerics import make_rng

SWAP = np.array([[0.0, 1.0], [1.0, 0.0]])


def power_sum(S, alpha, p, X):
    """sum_k (alpha S)^k X by building each power explicitly."""
    total = np.zeros_like(X)
    P = np.eye(S.shape[0])
    for _ in range(p + 1):
        total = total + P @ X
        P = P @ (alpha * S)
    return total


class TestBuildGraph:
    def test_two_node_graph(self):
        g = build_graph([[1.0]])
        assert np.array_equal(g.adjacency, SWAP)
        assert np.array_equal(g.degrees, [1.0, 1.0])
        assert np.array_equal(g.norm_adj, SWAP)

    def test_weight_cancels_in_normalisation(self):
        assert np.allclose(build_graph([[2.0]]).norm_adj, SWAP, atol=1e-15)

    def test_block_structure(self, small_C):
        g = build_graph(small_C)
        dc, dt = small_C.shape
        A = g.adjacency
        assert np.array_equal(A, A.T)
        assert not A[:dc, :dc].any() and not A[dc:, dc:].any()
        assert np.array_equal(A[:dc, dc:], small_C)
        assert np.array_equal(A[dc:, :dc], small_C.T)
        assert np.all(g.degrees > 0)
        assert g.features is g.adjacency

    def test_normalized_adjacency(self, small_C):
        g = build_graph(small_C)
        D = np.diag(g.degrees ** -0.5)
        assert np.allclose(g.norm_adj, D @ g.adjacency @ D, rtol=1e-14, atol=0)
        assert np.array_equal(g.norm_adj, g.norm_adj.T)

    def test_spectral_radius_at_most_one(self):
        rng = make_rng(5)
        for _ in range(10):
            g = build_graph(random_class_attr(rng, rng.integers(2, 10), rng.integers(2, 10)))
            assert spectral_radius_estimate(g.norm_adj) <= 1.0 + 1e-9

    def test_zero_column_is_isolated(self):
        with pytest.raises(IsolatedNodeError, match="attribute 1"):
            build_graph([[1.0, 0.0], [2.0, 0.0]])

    def test_zero_row_is_isolated(self):
        with pytest.raises(IsolatedNodeError, match="class 0"):
            build_graph([[0.0, 0.0], [2.0, 1.0]])

    def test_negative_entry_reports_coordinates(self):
        with pytest.raises(NegativeWeightError, match=r"\(1, 0\)"):
            build_graph([[1.0, 1.0], [-1.0, 1.0]])

    def test_graph_is_immutable(self, small_C):
        g = build_graph(small_C)
        with pytest.raises(ValueError):
            g.norm_adj[0, 0] = 1.0


class TestTruncatedDiffusion:
    def test_alpha_zero_is_identity(self, small_C, rng):
        g = build_graph(small_C)
        X = rng.standard_normal((g.num_nodes, 3))
        assert np.array_equal(truncated_diffusion(g, 0.0, 5, X), X)

    def test_order_zero_is_identity(self, small_C, rng):
        g = build_graph(small_C)
        X = rng.standard_normal((g.num_nodes, 3))
        assert np.array_equal(truncated_diffusion(g, 0.7, 0, X), X)

    def test_two_node_case(self):
        out = truncated_diffusion(build_graph([[1.0]]), 0.5, 2, np.eye(2))
        assert np.allclose(out, [[1.25, 0.5], [0.5, 1.25]], rtol=0, atol=1e-15)

    def test_matches_power_sum(self):
        rng = make_rng(9)
        for _ in range(20):
            g = build_graph(random_class_attr(rng, rng.integers(1, 13), rng.integers(1, 13)))
            X = rng.standard_normal((g.num_nodes, 4))
            for p in range(7):
                ref = power_sum(g.norm_adj, 0.6, p, X)
                got = truncated_diffusion(g, 0.6, p, X)
                assert np.max(np.abs(got - ref)) <= 1e-12 * np.max(np.abs(ref))

    def test_domain_and_shape_errors(self, small_C):
        g = build_graph(small_C)
        X = np.ones((g.num_nodes, 2))
        for bad in (-0.1, 1.0, 1.5):
            with pytest.raises(DomainError):
                truncated_diffusion(g, bad, 2, X)
        with pytest.raises(DimensionError):
            truncated_diffusion(g, 0.5, 2, np.ones((g.num_nodes + 1, 2)))

    def test_class_permutation_equivariance(self, small_C, rng):
        g = build_graph(small_C)
        dc = small_C.shape[0]
        perm = rng.permutation(dc)
        node_perm = np.concatenate([perm, np.arange(dc, g.num_nodes)])
        gp = build_graph(small_C[perm])
        X = rng.standard_normal((g.num_nodes, 3))
        out = truncated_diffusion(g, 0.8, 3, X)
        out_p = truncated_diffusion(gp, 0.8, 3, X[node_perm])
        assert np.allclose(out_p, out[node_perm], rtol=1e-13, atol=1e-13)


class TestClosedForm:
    def test_small_alpha_returns_features(self, small_C, rng):
        g = build_graph(small_C)
        F = rng.standard_normal((g.num_nodes, 3))
        H = closed_form_diffusion(g, 1e-6, F)
        assert np.linalg.norm(H - F) < 1e-4 * np.linalg.norm(F)

    def test_two_node_case(self):
        H = closed_form_diffusion(build_graph([[1.0]]), 0.5, np.eye(2))
        assert np.allclose(H, [[2 / 3, 1 / 3], [1 / 3, 2 / 3]], rtol=0, atol=1e-15)

    def test_zeroes_objective_gradient(self):
        rng = make_rng(17)
        for _ in range(10):
            g = build_graph(random_class_attr(rng, rng.integers(1, 9), rng.integers(1, 9)))
            F = g.features
            for alpha in (0.3, 0.8):
                H = closed_form_diffusion(g, alpha, F)
                mu = (1 - alpha) / alpha
                assert np.linalg.norm(diffusion_objective_grad(g, mu, H, F)) < 1e-8

    def test_domain(self, small_C):
        g = build_graph(small_C)
        with pytest.raises(DomainError):
            closed_form_diffusion(g, 0.0, g.features)

    def test_truncation_converges_to_closed_form(self, small_C):
        g = build_graph(small_C)
        F = g.features
        exact = closed_form_diffusion(g, 0.8, F)
        errs = [np.linalg.norm(0.2 * truncated_diffusion(g, 0.8, p, F) - exact) for p in range(0, 81, 10)]
        assert all(b < a for a, b in zip(errs, errs[1:]))
        assert errs[-1] < 1e-6


class TestObjective:
    def test_pairwise_equals_trace(self):
        rng = make_rng(23)
        for _ in range(10):
            g = build_graph(random_class_attr(rng, rng.integers(1, 8), rng.integers(1, 8)))
            H = rng.standard_normal((g.num_nodes, 3))
            F = rng.standard_normal((g.num_nodes, 3))
            a = diffusion_objective(g, 0.7, H, F)
            b = diffusion_objective_trace(g, 0.7, H, F)
            assert abs(a - b) <= 1e-9 * abs(b)

    def test_degree_scaled_constant_rows_are_smooth(self, small_C):
        g = build_graph(small_C)
        H = np.sqrt(g.degrees)[:, None] * np.array([[1.0, -2.0]])
        assert diffusion_objective(g, 3.0, H, H) == pytest.approx(0.0, abs=1e-12)

    def test_fit_term_vanishes_at_features(self, small_C, rng):
        g = build_graph(small_C)
        H = rng.standard_normal((g.num_nodes, 2))
        assert diffusion_objective(g, 5.0, H, H) == diffusion_objective(g, 0.0, H, H)

    def test_gradient_matches_finite_differences(self, small_C, rng):
        from dagda.numerics import grad_check

        g = build_graph(small_C)
        H = rng.standard_normal((g.num_nodes, 2))
        F = rng.standard_normal((g.num_nodes, 2))
        err = grad_check(lambda ps: diffusion_objective_trace(g, 0.4, ps[0], F), [H],
                         [diffusion_objective_grad(g, 0.4, H, F)])
        assert err < 1e-7

    def test_shape_mismatch(self, small_C):
        g = build_graph(small_C)
        with pytest.raises(DimensionError):
            diffusion_objective(g, 1.0, np.ones((g.num_nodes, 2)), np.ones((g.num_nodes, 3)))
