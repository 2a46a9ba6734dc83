import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlinmix.errors import DimensionError, InputError
from nonlinmix.evaluation import (
    TrialReport,
    aligned_mse,
    composite_affinity,
    composite_curves,
    data_domain,
    empirical_cdf,
    linear_map_from_affine,
    network_curves,
    simplex_projection_2d,
)
from nonlinmix.feasibility import balancing_vector
from nonlinmix.mixture import NonlinearSpec, apply_model, generate_mixing_matrix, sample_dirichlet
from nonlinmix.network import NetworkParams, random_params


def brute(S_hat, S):
    r = S.shape[0]
    return min(np.sum((S_hat[list(p)] - S) ** 2) / S.size for p in itertools.permutations(range(r)))


class TestAlignedMSE:
    def test_identical(self):
        S = np.random.default_rng(0).random((4, 10))
        mse, perm = aligned_mse(S, S)
        assert mse == 0.0 and perm == [0, 1, 2, 3]

    def test_permuted(self):
        S = np.random.default_rng(1).random((4, 10))
        p = [2, 0, 3, 1]
        mse, perm = aligned_mse(S[p], S)
        assert mse == 0.0
        assert np.array_equal(S[p][perm], S)
        assert perm == list(np.argsort(p))

    def test_brute_force_oracle(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            S, S_hat = rng.random((4, 10)), rng.random((4, 10))
            assert aligned_mse(S_hat, S)[0] == pytest.approx(brute(S_hat, S), rel=1e-14)

    def test_hungarian_branch(self):
        rng = np.random.default_rng(3)
        S = rng.random((9, 6))
        S_hat = S[rng.permutation(9)] + 0.3 * rng.random((9, 6))
        mse, perm = aligned_mse(S_hat, S)
        assert mse == pytest.approx(brute(S_hat, S), rel=1e-12)
        assert sorted(perm) == list(range(9))

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            aligned_mse(np.ones((3, 4)), np.ones((4, 4)))

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 6), st.integers(1, 12), st.integers(0, 2**31 - 1))
    def test_permutation_invariance(self, r, N, seed):
        rng = np.random.default_rng(seed)
        S, S_hat = rng.random((r, N)), rng.random((r, N))
        P = rng.permutation(r)
        mse = aligned_mse(S_hat, S)[0]
        assert aligned_mse(S_hat[P], S)[0] == mse
        assert mse >= 0


class TestCDF:
    def test_single(self):
        assert empirical_cdf([1]) == [(1.0, 1.0)]

    def test_rank_over_n(self):
        pts = dict(empirical_cdf([3, 1, 4, 2]))
        assert pts[2.0] == 0.5 and pts[4.0] == 1.0

    def test_log10(self):
        pts = empirical_cdf([1e-6, 1e-2], log10=True)
        assert pts == [(-6.0, 0.5), (-2.0, 1.0)]
        assert empirical_cdf([0.0], log10=True)[0][0] == -300.0

    def test_uniform_draws(self):
        v = np.random.default_rng(4).random(100)
        x, F = np.array(empirical_cdf(v)).T
        assert np.abs(F - x).max() <= 0.15

    def test_errors(self):
        with pytest.raises(InputError):
            empirical_cdf([])
        with pytest.raises(InputError):
            empirical_cdf([-1.0], log10=True)


class TestCompositeAffinity:
    def test_affine_network_identity_phi(self):
        b = 1e-6
        p = NetworkParams(np.full((3, 1), 2.0 / b), np.full((3, 1), b), np.zeros((3, 1)),
                          np.array([[0.1], [0.2], [-0.3]]), 3)
        fit = composite_affinity(p, NonlinearSpec.uniform("identity", 3), [(0.0, 1.0)] * 3)
        np.testing.assert_allclose(fit.r_squared, 1.0, atol=1e-12)
        np.testing.assert_allclose(fit.slopes, 2.0, rtol=1e-9)
        np.testing.assert_allclose(fit.intercepts, [0.1, 0.2, -0.3], atol=1e-9)

    def test_analytic_inverse_exp(self):
        d = np.array([0.5, -1.25, 2.0])
        b = np.array([0.1, 0.0, -0.4])
        f = lambda X: d[:, None] * np.log(X) + b[:, None]  # noqa: E731
        fit = composite_affinity(f, NonlinearSpec.uniform("exp", 3), [(-1.0, 2.0)] * 3)
        np.testing.assert_allclose(fit.slopes, d, atol=1e-8)
        np.testing.assert_allclose(fit.intercepts, b, atol=1e-8)
        np.testing.assert_allclose(fit.r_squared, 1.0, atol=1e-12)
        assert fit.max_deviation <= 1e-12

    def test_linear_map_relates_data(self):
        # f_i = d_i phi_i^{-1} + b_i satisfying the sum-to-one criterion gives f(X) = W A S
        A = generate_mixing_matrix(6, 3, 1).A
        b = np.array([0.05, -0.02, 0.01, 0.0, 0.03, -0.01])
        d = (1 - b.sum()) * balancing_vector(A).d
        S = sample_dirichlet([1.0] * 3, 50, 1).S
        phi = NonlinearSpec.uniform("softplus", 6)
        X = apply_model(A, S, phi).X
        f = lambda Z: d[:, None] * phi.invert(Z) + b[:, None]  # noqa: E731
        np.testing.assert_allclose(f(X).sum(axis=0), 1.0, atol=1e-10)
        fit = composite_affinity(f, phi, data_domain(X, phi))
        np.testing.assert_allclose(fit.W @ A @ S, f(X), atol=1e-8)
        assert abs(np.linalg.det(fit.W)) > 1e-12

    def test_undefined_W(self):
        assert linear_map_from_affine([1.0, 2.0], [0.5, 0.5]) is None
        assert linear_map_from_affine([1.0, 2.0], [0.5, 0.4]) is not None

    def test_validation(self):
        rng = np.random.default_rng(0)
        p = random_params(rng.random((2, 5)), 2, rng)
        with pytest.raises(DimensionError):
            composite_affinity(p, NonlinearSpec.uniform("identity", 3), [(0, 1)] * 3)
        with pytest.raises(InputError):
            composite_affinity(p, NonlinearSpec.uniform("identity", 2), [(0, 1)] * 2, n_samples=5)

    def test_curves(self):
        rng = np.random.default_rng(1)
        p = random_params(rng.random((2, 5)), 3, rng)
        C = composite_curves(p, NonlinearSpec(("sqrt", "exp")), -1.0, 1.0, n=11)
        assert C.shape == (11, 3)
        # sqrt is undefined for t < 0
        assert np.all(np.isnan(C[:5, 1])) and not np.any(np.isnan(C[5:, 1]))
        assert not np.any(np.isnan(C[:, 2]))
        F = network_curves(p, 0.0, 1.0, n=7)
        assert F.shape == (7, 3) and np.all(np.diff(F[:, 1:], axis=0) > 0)


class TestProjection:
    def test_vertices(self):
        P = simplex_projection_2d(np.eye(3))
        np.testing.assert_allclose(P, [[0, 0], [1, 0], [0.5, np.sqrt(3) / 2]], atol=1e-15)

    def test_barycenter(self):
        P = simplex_projection_2d(np.full((3, 1), 1 / 3))
        np.testing.assert_allclose(P[0], [0.5, np.sqrt(3) / 6], atol=1e-15)

    def test_inside_triangle(self):
        S = np.random.default_rng(2).dirichlet([1, 1, 1], 200).T
        x, y = simplex_projection_2d(S).T
        assert np.all(y >= -1e-15)
        assert np.all(y <= np.sqrt(3) * x + 1e-12)
        assert np.all(y <= np.sqrt(3) * (1 - x) + 1e-12)

    def test_wrong_rank(self):
        with pytest.raises(DimensionError):
            simplex_projection_2d(np.ones((4, 2)) / 4)


def test_trial_report_rejects_negative():
    with pytest.raises(InputError):
        TrialReport("exp", 0, 1, -1.0, 0.1, 0.0, True)
    rep = TrialReport("exp", 0, 1, None, 0.1, None, False, "failed")
    assert rep.to_json()["error"] == "failed"
