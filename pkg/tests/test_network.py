import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nonlinmix.errors import DimensionError, InvariantError
from nonlinmix.network import (
    NetworkParams,
    derivative,
    forward,
    jacobian,
    objective,
    random_params,
    residual_and_jacobian,
    sum_residual,
    transform,
)


def single(alpha, beta, gamma, delta):
    return NetworkParams([alpha], [beta], [gamma], [delta], 1)


class TestForward:
    def test_origin(self):
        assert forward(single([1.0], [1.0], [0.0], [0.0]), 0.0, 0) == 0.0

    def test_intercept(self):
        assert forward(single([1.0], [1.0], [0.0], [0.5]), 0.0, 0) == 0.5

    def test_closed_form(self):
        p = single([0.3, 2.0], [1.5, 0.2], [0.1, -1.0], [0.25, -0.05])
        x = 0.7
        want = 0.3 * np.tanh(1.5 * x + 0.1) + 2.0 * np.tanh(0.2 * x - 1.0) + 0.2
        assert forward(p, x, 0) == pytest.approx(want, abs=1e-15)

    def test_monotone_sweep(self):
        rng = np.random.default_rng(0)
        p = single(rng.uniform(0.1, 2, 2), rng.uniform(0.1, 2, 2), rng.normal(size=2), rng.normal(size=2))
        x = rng.uniform(-5, 5, 1000)
        assert np.all(forward(p, x + 0.1, 0) > forward(p, x, 0))
        assert np.all(derivative(p, x, 0) > 0)

    def test_rejects_nonpositive(self):
        with pytest.raises(InvariantError):
            forward(single([1.0], [0.0], [0.0], [0.0]), 1.0, 0)
        with pytest.raises(InvariantError):
            forward(single([-1.0], [1.0], [0.0], [0.0]), 1.0, 0)

    def test_feature_range(self):
        with pytest.raises(DimensionError):
            forward(single([1.0], [1.0], [0.0], [0.0]), 1.0, 1)

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.floats(1e-3, 10), min_size=3, max_size=3),
        st.lists(st.floats(1e-3, 10), min_size=3, max_size=3),
        st.lists(st.floats(-5, 5), min_size=3, max_size=3),
        st.floats(-3, 3),
        st.floats(1e-3, 1.0),
    )
    def test_strictly_increasing(self, a, b, c, x, dx):
        p = single(a, b, c, [0.0, 0.0, 0.0])
        # increments are bounded below by the smallest slope on [x, x + dx]
        assert forward(p, x + dx, 0) > forward(p, x, 0) or np.all(np.abs(np.array(b) * x + c) > 15)


class TestResidual:
    def test_degenerate_constant_solution(self):
        M, K = 5, 4
        X = np.random.default_rng(1).uniform(0, 3, (M, 50))
        eps = 1e-6
        p = NetworkParams(np.full((M, K), eps), np.full((M, K), eps), np.zeros((M, K)),
                          np.full((M, K), 1.0 / (M * K)), M)
        assert np.abs(sum_residual(p, X)).max() <= 1e-9

    def test_sum_to_one_data(self):
        # f(x) ~ x for small beta: alpha * beta = 1
        X = np.random.default_rng(2).dirichlet([1, 1, 1], 20).T
        b = 1e-4
        p = NetworkParams(np.full((3, 1), 1 / b), np.full((3, 1), b), np.zeros((3, 1)), np.zeros((3, 1)), 3)
        assert np.abs(sum_residual(p, X)).max() <= 1e-7

    def test_scalar_recomputation(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(4, 3))
        p = random_params(X, 3, rng)
        r = sum_residual(p, X)
        for j in range(3):
            assert r[j] == pytest.approx(1 - sum(forward(p, X[i, j], i) for i in range(4)), abs=1e-14)
        assert objective(p, X) == pytest.approx(np.mean(r ** 2), rel=1e-14)

    def test_shared_matches_unshared_copy(self):
        rng = np.random.default_rng(4)
        X = rng.normal(size=(3, 8))
        p = random_params(X, 4, rng, shared=True)
        q = NetworkParams(*(np.repeat(getattr(p, n), 3, axis=0) for n in ("alpha", "beta", "gamma", "delta")), 3)
        np.testing.assert_allclose(transform(p, X), transform(q, X), rtol=1e-14)
        np.testing.assert_allclose(sum_residual(p, X), sum_residual(q, X), atol=1e-14)

    def test_residual_only_path(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(3, 8))
        for shared in (False, True):
            p = random_params(X, 4, rng, shared=shared)
            r, J = residual_and_jacobian(p, X, with_jacobian=False)
            assert J is None
            np.testing.assert_allclose(r, sum_residual(p, X), atol=1e-14)


class TestJacobian:
    @pytest.mark.parametrize("shared", [False, True])
    def test_finite_differences(self, shared):
        rng = np.random.default_rng(6)
        M, K, N = 4, 5, 10
        X = rng.uniform(-1, 2, (M, N))
        p = random_params(X, K, rng, shared=shared)
        theta = p.to_vector()
        J = jacobian(p, X)
        h = 1e-6
        for j in range(theta.size):
            tp, tm = theta.copy(), theta.copy()
            tp[j] += h
            tm[j] -= h
            fd = (sum_residual(NetworkParams.from_vector(tp, M, K, shared), X)
                  - sum_residual(NetworkParams.from_vector(tm, M, K, shared), X)) / (2 * h)
            assert np.abs(fd - J[:, j]).max() <= 1e-5 * max(1.0, np.abs(J[:, j]).max())

    def test_delta_columns(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(3, 6))
        p = random_params(X, 2, rng)
        J = jacobian(p, X).reshape(6, 3, 4, 2)
        assert np.all(J[:, :, 3] == -1.0)
        ps = random_params(X, 2, rng, shared=True)
        assert np.all(jacobian(ps, X).reshape(6, 4, 2)[:, 3] == -3.0)

    def test_shared_width(self):
        rng = np.random.default_rng(8)
        for M in (2, 5, 9):
            X = rng.normal(size=(M, 4))
            assert jacobian(random_params(X, 6, rng, shared=True), X).shape == (4, 24)
            assert jacobian(random_params(X, 6, rng), X).shape == (4, 24 * M)


class TestParams:
    def test_vector_round_trip(self):
        rng = np.random.default_rng(9)
        p = random_params(rng.normal(size=(3, 5)), 4, rng)
        q = NetworkParams.from_vector(p.to_vector(), 3, 4)
        for n in ("alpha", "beta", "gamma", "delta"):
            assert np.array_equal(getattr(p, n), getattr(q, n))

    def test_json_round_trip(self):
        rng = np.random.default_rng(10)
        for shared in (False, True):
            p = random_params(rng.normal(size=(3, 5)), 4, rng, shared=shared)
            q = NetworkParams.from_json(json.loads(json.dumps(p.to_json())))
            assert q.shared == shared and q.n_features == 3
            assert np.array_equal(p.to_vector(), q.to_vector())

    def test_immutable(self):
        p = single([1.0], [1.0], [0.0], [0.0])
        with pytest.raises(ValueError):
            p.alpha[0, 0] = 2.0

    def test_bad_sizes(self):
        with pytest.raises(DimensionError):
            NetworkParams.from_vector(np.ones(7), 2, 1)
        with pytest.raises(DimensionError):
            NetworkParams(np.ones((2, 3)), np.ones((2, 3)), np.ones((2, 3)), np.ones((2, 2)), 2)

    def test_lower_bounds_layout(self):
        p = single([1.0, 1.0], [1.0, 1.0], [0.0, 0.0], [0.0, 0.0])
        lb = p.lower_bounds(1e-6)
        np.testing.assert_array_equal(lb, [1e-6, 1e-6, 1e-6, 1e-6, -np.inf, -np.inf, -np.inf, -np.inf])

    def test_random_params_start_near_one(self):
        rng = np.random.default_rng(11)
        X = rng.uniform(0, 1, (6, 40))
        p = random_params(X, 10, rng)
        p.validate(1e-6)
        assert np.allclose(p.delta.sum(), 1.0)
