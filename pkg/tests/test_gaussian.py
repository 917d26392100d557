import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfourier import montecarlo
from qfourier.errors import ArgumentError, CapacityError, PreconditionError
from qfourier.fourier import pauli_basis
from qfourier.gaussian import (
    CorrelatedGaussianSource,
    GaussianPolynomial,
    QuadraticPolynomial,
    RandomOperator,
    ReducedFunction,
    correlated_inner_product,
    degree_bound_test,
    expected_chi,
    hermite_1d,
    hermite_eval,
    hypercontractivity_test,
    multilinear_truncate,
    np_norm_estimate,
    ornstein_uhlenbeck,
    random_multilinear_operator,
    random_multilinear_polynomial,
    sample_random_operator,
    variable_split,
)

import oracles

seeds = st.integers(0, 2**31 - 1)
P = pauli_basis()


def g1_sigma_x():
    return RandomOperator(1, 1, P, {1: GaussianPolynomial.variable(1, 0)})


def random_sparse(rng, n_vars, max_deg=3, n_terms=5):
    items = []
    for _ in range(n_terms):
        sig = [0] * n_vars
        for _ in range(int(rng.integers(0, max_deg + 1))):
            sig[int(rng.integers(n_vars))] += 1
        if sum(sig) <= max_deg:
            items.append((sig, rng.standard_normal()))
    return GaussianPolynomial.from_sigmas(n_vars, items)


class TestHermite:
    def test_examples(self):
        assert hermite_eval((0,), [3.7]) == 1
        assert hermite_eval((1,), [2.5]) == 2.5
        assert hermite_eval((2,), [1.0]) == pytest.approx(0)

    @pytest.mark.parametrize("r", range(9))
    def test_matches_numpy_series(self, r):
        x = np.linspace(-4, 4, 41)
        assert np.allclose(hermite_1d(r, x), oracles.normalized_hermite(r, x), atol=1e-10)

    def test_orthonormality(self):
        x = np.random.default_rng(0).standard_normal(10**6)
        table = np.stack([hermite_1d(r, x) for r in range(4)])
        gram = table @ table.T / x.size
        se = np.sqrt(np.var(table[:, None, :] * table[None, :, :], axis=2) / x.size)
        assert np.all(np.abs(gram - np.eye(4)) <= 3 * se + 1e-12)


class TestPolynomial:
    def test_rejects_bad_terms(self):
        with pytest.raises(ArgumentError):
            GaussianPolynomial(1, {((1, 1),): 1.0})
        with pytest.raises(CapacityError):
            GaussianPolynomial(1, {((0, 9),): 1.0})

    def test_ornstein_uhlenbeck_examples(self):
        f = random_sparse(np.random.default_rng(0), 3)
        assert ornstein_uhlenbeck(f, 1) == f
        assert ornstein_uhlenbeck(f, 0) == GaussianPolynomial.constant(3, f.mean())
        h2 = GaussianPolynomial.from_sigmas(1, [((2,), 1.0)])
        assert ornstein_uhlenbeck(h2, 0.5).coefficient((2,)) == pytest.approx(0.25)

    def test_multilinear_truncate_examples(self):
        f = GaussianPolynomial.from_sigmas(2, [((1, 1), 2.0), ((0, 0), 1.0)])
        assert multilinear_truncate(f) == f
        assert multilinear_truncate(GaussianPolynomial.from_sigmas(1, [((2,), 1.0)])) == GaussianPolynomial(1)
        # x^2 = sqrt2 H_2 + H_0
        x2 = GaussianPolynomial.from_sigmas(1, [((2,), math.sqrt(2)), ((0,), 1.0)])
        x = np.linspace(-2, 2, 9)
        assert np.allclose(x2.evaluate(x[:, None]), x * x)
        assert multilinear_truncate(x2) == GaussianPolynomial.constant(1, 1.0)

    def test_variable_split_examples(self):
        f = GaussianPolynomial.variable(1, 0)
        assert variable_split(f, 1) is f
        g = variable_split(f, 4)
        assert g.n_vars == 4 and g.norm2() == pytest.approx(1)
        for a in range(4):
            assert g.coefficient([1 if b == a else 0 for b in range(4)]) == pytest.approx(0.5)
            assert g.influence(a + 1) == pytest.approx(0.25)

    @settings(max_examples=30, deadline=None)
    @given(seeds, st.integers(1, 3), st.integers(2, 4))
    def test_split_is_composition_with_normalized_sums(self, seed, n, t):
        rng = np.random.default_rng(seed)
        f = random_sparse(rng, n)
        y = rng.standard_normal((20, n * t))
        x = y.reshape(20, n, t).sum(axis=2) / math.sqrt(t)
        assert np.allclose(variable_split(f, t).evaluate(y), f.evaluate(x), atol=1e-10)
        assert variable_split(f, t).norm2() == pytest.approx(f.norm2(), rel=1e-12)

    @settings(max_examples=30, deadline=None)
    @given(seeds, st.integers(1, 4))
    def test_quadratic_dense_path_agrees(self, seed, n):
        rng = np.random.default_rng(seed)
        f = random_sparse(rng, n, max_deg=2, n_terms=8)
        q = QuadraticPolynomial.coerce(f)
        x = rng.standard_normal((15, n))
        assert np.allclose(q.evaluate(x), f.evaluate(x))
        assert q.norm2() == pytest.approx(f.norm2())
        assert q.to_polynomial() == f
        for t in (2, 3):
            exact, dense = f.variable_split(t).terms, q.variable_split(t).to_polynomial().terms
            assert set(exact) == set(dense)
            assert all(abs(exact[k] - dense[k]) < 1e-12 for k in exact)
        assert QuadraticPolynomial.coerce(f).multilinear_truncate().to_polynomial() == f.multilinear_truncate()

    def test_json(self):
        f = random_sparse(np.random.default_rng(4), 3)
        assert GaussianPolynomial.from_json(json.dumps(f.to_json())) == f

    @settings(max_examples=20, deadline=None)
    @given(seeds)
    def test_multilinear_truncate_idempotent(self, seed):
        f = random_sparse(np.random.default_rng(seed), 3)
        assert multilinear_truncate(multilinear_truncate(f)) == multilinear_truncate(f)

    def test_parseval_monte_carlo(self):
        rng = np.random.default_rng(11)
        for _ in range(5):
            f = random_sparse(rng, 3)
            x = rng.standard_normal((10**6, 3))
            v = f.evaluate(x) ** 2
            se = v.std() / math.sqrt(v.size)
            assert abs(v.mean() - f.norm2() ** 2) <= 3 * se

    def test_ou_definition(self):
        # U_rho f(z) = E_x f(rho z + sqrt(1 - rho^2) x)
        rng = np.random.default_rng(3)
        f = random_sparse(rng, 2)
        rho = 0.6
        for _ in range(10):
            z = rng.standard_normal(2)
            x = rng.standard_normal((2 * 10**5, 2))
            v = f.evaluate(rho * z + math.sqrt(1 - rho**2) * x)
            se = v.std() / math.sqrt(v.size)
            assert abs(v.mean() - ornstein_uhlenbeck(f, rho).evaluate(z)) <= 3 * se + 1e-12

    def test_correlated_inner_product(self):
        rng = np.random.default_rng(8)
        f, g = random_sparse(rng, 2), random_sparse(rng, 2)
        src = CorrelatedGaussianSource(2, 0.7, 5)
        vals = src.map(lambda a, b: f.evaluate(a) * g.evaluate(b), 4 * 10**5)
        m, se = montecarlo.mean_and_se(vals)
        assert abs(m - correlated_inner_product(f, g, 0.7)) <= 3 * se


class TestSource:
    def test_correlations(self):
        g, h = CorrelatedGaussianSource(3, 0.7, 1).pairs(10**5)
        n = g.shape[0]
        cross = g.T @ h / n
        prod = g[:, :, None] * h[:, None, :]
        se = prod.std(axis=0) / math.sqrt(n)
        assert np.all(np.abs(cross - 0.7 * np.eye(3)) <= 3 * se)

    def test_thread_independence(self):
        src = CorrelatedGaussianSource(2, 0.5, 9)
        a = src.map(lambda g, h: g[:, 0] * h[:, 1], 20000, threads=1)
        b = src.map(lambda g, h: g[:, 0] * h[:, 1], 20000, threads=4)
        assert np.array_equal(a, b)

    def test_sign_correlations(self):
        src = CorrelatedGaussianSource(2, 0.4, 2)
        v = src.map_signs(lambda s, t: s * t, 10**5)
        m, se = montecarlo.mean_and_se(v[:, 0])
        assert abs(m - 0.4) <= 3 * se


class TestRandomOperators:
    def test_constant_samples(self):
        op = RandomOperator(1, 2, P, {0: GaussianPolynomial.constant(2, 0.7)})
        src = CorrelatedGaussianSource(2, 0.5, 0)
        for m in sample_random_operator(op, src, "A", 5):
            assert np.allclose(m.matrix, 0.7 * np.eye(2))

    def test_g1_sigma_x_samples(self):
        src = CorrelatedGaussianSource(1, 0.0, 3)
        mats = np.array([m.matrix for m in sample_random_operator(g1_sigma_x(), src, "B", 10**5)])
        g = mats[:, 0, 1].real
        assert np.allclose(mats[:, 0, 0], 0)
        assert abs(np.mean(g**2) - 1) <= 3 * np.std(g**2) / math.sqrt(g.size)

    def test_expected_trace(self):
        rng = np.random.default_rng(2)
        op = random_multilinear_operator(2, 2, 2, rng)
        src = CorrelatedGaussianSource(2, 0.0, 1)
        x = src.sample("A", 10**5)
        tr = op.coefficient_samples(x)[:, 0] * 4
        assert abs(tr.mean() - 4 * op.mean_normalized_trace()) <= 3 * tr.std() / math.sqrt(tr.size)

    def test_norm_estimates(self):
        one = RandomOperator(1, 1, P, {0: GaussianPolynomial.constant(1, 1.0)})
        assert np_norm_estimate(one, 2, 1000, 0)[0] == pytest.approx(1)
        assert np_norm_estimate(one, 4, 1000, 0)[0] == pytest.approx(1)
        n2, se2 = np_norm_estimate(g1_sigma_x(), 2, 10**5, 1)
        assert abs(n2 - 1) <= 3 * se2
        n4, se4 = np_norm_estimate(g1_sigma_x(), 4, 10**5, 2)
        assert abs(n4 - 3**0.25) <= 3 * se4

    def test_gamma_noise_examples(self):
        op = random_multilinear_operator(1, 2, 2, np.random.default_rng(0))
        same = op.gamma_noise(1.0)
        assert all(same.components[k] == op.components[k] for k in op.components)
        zero = op.gamma_noise(0.0)
        assert zero.n2() == pytest.approx(abs(op.components[0].mean()))
        h1 = RandomOperator(1, 1, P, {1: GaussianPolynomial.variable(1, 0)}).gamma_noise(0.3)
        assert h1.components[1].coefficient((1,)) == pytest.approx(0.09)

    @settings(max_examples=20, deadline=None)
    @given(seeds, st.floats(0, 1), st.floats(0, 1))
    def test_gamma_composition(self, seed, a, b):
        op = random_multilinear_operator(1, 2, 2, np.random.default_rng(seed))
        lhs = op.gamma_noise(a).gamma_noise(b)
        rhs = op.gamma_noise(a * b)
        for k in op.components:
            ta, tb = lhs.components[k].terms, rhs.components[k].terms
            assert set(ta) <= set(op.components[k].terms)
            for key in set(ta) | set(tb):
                assert ta.get(key, 0.0) == pytest.approx(tb.get(key, 0.0), abs=1e-14)

    @settings(max_examples=20, deadline=None)
    @given(seeds, st.integers(0, 2), st.integers(1, 3))
    def test_n2_is_coefficient_norm(self, seed, h, n):
        op = random_multilinear_operator(h, n, 2, np.random.default_rng(seed))
        x = np.random.default_rng(seed + 1).standard_normal((4000, n))
        mats = op.operator_samples(x)
        mc = np.mean(np.sum(np.abs(mats) ** 2, axis=(1, 2)) / 2**h)
        direct = np.mean(np.sum(op.coefficient_samples(x) ** 2, axis=1))
        assert mc == pytest.approx(direct, rel=1e-10)

    def test_json(self):
        op = random_multilinear_operator(1, 2, 2, np.random.default_rng(1))
        back = RandomOperator.from_json(json.dumps(op.to_json()))
        assert back.components == op.components

    def test_hypercontractivity_examples(self):
        const = RandomOperator(1, 1, P, {0: GaussianPolynomial.constant(1, 1.0)})
        rep = hypercontractivity_test(const, 1 / math.sqrt(3), 1000, 0)
        assert rep["pass"] and rep["N4_est"] == pytest.approx(1)
        rep = hypercontractivity_test(g1_sigma_x(), 1 / math.sqrt(3), 10**5, 4)
        assert rep["pass"]
        assert abs(rep["N4_est"] - 3**0.25 / 3) <= 3 * rep["SE"]

    def test_hypercontractivity_needs_multilinear(self):
        op = RandomOperator(0, 1, P, {0: GaussianPolynomial.from_sigmas(1, [((2,), 1.0)])})
        with pytest.raises(PreconditionError):
            hypercontractivity_test(op, 0.5, 1000, 0)

    def test_degree_bound_examples(self):
        const = RandomOperator(1, 1, P, {0: GaussianPolynomial.constant(1, 1.0)})
        rep = degree_bound_test(const, 1000, 0)
        assert rep["degree"] == 0 and rep["N4_est"] == pytest.approx(rep["bound"])
        rep = degree_bound_test(g1_sigma_x(), 10**5, 1)
        assert rep["degree"] == 2 and rep["bound"] == pytest.approx(3) and rep["pass"]
        rng = np.random.default_rng(6)
        for k in range(5):
            op = random_multilinear_operator(1, 3, 2, rng)
            assert degree_bound_test(op, 20000, k)["pass"]

    def test_scalar_hypercontractivity(self):
        rng = np.random.default_rng(12)
        rho = 1 / math.sqrt(3)
        for k in range(30):
            f = random_multilinear_polynomial(3, 2, rng)
            op = RandomOperator(0, 3, P, {0: f})
            rep = hypercontractivity_test(op, rho, 20000, k)
            assert rep["pass"]


class TestDimensionReduction:
    def test_constant(self):
        f = GaussianPolynomial.constant(2, 1.5)
        fm = ReducedFunction(f, np.random.default_rng(0).standard_normal((2, 7)))
        assert np.allclose(fm.evaluate(np.random.default_rng(1).standard_normal((5, 7))), 1.5)

    def test_cauchy_schwarz(self):
        m = np.random.default_rng(0).standard_normal((1, 30))
        fm = ReducedFunction(GaussianPolynomial.variable(1, 0), m)
        x = np.random.default_rng(1).standard_normal((100, 30))
        assert np.all(np.abs(fm.evaluate(x)) <= np.linalg.norm(m) + 1e-12)

    def test_zero_vector_guard(self):
        fm = ReducedFunction(GaussianPolynomial.variable(1, 0), np.ones((1, 3)))
        assert fm.evaluate(np.zeros(3)) == 0.0

    def test_shape_check(self):
        with pytest.raises(ArgumentError):
            ReducedFunction(GaussianPolynomial.variable(2, 0), np.ones((1, 3)))

    def test_expected_chi(self):
        x = np.random.default_rng(0).standard_normal((10**5, 5))
        r = np.linalg.norm(x, axis=1)
        assert abs(r.mean() - expected_chi(5)) <= 3 * r.std() / math.sqrt(r.size)

    @pytest.mark.parametrize("seed", range(3))
    def test_exact_moments_match_monte_carlo(self, seed):
        rng = np.random.default_rng(seed)
        f = random_sparse(rng, 2, max_deg=2, n_terms=6)
        fm = ReducedFunction(f, rng.standard_normal((2, 6)))
        x = rng.standard_normal((4 * 10**5, 6))
        v = fm.evaluate(x)
        se = v.std() / math.sqrt(v.size)
        assert abs(v.mean() - fm.mean()) <= 3 * se
        # f_M^2 is heavy tailed, so its standard error is itself noisy: allow 4 SE
        v2 = v * v
        assert abs(v2.mean() - fm.second_moment()) <= 4 * v2.std() / math.sqrt(v2.size)

    def test_low_degree_projection(self):
        # projection coefficients agree with E[f_M H_sigma]
        rng = np.random.default_rng(21)
        f = random_sparse(rng, 2, max_deg=2, n_terms=6)
        fm = ReducedFunction(f, rng.standard_normal((2, 4)))
        proj = fm.low_degree_projection()
        x = rng.standard_normal((4 * 10**5, 4))
        v = fm.evaluate(x)
        for sig in ([0, 0, 0, 0], [1, 0, 0, 0], [0, 1, 1, 0], [0, 0, 2, 0]):
            w = v * hermite_eval(sig, x)
            se = w.std() / math.sqrt(w.size)
            assert abs(w.mean() - proj.to_polynomial().coefficient(sig)) <= 4 * se
        assert proj.norm2() <= fm.norm2() + 1e-12
