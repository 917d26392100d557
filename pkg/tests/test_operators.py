import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qfourier.errors import ArgumentError, CapacityError, DomainError
from qfourier.operators import (
    DensityOperator,
    HermitianOperator,
    MeasurementOperator,
    apply_scalar_function,
    identity,
    normalized_inner_product,
    normalized_p_norm,
    partial_trace,
    random_hermitian,
    spectral_decomposition,
    tensor,
)

from oracles import EPR, SX, SZ, random_hermitian as oracle_hermitian

seeds = st.integers(0, 2**32 - 1)


def _rand(seed, n):
    return random_hermitian(n, np.random.default_rng(seed))


class TestConstruction:
    def test_rejects_non_hermitian(self):
        with pytest.raises(ArgumentError):
            HermitianOperator([[0, 1], [0, 0]])

    def test_symmetrizes_tiny_asymmetry(self):
        op = HermitianOperator([[1, 1e-12], [0, 1]])
        assert np.array_equal(op.matrix, op.matrix.conj().T)

    def test_rejects_non_power_of_two(self):
        with pytest.raises(ArgumentError):
            HermitianOperator(np.eye(3))

    def test_dense_cap(self):
        with pytest.raises(CapacityError):
            HermitianOperator(np.eye(8), max_qubits=2)

    def test_density_needs_unit_trace(self):
        with pytest.raises(ArgumentError):
            DensityOperator(np.eye(2))
        DensityOperator(np.eye(2) / 2)

    def test_measurement_eigen_window(self):
        MeasurementOperator(np.diag([0.0, 1.0 + 5e-10]))
        with pytest.raises(ArgumentError):
            MeasurementOperator(np.diag([-0.1, 0.5]))

    def test_json_round_trip_is_bit_stable(self):
        op = _rand(3, 2)
        back = HermitianOperator.from_json(json.dumps(op.to_json()))
        assert np.array_equal(back.matrix, op.matrix)


class TestExamples:
    def test_inner_products(self):
        assert normalized_inner_product(HermitianOperator(SX), HermitianOperator(SX)) == pytest.approx(1)
        assert normalized_inner_product(HermitianOperator(SX), HermitianOperator(SZ)) == pytest.approx(0)
        assert normalized_inner_product(identity(1), HermitianOperator(np.diag([1, 0]))) == pytest.approx(0.5)

    def test_norms(self):
        assert normalized_p_norm(identity(1), 2) == pytest.approx(1)
        assert normalized_p_norm(HermitianOperator(SZ), 4) == pytest.approx(1)
        assert normalized_p_norm(HermitianOperator(np.diag([2, 0])), 1) == pytest.approx(1)
        assert normalized_p_norm(HermitianOperator(np.diag([2, -3])), np.inf) == 3

    def test_partial_traces(self):
        epr = HermitianOperator(np.outer(EPR, EPR.conj()))
        assert np.allclose(partial_trace(epr, [1]).matrix, np.eye(2) / 2)
        assert np.allclose(partial_trace(tensor(SX, SZ), [1]).matrix, 0)
        rho = np.diag([0.7, 0.3])
        tau = np.array([[0.5, 0.5j], [-0.5j, 0.5]])
        assert np.allclose(partial_trace(tensor(rho, tau), [1]).matrix, rho)

    def test_spectral(self):
        assert np.allclose(spectral_decomposition(HermitianOperator(SZ))[0], [1, -1])
        assert np.allclose(spectral_decomposition(identity(1))[0], [1, 1])
        vals, _ = spectral_decomposition(HermitianOperator((SX + SZ) / np.sqrt(2)))
        assert np.allclose(vals, [1, -1])

    def test_scalar_functions(self):
        assert np.allclose(apply_scalar_function(HermitianOperator(SZ), np.square).matrix, np.eye(2))
        assert np.allclose(apply_scalar_function(HermitianOperator(np.diag([-2, 3])), np.abs).matrix,
                           np.diag([2, 3]))
        assert np.allclose(apply_scalar_function(HermitianOperator(4 * np.eye(2)), np.sqrt).matrix,
                           2 * np.eye(2))

    def test_scalar_function_domain(self):
        with pytest.raises(DomainError):
            apply_scalar_function(HermitianOperator(np.diag([-1, 1])), np.sqrt)


@settings(max_examples=40, deadline=None)
@given(seeds, st.integers(1, 4))
def test_inner_product_symmetry_and_norm(seed, n):
    p, q = _rand(seed, n), _rand(seed + 1, n)
    assert normalized_inner_product(p, q) == pytest.approx(normalized_inner_product(q, p), abs=1e-10)
    assert normalized_inner_product(p, p) == pytest.approx(normalized_p_norm(p, 2) ** 2, rel=1e-10)


@settings(max_examples=200, deadline=None)
@given(seeds, st.integers(1, 3), st.sampled_from([1, 1.5, 2, 3, 4]), st.sampled_from([2, 4, 6, np.inf]))
def test_normalized_norms_increase_with_p(seed, n, p, q):
    op = _rand(seed, n)
    if p <= q:
        assert normalized_p_norm(op, p) <= normalized_p_norm(op, q) * (1 + 1e-12)


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 2), st.integers(1, 2))
def test_partial_trace_is_adjoint_of_padding(seed, na, nb):
    rng = np.random.default_rng(seed)
    m = oracle_hermitian(rng, 1 << (na + nb))
    k = oracle_hermitian(rng, 1 << na)
    lhs = np.trace(partial_trace(HermitianOperator(m), range(1, na + 1)).matrix.conj().T @ k)
    rhs = np.trace(m.conj().T @ np.kron(k, np.eye(1 << nb)))
    # normalized: <Tr_B M, N>_A / 2^na * (1/2^nb) = <M, N x id>
    assert lhs / (1 << na) / (1 << nb) == pytest.approx(rhs / (1 << (na + nb)), abs=1e-10)
