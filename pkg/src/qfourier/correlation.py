"""Bipartite two-qubit states, the depolarizing noise operator, the Markov
super-operator, correlation matrices and quantum maximal correlation.

Multi-copy layout: for psi^(x n) the A-side qubits come first (A1..An) and
the B-side qubits follow (B1..Bn); A_k is paired with B_k.
"""

from __future__ import annotations

import json
import math
from functools import cached_property

import numpy as np

from .errors import ArgumentError, SingularityError, UnsupportedStateError
from .fourier import degree_table, fourier_expand, pauli_basis, rotate_basis, variance
from .operators import (
    DensityOperator,
    HermitianOperator,
    partial_trace_matrix,
    permute_qubits,
)

MIXED_TOL = 1e-9
RESONANCE_TOL = 1e-12
_EPR = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)


class BipartiteState:
    """Two-qubit density operator psi_AB (qubit 1 is A, qubit 2 is B)."""

    def __init__(self, rho):
        if not isinstance(rho, DensityOperator):
            rho = DensityOperator(rho.matrix if isinstance(rho, HermitianOperator) else rho)
        if rho.n_qubits != 2:
            raise ArgumentError("a bipartite state here is a 4x4 density matrix")
        self._rho = rho

    @property
    def rho(self):
        return self._rho

    @property
    def matrix(self):
        return self._rho.matrix

    @cached_property
    def marginal_a(self):
        return DensityOperator(partial_trace_matrix(self.matrix, 2, [1]))

    @cached_property
    def marginal_b(self):
        return DensityOperator(partial_trace_matrix(self.matrix, 2, [2]))

    def has_mixed_marginals(self, tol=MIXED_TOL):
        half = np.eye(2) / 2
        return (
            np.max(np.abs(self.marginal_a.matrix - half)) <= tol
            and np.max(np.abs(self.marginal_b.matrix - half)) <= tol
        )

    @cached_property
    def maximal_correlation(self):
        return maximal_correlation(self)

    @cached_property
    def aligned(self):
        return aligned_bases(self)

    def power_matrix(self, copies):
        """Dense psi^(x copies) in the grouped (A1..An, B1..Bn) layout."""
        return state_power_matrix(self, copies)

    def to_json(self):
        m = self.matrix
        return {"kind": "raw", "rho": {"re": m.real.tolist(), "im": m.imag.tolist()}}

    def __repr__(self):
        return f"{type(self).__name__}()"


class NoisyEprState(BipartiteState):
    """Maximally mixed marginals and maximal correlation strictly below one."""

    def __init__(self, rho, epsilon=None):
        super().__init__(rho)
        if not self.has_mixed_marginals():
            raise UnsupportedStateError("noisy EPR states need maximally mixed marginals")
        if self.maximal_correlation >= 1 - 1e-9:
            raise ArgumentError("maximal correlation must be strictly below 1")
        self.epsilon = epsilon

    def to_json(self):
        if self.epsilon is not None:
            return {"kind": "depolarized_epr", "epsilon": self.epsilon}
        return super().to_json()


def epr_pair():
    return BipartiteState(np.outer(_EPR, _EPR.conj()))


def product_mixed_state():
    return BipartiteState(np.eye(4) / 4)


def depolarized_epr(epsilon):
    """(1 - eps)|Phi><Phi| + eps id/4."""
    eps = float(epsilon)
    if not 0 < eps <= 1:
        raise ArgumentError("epsilon must lie in (0, 1]")
    rho = (1 - eps) * np.outer(_EPR, _EPR.conj()) + eps * np.eye(4) / 4
    return NoisyEprState(rho, epsilon=eps)


def state_from_json(data):
    if isinstance(data, str):
        data = json.loads(data)
    kind = data.get("kind")
    if kind == "depolarized_epr":
        return depolarized_epr(data["epsilon"])
    if kind == "raw":
        r = data["rho"]
        m = np.array(r["re"]) + 1j * np.array(r["im"]) if isinstance(r, dict) else np.array(r)
        return BipartiteState(m)
    raise ArgumentError(f"unknown state kind {kind!r}")


def state_power_matrix(psi, copies):
    if copies < 0:
        raise ArgumentError("copies must be nonnegative")
    m = np.ones((1, 1), dtype=complex)
    for _ in range(copies):
        m = np.kron(m, psi.matrix)
    perm = [2 * k for k in range(copies)] + [2 * k + 1 for k in range(copies)]
    return permute_qubits(m, perm) if copies > 1 else m


# --- noise ------------------------------------------------------------------


def noise_operator(expansion, rho):
    """Depolarizing noise: scale coefficient sigma by rho^|sigma|."""
    rho = float(rho)
    if not 0 <= rho <= 1:
        raise ArgumentError("noise parameter must lie in [0, 1]")
    scale = rho ** degree_table(expansion.n_qubits).astype(float)
    return expansion.with_coeffs(expansion.coeffs * scale)


# --- Lyapunov equation ---------------------------------------------------------


def lyapunov_solve_matrix(p, q):
    """Solve P X + X P = Q for Hermitian P via its eigenbasis."""
    p = np.asarray(p)
    q = np.asarray(q)
    d, u = np.linalg.eigh(p)
    denom = d[:, None] + d[None, :]
    if np.min(np.abs(denom)) <= RESONANCE_TOL:
        raise SingularityError("Lyapunov equation is singular: two eigenvalues sum to zero")
    qt = u.conj().T @ q @ u
    return u @ (qt / denom) @ u.conj().T


def lyapunov_solve(p, q):
    if p.dim != q.dim:
        raise ArgumentError("Lyapunov operands differ in size")
    return HermitianOperator(lyapunov_solve_matrix(p.matrix, q.matrix))


# --- Markov super-operator ----------------------------------------------------


def markov_superoperator(psi, q):
    """T(Q) = L(psi_A, 2 Tr_B (id x Q) psi), with psi replaced by psi^(x n) for n-qubit Q.

    With maximally mixed marginals this is 2^n Tr_B (id x Q) psi^(x n).  The
    general branch (psi_A not maximally mixed) is experimental.
    """
    n = q.n_qubits
    if n < 1:
        raise ArgumentError("Q must act on at least one qubit")
    big = state_power_matrix(psi, n)
    d = 1 << n
    prod = big @ np.kron(np.eye(d), q.matrix)
    # Tr_B((id x Q) psi) = Tr_B(psi (id x Q)) by cyclicity on B
    r = partial_trace_matrix(prod, 2 * n, range(1, n + 1))
    r = (r + r.conj().T) / 2
    if psi.has_mixed_marginals():
        return HermitianOperator(d * r)
    psi_a = partial_trace_matrix(big, 2 * n, range(1, n + 1))
    return HermitianOperator(lyapunov_solve_matrix(psi_a, 2 * r))


def psi_inner_product(m, t, psi_a):
    """<M, T>_psi = (1/2) Tr (M^dagger T + T M^dagger) psi."""
    m = np.asarray(getattr(m, "matrix", m))
    t = np.asarray(getattr(t, "matrix", t))
    w = np.asarray(getattr(psi_a, "matrix", psi_a))
    md = m.conj().T
    return 0.5 * np.trace((md @ t + t @ md) @ w)


# --- correlation matrices -------------------------------------------------------


def correlation_matrix(psi, basis_a, basis_b):
    """Entries Tr(A_i x B_j) psi for the single-copy state."""
    m = psi.matrix
    out = np.empty((4, 4))
    for i in range(4):
        for j in range(4):
            out[i, j] = np.trace(np.kron(basis_a[i], basis_b[j]) @ m).real
    return out


def multi_copy_correlation_matrix(psi, copies):
    """Correlation matrix of psi^(x copies) over Pauli tensor bases, 4^n x 4^n."""
    n = copies
    exp = fourier_expand(HermitianOperator(state_power_matrix(psi, n)), pauli_basis())
    # A coordinates are the low base-4 digits, B coordinates the high ones
    table = exp.coeffs.reshape(4**n, 4**n).T
    return table * 4**n


def _require_mixed(psi):
    if not psi.has_mixed_marginals():
        raise UnsupportedStateError("only states with maximally mixed marginals are supported")


def maximal_correlation(psi, copies=1):
    """Second singular value of the correlation matrix of psi^(x copies)."""
    _require_mixed(psi)
    if copies == 1:
        corr = correlation_matrix(psi, pauli_basis(), pauli_basis())
    else:
        corr = multi_copy_correlation_matrix(psi, copies)
    s = np.linalg.svd(corr, compute_uv=False)
    return float(min(max(s[1], 0.0), 1.0))


def aligned_bases(psi):
    """Bases in which the correlation matrix is diag(1, c1, c2, c3), c1 >= c2 >= c3 >= 0."""
    _require_mixed(psi)
    pauli = pauli_basis()
    corr = correlation_matrix(psi, pauli, pauli)
    u, s, vt = np.linalg.svd(corr[1:, 1:])
    v = vt.T
    for k in range(3):
        col = u[:, k]
        lead = col[np.nonzero(np.abs(col) > 1e-12)[0][0]]
        if lead < 0:
            u[:, k] = -u[:, k]
            v[:, k] = -v[:, k]
    basis_a = rotate_basis(pauli, u.T)
    basis_b = rotate_basis(pauli, v.T)
    c = np.concatenate([[1.0], s])
    return basis_a, basis_b, c


def correlation_weights(c, n):
    """c_sigma = prod_i c_{sigma_i} for every sigma in {0,1,2,3}^n."""
    w = np.ones(1)
    for _ in range(n):
        w = np.kron(np.asarray(c, dtype=float), w)
    return w


def correlation_value(p, q, psi, n=None):
    """Tr(P x Q) psi^(x n) = sum_sigma c_sigma P(sigma) Q(sigma) in the aligned bases."""
    n = p.n_qubits if n is None else n
    if p.n_qubits != n or q.n_qubits != n:
        raise ArgumentError("operators and copy count disagree")
    basis_a, basis_b, c = psi.aligned
    if not (p.basis.isclose(basis_a) and q.basis.isclose(basis_b)):
        raise ArgumentError("expansions are not in the aligned bases of the state")
    return float(np.dot(correlation_weights(c, n) * p.coeffs, q.coeffs))


def dense_correlation(p, q, psi):
    """Direct Tr((P x Q) psi^(x n)) with the A_k / B_k pairing."""
    n = p.n_qubits
    if q.n_qubits != n:
        raise ArgumentError("operators act on different numbers of qubits")
    big = state_power_matrix(psi, n)
    return float(np.real(np.sum(np.kron(p.matrix, q.matrix).T * big)))


def expand_pair(p, q, psi):
    """Expand P in basis A and Q in basis B of the state's aligned pair."""
    basis_a, basis_b, _ = psi.aligned
    return fourier_expand(p, basis_a), fourier_expand(q, basis_b)


# --- smoothing tradeoff ------------------------------------------------------------


def smoothing_gamma(rho, epsilon, constant=1.0):
    """gamma = C (1 - rho) eps / ln(1/eps)."""
    if not 0 < epsilon < 1:
        raise ArgumentError("epsilon must lie in (0, 1)")
    g = constant * (1 - rho) * epsilon / math.log(1 / epsilon)
    if not 0 <= g <= 1:
        raise ArgumentError(f"smoothing parameter {g:.3g} leaves [0, 1]")
    return g


def tsmooth_check(p, q, psi, epsilon, constant=1.0):
    """Correlation shift caused by smoothing both sides with T_(1 - gamma)."""
    rho = psi.aligned[2][1]
    gamma = smoothing_gamma(rho, epsilon, constant)
    before = correlation_value(p, q, psi)
    after = correlation_value(noise_operator(p, 1 - gamma), noise_operator(q, 1 - gamma), psi)
    lhs = abs(before - after)
    bound = 2 * epsilon * math.sqrt(variance(p) * variance(q))
    return {"lhs": lhs, "bound": bound, "gamma": gamma, "constant": constant,
            "pass": bool(lhs <= bound + 1e-12)}


def largest_admissible_constant(pairs, psi, epsilon, grid_size=200):
    """Largest C on a log grid in [1, C_max] with no violations over ``pairs``.

    C_max keeps gamma <= 1.  Returns (C, saturated) where ``saturated`` means the
    whole grid was admissible.
    """
    rho = psi.aligned[2][1]
    c_max = math.log(1 / epsilon) / ((1 - rho) * epsilon)
    grid = np.geomspace(1.0, c_max, grid_size)
    best = None
    for c in grid:
        if all(tsmooth_check(p, q, psi, epsilon, float(c))["pass"] for p, q in pairs):
            best = float(c)
        else:
            return best, False
    return best, True

