"""Fourier analysis over tensor products of a standard orthonormal basis of M_2.

Index convention: a multi-index sigma in {0,1,2,3}^n is stored as the
base-4 integer sum_k sigma_k 4^(k-1), so coordinate 1 is the least
significant digit.  Coordinates are 1-indexed everywhere in this module.
"""

from __future__ import annotations

import json
from functools import lru_cache

import numpy as np

from .errors import ArgumentError
from .operators import HermitianOperator

BASIS_TOL = 1e-10

_PAULI = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


class StandardBasis:
    """Four Hermitian 2x2 matrices with B0 = id, orthonormal under Tr(A^dagger B)/2."""

    __slots__ = ("_elements",)

    def __init__(self, elements):
        els = [np.array(e, dtype=complex) for e in elements]
        if len(els) != 4 or any(e.shape != (2, 2) for e in els):
            raise ArgumentError("a standard basis has four 2x2 elements")
        if not np.array_equal(els[0], np.eye(2)):
            raise ArgumentError("first basis element must be the identity")
        for e in els:
            if np.max(np.abs(e - e.conj().T)) > BASIS_TOL:
                raise ArgumentError("basis elements must be Hermitian")
        gram = np.array([[np.vdot(a, b) / 2 for b in els] for a in els])
        if np.max(np.abs(gram - np.eye(4))) > BASIS_TOL:
            raise ArgumentError("basis is not orthonormal")
        stack = np.stack([(e + e.conj().T) / 2 for e in els])
        stack[0] = np.eye(2)
        stack.setflags(write=False)
        self._elements = stack

    @property
    def elements(self):
        return self._elements

    def __getitem__(self, i):
        return self._elements[i]

    def __eq__(self, other):
        return isinstance(other, StandardBasis) and np.array_equal(self._elements, other._elements)

    def __hash__(self):
        return hash(self._elements.tobytes())

    def isclose(self, other, atol=1e-9):
        return np.allclose(self._elements, other._elements, atol=atol, rtol=0)

    def to_json(self):
        return [{"re": e.real.tolist(), "im": e.imag.tolist()} for e in self._elements]

    @classmethod
    def from_json(cls, data):
        return cls([np.array(d["re"]) + 1j * np.array(d["im"]) for d in data])


def pauli_basis():
    return StandardBasis(_PAULI)


def rotate_basis(basis, rotation):
    """B'_0 = id and B'_i = sum_j O_ij B_j for an orthogonal 3x3 matrix O."""
    o = np.asarray(rotation, dtype=float)
    if o.shape != (3, 3) or np.max(np.abs(o @ o.T - np.eye(3))) > 1e-9:
        raise ArgumentError("rotation must be a 3x3 orthogonal matrix")
    new = np.einsum("ij,jab->iab", o, basis.elements[1:])
    return StandardBasis([np.eye(2)] + list(new))


def random_rotation(rng):
    q, r = np.linalg.qr(rng.standard_normal((3, 3)))
    return q * np.sign(np.diag(r))


# --- index bookkeeping ------------------------------------------------------


def sigma_to_index(sigma):
    idx = 0
    for k, s in enumerate(sigma):
        if not 0 <= s <= 3:
            raise ArgumentError("sigma entries must lie in {0,1,2,3}")
        idx += int(s) * 4**k
    return idx


def index_to_sigma(index, n):
    return tuple((index >> (2 * k)) & 3 for k in range(n))


@lru_cache(maxsize=None)
def _digits(n):
    idx = np.arange(4**n)
    d = np.stack([(idx >> (2 * k)) & 3 for k in range(n)], axis=1) if n else np.zeros((1, 0), int)
    d.setflags(write=False)
    return d


@lru_cache(maxsize=None)
def degree_table(n):
    """|sigma| (number of nonzero coordinates) for every index."""
    t = np.count_nonzero(_digits(n), axis=1)
    t.setflags(write=False)
    return t


@lru_cache(maxsize=None)
def support_table(n):
    """Support of sigma as a bitmask, bit k-1 set when sigma_k != 0."""
    d = _digits(n)
    t = np.zeros(4**n, dtype=np.int64)
    for k in range(n):
        t |= (d[:, k] != 0).astype(np.int64) << k
    t.setflags(write=False)
    return t


def _mask(subset, n):
    m = 0
    for i in subset:
        i = int(i)
        if not 1 <= i <= n:
            raise ArgumentError(f"coordinate {i} outside 1..{n}")
        m |= 1 << (i - 1)
    return m


# --- expansions --------------------------------------------------------------


class FourierExpansion:
    """Real coefficient table over {0,1,2,3}^n with respect to ``basis``."""

    __slots__ = ("_n", "_basis", "_coeffs")

    def __init__(self, n_qubits, basis, coeffs):
        c = np.array(coeffs, dtype=float).reshape(-1)
        if c.shape[0] != 4**n_qubits:
            raise ArgumentError(f"expected {4**n_qubits} coefficients, got {c.shape[0]}")
        c.setflags(write=False)
        self._n = int(n_qubits)
        self._basis = basis
        self._coeffs = c

    @property
    def n_qubits(self):
        return self._n

    @property
    def basis(self):
        return self._basis

    @property
    def coeffs(self):
        return self._coeffs

    def coefficient(self, sigma):
        return float(self._coeffs[sigma_to_index(sigma)])

    def with_coeffs(self, coeffs):
        return FourierExpansion(self._n, self._basis, coeffs)

    def degree(self, tol=1e-12):
        nz = np.abs(self._coeffs) > tol
        return int(degree_table(self._n)[nz].max()) if nz.any() else 0

    def norm2(self):
        """Normalized 2-norm of the reconstructed operator (Parseval)."""
        return float(np.sqrt(np.sum(self._coeffs**2)))

    def mean(self):
        return float(self._coeffs[0])

    def to_json(self):
        return {"n_qubits": self._n, "basis": self._basis.to_json(), "coeffs": self._coeffs.tolist()}

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        return cls(int(data["n_qubits"]), StandardBasis.from_json(data["basis"]), data["coeffs"])


def _contract(tensor, n, gates):
    """Apply a 4x2x2 (or 2x2x4) single-qubit map to every qubit in turn."""
    t = tensor
    for _ in range(n):
        # leading axes hold the untouched (row, col) pair of the next qubit
        t = np.tensordot(gates, t, axes=([1, 2], [0, 1]))
        t = np.moveaxis(t, 0, -1)
    return t


def fourier_expand(p, basis):
    """coeffs(sigma) = <B_sigma, P> via one single-qubit contraction per qubit."""
    n = p.n_qubits
    if n == 0:
        return FourierExpansion(0, basis, [p.matrix[0, 0].real])
    t = p.matrix.reshape((2,) * (2 * n))
    # interleave to (r1, c1, r2, c2, ...)
    order = [a for k in range(n) for a in (k, n + k)]
    t = t.transpose(order)
    gates = basis.elements.conj() / 2  # <B_b, X> = sum_rc conj(B_b[r,c]) X[r,c] / 2
    t = _contract(t, n, gates)
    # axes are now (b1, ..., bn); flatten little-endian
    coeffs = t.transpose(list(range(n))[::-1]).reshape(-1)
    return FourierExpansion(n, basis, coeffs.real)


def reconstruct(expansion):
    n = expansion.n_qubits
    if n == 0:
        return HermitianOperator([[expansion.coeffs[0]]])
    t = expansion.coeffs.astype(complex).reshape((4,) * n).transpose(list(range(n))[::-1])
    gates = np.transpose(expansion.basis.elements, (1, 2, 0))  # (r, c, b)
    for _ in range(n):
        t = np.tensordot(gates, t, axes=([2], [0]))
        t = np.moveaxis(t, (0, 1), (-2, -1))
    # axes are (r1, c1, r2, c2, ...)
    order = [2 * k for k in range(n)] + [2 * k + 1 for k in range(n)]
    d = 1 << n
    return HermitianOperator(t.transpose(order).reshape(d, d))


_MODES = {"<=": "le", "le": "le", ">": "gt", "gt": "gt", "=": "eq", "==": "eq", "eq": "eq"}


def degree_truncate(expansion, mode, t):
    if t < 0:
        raise ArgumentError("truncation degree must be nonnegative")
    try:
        m = _MODES[mode]
    except KeyError:
        raise ArgumentError(f"unknown truncation mode {mode!r}") from None
    deg = degree_table(expansion.n_qubits)
    keep = {"le": deg <= t, "gt": deg > t, "eq": deg == t}[m]
    return expansion.with_coeffs(np.where(keep, expansion.coeffs, 0.0))


def efron_stein_component(expansion, subset):
    n = expansion.n_qubits
    keep = support_table(n) == _mask(subset, n)
    return expansion.with_coeffs(np.where(keep, expansion.coeffs, 0.0))


def influence(expansion, i):
    """Inf_i = sum of squared coefficients with sigma_i != 0."""
    n = expansion.n_qubits
    if not 1 <= int(i) <= n:
        raise ArgumentError(f"coordinate {i} outside 1..{n}")
    hit = (support_table(n) >> (int(i) - 1)) & 1
    return float(np.sum(expansion.coeffs[hit == 1] ** 2))


def influences(expansion):
    return [influence(expansion, i) for i in range(1, expansion.n_qubits + 1)]


def total_influence(expansion):
    return float(np.sum(degree_table(expansion.n_qubits) * expansion.coeffs**2))


def variance(expansion):
    return float(np.sum(expansion.coeffs[1:] ** 2))


def marginal(expansion, subset):
    """Keep sigma with sigma outside ``subset`` equal to 0, re-indexed on ``subset``."""
    n = expansion.n_qubits
    keep = sorted(set(int(i) for i in subset))
    mask = _mask(keep, n)
    sup = support_table(n)
    digits = _digits(n)
    sel = np.nonzero((sup & ~mask) == 0)[0]
    out = np.zeros(4 ** len(keep))
    for idx in sel:
        new = 0
        for pos, coord in enumerate(keep):
            new += int(digits[idx, coord - 1]) * 4**pos
        out[new] = expansion.coeffs[idx]
    return FourierExpansion(len(keep), expansion.basis, out)


def basis_change(expansion, new_basis):
    """Re-expand in another basis; exact up to floating point."""
    return fourier_expand(reconstruct(expansion), new_basis)
