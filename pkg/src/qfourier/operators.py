"""Dense Hermitian operators on qubit registers.

Qubit 1 is the leftmost tensor factor.  Every operator is immutable: the
stored matrix is a read-only array and all operations return new objects.
"""

from __future__ import annotations

import json

import numpy as np

from .errors import ArgumentError, CapacityError, DomainError

MAX_QUBITS = 12
HERMITIAN_TOL = 1e-10
EIGEN_TOL = 1e-9


def _num_qubits(dim):
    n = int(dim).bit_length() - 1
    if dim < 1 or (1 << n) != dim:
        raise ArgumentError(f"dimension {dim} is not a power of two")
    return n


class HermitianOperator:
    """Hermitian matrix of size 2^n x 2^n.

    Inputs whose entrywise asymmetry is below ``tol`` are symmetrized as
    (P + P^dagger)/2; anything further from Hermitian is rejected.
    """

    __slots__ = ("_matrix", "_n")

    def __init__(self, matrix, *, tol=HERMITIAN_TOL, max_qubits=None):
        m = np.array(matrix, dtype=complex)
        if m.ndim == 0:
            m = m.reshape(1, 1)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ArgumentError("operator must be a square matrix")
        n = _num_qubits(m.shape[0])
        cap = MAX_QUBITS if max_qubits is None else max_qubits
        if n > cap:
            raise CapacityError(f"{n} qubits exceeds the dense cap of {cap}")
        if not np.all(np.isfinite(m)):
            raise ArgumentError("operator has non-finite entries")
        asym = float(np.max(np.abs(m - m.conj().T)))
        if asym >= tol:
            raise ArgumentError(f"matrix is not Hermitian (asymmetry {asym:.3g})")
        m = (m + m.conj().T) / 2
        m.setflags(write=False)
        self._matrix = m
        self._n = n

    @property
    def matrix(self):
        return self._matrix

    @property
    def n_qubits(self):
        return self._n

    @property
    def dim(self):
        return self._matrix.shape[0]

    def eigenvalues(self):
        return np.linalg.eigvalsh(self._matrix)[::-1]

    def trace(self):
        return float(np.real(np.trace(self._matrix)))

    def __add__(self, other):
        _check_same(self, other)
        return HermitianOperator(self._matrix + other._matrix)

    def __sub__(self, other):
        _check_same(self, other)
        return HermitianOperator(self._matrix - other._matrix)

    def __neg__(self):
        return HermitianOperator(-self._matrix)

    def __mul__(self, scalar):
        s = float(scalar)
        return HermitianOperator(self._matrix * s)

    __rmul__ = __mul__

    def allclose(self, other, atol=1e-9):
        return self.dim == other.dim and np.allclose(self._matrix, other._matrix, atol=atol, rtol=0)

    def __repr__(self):
        return f"{type(self).__name__}(n_qubits={self._n})"

    def to_json(self):
        return {
            "n_qubits": self._n,
            "re": self._matrix.real.tolist(),
            "im": self._matrix.imag.tolist(),
        }

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        m = np.array(data["re"], dtype=float) + 1j * np.array(data["im"], dtype=float)
        op = cls(m)
        if op.n_qubits != int(data["n_qubits"]):
            raise ArgumentError("n_qubits does not match the matrix size")
        return op


class DensityOperator(HermitianOperator):
    """Positive semidefinite operator with unit trace."""

    __slots__ = ()

    def __init__(self, matrix, *, tol=1e-10, max_qubits=None):
        super().__init__(matrix, max_qubits=max_qubits)
        evals = np.linalg.eigvalsh(self._matrix)
        if evals[0] < -tol:
            raise ArgumentError(f"state is not positive semidefinite (min eigenvalue {evals[0]:.3g})")
        if abs(self.trace() - 1.0) > tol:
            raise ArgumentError(f"state trace is {self.trace():.12g}, expected 1")


class MeasurementOperator(HermitianOperator):
    """Hermitian operator with 0 <= M <= id up to ``tol``."""

    __slots__ = ()

    def __init__(self, matrix, *, tol=EIGEN_TOL, max_qubits=None):
        super().__init__(matrix, max_qubits=max_qubits)
        evals = np.linalg.eigvalsh(self._matrix)
        if evals[0] < -tol or evals[-1] > 1 + tol:
            raise ArgumentError(
                f"eigenvalues [{evals[0]:.3g}, {evals[-1]:.3g}] leave the interval [0, 1]"
            )


def _check_same(p, q):
    if p.dim != q.dim:
        raise ArgumentError(f"dimension mismatch: {p.n_qubits} vs {q.n_qubits} qubits")


def identity(n_qubits):
    return HermitianOperator(np.eye(1 << n_qubits))


def tensor(*ops):
    """Kronecker product; accepts operators or raw matrices."""
    out = np.ones((1, 1), dtype=complex)
    for op in ops:
        m = op.matrix if isinstance(op, HermitianOperator) else np.asarray(op)
        out = np.kron(out, m)
    return HermitianOperator(out)


def normalized_inner_product(p, q):
    """Tr(P^dagger Q) / 2^n."""
    _check_same(p, q)
    val = np.vdot(p.matrix, q.matrix) / p.dim
    return float(val.real)


def singular_values(p):
    return np.abs(np.linalg.eigvalsh(p.matrix))


def normalized_p_norm(p, order):
    """((1/d) sum_i s_i^p)^(1/p); the largest singular value for p = inf."""
    order = float(order)
    if not order >= 1:
        raise ArgumentError("p-norm requires p >= 1")
    s = singular_values(p)
    if np.isinf(order):
        return float(s.max())
    return float(np.mean(s**order) ** (1.0 / order))


def schatten_norm(p, order):
    """Unnormalized Schatten p-norm."""
    order = float(order)
    if not order >= 1:
        raise ArgumentError("p-norm requires p >= 1")
    s = singular_values(p)
    if np.isinf(order):
        return float(s.max())
    return float(np.sum(s**order) ** (1.0 / order))


def partial_trace_matrix(m, n_qubits, keep):
    """Unnormalized partial trace of a raw 2^n x 2^n matrix, keeping ``keep`` (1-indexed)."""
    keep = sorted(set(int(k) for k in keep))
    for k in keep:
        if not 1 <= k <= n_qubits:
            raise ArgumentError(f"qubit index {k} outside 1..{n_qubits}")
    n = n_qubits
    t = np.asarray(m).reshape((2,) * (2 * n))
    row = list(range(n))
    col = list(range(n, 2 * n))
    for i in range(n):
        if i + 1 not in keep:
            col[i] = row[i]
    out = [row[k - 1] for k in keep] + [col[k - 1] for k in keep]
    r = np.einsum(t, row + col, out)
    d = 1 << len(keep)
    return r.reshape(d, d)


def partial_trace(p, keep):
    return HermitianOperator(partial_trace_matrix(p.matrix, p.n_qubits, keep))


def permute_qubits(m, perm):
    """Reorder tensor factors: new qubit j is old qubit perm[j] (0-indexed)."""
    n = len(perm)
    t = np.asarray(m).reshape((2,) * (2 * n))
    axes = list(perm) + [n + q for q in perm]
    d = 1 << n
    return t.transpose(axes).reshape(d, d)


def spectral_decomposition(p):
    """Eigenvalues in non-increasing order with the matching unitary."""
    evals, evecs = np.linalg.eigh(p.matrix)
    return evals[::-1].copy(), evecs[:, ::-1].copy()


def apply_scalar_function(p, f):
    evals, evecs = np.linalg.eigh(p.matrix)
    try:
        with np.errstate(all="ignore"):
            vals = np.asarray(f(evals), dtype=complex)
            if vals.shape != evals.shape:
                vals = np.array([f(x) for x in evals], dtype=complex)
    except (ValueError, ZeroDivisionError, OverflowError, ArithmeticError) as exc:
        raise DomainError(f"function undefined on the spectrum: {exc}") from exc
    if not np.all(np.isfinite(vals)) or np.any(np.abs(vals.imag) > 0):
        raise DomainError("function undefined (or non-real) at an eigenvalue")
    return HermitianOperator((evecs * vals.real) @ evecs.conj().T)


def random_hermitian(n_qubits, rng, scale=1.0):
    d = 1 << n_qubits
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return HermitianOperator(scale * (a + a.conj().T) / 2)


def random_measurement(n_qubits, rng):
    """Random operator with eigenvalues uniform in [0, 1] and a Haar-like eigenbasis."""
    d = 1 << n_qubits
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q, r = np.linalg.qr(a)
    q = q * (np.diag(r) / np.abs(np.diag(r)))
    vals = rng.uniform(0.0, 1.0, size=d)
    return MeasurementOperator((q * vals) @ q.conj().T)
