"""Reference computations written without the package, used to cross-check it."""

import itertools
import math

import numpy as np

I2 = np.eye(2, dtype=complex)
SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
PAULI = (I2, SX, SY, SZ)
EPR = np.array([1, 0, 0, 1], dtype=complex) / math.sqrt(2)


def kron_all(mats):
    out = np.ones((1, 1), dtype=complex)
    for m in mats:
        out = np.kron(out, m)
    return out


def sigmas(n):
    """All sigma in {0,1,2,3}^n, coordinate 1 varying fastest."""
    for tup in itertools.product(range(4), repeat=n):
        yield tup[::-1]


def naive_fourier(mat, basis=PAULI):
    """coeff(sigma) = Tr(B_sigma^dagger M) / 2^n, one full trace per sigma."""
    d = mat.shape[0]
    n = int(round(math.log2(d)))
    return np.array([np.trace(kron_all([basis[s] for s in sig]).conj().T @ mat).real / d
                     for sig in sigmas(n)])


def lyapunov_kron(p, q):
    """Solve P X + X P = Q via the vectorized (I x P + P^T x I) system."""
    d = p.shape[0]
    big = np.kron(np.eye(d), p) + np.kron(p.T, np.eye(d))
    x = np.linalg.solve(big, q.reshape(-1, order="F"))
    return x.reshape(d, d, order="F")


def lyapunov_integral(p, q, upper=40.0, steps=4001):
    """int_0^inf e^{-tP} Q e^{-tP} dt for P > 0 by Simpson's rule on [0, upper]."""
    from scipy.integrate import simpson
    from scipy.linalg import expm

    ts = np.linspace(0.0, upper, steps)
    vals = np.array([expm(-t * p) @ q @ expm(-t * p) for t in ts])
    return simpson(vals, x=ts, axis=0)


def depolarized(eps):
    return (1 - eps) * np.outer(EPR, EPR.conj()) + eps * np.eye(4) / 4


def grouped_power(rho, n):
    """rho^(x n) reordered from (A1 B1 A2 B2 ...) to (A1..An B1..Bn)."""
    m = kron_all([rho] * n)
    t = m.reshape((2,) * (4 * n))
    perm = [2 * k for k in range(n)] + [2 * k + 1 for k in range(n)]
    axes = perm + [2 * n + a for a in perm]
    return t.transpose(axes).reshape(4**n, 4**n)


def markov_bruteforce(rho, q):
    """T(Q) = sum_sigma Tr((P_sigma x Q) rho^n) P_sigma, valid for maximally mixed marginals."""
    n = int(round(math.log2(q.shape[0])))
    big = grouped_power(rho, n)
    out = np.zeros_like(q, dtype=complex)
    for sig in sigmas(n):
        b = kron_all([PAULI[s] for s in sig])
        out += np.trace(np.kron(b, q) @ big) * b
    return out


def correlation(p, q, rho):
    n = int(round(math.log2(p.shape[0])))
    return float(np.trace(np.kron(p, q) @ grouped_power(rho, n)).real)


def normalized_hermite(r, x):
    """H_r(x) = He_r(x) / sqrt(r!) via numpy's probabilists' Hermite series."""
    from numpy.polynomial import hermite_e

    c = np.zeros(r + 1)
    c[r] = 1.0
    return hermite_e.hermeval(x, c) / math.sqrt(math.factorial(r))


def classical_value_bruteforce(mu, v):
    nx, ny = mu.shape
    best = 0.0
    for a in itertools.product((0, 1), repeat=nx):
        for b in itertools.product((0, 1), repeat=ny):
            best = max(best, sum(mu[x, y] * v[x, y, a[x], b[y]] for x in range(nx) for y in range(ny)))
    return best


def chsh_tables():
    mu = np.full((2, 2), 0.25)
    v = np.zeros((2, 2, 2, 2))
    for x, y, a, b in itertools.product((0, 1), repeat=4):
        v[x, y, a, b] = float((a ^ b) == (x & y))
    return mu, v


def game_value_dense(mu, v, p_ops, q_ops, rho):
    """sum mu V Tr(P^x_a x Q^y_b) rho^n with outcome-1 operators id - P."""
    d = p_ops[0].shape[0]
    eye = np.eye(d)
    total = 0.0
    for x, y in itertools.product(range(mu.shape[0]), range(mu.shape[1])):
        pa = (p_ops[x], eye - p_ops[x])
        qb = (q_ops[y], eye - q_ops[y])
        for a, b in itertools.product((0, 1), repeat=2):
            total += mu[x, y] * v[x, y, a, b] * correlation(pa[a], qb[b], rho)
    return total


def zeta_piecewise(x, lam):
    """zeta_lambda written branch by branch."""
    if lam == 0:
        return x * x if x <= 0 else ((x - 1) ** 2 if x >= 1 else 0.0)
    if x <= -lam:
        return x * x + lam * lam / 3
    if x <= lam:
        return (lam - x) ** 3 / (6 * lam)
    if x <= 1 - lam:
        return 0.0
    if x <= 1 + lam:
        return (x - 1 + lam) ** 3 / (6 * lam)
    return (1 - x) ** 2 + lam * lam / 3


def clamp_spectrum(mat):
    w, u = np.linalg.eigh(mat)
    return (u * np.clip(w, 0, 1)) @ u.conj().T


def random_hermitian(rng, d):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    return (a + a.conj().T) / 2
