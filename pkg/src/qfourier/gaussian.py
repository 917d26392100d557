"""Gaussian-space analysis: Hermite expansions, correlated Gaussian sources,
random operators and the estimators built on them.

Hermite polynomials are normalized, H_r = He_r / sqrt(r!), so that they are
orthonormal under the standard Gaussian measure.  Variables are 0-indexed in
storage and 1-indexed in the public ``influence`` API, like qubit coordinates.
"""

from __future__ import annotations

import itertools
import json
import math
from functools import lru_cache

import numpy as np

from . import montecarlo
from .errors import ArgumentError, CapacityError, PreconditionError
from .fourier import StandardBasis, degree_table, pauli_basis

MAX_DEGREE = 8
_SQRT2 = math.sqrt(2.0)


# --- Hermite polynomials -------------------------------------------------------


def hermite_table(r_max, x):
    """Array of H_0(x), ..., H_{r_max}(x) stacked on a new leading axis."""
    x = np.asarray(x, dtype=float)
    out = np.empty((r_max + 1,) + x.shape)
    out[0] = 1.0
    if r_max >= 1:
        out[1] = x
    for r in range(1, r_max):
        out[r + 1] = (x * out[r] - math.sqrt(r) * out[r - 1]) / math.sqrt(r + 1)
    return out


def hermite_1d(r, x):
    return hermite_table(int(r), x)[int(r)]


def hermite_eval(sigma, x):
    """H_sigma(x) = prod_i H_{sigma_i}(x_i)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] < len(sigma):
        raise ArgumentError("point has fewer coordinates than the multi-index")
    val = np.ones(x.shape[:-1])
    for i, r in enumerate(sigma):
        if r:
            val = val * hermite_1d(r, x[..., i])
    return val if val.ndim else float(val)


# --- sparse polynomials ------------------------------------------------------------


def _key(sigma):
    return tuple((i, int(e)) for i, e in enumerate(sigma) if e)


def _key_degree(key):
    return sum(e for _, e in key)


class GaussianPolynomial:
    """Sparse Hermite expansion sum_sigma c_sigma H_sigma on ``n_vars`` variables.

    Keys are tuples of (variable, exponent) pairs sorted by variable, with the
    empty tuple for the constant term.
    """

    __slots__ = ("_n", "_terms", "_degree")

    def __init__(self, n_vars, terms=None):
        self._n = int(n_vars)
        clean = {}
        for key, c in (terms or {}).items():
            key = tuple(sorted((int(i), int(e)) for i, e in key if e))
            for i, e in key:
                if not 0 <= i < self._n or e < 0:
                    raise ArgumentError(f"term {key} does not fit {self._n} variables")
            if len({i for i, _ in key}) != len(key):
                raise ArgumentError(f"repeated variable in term {key}")
            c = float(c)
            if c != 0.0:
                clean[key] = clean.get(key, 0.0) + c
        self._terms = {k: v for k, v in clean.items() if v != 0.0}
        self._degree = max((_key_degree(k) for k in self._terms), default=0)
        if self._degree > MAX_DEGREE:
            raise CapacityError(f"degree {self._degree} exceeds the cap of {MAX_DEGREE}")

    @classmethod
    def from_sigmas(cls, n_vars, items):
        """Build from an iterable of (dense multi-index, coefficient)."""
        terms = {}
        for sigma, c in items:
            if len(sigma) > n_vars:
                raise ArgumentError("multi-index longer than the variable count")
            k = _key(sigma)
            terms[k] = terms.get(k, 0.0) + float(c)
        return cls(n_vars, terms)

    @classmethod
    def constant(cls, n_vars, c):
        return cls(n_vars, {(): c})

    @classmethod
    def variable(cls, n_vars, i, c=1.0):
        """c * x_i with 0-indexed i."""
        return cls(n_vars, {((i, 1),): c})

    @property
    def n_vars(self):
        return self._n

    @property
    def terms(self):
        return dict(self._terms)

    def coefficient(self, sigma):
        return self._terms.get(_key(sigma), 0.0)

    def degree(self):
        return self._degree

    def is_multilinear(self):
        return all(e == 1 for k in self._terms for _, e in k)

    def mean(self):
        return self._terms.get((), 0.0)

    def norm2(self):
        return math.sqrt(sum(c * c for c in self._terms.values()))

    def variance(self):
        return sum(c * c for k, c in self._terms.items() if k)

    def influence(self, i):
        """Inf_i = sum of c_sigma^2 over sigma with sigma_i > 0 (1-indexed i)."""
        if not 1 <= i <= self._n:
            raise ArgumentError(f"variable {i} outside 1..{self._n}")
        v = i - 1
        return sum(c * c for k, c in self._terms.items() if any(j == v for j, _ in k))

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.shape[-1] != self._n:
            raise ArgumentError(f"expected {self._n} coordinates, got {x.shape[-1]}")
        cache = {}
        out = np.zeros(x.shape[0])
        for key, c in self._terms.items():
            val = np.full(x.shape[0], c)
            for i, e in key:
                if (i, e) not in cache:
                    cache[(i, e)] = hermite_1d(e, x[:, i])
                val = val * cache[(i, e)]
            out += val
        return float(out[0]) if single else out

    def __add__(self, other):
        if other.n_vars != self._n:
            raise ArgumentError("variable counts differ")
        t = dict(self._terms)
        for k, c in other._terms.items():
            t[k] = t.get(k, 0.0) + c
        return GaussianPolynomial(self._n, t)

    def scale(self, s):
        return GaussianPolynomial(self._n, {k: s * c for k, c in self._terms.items()})

    def __eq__(self, other):
        return (
            isinstance(other, GaussianPolynomial)
            and other._n == self._n
            and other._terms == self._terms
        )

    def __hash__(self):
        return hash((self._n, tuple(sorted(self._terms.items()))))

    def ornstein_uhlenbeck(self, rho):
        _check_unit(rho)
        return GaussianPolynomial(
            self._n, {k: c * rho ** _key_degree(k) for k, c in self._terms.items()}
        )

    def degree_truncate(self, d):
        return GaussianPolynomial(self._n, {k: c for k, c in self._terms.items() if _key_degree(k) <= d})

    def multilinear_truncate(self):
        return GaussianPolynomial(
            self._n, {k: c for k, c in self._terms.items() if all(e == 1 for _, e in k)}
        )

    def variable_split(self, t):
        """Replace x_i by (x_{i,1} + ... + x_{i,t}) / sqrt(t); x_{i,a} is variable i*t + a."""
        t = int(t)
        if t < 1:
            raise ArgumentError("split factor must be at least 1")
        if t == 1:
            return self
        out = {}
        for key, c in self._terms.items():
            pieces = [_split_hermite(e, t) for _, e in key]
            for combo in itertools.product(*pieces):
                coef = c
                new_key = []
                for (i, _), (parts, w) in zip(key, combo):
                    coef *= w
                    new_key.extend((i * t + a, k) for a, k in enumerate(parts) if k)
                nk = tuple(new_key)
                out[nk] = out.get(nk, 0.0) + coef
        return GaussianPolynomial(self._n * t, out)

    def to_json(self):
        terms = []
        for key, c in sorted(self._terms.items()):
            sigma = [0] * self._n
            for i, e in key:
                sigma[i] = e
            terms.append({"sigma": sigma, "coeff": c})
        return {"n_vars": self._n, "terms": terms}

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        return cls.from_sigmas(int(data["n_vars"]), [(t["sigma"], t["coeff"]) for t in data["terms"]])

    def __repr__(self):
        return f"GaussianPolynomial(n_vars={self._n}, terms={len(self._terms)}, degree={self._degree})"


@lru_cache(maxsize=None)
def _split_hermite(r, t):
    """H_r((y_1+...+y_t)/sqrt t) = sum_k sqrt(r!/prod k_a!) t^(-r/2) prod H_{k_a}(y_a)."""
    out = []
    for parts in _compositions(r, t):
        w = math.sqrt(math.factorial(r) / math.prod(math.factorial(k) for k in parts))
        out.append((parts, w * t ** (-r / 2)))
    return tuple(out)


def _compositions(r, t):
    if t == 1:
        yield (r,)
        return
    for first in range(r, -1, -1):
        for rest in _compositions(r - first, t - 1):
            yield (first,) + rest


def _check_unit(rho):
    if not 0 <= rho <= 1:
        raise ArgumentError("correlation parameter must lie in [0, 1]")


def ornstein_uhlenbeck(f, rho):
    return f.ornstein_uhlenbeck(rho)


def multilinear_truncate(f):
    return f.multilinear_truncate()


def variable_split(f, t):
    return f.variable_split(t)


def correlated_inner_product(f, g, rho):
    """E f(x) g(y) over rho-correlated standard Gaussian vectors."""
    if isinstance(f, QuadraticPolynomial) or isinstance(g, QuadraticPolynomial):
        return QuadraticPolynomial.coerce(f).inner(QuadraticPolynomial.coerce(g), rho)
    if f.n_vars != g.n_vars:
        raise ArgumentError("variable counts differ")
    gt = g._terms
    return sum(c * gt[k] * rho ** _key_degree(k) for k, c in f._terms.items() if k in gt)


# --- dense degree-2 polynomials -----------------------------------------------------


class QuadraticPolynomial:
    """Degree <= 2 Hermite expansion held densely.

    f(x) = const + lin . x + sum_{i<j} pair[i, j] x_i x_j + sum_i diag[i] H_2(x_i)
    with ``pair`` symmetric and zero on the diagonal.
    """

    __slots__ = ("n_vars", "const", "lin", "pair", "diag")

    def __init__(self, n_vars, const=0.0, lin=None, pair=None, diag=None):
        n = int(n_vars)
        self.n_vars = n
        self.const = float(const)
        self.lin = np.zeros(n) if lin is None else np.array(lin, dtype=float)
        self.pair = np.zeros((n, n)) if pair is None else np.array(pair, dtype=float)
        self.diag = np.zeros(n) if diag is None else np.array(diag, dtype=float)
        if self.lin.shape != (n,) or self.pair.shape != (n, n) or self.diag.shape != (n,):
            raise ArgumentError("quadratic polynomial arrays do not match n_vars")
        if np.any(np.diagonal(self.pair) != 0) or not np.array_equal(self.pair, self.pair.T):
            raise ArgumentError("pair matrix must be symmetric with a zero diagonal")
        for a in (self.lin, self.pair, self.diag):
            a.setflags(write=False)

    @classmethod
    def coerce(cls, f):
        if isinstance(f, QuadraticPolynomial):
            return f
        if f.degree() > 2:
            raise CapacityError("dense path supports degree <= 2 only")
        n = f.n_vars
        lin = np.zeros(n)
        pair = np.zeros((n, n))
        diag = np.zeros(n)
        const = 0.0
        for key, c in f.terms.items():
            if not key:
                const = c
            elif len(key) == 1 and key[0][1] == 1:
                lin[key[0][0]] = c
            elif len(key) == 1:
                diag[key[0][0]] = c
            else:
                (i, _), (j, _) = key
                pair[i, j] = pair[j, i] = c
        return cls(n, const, lin, pair, diag)

    def to_polynomial(self):
        terms = {(): self.const}
        for i in np.nonzero(self.lin)[0]:
            terms[((int(i), 1),)] = self.lin[i]
        for i in np.nonzero(self.diag)[0]:
            terms[((int(i), 2),)] = self.diag[i]
        iu, ju = np.nonzero(np.triu(self.pair, 1))
        for i, j in zip(iu, ju):
            terms[((int(i), 1), (int(j), 1))] = self.pair[i, j]
        return GaussianPolynomial(self.n_vars, terms)

    def degree(self):
        if np.any(self.pair) or np.any(self.diag):
            return 2
        return 1 if np.any(self.lin) else 0

    def is_multilinear(self):
        return not np.any(self.diag)

    def mean(self):
        return self.const

    def norm2(self):
        return math.sqrt(self.const**2 + self.lin @ self.lin
                         + 0.5 * np.sum(self.pair**2) + self.diag @ self.diag)

    def variance(self):
        return self.norm2() ** 2 - self.const**2

    def influence(self, i):
        if not 1 <= i <= self.n_vars:
            raise ArgumentError(f"variable {i} outside 1..{self.n_vars}")
        v = i - 1
        return float(self.lin[v] ** 2 + np.sum(self.pair[v] ** 2) + self.diag[v] ** 2)

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        out = self.const + x @ self.lin
        if np.any(self.pair):
            out = out + 0.5 * np.einsum("ni,ni->n", x @ self.pair, x)
        if np.any(self.diag):
            out = out + ((x * x - 1.0) @ self.diag) / _SQRT2
        return float(out[0]) if single else out

    def scale(self, s):
        return QuadraticPolynomial(self.n_vars, s * self.const, s * self.lin, s * self.pair, s * self.diag)

    def __add__(self, other):
        o = QuadraticPolynomial.coerce(other)
        return QuadraticPolynomial(self.n_vars, self.const + o.const, self.lin + o.lin,
                                   self.pair + o.pair, self.diag + o.diag)

    def ornstein_uhlenbeck(self, rho):
        _check_unit(rho)
        r2 = rho * rho
        return QuadraticPolynomial(self.n_vars, self.const, rho * self.lin, r2 * self.pair, r2 * self.diag)

    def degree_truncate(self, d):
        if d >= 2:
            return self
        if d == 1:
            return QuadraticPolynomial(self.n_vars, self.const, self.lin)
        return QuadraticPolynomial(self.n_vars, self.const)

    def multilinear_truncate(self):
        return QuadraticPolynomial(self.n_vars, self.const, self.lin, self.pair)

    def variable_split(self, t):
        t = int(t)
        if t < 1:
            raise ArgumentError("split factor must be at least 1")
        if t == 1:
            return self
        ones = np.ones(t)
        lin = np.kron(self.lin, ones) / math.sqrt(t)
        pair = np.kron(self.pair, np.ones((t, t))) / t
        # H_2 of a normalized sum: (1/t) sum_a H_2(x_a) + (sqrt 2 / t) sum_{a<b} x_a x_b
        within = np.kron(np.diag(self.diag), np.ones((t, t)) - np.eye(t)) * (_SQRT2 / t)
        diag = np.kron(self.diag, ones) / t
        return QuadraticPolynomial(self.n_vars * t, self.const, lin, pair + within, diag)

    def inner(self, other, rho):
        o = QuadraticPolynomial.coerce(other)
        if o.n_vars != self.n_vars:
            raise ArgumentError("variable counts differ")
        r2 = rho * rho
        return float(self.const * o.const + rho * (self.lin @ o.lin)
                     + r2 * (0.5 * np.sum(self.pair * o.pair) + self.diag @ o.diag))

    def fingerprint(self):
        return (self.n_vars, self.const, self.lin.tobytes(), self.pair.tobytes(), self.diag.tobytes())

    def __eq__(self, other):
        return isinstance(other, QuadraticPolynomial) and self.fingerprint() == other.fingerprint()

    def __hash__(self):
        return hash(self.fingerprint())

    def to_json(self):
        return self.to_polynomial().to_json()

    def __repr__(self):
        return f"QuadraticPolynomial(n_vars={self.n_vars}, degree={self.degree()})"


# --- correlated sources ------------------------------------------------------------


class CorrelatedGaussianSource:
    """Pairs (g, h) with h = rho g + sqrt(1 - rho^2) g', drawn in seeded chunks."""

    def __init__(self, n_vars, rho, seed):
        _check_unit(rho)
        self.n_vars = int(n_vars)
        self.rho = float(rho)
        self.seed = int(seed)

    def _pairs(self, rng, count):
        g = rng.standard_normal((count, self.n_vars))
        gp = rng.standard_normal((count, self.n_vars))
        return g, self.rho * g + math.sqrt(1 - self.rho**2) * gp

    def map(self, fn, n_samples, stream=0, threads=None):
        """Concatenate fn(g, h) over chunks; fn returns per-sample arrays."""
        return montecarlo.sample_values(
            lambda rng, k: fn(*self._pairs(rng, k)), n_samples, self.seed, stream, threads
        )

    def pairs(self, n_samples, stream=0):
        g, h = zip(*montecarlo.map_chunks(self._pairs, n_samples, self.seed, stream, threads=1))
        return np.concatenate(g), np.concatenate(h)

    def sample(self, side, n_samples, stream=0):
        g, h = self.pairs(n_samples, stream)
        return g if side == "A" else h

    def _signs(self, rng, count):
        s = np.where(rng.random((count, self.n_vars)) < 0.5, -1.0, 1.0)
        agree = rng.random((count, self.n_vars)) < (1 + self.rho) / 2
        return s, np.where(agree, s, -s)

    def map_signs(self, fn, n_samples, stream=0, threads=None):
        """As ``map`` but with rho-correlated uniform sign vectors."""
        return montecarlo.sample_values(
            lambda rng, k: fn(*self._signs(rng, k)), n_samples, self.seed, stream, threads
        )


# --- random operators ----------------------------------------------------------------


@lru_cache(maxsize=64)
def _basis_stack(basis, h):
    d = 1 << h
    out = np.empty((4**h, d, d), dtype=complex)
    for idx in range(4**h):
        m = np.ones((1, 1), dtype=complex)
        for k in range(h):
            m = np.kron(m, basis[(idx >> (2 * k)) & 3])
        out[idx] = m
    out.setflags(write=False)
    return out


def basis_stack(basis, h):
    """Matrices B_sigma for all sigma in {0,1,2,3}^h in index order."""
    return _basis_stack(basis, int(h))


class RandomOperator:
    """sum_sigma p_sigma(g) B_sigma on h qubits; missing components are zero."""

    def __init__(self, h_qubits, n_vars, basis, components):
        self.h_qubits = int(h_qubits)
        self.n_vars = int(n_vars)
        if not isinstance(basis, StandardBasis):
            raise ArgumentError("basis must be a StandardBasis")
        self.basis = basis
        comps = {}
        for sigma, p in components.items():
            idx = int(sigma) if not isinstance(sigma, tuple) else _sigma_index(sigma)
            if not 0 <= idx < 4**self.h_qubits:
                raise ArgumentError(f"component index {sigma} out of range")
            if p.n_vars != self.n_vars:
                raise ArgumentError("all components must share n_vars")
            comps[idx] = p
        self.components = dict(sorted(comps.items()))

    def map(self, fn, n_vars=None):
        """Apply fn to every component; ``n_vars`` is needed only when there are none."""
        comps = {k: fn(p) for k, p in self.components.items()}
        if comps:
            n_vars = next(iter(comps.values())).n_vars
        return RandomOperator(self.h_qubits, self.n_vars if n_vars is None else n_vars,
                              self.basis, comps)

    def n2(self):
        """Exact N_2 = ||p||_2 (root of the summed squared component norms)."""
        return math.sqrt(sum(p.norm2() ** 2 for p in self.components.values()))

    def mean_normalized_trace(self):
        """E Tr(P) / 2^h = E p_0."""
        p0 = self.components.get(0)
        return 0.0 if p0 is None else p0.mean()

    def is_multilinear(self):
        return all(p.is_multilinear() for p in self.components.values())

    def degree(self):
        """max over nonzero components of deg p_sigma + |sigma|."""
        deg = degree_table(self.h_qubits)
        return max((p.degree() + int(deg[s]) for s, p in self.components.items() if p.norm2() > 0),
                   default=0)

    def coefficient_samples(self, x):
        x = np.atleast_2d(x)
        out = np.zeros((x.shape[0], 4**self.h_qubits))
        for s, p in self.components.items():
            out[:, s] = p.evaluate(x)
        return out

    def operator_samples(self, x):
        """Stack of sampled matrices, shape (N, 2^h, 2^h)."""
        c = self.coefficient_samples(x)
        return np.einsum("ns,sab->nab", c, basis_stack(self.basis, self.h_qubits))

    def gamma_noise(self, rho):
        _check_unit(rho)
        deg = degree_table(self.h_qubits)
        return RandomOperator(self.h_qubits, self.n_vars, self.basis, {
            s: p.ornstein_uhlenbeck(rho).scale(rho ** int(deg[s])) for s, p in self.components.items()
        })

    def to_json(self):
        return {
            "h_qubits": self.h_qubits,
            "n_vars": self.n_vars,
            "basis": self.basis.to_json(),
            "components": {str(s): p.to_json() for s, p in self.components.items()},
        }

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        comps = {int(s): GaussianPolynomial.from_json(p) for s, p in data["components"].items()}
        return cls(data["h_qubits"], data["n_vars"], StandardBasis.from_json(data["basis"]), comps)

    def __repr__(self):
        return f"RandomOperator(h={self.h_qubits}, n_vars={self.n_vars}, components={len(self.components)})"


def _sigma_index(sigma):
    return sum(int(s) * 4**k for k, s in enumerate(sigma))


def random_operator_correlation(p, q, c, rho):
    """E Tr(P x Q) psi^(x h) = sum_sigma c_sigma <p_sigma, q_sigma>_rho (aligned bases)."""
    from .correlation import correlation_weights

    w = correlation_weights(c, p.h_qubits)
    total = 0.0
    for s, ps in p.components.items():
        qs = q.components.get(s)
        if qs is not None and w[s] != 0:
            total += w[s] * correlated_inner_product(ps, qs, rho)
    return float(total)


def sample_random_operator(op, src, side, n_samples, stream=0):
    """Yield sampled HermitianOperators for side A (g) or B (h) of a correlated draw."""
    from .operators import HermitianOperator

    if op.n_vars != src.n_vars:
        raise ArgumentError("random operator and source disagree on the variable count")
    if side not in ("A", "B"):
        raise ArgumentError("side must be 'A' or 'B'")
    x = src.sample(side, n_samples, stream)
    for m in op.operator_samples(x):
        yield HermitianOperator(m)


def normalized_pnorm_samples(op, x, p):
    """(1/2^h) sum_i |lambda_i|^p for every sampled operator."""
    mats = op.operator_samples(x)
    ev = np.linalg.eigvalsh(mats)
    return np.mean(np.abs(ev) ** p, axis=1)


def np_norm_estimate(op, p, n_samples, seed, stream=0, threads=None):
    """Monte-Carlo N_p = E[||P||_p^p]^(1/p) with a delta-method standard error."""
    if p not in (2, 4):
        raise ArgumentError("only p in {2, 4} is supported")
    if n_samples < 100:
        raise ArgumentError("at least 100 samples are required")
    src = CorrelatedGaussianSource(op.n_vars, 0.0, seed)
    vals = src.map(lambda g, h: normalized_pnorm_samples(op, g, p), n_samples, stream, threads)
    m, se = montecarlo.mean_and_se(vals)
    if m <= 0:
        return 0.0, se
    est = m ** (1.0 / p)
    return est, se * est / (p * m)


def _require_multilinear(op):
    if not op.is_multilinear():
        raise PreconditionError("random operator must be multilinear")


def hypercontractivity_test(op, rho, n_samples, seed, threads=None):
    """N_4(Gamma_rho P) <= N_2(P), judged at +3 standard errors."""
    _require_multilinear(op)
    if not 0 <= rho <= 1 / math.sqrt(3) + 1e-12:
        raise ArgumentError("rho must lie in [0, 1/sqrt 3]")
    n4, se = np_norm_estimate(op.gamma_noise(rho), 4, n_samples, seed, threads=threads)
    n2 = op.n2()
    return {
        "N4_est": n4,
        "SE": se,
        "N2_exact": n2,
        "margin_in_SE": (n2 - n4) / se if se > 0 else float("inf"),
        "pass": bool(n4 <= n2 + 3 * se),
    }


def degree_bound_test(op, n_samples, seed, threads=None):
    """N_4(P) <= 3^(d/2) N_2(P) with d = max(deg p_sigma + |sigma|)."""
    _require_multilinear(op)
    d = op.degree()
    n4, se = np_norm_estimate(op, 4, n_samples, seed, threads=threads)
    n2 = op.n2()
    bound = 3 ** (d / 2) * n2
    return {
        "degree": d,
        "N4_est": n4,
        "SE": se,
        "N2_exact": n2,
        "bound": bound,
        "margin_in_SE": (bound - n4) / se if se > 0 else float("inf"),
        "pass": bool(n4 <= bound + 3 * se),
    }


def random_multilinear_polynomial(n_vars, degree, rng, density=1.0):
    terms = {}
    for k in range(degree + 1):
        for subset in itertools.combinations(range(n_vars), k):
            if k == 0 or rng.random() < density:
                terms[tuple((i, 1) for i in subset)] = rng.standard_normal()
    return GaussianPolynomial(n_vars, terms)


def random_multilinear_operator(h, n_vars, degree, rng, basis=None):
    basis = pauli_basis() if basis is None else basis
    comps = {s: random_multilinear_polynomial(n_vars, degree, rng).scale(1.0 / 2**h)
             for s in range(4**h)}
    return RandomOperator(h, n_vars, basis, comps)


# --- dimension reduction -----------------------------------------------------------


def expected_chi(dim):
    """E ||x|| for x standard Gaussian in R^dim."""
    return math.sqrt(2.0) * math.exp(math.lgamma((dim + 1) / 2) - math.lgamma(dim / 2))


class ReducedFunction:
    """f_M(x) = f(M x / ||x||) for M of shape (n_vars(f), D)."""

    def __init__(self, f, m):
        m = np.asarray(m, dtype=float)
        if m.ndim != 2 or m.shape[0] != f.n_vars:
            raise ArgumentError(f"matrix must have shape ({f.n_vars}, D)")
        self.f = f
        self.matrix = m
        self.n_vars = m.shape[1]

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        norms = np.linalg.norm(x, axis=1)
        norms = np.where(norms == 0, 1.0, norms)  # measure-zero guard
        y = (x @ self.matrix.T) / norms[:, None]
        out = self.f.evaluate(y)
        return float(out[0]) if single else out

    __call__ = evaluate

    def _monomial_form(self):
        """p(y) = c + b.y + y^T A y for the degree <= 2 source polynomial."""
        q = QuadraticPolynomial.coerce(self.f)
        c = q.const - np.sum(q.diag) / _SQRT2
        a = q.pair / 2 + np.diag(q.diag / _SQRT2)
        return c, q.lin, a

    def low_degree_projection(self):
        """Exact Hermite projection of f_M onto degree <= 2."""
        c, b, a = self._monomial_form()
        dim = self.n_vars
        m = self.matrix
        lin = m.T @ b
        k = m.T @ a @ m
        k = (k + k.T) / 2
        tr = float(np.trace(k))
        k0 = k - (tr / dim) * np.eye(dim)
        # x^T B x - tr B with B = k0 / (D + 2): off-diagonals to pairs, diagonal to H_2
        quad = k0 / (dim + 2)
        pair = 2 * (quad - np.diag(np.diag(quad)))
        diag = _SQRT2 * np.diag(quad)
        return QuadraticPolynomial(dim, c + tr / dim, lin * expected_chi(dim) / dim, pair, diag)

    def second_moment(self):
        """Exact E f_M(x)^2 for degree <= 2 sources."""
        c, b, a = self._monomial_form()
        dim = self.n_vars
        lin = self.matrix.T @ b
        k = self.matrix.T @ a @ self.matrix
        tr = float(np.trace(k))
        return float(c * c + lin @ lin / dim + 2 * c * tr / dim
                     + (2 * np.sum(k * k) + tr * tr) / (dim * (dim + 2)))

    def norm2(self):
        return math.sqrt(self.second_moment())

    def mean(self):
        c, _, a = self._monomial_form()
        return float(c + np.trace(self.matrix.T @ a @ self.matrix) / self.n_vars)

    def is_multilinear(self):
        return False


def dimension_reduce(f, m):
    return ReducedFunction(f, m)
