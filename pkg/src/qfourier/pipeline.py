"""The eight-step strategy-transfer pipeline at desk-scale parameters.

    input -> smooth -> regularize -> invariance_forward -> reduce_dimension
          -> smooth_random -> multilinearize -> invariance_backward -> round

Steps 3-6 work with random operators sum_sigma p_sigma(g) B_sigma whose
components are Gaussian polynomials.  Step 7 substitutes every Gaussian pair
(g_j, h_j) by a fresh qubit pair carrying the aligned basis elements with
correlation rho.  A multilinear p evaluated on those commuting +-1 observables
is block diagonal, P = sum_s p(s) (x) Pi_s over sign vectors s, so the
operator on h + n0 t qubits is stored as its block function s -> P_s and
rounding clamps each block.  Statistics of such operators are Monte-Carlo
averages over rho-correlated sign pairs; ``to_dense`` is available within the
dense qubit cap.

Logarithms in parameter formulas are natural logarithms.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import montecarlo
from .correlation import (
    correlation_value,
    correlation_weights,
    depolarized_epr,
    noise_operator,
    smoothing_gamma,
    state_from_json,
)
from .errors import ArgumentError, CapacityError, PreconditionError, StochasticFailure
from .fourier import (
    FourierExpansion,
    _digits,
    degree_table,
    degree_truncate,
    fourier_expand,
    influences,
    reconstruct,
)
from .gaussian import (
    CorrelatedGaussianSource,
    GaussianPolynomial,
    QuadraticPolynomial,
    RandomOperator,
    ReducedFunction,
    basis_stack,
    random_operator_correlation,
)
from .operators import MAX_QUBITS, EIGEN_TOL, HermitianOperator, MeasurementOperator
from .zeta import trace_zeta, zeta_scalar

STEPS = (
    "input",
    "smooth",
    "regularize",
    "invariance_forward",
    "reduce_dimension",
    "smooth_random",
    "multilinearize",
    "invariance_backward",
    "round",
)
MAX_DEGREE_GAUSSIAN = 2
MAX_INPUT_COEFFS = 1 << 20
MONOTONE_TOL = 1e-12


# --- parameters ------------------------------------------------------------------------


@dataclass(frozen=True)
class Caps:
    h: int = 2
    n0: int = 200
    t: int = 4

    @classmethod
    def parse(cls, text):
        try:
            h, n0, t = (int(v) for v in str(text).split(","))
        except ValueError:
            raise ArgumentError("caps must look like h,n0,t") from None
        return cls(h, n0, t)

    def __post_init__(self):
        if self.h < 0 or self.n0 < 1 or self.t < 1:
            raise ArgumentError("caps need h >= 0, n0 >= 1, t >= 1")


@dataclass(frozen=True)
class PipelineParams:
    """``epsilon`` is the depolarizing noise of the shared state; ``constant`` is the smoothing C."""

    delta: float = 0.1
    tau: float = 0.3
    epsilon: float = 0.3
    copies: int = 2
    constant: float = 1.0
    caps: Caps = field(default_factory=Caps)
    seed: int = 0
    samples: int = 4096
    retries: int = 3

    def __post_init__(self):
        if not 0 < self.delta < 1:
            raise ArgumentError("delta must lie in (0, 1)")
        if not 0 < self.tau < 1:
            raise ArgumentError("tau must lie in (0, 1)")
        if self.copies < 1:
            raise ArgumentError("copies must be positive")
        if self.constant <= 0:
            raise ArgumentError("the smoothing constant must be positive")
        if self.samples < 2:
            raise ArgumentError("need at least two Monte-Carlo samples")
        if self.retries < 1:
            raise ArgumentError("retries must be positive")

    def state(self):
        return depolarized_epr(self.epsilon)

    def to_json(self):
        return {
            "delta": self.delta,
            "tau": self.tau,
            "epsilon": self.epsilon,
            "copies": self.copies,
            "constant": self.constant,
            "caps": [self.caps.h, self.caps.n0, self.caps.t],
            "seed": self.seed,
            "samples": self.samples,
            "retries": self.retries,
        }

    @classmethod
    def from_json(cls, data):
        data = dict(data)
        caps = data.pop("caps", None)
        if caps is not None:
            data["caps"] = Caps.parse(caps) if isinstance(caps, str) else Caps(*caps)
        return cls(**data)


def smoothing_degree(rho, delta, constant=1.0):
    """d_1 = 2 ln^2(1/delta) / (C (1 - rho) delta)."""
    return 2 * math.log(1 / delta) ** 2 / (constant * (1 - rho) * delta)


def gaussian_smoothing_degree(rho, delta):
    """d_2 = ln^2(1/delta) / (delta (1 - rho))."""
    return math.log(1 / delta) ** 2 / (delta * (1 - rho))


def log10_n0(h, d1, s, delta):
    """log10 of n0 = 4^(3h + 4) d1^d1 s^2 / delta^2 (the number itself overflows)."""
    return ((3 * h + 4) * math.log(4) + d1 * math.log(d1) + 2 * math.log(s) - 2 * math.log(delta)) / math.log(10)


def derive_parameters(params, rho, s, h):
    d1 = smoothing_degree(rho, params.delta, params.constant)
    d2_raw = gaussian_smoothing_degree(rho, params.delta)
    d2 = min(math.ceil(d2_raw), MAX_DEGREE_GAUSSIAN)
    t_raw = d2_raw**2 / params.tau**2
    lg_n0 = log10_n0(h, d1, s, params.delta)
    n0 = params.caps.n0 if lg_n0 > math.log10(params.caps.n0) else max(1, math.ceil(10**lg_n0))
    t = min(params.caps.t, math.ceil(t_raw))
    return {
        "rho": rho,
        "s": s,
        "gamma1": smoothing_gamma(rho, params.delta / 2, params.constant),
        "d1": d1,
        "h_bound": 2 * s * d1 / params.tau,
        "h": h,
        "delta_dr": params.delta / (2 * s),
        "alpha": 1 / (4 * s),
        "log10_n0": lg_n0,
        "n0": n0,
        "d2_raw": d2_raw,
        "d2": d2,
        "gamma2": smoothing_gamma(rho, params.delta / 2, params.constant),
        "t_raw": t_raw,
        "t": t,
        "D": h + n0 * t,
        "scaled": bool(math.log10(n0) < lg_n0 or t < t_raw or d2 < d2_raw),
    }


# --- step 1: smoothing -------------------------------------------------------------------


def _as_expansion(p, basis):
    if isinstance(p, FourierExpansion):
        return p
    if not isinstance(p, HermitianOperator):
        p = HermitianOperator(p)
    return fourier_expand(p, basis)


def _check_measurement(exp, label):
    ev = np.linalg.eigvalsh(reconstruct(exp).matrix)
    if ev[0] < -EIGEN_TOL or ev[-1] > 1 + EIGEN_TOL:
        raise PreconditionError(f"{label} is not a measurement operator")


def smooth_operators(p, q, psi, delta, constant=1.0):
    """P1 = T_(1 - gamma) P with gamma chosen for a delta/2 correlation shift; returns (P1, Q1, d1)."""
    basis_a, basis_b, c = psi.aligned
    pe, qe = _as_expansion(p, basis_a), _as_expansion(q, basis_b)
    _check_measurement(pe, "P")
    _check_measurement(qe, "Q")
    rho = float(c[1])
    gamma = smoothing_gamma(rho, delta / 2, constant)
    return noise_operator(pe, 1 - gamma), noise_operator(qe, 1 - gamma), smoothing_degree(rho, delta, constant)


# --- step 2: regularization ---------------------------------------------------------------


def heavy_coordinates(exp, d1, tau):
    low = degree_truncate(exp, "<=", max(0, math.floor(d1)))
    return {i + 1 for i, v in enumerate(influences(low)) if v >= tau}


def split_components(exp, h_set):
    """P_sigma for sigma in {0,1,2,3}^H: the expansion on the remaining coordinates."""
    n = exp.n_qubits
    hs = sorted(h_set)
    rest = [i for i in range(1, n + 1) if i not in set(hs)]
    digits = _digits(n)
    out = {}
    for idx, coef in enumerate(exp.coeffs):
        if coef == 0.0:
            continue
        key = sum(int(digits[idx, i - 1]) * 4**k for k, i in enumerate(hs))
        sub = sum(int(digits[idx, i - 1]) * 4**k for k, i in enumerate(rest))
        out.setdefault(key, np.zeros(4 ** len(rest)))[sub] = coef
    return {k: FourierExpansion(len(rest), exp.basis, v) for k, v in sorted(out.items())}


def regularize(p1, q1, d1, tau):
    """H = {i : Inf_i(P1^(<= d1)) >= tau or Inf_i(Q1^(<= d1)) >= tau} and the split expansions."""
    h_set = heavy_coordinates(p1, d1, tau) | heavy_coordinates(q1, d1, tau)
    if len(h_set) > 2 * d1 / tau:
        raise AssertionError("regularization produced more coordinates than allowed")
    return sorted(h_set), split_components(p1, h_set), split_components(q1, h_set)


# --- step 3: Gaussian substitution ----------------------------------------------------------


def gaussian_substitute(exp, h_set, weights=None):
    """Coordinates outside H become Gaussians: sigma_i = b != 0 maps to variable 3(i' - 1) + b.

    ``weights[b]`` multiplies every substituted variable of type b (1 for P,
    c_b / rho for Q).
    """
    n = exp.n_qubits
    hs = sorted(h_set)
    rest = [i for i in range(1, n + 1) if i not in set(hs)]
    n_vars = 3 * len(rest)
    digits = _digits(n)
    terms = {}
    for idx, coef in enumerate(exp.coeffs):
        if coef == 0.0:
            continue
        key = sum(int(digits[idx, i - 1]) * 4**k for k, i in enumerate(hs))
        mono = []
        c = float(coef)
        for k, i in enumerate(rest):
            b = int(digits[idx, i - 1])
            if b:
                mono.append((3 * k + b - 1, 1))
                if weights is not None:
                    c *= weights[b]
        terms.setdefault(key, {})[tuple(mono)] = c
    comps = {key: GaussianPolynomial(n_vars, t) for key, t in terms.items()}
    return RandomOperator(len(hs), n_vars, exp.basis, comps)


def invariance_forward(p1, q1, h_set, psi):
    _, _, c = psi.aligned
    rho = float(c[1])
    wq = [1.0] + [float(c[b]) / rho for b in (1, 2, 3)]
    return gaussian_substitute(p1, h_set), gaussian_substitute(q1, h_set, wq)


# --- step 4: dimension reduction ---------------------------------------------------------


def sample_reduction_matrix(n_vars, n0, seed, attempt=0):
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), montecarlo.stream_id("reduction-matrix"), attempt])
    return np.random.Generator(np.random.Philox(ss)).standard_normal((n_vars, n0))


def apply_reduction(op, m):
    """p_sigma -> p_sigma(M x / ||x||) for every component, with a shared M."""
    return op.map(lambda f: ReducedFunction(QuadraticPolynomial.coerce(f), m), n_vars=m.shape[1])


def reduce_dimension(p2, q2, psi, delta, alpha, n0, seed, samples=4096, attempt=0):
    """Single-pair form: returns (P3, Q3, report) with the four item checks measured."""
    m = sample_reduction_matrix(p2.n_vars, n0, seed, attempt)
    p3, q3 = apply_reduction(p2, m), apply_reduction(q2, m)
    stats2 = _gaussian_stats([p2], [q2], [(0, 0)], psi, seed, "dr-before", samples)
    stats3 = _gaussian_stats([p3], [q3], [(0, 0)], psi, seed, "dr-after", samples)
    corr2 = random_operator_correlation(p2, q2, psi.aligned[2], float(psi.aligned[2][1]))
    checks = _reduction_checks([p2], [q2], [p3], [q3], [(0, 0)], stats2, stats3, corr2, stats3["pairs"],
                               delta, alpha)
    return p3, q3, {"matrix_shape": list(m.shape), "attempt": attempt, "checks": checks}


# --- step 5: smoothing random operators ------------------------------------------------------


def smooth_component(f, gamma, d2):
    if isinstance(f, ReducedFunction):
        f = f.low_degree_projection()
    elif not isinstance(f, QuadraticPolynomial):
        f = QuadraticPolynomial.coerce(f)
    return f.ornstein_uhlenbeck(1 - gamma).degree_truncate(d2)


def smooth_random(p3, q3, psi, delta, constant=1.0):
    """(U_(1 - gamma2) f)^(<= d2) per component; returns (P4, Q4, d2)."""
    rho = float(psi.aligned[2][1])
    gamma = smoothing_gamma(rho, delta / 2, constant)
    d2 = min(math.ceil(gaussian_smoothing_degree(rho, delta)), MAX_DEGREE_GAUSSIAN)
    return (p3.map(lambda f: smooth_component(f, gamma, d2)),
            q3.map(lambda f: smooth_component(f, gamma, d2)), d2)


# --- step 6: multilinearization -------------------------------------------------------------


def multilinearize_operator(op, t):
    return op.map(lambda f: QuadraticPolynomial.coerce(f).variable_split(t).multilinear_truncate(),
                  n_vars=op.n_vars * t)


def multilinearize(p4, q4, tau, t_cap=None):
    """Split each variable into t normalized copies and drop non-multilinear terms; returns (P5, Q5, t)."""
    d = max(p4.degree(), q4.degree(), 1)
    t = math.ceil(d * d / tau**2)
    if t_cap is not None:
        t = min(t, int(t_cap))
    return multilinearize_operator(p4, t), multilinearize_operator(q4, t), t


# --- step 7: back to operators ------------------------------------------------------------


class BlockSignOperator:
    """sum_s P_s (x) Pi_s on h + m qubits, P_s = sum_sigma p_sigma(s) B_sigma.

    Pi_s projects onto the joint eigenspace of the commuting observables E_j =
    ``element`` acting on qubit h + j; with ``rounded`` every block is
    clamped to [0, 1].
    """

    def __init__(self, random_op, element, rounded=False):
        if not random_op.is_multilinear():
            raise PreconditionError("backward substitution needs multilinear components")
        self.random_op = random_op
        self.element = np.asarray(element)
        self.rounded = bool(rounded)

    @property
    def h_qubits(self):
        return self.random_op.h_qubits

    @property
    def n_vars(self):
        return self.random_op.n_vars

    @property
    def n_qubits(self):
        return self.h_qubits + self.n_vars

    @property
    def basis(self):
        return self.random_op.basis

    def rounded_copy(self):
        return BlockSignOperator(self.random_op, self.element, rounded=True)

    def blocks(self, signs):
        """Matrices P_s for each row of ``signs``, shape (N, 2^h, 2^h)."""
        mats = self.random_op.operator_samples(signs)
        if self.rounded:
            mats = _clamp_blocks(mats)
        return mats

    def block_coefficients(self, signs):
        """Fourier coefficients of every block in the operator's basis, shape (N, 4^h)."""
        coef = self.random_op.coefficient_samples(signs)
        if not self.rounded:
            return coef
        return _block_coefficients(_clamp_blocks(self._from_coefficients(coef)), self.basis, self.h_qubits)

    def _from_coefficients(self, coef):
        return np.einsum("ns,sab->nab", coef, basis_stack(self.basis, self.h_qubits))

    def to_dense(self):
        n = self.n_qubits
        if n > MAX_QUBITS:
            raise CapacityError(f"{n} qubits exceed the dense cap of {MAX_QUBITS}")
        m = self.n_vars
        signs = np.array([[1.0 - 2.0 * ((k >> j) & 1) for j in range(m)] for k in range(1 << m)])
        signs = signs.reshape(1 << m, m)
        blocks = self.blocks(signs)
        eye = np.eye(2)
        halves = {1.0: (eye + self.element) / 2, -1.0: (eye - self.element) / 2}
        out = np.zeros((1 << n, 1 << n), dtype=complex)
        for s, blk in zip(signs, blocks):
            proj = np.ones((1, 1))
            for v in s:
                proj = np.kron(proj, halves[float(v)])
            out += np.kron(blk, proj)
        cls = MeasurementOperator if self.rounded else HermitianOperator
        return cls(out, max_qubits=MAX_QUBITS)

    def digest(self):
        return _digest(self.random_op) + (":rounded" if self.rounded else "")

    def to_json(self):
        return {"rounded": self.rounded, "element": {"re": self.element.real.tolist(), "im": self.element.imag.tolist()},
                "random_operator": self.random_op.to_json()}


def _clamp_blocks(mats):
    evals, evecs = np.linalg.eigh(mats)
    vals = np.clip(evals, 0.0, 1.0)
    return np.einsum("nij,nj,nkj->nik", evecs, vals, evecs.conj())


def _block_coefficients(mats, basis, h):
    stack = basis_stack(basis, h)
    return np.real(np.einsum("sab,nba->ns", stack, mats)) / (1 << h)


def invariance_backward(p5, q5, psi):
    basis_a, basis_b, _ = psi.aligned
    return BlockSignOperator(p5, basis_a[1]), BlockSignOperator(q5, basis_b[1])


def round_operator(op):
    return op.rounded_copy()


# --- statistics --------------------------------------------------------------------------------


def _digest(obj):
    h = hashlib.sha256()
    if isinstance(obj, FourierExpansion):
        h.update(np.ascontiguousarray(obj.coeffs).tobytes())
    elif isinstance(obj, RandomOperator):
        h.update(f"{obj.h_qubits}:{obj.n_vars}".encode())
        for s, f in obj.components.items():
            h.update(str(s).encode())
            _digest_component(h, f)
    elif isinstance(obj, BlockSignOperator):
        return obj.digest()
    else:
        raise ArgumentError(f"cannot fingerprint {type(obj).__name__}")
    return h.hexdigest()[:16]


def _digest_component(h, f):
    if isinstance(f, QuadraticPolynomial):
        for part in f.fingerprint():
            h.update(part if isinstance(part, bytes) else repr(part).encode())
    elif isinstance(f, ReducedFunction):
        _digest_component(h, QuadraticPolynomial.coerce(f.f))
        h.update(np.ascontiguousarray(f.matrix).tobytes())
    else:
        h.update(repr(sorted(f.terms.items())).encode())


def _normalized_zeta(mats):
    ev = np.linalg.eigvalsh(mats)
    return np.mean(zeta_scalar(ev), axis=1)


def _column_stats(values):
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    mean = v.mean(axis=0)
    se = v.std(axis=0, ddof=1) / math.sqrt(n)
    return mean, se


def _gaussian_stats(p_ops, q_ops, pairs, psi, seed, stream, samples, threads=None):
    """Monte-Carlo Tr zeta per operator and correlation per pair, with common draws."""
    c = psi.aligned[2]
    rho = float(c[1])
    n_vars = p_ops[0].n_vars if p_ops else q_ops[0].n_vars
    h = p_ops[0].h_qubits if p_ops else q_ops[0].h_qubits
    w = correlation_weights(c, h)
    src = CorrelatedGaussianSource(n_vars, rho, seed)

    def fn(g, hv):
        pc = [op.coefficient_samples(g) for op in p_ops]
        qc = [op.coefficient_samples(hv) for op in q_ops]
        cols = []
        for coef, op in zip(pc + qc, list(p_ops) + list(q_ops)):
            stack = basis_stack(op.basis, op.h_qubits)
            cols.append(_normalized_zeta(np.einsum("ns,sab->nab", coef, stack)))
        for i, j in pairs:
            cols.append((pc[i] * qc[j]) @ w)
        return np.stack(cols, axis=1)

    vals = src.map(fn, samples, montecarlo.stream_id("pipeline", stream), threads)
    mean, se = _column_stats(vals)
    k = len(p_ops) + len(q_ops)
    return {"zeta": list(zip(mean[:k], se[:k])), "pairs": list(zip(mean[k:], se[k:]))}


def _sign_stats(p_ops, q_ops, pairs, psi, seed, stream, samples, threads=None):
    """Per-operator trace, N_2^2, Tr zeta and eigenvalue range, and per-pair correlation,
    for both the unrounded and rounded versions, over shared rho-correlated sign draws."""
    c = psi.aligned[2]
    rho = float(c[1])
    op0 = (p_ops or q_ops)[0]
    h = op0.h_qubits
    w = correlation_weights(c, h)
    src = CorrelatedGaussianSource(op0.n_vars, rho, seed)
    ops = list(p_ops) + list(q_ops)
    n_ops = len(ops)

    def fn(s, sp):
        raw, rnd, cols = [], [], []
        for k, op in enumerate(ops):
            coef = op.random_op.coefficient_samples(s if k < len(p_ops) else sp)
            mats = np.einsum("ns,sab->nab", coef, basis_stack(op.basis, h))
            ev = np.linalg.eigvalsh(mats)
            clamped = _clamp_blocks(mats)
            rcoef = _block_coefficients(clamped, op.basis, h)
            raw.append(coef)
            rnd.append(rcoef)
            rev = np.linalg.eigvalsh(clamped)
            cols += [coef[:, 0], np.sum(coef**2, axis=1), np.mean(zeta_scalar(ev), axis=1),
                     rcoef[:, 0], np.sum(rcoef**2, axis=1), np.mean(zeta_scalar(rev), axis=1),
                     rev[:, 0], rev[:, -1]]
        for i, j in pairs:
            jj = len(p_ops) + j
            cols += [(raw[i] * raw[jj]) @ w, (rnd[i] * rnd[jj]) @ w]
        return np.stack(cols, axis=1)

    vals = src.map_signs(fn, samples, montecarlo.stream_id("pipeline", stream), threads)
    mean, se = _column_stats(vals)
    per_op = []
    for k in range(n_ops):
        b = 8 * k
        per_op.append({
            "trace": (mean[b], se[b]), "n2sq": (mean[b + 1], se[b + 1]), "zeta": (mean[b + 2], se[b + 2]),
            "round_trace": (mean[b + 3], se[b + 3]), "round_n2sq": (mean[b + 4], se[b + 4]),
            "round_zeta": (mean[b + 5], se[b + 5]),
            "round_min_eig": float(vals[:, b + 6].min()), "round_max_eig": float(vals[:, b + 7].max()),
        })
    base = 8 * n_ops
    per_pair = [{"correlation": (mean[base + 2 * u], se[base + 2 * u]),
                 "round_correlation": (mean[base + 2 * u + 1], se[base + 2 * u + 1])}
                for u in range(len(pairs))]
    return per_op, per_pair


# --- trace --------------------------------------------------------------------------------------


def _f(x):
    return float(x)


class PipelineTrace:
    """Per-step records of trace, N_2, Tr zeta and correlation for every operator and pair."""

    def __init__(self, header):
        self.header = header
        self.steps = []
        self.summary = {}

    def record(self, name, operators, pairs, checks=None, info=None, elapsed=None):
        rec = {"step": name, "operators": operators, "pairs": pairs, "checks": checks or []}
        if info:
            rec["info"] = info
        if elapsed is not None:
            rec["elapsed"] = elapsed
        self.steps.append(rec)
        return rec

    def step(self, name):
        for rec in self.steps:
            if rec["step"] == name:
                return rec
        raise KeyError(name)

    def to_json(self):
        return {**self.header, "steps": self.steps, "summary": self.summary}

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True, indent=1)


def _op_record(trace, n2, zeta, zeta_se=0.0, digest=None):
    rec = {"trace": _f(trace), "n2": _f(n2), "zeta": _f(zeta), "zeta_se": _f(zeta_se)}
    if digest is not None:
        rec["digest"] = digest
    return rec


def _pair_record(corr, se=0.0, **extra):
    rec = {"correlation": _f(corr), "correlation_se": _f(se)}
    rec.update({k: _f(v) for k, v in extra.items()})
    return rec


def _check(name, target, value, bound, asserted=False):
    return {"name": name, "target": target, "value": _f(value), "bound": _f(bound),
            "pass": bool(value <= bound), "asserted": bool(asserted)}


def _monotone(checks, name, labels, before, after):
    for lab, a, b in zip(labels, before, after):
        chk = _check(name, lab, b, a + MONOTONE_TOL, asserted=True)
        checks.append(chk)
        if not chk["pass"]:
            raise AssertionError(f"{name}: N2 of {lab} increased from {a} to {b}")


def _reduction_checks(p2, q2, p3, q3, pairs, stats2, stats3, corr2, corr3, delta, alpha,
                      p_labels=None, q_labels=None):
    p_labels = p_labels or [f"P{k}" for k in range(len(p2))]
    q_labels = q_labels or [f"Q{k}" for k in range(len(q2))]
    checks = []
    ops2, ops3 = list(p2) + list(q2), list(p3) + list(q3)
    for k, lab in enumerate(list(p_labels) + list(q_labels)):
        n2 = ops2[k].n2()
        checks.append(_check("n2_growth", lab, ops3[k].n2(), (1 + delta) * n2))
        checks.append(_check("trace_shift", lab,
                             abs(ops3[k].mean_normalized_trace() - ops2[k].mean_normalized_trace()), delta * n2))
        checks.append(_check("zeta_growth", lab, stats3["zeta"][k][0], stats2["zeta"][k][0] / math.sqrt(alpha)))
    for u, (i, j) in enumerate(pairs):
        c2 = corr2[u] if isinstance(corr2, list) else corr2
        c3 = corr3[u][0]
        bound = delta * p2[i].n2() * q2[j].n2()
        checks.append(_check("correlation_shift", f"pair{u}", abs(c3 - c2), bound))
    return checks


# --- driver -----------------------------------------------------------------------------------


class PipelineResult:
    def __init__(self, p_out, q_out, trace, pair_stats, derived, h_set):
        self.p_out = p_out
        self.q_out = q_out
        self.trace = trace
        self._pair_stats = pair_stats
        self.derived = derived
        self.h_set = h_set

    @property
    def outputs(self):
        return self.p_out, self.q_out

    def __iter__(self):
        yield self.outputs
        yield self.trace

    def pair_statistics(self):
        """(Tr(P x Q) psi^D, Tr P psi_A^D, Tr Q psi_B^D) per pair for the rounded outputs."""
        return list(self._pair_stats)

    def outputs_are_measurements(self, tol=1e-12):
        rounds = self.trace.step("round")["operators"]
        return all(r["min_eig"] >= -tol and r["max_eig"] <= 1 + tol for r in rounds.values())


def _unique(ops, prefix):
    """Label distinct inputs by their matrix bytes; equal inputs share one label."""
    labels, index, reps = [], {}, []
    for op in ops:
        key = np.ascontiguousarray(op.matrix).tobytes()
        if key not in index:
            index[key] = f"{prefix}{len(reps)}"
            reps.append(op)
        labels.append(index[key])
    return labels, reps


def _coerce_measurement(op):
    if isinstance(op, MeasurementOperator):
        return op
    try:
        return MeasurementOperator(op.matrix if isinstance(op, HermitianOperator) else op)
    except ArgumentError as exc:
        raise PreconditionError(f"input is not a measurement operator: {exc}") from None


def run_pipeline(p_list, q_list, params, psi=None, h_set=None, threads=None, record_time=True):
    """Transform the paired sequences (P_u, Q_u); returns a PipelineResult.

    ``h_set`` forces the regularization coordinates (1-indexed); by default
    they are the union of the heavy coordinates over all pairs, trimmed to
    the h cap by influence.
    """
    if len(p_list) != len(q_list) or not p_list:
        raise ArgumentError("need two non-empty sequences of equal length")
    psi = params.state() if psi is None else psi
    p_list = [_coerce_measurement(p) for p in p_list]
    q_list = [_coerce_measurement(q) for q in q_list]
    n = params.copies
    if any(op.n_qubits != n for op in p_list + q_list):
        raise PreconditionError(f"every operator must act on {n} qubits")
    s = len(p_list)
    if 2 * n > MAX_QUBITS or s * 4**n > MAX_INPUT_COEFFS:
        raise CapacityError("input strategy exceeds the pipeline capacity")
    basis_a, basis_b, c = psi.aligned
    rho = float(c[1])
    if rho >= 1 - 1e-9:
        raise ArgumentError("the shared state must have maximal correlation below 1")

    p_lab, p_reps = _unique(p_list, "P")
    q_lab, q_reps = _unique(q_list, "Q")
    p_idx = {lab: k for k, lab in enumerate(dict.fromkeys(p_lab))}
    q_idx = {lab: k for k, lab in enumerate(dict.fromkeys(q_lab))}
    pairs = [(p_idx[a], q_idx[b]) for a, b in zip(p_lab, q_lab)]
    distinct_pairs = list(dict.fromkeys(pairs))
    pair_of = [distinct_pairs.index(pr) for pr in pairs]
    p_names = list(p_idx)
    q_names = list(q_idx)
    names = p_names + q_names
    seed = params.seed
    samples = params.samples
    clock = time.perf_counter

    header = {
        "params": params.to_json(),
        "state": psi.to_json(),
        "labels": {"P": p_lab, "Q": q_lab},
        "pairs": [[p_names[i], q_names[j]] for i, j in distinct_pairs],
    }
    trace = PipelineTrace(header)

    def exact_pairs(pexp, qexp):
        return [_pair_record(correlation_value(pexp[i], qexp[j], psi)) for i, j in distinct_pairs]

    def expansion_ops(pexp, qexp):
        out = {}
        for lab, e in zip(names, list(pexp) + list(qexp)):
            m = reconstruct(e).matrix
            out[lab] = _op_record(e.mean(), e.norm2(), trace_zeta(m) / m.shape[0], digest=_digest(e))
        return out

    # step 0: inputs
    t0 = clock()
    p0 = [fourier_expand(p, basis_a) for p in p_reps]
    q0 = [fourier_expand(q, basis_b) for q in q_reps]
    pair_in = exact_pairs(p0, q0)
    trace.record("input", expansion_ops(p0, q0), pair_in, elapsed=_el(record_time, clock, t0))

    # step 1: smoothing
    t0 = clock()
    gamma1 = smoothing_gamma(rho, params.delta / 2, params.constant)
    d1 = smoothing_degree(rho, params.delta, params.constant)
    p1 = [noise_operator(e, 1 - gamma1) for e in p0]
    q1 = [noise_operator(e, 1 - gamma1) for e in q0]
    checks = []
    _monotone(checks, "n2_nonincreasing", names, [e.norm2() for e in p0 + q0], [e.norm2() for e in p1 + q1])
    for lab, a, b in zip(names, p0 + q0, p1 + q1):
        checks.append(_check("trace_preserved", lab, abs(a.mean() - b.mean()), 1e-12, asserted=True))
        high = degree_truncate(b, ">", max(0, math.floor(d1))).norm2() ** 2
        checks.append(_check("high_degree_mass", lab, high, params.delta))
    pair1 = exact_pairs(p1, q1)
    for u, (a, b) in enumerate(zip(pair_in, pair1)):
        checks.append(_check("correlation_shift", f"pair{u}", abs(a["correlation"] - b["correlation"]), params.delta))
    trace.record("smooth", expansion_ops(p1, q1), pair1, checks,
                 info={"gamma": gamma1, "d1": d1}, elapsed=_el(record_time, clock, t0))

    # step 2: regularization
    t0 = clock()
    infl = {lab: influences(degree_truncate(e, "<=", max(0, math.floor(d1)))) for lab, e in zip(names, p1 + q1)}
    if h_set is None:
        heavy = {}
        for i, j in distinct_pairs:
            for lab in (p_names[i], q_names[j]):
                for k, v in enumerate(infl[lab]):
                    if v >= params.tau:
                        heavy[k + 1] = max(heavy.get(k + 1, 0.0), v)
        found = sorted(heavy)
        if len(found) > 2 * len(distinct_pairs) * d1 / params.tau:
            raise AssertionError("regularization produced more coordinates than allowed")
        h_trimmed = len(found) > params.caps.h
        chosen = sorted(sorted(found, key=lambda i: (-heavy[i], i))[: params.caps.h])
    else:
        found = sorted(int(i) for i in h_set)
        if any(not 1 <= i <= n for i in found):
            raise ArgumentError("forced coordinates must lie in 1..n")
        h_trimmed = False
        chosen = found
    h = len(chosen)
    derived = derive_parameters(params, rho, s, h)
    derived["scaled"] = bool(derived["scaled"] or h_trimmed or derived["h_bound"] > params.caps.h)
    checks = []
    outside = [i for i in range(1, n + 1) if i not in set(chosen)]
    worst = max((infl[lab][i - 1] for lab in names for i in outside), default=0.0)
    checks.append(_check("light_outside_H", "all", worst, params.tau, asserted=not h_trimmed))
    if not h_trimmed and worst > params.tau and h_set is None:
        raise AssertionError("a coordinate outside H is still influential")
    trace.header["derived"] = derived
    trace.record("regularize", expansion_ops(p1, q1), pair1, checks,
                 info={"H": chosen, "heavy": found, "trimmed": h_trimmed,
                       "influences": {k: [float(x) for x in v] for k, v in infl.items()}},
                 elapsed=_el(record_time, clock, t0))

    # step 3: invariance to random operators
    t0 = clock()
    wq = [1.0] + [float(c[b]) / rho for b in (1, 2, 3)]
    p2 = [gaussian_substitute(e, chosen) for e in p1]
    q2 = [gaussian_substitute(e, chosen, wq) for e in q1]
    if h > MAX_QUBITS // 2:
        raise CapacityError("too many regularization coordinates for the block representation")
    st2 = _gaussian_stats(p2, q2, distinct_pairs, psi, seed, "forward", samples, threads)
    corr2 = [random_operator_correlation(p2[i], q2[j], c, rho) for i, j in distinct_pairs]
    checks = []
    for lab, a, b in zip(names, p1 + q1, p2 + q2):
        checks.append(_check("trace_matched", lab, abs(a.mean() - b.mean_normalized_trace()), 1e-12, asserted=True))
        checks.append(_check("n2_nonincreasing", lab, b.n2(), a.norm2() + MONOTONE_TOL, asserted=True))
        deg = max(a.degree(), 1)
        scale = (3**deg * math.sqrt(params.tau) * deg) ** (2 / 3) + math.sqrt(params.delta)
        checks.append(_check("zeta_bound_unit_constant", lab, st2["zeta"][names.index(lab)][0], scale))
    for u, (a, b) in enumerate(zip(pair1, corr2)):
        checks.append(_check("correlation_matched", f"pair{u}", abs(a["correlation"] - b), 1e-10, asserted=True))
    for chk in checks:
        if chk["asserted"] and not chk["pass"]:
            raise AssertionError(f"invariance_forward: {chk['name']} failed for {chk['target']}")
    trace.record("invariance_forward", _random_ops(names, p2 + q2, st2), _gauss_pairs(corr2, st2), checks,
                 info={"n_vars": p2[0].n_vars, "h": h}, elapsed=_el(record_time, clock, t0))

    # step 4: dimension reduction
    t0 = clock()
    n0 = derived["n0"]
    attempts = []
    tries = 1 if derived["scaled"] else params.retries
    for attempt in range(tries):
        m = sample_reduction_matrix(p2[0].n_vars, n0, seed, attempt)
        p3 = [apply_reduction(op, m) for op in p2]
        q3 = [apply_reduction(op, m) for op in q2]
        st3 = _gaussian_stats(p3, q3, distinct_pairs, psi, seed, f"reduce-{attempt}", samples, threads)
        checks = _reduction_checks(p2, q2, p3, q3, distinct_pairs, st2, st3, corr2, st3["pairs"],
                                   derived["delta_dr"], derived["alpha"], p_names, q_names)
        ok = all(ch["pass"] for ch in checks)
        attempts.append({"attempt": attempt, "pass": ok,
                         "failed": [f"{ch['name']}:{ch['target']}" for ch in checks if not ch["pass"]]})
        if ok or derived["scaled"]:
            break
    else:
        raise StochasticFailure("dimension reduction failed on every retry", {"attempts": attempts})
    trace.record("reduce_dimension",
                 _random_ops(names, p3 + q3, st3), _mc_pairs(st3), checks,
                 info={"n0": n0, "attempts": attempts}, elapsed=_el(record_time, clock, t0))

    # step 5: smoothing random operators
    t0 = clock()
    gamma2 = derived["gamma2"]
    d2 = derived["d2"]
    p4 = [op.map(lambda f: smooth_component(f, gamma2, d2)) for op in p3]
    q4 = [op.map(lambda f: smooth_component(f, gamma2, d2)) for op in q3]
    st4 = _gaussian_stats(p4, q4, distinct_pairs, psi, seed, "smooth-random", samples, threads)
    corr4 = [random_operator_correlation(p4[i], q4[j], c, rho) for i, j in distinct_pairs]
    checks = []
    _monotone(checks, "n2_nonincreasing", names, [op.n2() for op in p3 + q3], [op.n2() for op in p4 + q4])
    for k, (lab, a, b) in enumerate(zip(names, p3 + q3, p4 + q4)):
        deg = max((f.degree() for f in b.components.values()), default=0)
        checks.append(_check("degree", lab, deg, d2, asserted=True))
        checks.append(_check("trace_preserved", lab, abs(a.mean_normalized_trace() - b.mean_normalized_trace()),
                             1e-12, asserted=True))
        checks.append(_check("zeta_inflation", lab, st4["zeta"][k][0],
                             2 * (st3["zeta"][k][0] + params.delta * a.n2() ** 2)))
    for u, (i, j) in enumerate(distinct_pairs):
        checks.append(_check("correlation_shift", f"pair{u}", abs(corr4[u] - st3["pairs"][u][0]),
                             params.delta * p3[i].n2() * q3[j].n2()))
    trace.record("smooth_random", _random_ops(names, p4 + q4, st4), _gauss_pairs(corr4, st4), checks,
                 info={"gamma": gamma2, "d2": d2}, elapsed=_el(record_time, clock, t0))

    # step 6: multilinearization
    t0 = clock()
    t = derived["t"]
    p5 = [multilinearize_operator(op, t) for op in p4]
    q5 = [multilinearize_operator(op, t) for op in q4]
    st5 = _gaussian_stats(p5, q5, distinct_pairs, psi, seed, "multilinear", samples, threads)
    corr5 = [random_operator_correlation(p5[i], q5[j], c, rho) for i, j in distinct_pairs]
    checks = []
    _monotone(checks, "n2_nonincreasing", names, [op.n2() for op in p4 + q4], [op.n2() for op in p5 + q5])
    for k, (lab, a, b) in enumerate(zip(names, p4 + q4, p5 + q5)):
        checks.append(_check("multilinear", lab, 0.0 if b.is_multilinear() else 1.0, 0.0, asserted=True))
        checks.append(_check("trace_preserved", lab, abs(a.mean_normalized_trace() - b.mean_normalized_trace()),
                             1e-12, asserted=True))
        checks.append(_check("influence_shrink", lab, _influence_ratio(a, b, t), params.tau))
        checks.append(_check("zeta_drift", lab, abs(st5["zeta"][k][0] - st4["zeta"][k][0]),
                             params.tau * 4 * a.n2() ** 2))
    for u, (i, j) in enumerate(distinct_pairs):
        checks.append(_check("correlation_shift", f"pair{u}", abs(corr5[u] - corr4[u]),
                             params.tau * p4[i].n2() * q4[j].n2()))
    for chk in checks:
        if chk["asserted"] and not chk["pass"]:
            raise AssertionError(f"multilinearize: {chk['name']} failed for {chk['target']}")
    trace.record("multilinearize", _random_ops(names, p5 + q5, st5), _gauss_pairs(corr5, st5), checks,
                 info={"t": t, "n_vars": p5[0].n_vars}, elapsed=_el(record_time, clock, t0))

    # steps 7 and 8: back to operators, then rounding (one shared pass of sign draws)
    t0 = clock()
    p6 = [BlockSignOperator(op, basis_a[1]) for op in p5]
    q6 = [BlockSignOperator(op, basis_b[1]) for op in q5]
    per_op, per_pair = _sign_stats(p6, q6, distinct_pairs, psi, seed, "backward", samples, threads)
    ops6 = {}
    for lab, op, st in zip(names, p5 + q5, per_op):
        ops6[lab] = _op_record(op.mean_normalized_trace(), op.n2(), st["zeta"][0], st["zeta"][1],
                               digest=_digest(op))
        ops6[lab]["trace_mc"] = _f(st["trace"][0])
        ops6[lab]["n2_mc"] = _f(math.sqrt(max(st["n2sq"][0], 0.0)))
    pairs6 = [_pair_record(corr5[u], 0.0, correlation_mc=pp["correlation"][0], correlation_mc_se=pp["correlation"][1])
              for u, pp in enumerate(per_pair)]
    trace.record("invariance_backward", ops6, pairs6, [],
                 info={"qubits": h + p5[0].n_vars}, elapsed=_el(record_time, clock, t0))

    t0 = clock()
    p7 = [op.rounded_copy() for op in p6]
    q7 = [op.rounded_copy() for op in q6]
    ops7 = {}
    checks = []
    for lab, st in zip(names, per_op):
        rec = _op_record(st["round_trace"][0], math.sqrt(max(st["round_n2sq"][0], 0.0)),
                         st["round_zeta"][0], st["round_zeta"][1])
        rec["trace_se"] = _f(st["round_trace"][1])
        rec["min_eig"] = st["round_min_eig"]
        rec["max_eig"] = st["round_max_eig"]
        ops7[lab] = rec
        viol = max(0.0, -st["round_min_eig"], st["round_max_eig"] - 1)
        checks.append(_check("measurement_validity", lab, viol, 1e-12, asserted=True))
    pairs7 = [_pair_record(pp["round_correlation"][0], pp["round_correlation"][1]) for pp in per_pair]
    for chk in checks:
        if not chk["pass"]:
            raise AssertionError(f"rounding left {chk['target']} outside [0, 1]")
    trace.record("round", ops7, pairs7, checks, elapsed=_el(record_time, clock, t0))

    # requirement audit
    first = trace.step("input")
    trace_drift = {lab: abs(ops7[lab]["trace"] - first["operators"][lab]["trace"]) for lab in names}
    corr_drift = [abs(a["correlation"] - b["correlation"]) for a, b in zip(pairs7, first["pairs"])]
    trace.summary = {
        "H": chosen,
        "scaled": derived["scaled"],
        "D": derived["D"],
        "measurement_violation": max(ch["value"] for ch in checks),
        "max_trace_drift": max(trace_drift.values()),
        "max_correlation_drift": max(corr_drift),
        "trace_drift": trace_drift,
        "correlation_drift": corr_drift,
    }

    p_map = dict(zip(p_names, p7))
    q_map = dict(zip(q_names, q7))
    pair_stats = []
    for u in range(s):
        i, j = pairs[u]
        pr = pair_of[u]
        pair_stats.append((pairs7[pr]["correlation"], ops7[p_names[i]]["trace"], ops7[q_names[j]]["trace"]))
    return PipelineResult([p_map[lab] for lab in p_lab], [q_map[lab] for lab in q_lab], trace, pair_stats,
                          derived, chosen)


def _el(on, clock, t0):
    return round(clock() - t0, 6) if on else None


def _random_ops(names, ops, stats):
    return {lab: _op_record(op.mean_normalized_trace(), op.n2(), z[0], z[1], digest=_digest(op))
            for lab, op, z in zip(names, ops, stats["zeta"])}


def _gauss_pairs(exact, stats):
    return [_pair_record(e, 0.0, correlation_mc=mc[0], correlation_mc_se=mc[1]) for e, mc in zip(exact, stats["pairs"])]


def _mc_pairs(stats):
    return [_pair_record(m, se) for m, se in stats["pairs"]]


def _influence_ratio(before, after, t):
    """max over split variables (i, a) of Inf_(i,a)(p5) / Inf_i(p4), over all components."""
    worst = 0.0
    for key, f in before.components.items():
        g = after.components.get(key)
        if g is None:
            continue
        fq, gq = QuadraticPolynomial.coerce(f), QuadraticPolynomial.coerce(g)
        inf_b = fq.lin**2 + np.sum(fq.pair**2, axis=1) + fq.diag**2
        inf_a = gq.lin**2 + np.sum(gq.pair**2, axis=1) + gq.diag**2
        inf_a = inf_a.reshape(-1, t).max(axis=1)
        mask = inf_b > 0
        if np.any(mask):
            worst = max(worst, float(np.max(inf_a[mask] / inf_b[mask])))
    return worst


def load_manifest(data):
    """Run manifest: {"params": {...}, "P": [...], "Q": [...], optional "state", "game", "H"}."""
    if isinstance(data, str):
        data = json.loads(data)
    params = PipelineParams.from_json(data.get("params", {}))
    psi = state_from_json(data["state"]) if "state" in data else None
    p_list = [MeasurementOperator.from_json(p) for p in data.get("P", [])]
    q_list = [MeasurementOperator.from_json(q) for q in data.get("Q", [])]
    return params, psi, p_list, q_list, data.get("H")
