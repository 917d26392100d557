"""The distance-to-measurement potential zeta, its C^2 smoothing zeta_lambda,
eigenvalue rounding and Frechet-derivative tooling.

All matrix norms in this module are unnormalized Schatten norms.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import ArgumentError, SingularityError
from .operators import HermitianOperator, MeasurementOperator, schatten_norm

INVERTIBLE_TOL = 1e-10


class ZetaProfile:
    """lam = 0 selects the exact potential; 0 < lam <= 1/2 the smoothed one."""

    __slots__ = ("lam",)

    def __init__(self, lam=0.0):
        lam = float(lam)
        if lam != 0.0 and not 0 < lam <= 0.5:
            raise ArgumentError("lambda must be 0 or lie in (0, 1/2]")
        self.lam = lam

    @property
    def exact(self):
        return self.lam == 0.0

    def breakpoints(self):
        if self.exact:
            return (0.0, 1.0)
        lam = self.lam
        return (-lam, lam, 1 - lam, 1 + lam)

    def __repr__(self):
        return f"ZetaProfile(lam={self.lam})"


EXACT = ZetaProfile(0.0)


def _profile(p):
    if isinstance(p, ZetaProfile):
        return p
    return ZetaProfile(0.0 if p is None else p)


def _cube_plus(x):
    return np.where(x > 0, x, 0.0) ** 3


def zeta_scalar(x, profile=EXACT):
    """zeta(x) = x^2 below 0, (x - 1)^2 above 1, 0 between; zeta_lambda smooths the corners."""
    prof = _profile(profile)
    x = np.asarray(x, dtype=float)
    if prof.exact:
        out = np.where(x <= 0, x * x, np.where(x >= 1, (x - 1) ** 2, 0.0))
    else:
        lam = prof.lam
        out = np.select(
            [x <= -lam, x <= lam, x <= 1 - lam, x <= 1 + lam],
            [x * x + lam * lam / 3, (lam - x) ** 3 / (6 * lam), 0.0, (x - 1 + lam) ** 3 / (6 * lam)],
            (1 - x) ** 2 + lam * lam / 3,
        )
    return out if out.ndim else float(out)


def zeta_scalar_cubic_form(x, lam):
    """Same function written as x^2 + lam^2/3 plus four shifted truncated cubes."""
    x = np.asarray(x, dtype=float)
    k = 1.0 / (6 * lam)
    return (x * x + lam * lam / 3
            + k * (-_cube_plus(x + lam) + _cube_plus(x - lam)
                   + _cube_plus(x - 1 + lam) - _cube_plus(x - 1 - lam)))


def zeta_third_derivative(x, lam):
    """Piecewise third derivative of zeta_lambda (undefined at the four breakpoints)."""
    x = np.asarray(x, dtype=float)
    return np.where(np.abs(x) < lam, -1.0 / lam, np.where(np.abs(x - 1) < lam, 1.0 / lam, 0.0))


def trace_zeta(p, profile=EXACT):
    return float(np.sum(zeta_scalar(np.linalg.eigvalsh(_mat(p)), profile)))


def round_to_measurement(p):
    """Clamp the spectrum to [0, 1]; the closest measurement operator in 2-norm."""
    evals, evecs = np.linalg.eigh(_mat(p))
    vals = np.clip(evals, 0.0, 1.0)
    return MeasurementOperator((evecs * vals) @ evecs.conj().T)


def distance_to_measurements(p):
    return math.sqrt(trace_zeta(p))


def _mat(p):
    return p.matrix if isinstance(p, HermitianOperator) else np.asarray(p)


# --- Lyapunov-based derivative pieces ----------------------------------------------


def ell_q(p, q):
    """l_Q(P) = L(|P|, PQ + QP); entries Q_ij (a_i + a_j)/(|a_i| + |a_j|) in P's eigenbasis."""
    a, u = np.linalg.eigh(_mat(p))
    if np.min(np.abs(a)) <= INVERTIBLE_TOL:
        raise SingularityError("P must be invertible")
    qt = u.conj().T @ _mat(q) @ u
    absa = np.abs(a)
    x = qt * (a[:, None] + a[None, :]) / (absa[:, None] + absa[None, :])
    return HermitianOperator(u @ x @ u.conj().T)


def kappa_q(p, q):
    """kappa_Q(P) = {P, l_Q(P)}."""
    pm = _mat(p)
    ell = ell_q(p, q).matrix
    return HermitianOperator(pm @ ell + ell @ pm)


def _abs_and_plus_square(pm):
    a, u = np.linalg.eigh(pm)
    absm = (u * np.abs(a)) @ u.conj().T
    plus2 = (u * np.where(a > 0, a * a, 0.0)) @ u.conj().T
    return absm, plus2


def cube_first_derivative(p, q):
    """d/dt Tr q(P + tQ) at 0 for q(x) = max(x, 0)^3: Tr Q (p(P) + P^2 + P|P|)."""
    pm, qm = _mat(p), _mat(q)
    absm, plus2 = _abs_and_plus_square(pm)
    return float(np.real(np.trace(qm @ (plus2 + pm @ pm + pm @ absm))))


def cube_second_derivative(p, q):
    """d^2/dt^2 Tr q(P + tQ) at 0: Tr(3 P Q^2 + 3/2 |P| Q^2 + 3/4 Q kappa_Q(P)); needs P invertible."""
    pm, qm = _mat(p), _mat(q)
    absm, _ = _abs_and_plus_square(pm)
    q2 = qm @ qm
    kap = kappa_q(pm, qm).matrix
    return float(np.real(np.trace(3 * pm @ q2 + 1.5 * absm @ q2 + 0.75 * qm @ kap)))


def _shifts(lam):
    # (sign, shift) for the four truncated cubes of zeta_lambda
    return ((-1.0, lam), (1.0, -lam), (1.0, -1 + lam), (-1.0, -1 - lam))


def zeta_first_derivative(p, q, lam):
    """Closed-form Tr D zeta_lambda(P)(Q)."""
    pm, qm = _mat(p), _mat(q)
    eye = np.eye(pm.shape[0])
    total = 2 * np.real(np.trace(pm @ qm))
    for sign, shift in _shifts(lam):
        total += sign * cube_first_derivative(pm + shift * eye, qm) / (6 * lam)
    return float(total)


def zeta_second_derivative(p, q, lam):
    """Closed-form Tr D^2 zeta_lambda(P)(Q); every shifted P must be invertible."""
    pm, qm = _mat(p), _mat(q)
    eye = np.eye(pm.shape[0])
    total = 2 * np.real(np.trace(qm @ qm))
    for sign, shift in _shifts(lam):
        total += sign * cube_second_derivative(pm + shift * eye, qm) / (6 * lam)
    return float(total)


# --- finite differences ----------------------------------------------------------


def default_step(q, order):
    """Step in t such that the displacement ||t Q||_2 equals base * max(1, ||Q||_2).

    Measuring the step in matrix space keeps roundoff in the second difference
    below the O(||Q||^3) remainder when Q is small; the t-step is capped at 1.
    """
    base = 1e-2 if order == 3 else 1e-4
    qn = schatten_norm(HermitianOperator(_mat(q)), 2)
    if qn == 0:
        return base
    return min(1.0, base * max(1.0, qn) / qn)


def frechet_fd(f, p, q, order, step=None):
    """order-th derivative of t -> Tr f(P + tQ) at 0 by central differences,
    with one level of Richardson extrapolation (error O(h^4) on smooth f)."""
    if order not in (1, 2, 3):
        raise ArgumentError("order must be 1, 2 or 3")
    pm, qm = _mat(p), _mat(q)
    h = default_step(qm, order) if step is None else float(step)
    if h <= 0:
        raise ArgumentError("step must be positive")

    def g(t):
        return float(np.sum(f(np.linalg.eigvalsh(pm + t * qm))))

    def diff(s):
        if order == 1:
            return (g(s) - g(-s)) / (2 * s)
        if order == 2:
            return (g(s) - 2 * g(0.0) + g(-s)) / (s * s)
        return (g(2 * s) - 2 * g(s) + 2 * g(-s) - g(-2 * s)) / (2 * s**3)

    return (4 * diff(h / 2) - diff(h)) / 3


def near_breakpoint(p, lam, margin):
    """True when some eigenvalue of P lies within ``margin`` of a zeta_lambda breakpoint."""
    ev = np.linalg.eigvalsh(_mat(p))
    bps = np.array(ZetaProfile(lam).breakpoints())
    return bool(np.min(np.abs(ev[:, None] - bps[None, :])) < margin)


# --- checks --------------------------------------------------------------------------

TAYLOR_CONSTANT = 50.0


def taylor_remainder_check(p, q, lam, constant=TAYLOR_CONSTANT, seed=None):
    """Second-order Taylor remainder of Tr zeta_lambda against C ||Q||_2 ||Q||_4^2 / lam."""
    if not 0 < lam < 0.5:
        raise ArgumentError("lambda must lie in (0, 1/2)")
    pm, qm = _mat(p), _mat(q)

    def f(x):
        return zeta_scalar(x, ZetaProfile(lam))

    d1 = frechet_fd(f, pm, qm, 1)
    d2 = frechet_fd(f, pm, qm, 2)
    lhs = abs(trace_zeta(pm + qm, lam) - trace_zeta(pm, lam) - d1 - 0.5 * d2)
    qop = HermitianOperator(qm)
    scale = schatten_norm(qop, 2) * schatten_norm(qop, 4) ** 2 / lam
    bound = constant * scale
    return {
        "lhs": lhs,
        "bound": bound,
        "constant": constant,
        "ratio": lhs / scale if scale > 0 else 0.0,
        "pass": bool(lhs <= bound),
        "seed": seed,
    }


def zeta_additivity_check(p, q, seed=None):
    pm, qm = _mat(p), _mat(q)
    lhs = abs(trace_zeta(pm + qm) - trace_zeta(pm))
    pn = schatten_norm(HermitianOperator(pm), 2)
    qn = schatten_norm(HermitianOperator(qm), 2)
    bound = 4 * (pn * qn + qn * qn)
    return {"lhs": lhs, "bound": bound, "constant": 4.0, "pass": bool(lhs <= bound + 1e-9), "seed": seed}


def taylor_campaign_case(rng, lam=0.1, q_max=0.1):
    """One random (P, Q) for the Taylor campaign: spectrum of P spread over [-0.6, 1.6]."""
    n = int(rng.integers(1, 4))
    d = 1 << n
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    u, _ = np.linalg.qr(a)
    p = (u * rng.uniform(-0.6, 1.6, size=d)) @ u.conj().T
    b = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    q = (b + b.conj().T) / 2
    q *= rng.uniform(0.0, q_max) / np.linalg.norm(q)
    return HermitianOperator(p), HermitianOperator(q)


def taylor_campaign(n_cases=100, seed=0, lam=0.1, q_max=0.1, constant=TAYLOR_CONSTANT):
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x7A]))
    out = []
    for _ in range(n_cases):
        p, q = taylor_campaign_case(rng, lam, q_max)
        out.append(taylor_remainder_check(p, q, lam, constant, seed))
    return out
