"""Seeded verification campaigns shared by the command line and the test suite.

Each campaign returns a JSON-ready report with a top-level ``pass`` flag.
"""

from __future__ import annotations

import math
import statistics

import numpy as np

from . import montecarlo
from .correlation import (
    dense_correlation,
    depolarized_epr,
    expand_pair,
    largest_admissible_constant,
    tsmooth_check,
)
from .errors import ArgumentError
from .fourier import pauli_basis
from .gaussian import (
    CorrelatedGaussianSource,
    GaussianPolynomial,
    RandomOperator,
    ReducedFunction,
    hypercontractivity_test,
    random_multilinear_operator,
    random_operator_correlation,
)
from .operators import HermitianOperator, random_measurement, schatten_norm
from .pipeline import gaussian_substitute
from .zeta import (
    TAYLOR_CONSTANT,
    ZetaProfile,
    round_to_measurement,
    taylor_campaign,
    zeta_scalar,
)

HYPER_RHO = 1 / math.sqrt(3)


def _rng(seed, label):
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), montecarlo.stream_id(label)]))


def closed_form_hyper_operator():
    """g_1 sigma_x on one qubit and one Gaussian variable."""
    return RandomOperator(1, 1, pauli_basis(), {1: GaussianPolynomial.variable(1, 0)})


def hyper_campaign(n_cases=50, samples=100_000, seed=0, threads=None):
    """N_4(Gamma_(1/sqrt 3) P) <= N_2(P) + 3 SE over random multilinear operators."""
    rng = _rng(seed, "hyper")
    cases = []
    for k in range(n_cases):
        h = int(rng.integers(0, 3))
        n = int(rng.integers(1, 4))
        deg = int(rng.integers(1, 3))
        op = random_multilinear_operator(h, n, deg, rng)
        res = hypercontractivity_test(op, HYPER_RHO, samples, seed=seed + k, threads=threads)
        cases.append({"h": h, "n_vars": n, "degree": deg, **res})
    exact = 3**0.25 / 3
    cf = hypercontractivity_test(closed_form_hyper_operator(), HYPER_RHO, samples, seed=seed, threads=threads)
    closed = {"expected": exact, "N4_est": cf["N4_est"], "SE": cf["SE"],
              "pass": bool(abs(cf["N4_est"] - exact) <= 3 * cf["SE"])}
    return {"rho": HYPER_RHO, "samples": samples, "cases": cases, "closed_form": closed,
            "violations": sum(not c["pass"] for c in cases),
            "pass": bool(all(c["pass"] for c in cases) and closed["pass"])}


def invariance_campaign(n_cases=10, samples=20_000, seed=0, epsilon=0.3, threads=None):
    """Operators to random operators (no kept coordinates): exact bookkeeping plus a Monte-Carlo cross-check."""
    psi = depolarized_epr(epsilon)
    _, _, c = psi.aligned
    rho = float(c[1])
    wq = [1.0] + [float(c[b]) / rho for b in (1, 2, 3)]
    rng = _rng(seed, "invariance")
    cases = []
    for k in range(n_cases):
        n = int(rng.integers(1, 4))
        p, q = random_measurement(n, rng), random_measurement(n, rng)
        pe, qe = expand_pair(p, q, psi)
        pr, qr = gaussian_substitute(pe, []), gaussian_substitute(qe, [], wq)
        dense = dense_correlation(p, q, psi)
        exact = random_operator_correlation(pr, qr, c, rho)
        src = CorrelatedGaussianSource(pr.n_vars, rho, seed + k)
        vals = src.map(lambda g, hv: pr.coefficient_samples(g)[:, 0] * qr.coefficient_samples(hv)[:, 0],
                       samples, stream=montecarlo.stream_id("invariance", k), threads=threads)
        mc, se = montecarlo.mean_and_se(vals)
        zvals = src.map(lambda g, hv: zeta_scalar(pr.coefficient_samples(g)[:, 0]), samples,
                        stream=montecarlo.stream_id("invariance-zeta", k), threads=threads)
        zeta_mc, zeta_se = montecarlo.mean_and_se(zvals)
        ok = (abs(dense - exact) <= 1e-10 and abs(pe.mean() - pr.mean_normalized_trace()) <= 1e-12
              and abs(pe.norm2() - pr.n2()) <= 1e-12 and abs(mc - dense) <= 4 * se)
        cases.append({"n": n, "dense": dense, "coefficient_sum": exact, "mc": mc, "mc_se": se,
                      "zeta_random": zeta_mc, "zeta_random_se": zeta_se, "pass": bool(ok)})
    return {"epsilon": epsilon, "samples": samples, "cases": cases,
            "pass": bool(all(c["pass"] for c in cases))}


def rounding_competition(n_instances=20, competitors=100, seed=0):
    """The spectral clamp is at least as close as random competitors and perturbed clamps."""
    rng = _rng(seed, "rounding")
    wins = []
    for _ in range(n_instances):
        n = int(rng.integers(1, 4))
        d = 1 << n
        a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
        u, _ = np.linalg.qr(a)
        p = HermitianOperator((u * rng.uniform(-1.0, 2.0, size=d)) @ u.conj().T)
        best = round_to_measurement(p)
        dist = schatten_norm(p - best, 2)
        worst_margin = math.inf
        for k in range(competitors):
            if k % 2:
                m = random_measurement(n, rng)
            else:
                b = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
                m = round_to_measurement(HermitianOperator(best.matrix + 0.05 * (b + b.conj().T)))
            worst_margin = min(worst_margin, schatten_norm(p - m, 2) - dist)
        wins.append(worst_margin >= -1e-12)
    return {"instances": n_instances, "competitors": competitors, "pass": bool(all(wins))}


def zeta_gap_grid(lams=(0.05, 0.1, 0.25, 0.5), points=10_000):
    """sup |zeta_lambda - zeta| over a grid covering both corners, against 4 lambda^2."""
    x = np.linspace(-1.0, 2.0, points)
    rows = []
    for lam in lams:
        gap = float(np.max(np.abs(zeta_scalar(x, ZetaProfile(lam)) - zeta_scalar(x))))
        rows.append({"lambda": lam, "sup_gap": gap, "bound": 4 * lam * lam, "pass": bool(gap <= 4 * lam * lam)})
    return rows


def zeta_campaign(seed=0, n_cases=100, lam=0.1):
    rows = taylor_campaign(n_cases=n_cases, seed=seed, lam=lam)
    grid = zeta_gap_grid()
    rounding = rounding_competition(seed=seed)
    return {
        "taylor": {"constant": TAYLOR_CONSTANT, "lambda": lam, "cases": rows,
                   "max_ratio": max(r["ratio"] for r in rows),
                   "pass": bool(all(r["pass"] for r in rows))},
        "smoothing_gap": grid,
        "rounding": rounding,
        "pass": bool(all(r["pass"] for r in rows) and all(g["pass"] for g in grid) and rounding["pass"]),
    }


def dimred_campaign(draws=20, n0=500, rho=0.7, samples=20_000, seed=0, threshold=0.1, threads=None):
    """Correlation of x_1 against y_1 before and after x -> M x / ||x|| for Gaussian M."""
    f = GaussianPolynomial.variable(1, 0)
    shifts = []
    for k in range(draws):
        m = _rng(seed, f"dimred-matrix-{k}").standard_normal((1, n0))
        fm = ReducedFunction(f, m)
        src = CorrelatedGaussianSource(n0, rho, seed + k)
        vals = src.map(lambda g, hv: fm.evaluate(g) * fm.evaluate(hv), samples,
                       stream=montecarlo.stream_id("dimred", k), threads=threads)
        shifts.append(abs(float(np.mean(vals)) - rho))
    med = statistics.median(shifts)
    frac = sum(s < threshold for s in shifts) / draws
    return {"rho": rho, "n0": n0, "draws": draws, "shifts": shifts, "median_shift": med,
            "fraction_below": frac, "threshold": threshold, "pass": bool(med < threshold)}


def smoothing_campaign(n_pairs=100, epsilons=(0.05, 0.1), seed=0, constant=1.0):
    """Correlation shift under T_(1 - gamma) on random measurement pairs and random noisy EPR states."""
    rng = _rng(seed, "smoothing")
    out = []
    for eps in epsilons:
        if not 0 < eps < 1:
            raise ArgumentError("epsilon must lie in (0, 1)")
        violations, worst = 0, 0.0
        for _ in range(n_pairs):
            n = int(rng.integers(1, 4))
            psi = depolarized_epr(float(rng.uniform(0.05, 0.95)))
            pe, qe = expand_pair(random_measurement(n, rng), random_measurement(n, rng), psi)
            res = tsmooth_check(pe, qe, psi, eps, constant)
            violations += not res["pass"]
            if res["bound"] > 0:
                worst = max(worst, res["lhs"] / res["bound"])
        out.append({"epsilon": eps, "pairs": n_pairs, "violations": violations, "worst_ratio": worst,
                    "pass": violations == 0})
    return {"constant": constant, "results": out, "pass": bool(all(r["pass"] for r in out))}


def largest_constant_scan(epsilon=0.1, epsilon_state=0.3, n_pairs=30, seed=0):
    """Largest smoothing constant with no violations on one state."""
    rng = _rng(seed, "constant-scan")
    psi = depolarized_epr(epsilon_state)
    pairs = []
    for _ in range(n_pairs):
        n = int(rng.integers(1, 4))
        pairs.append(expand_pair(random_measurement(n, rng), random_measurement(n, rng), psi))
    c, saturated = largest_admissible_constant(pairs, psi, epsilon)
    return {"epsilon": epsilon, "state_epsilon": epsilon_state, "largest_constant": c, "saturated": saturated}

