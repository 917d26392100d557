"""The ten acceptance criteria, each at its stated tolerance and time limit.

Every test records one PASS/FAIL line; conftest prints them after the run.
"""

import contextlib
import json
import pathlib
import time

import numpy as np
import pytest

from qfourier import campaigns, cli
from qfourier.correlation import (
    correlation_matrix,
    depolarized_epr,
    epr_pair,
    markov_superoperator,
    maximal_correlation,
    psi_inner_product,
    state_power_matrix,
)
from qfourier.fourier import (
    basis_change,
    degree_truncate,
    efron_stein_component,
    fourier_expand,
    influences,
    pauli_basis,
    random_rotation,
    reconstruct,
    rotate_basis,
)
from qfourier.games import chsh, classical_value, optimize_strategy
from qfourier.operators import HermitianOperator, normalized_p_norm, partial_trace_matrix, random_hermitian
from qfourier.zeta import TAYLOR_CONSTANT, taylor_campaign

from regen_golden import TAYLOR_ARGS, chsh_transfer, trace_text

GOLDEN = pathlib.Path(__file__).parent / "golden"
SUMMARY = []


@contextlib.contextmanager
def criterion(number, title, limit):
    start = time.perf_counter()
    ok, note = False, ""
    try:
        yield
        elapsed = time.perf_counter() - start
        ok = limit is None or elapsed < limit
        note = f"{elapsed:.1f}s" + ("" if limit is None else f" (limit {limit}s)")
        assert ok, f"criterion {number} took {elapsed:.1f}s, limit {limit}s"
    except AssertionError as exc:
        note = note or str(exc).splitlines()[0]
        raise
    finally:
        line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}  [{note}]"
        SUMMARY.append(line)
        print(line)


def test_criterion_01_fourier_core():
    with criterion(1, "Fourier core: Parseval, round trip, basis invariance", 10):
        rng = np.random.default_rng(101)
        pauli = pauli_basis()
        for k in range(100):
            n = 1 + k % 3
            m = random_hermitian(n, rng)
            e = fourier_expand(m, pauli)
            assert abs(e.norm2() ** 2 - normalized_p_norm(m, 2) ** 2) <= 1e-8
            assert np.max(np.abs(reconstruct(e).matrix - m.matrix)) <= 1e-9
            infl = influences(e)
            trunc = reconstruct(degree_truncate(e, "<=", 1)).matrix
            subset = {i for i in range(1, n + 1) if rng.random() < 0.5}
            es = reconstruct(efron_stein_component(e, subset)).matrix
            for _ in range(10):
                f = basis_change(e, rotate_basis(pauli, random_rotation(rng)))
                assert f.degree() == e.degree()
                assert np.max(np.abs(np.asarray(influences(f)) - infl)) <= 1e-8
                assert np.max(np.abs(reconstruct(degree_truncate(f, "<=", 1)).matrix - trunc)) <= 1e-8
                assert np.max(np.abs(reconstruct(efron_stein_component(f, subset)).matrix - es)) <= 1e-8


def test_criterion_02_maximal_correlation():
    with criterion(2, "maximal correlation, tensorization, aligned bases", 5):
        for eps in (0.1, 0.25, 0.5, 0.9):
            psi = depolarized_epr(eps)
            rho = maximal_correlation(psi)
            assert abs(rho - (1 - eps)) <= 1e-9
            assert abs(maximal_correlation(psi, 2) - rho) <= 1e-7
            a, b, _ = psi.aligned
            corr = correlation_matrix(psi, a, b)
            assert np.max(np.abs(corr - np.diag(np.diag(corr)))) <= 1e-8


def test_criterion_03_markov_superoperator():
    with criterion(3, "Markov super-operator identity and contraction", 5):
        rng = np.random.default_rng(303)
        for k in range(200):
            n = 1 + k % 3
            d = 1 << n
            psi = depolarized_epr(float(rng.uniform(0.05, 0.95)))
            mm = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
            q = random_hermitian(n, rng)
            big = state_power_matrix(psi, n)
            lhs = np.trace(np.kron(mm.conj().T, q.matrix) @ big)
            t = markov_superoperator(psi, q)
            psi_a = partial_trace_matrix(big, 2 * n, range(1, n + 1))
            assert abs(lhs - psi_inner_product(mm, t, psi_a)) <= 1e-8
            q0 = HermitianOperator(q.matrix - np.trace(q.matrix) / d * np.eye(d))
            t0 = markov_superoperator(psi, q0)
            rho = maximal_correlation(psi)
            assert normalized_p_norm(t0, 2) <= rho * normalized_p_norm(q0, 2) + 1e-12


def test_criterion_04_smoothing():
    with criterion(4, "smoothing with C = 1: zero violations", 30):
        rep = campaigns.smoothing_campaign(n_pairs=100, epsilons=(0.05, 0.1), seed=0, constant=1.0)
        assert all(r["violations"] == 0 for r in rep["results"]), rep["results"]


def test_criterion_05_hypercontractivity():
    with criterion(5, "hypercontractivity at rho = 1/sqrt(3)", 180):
        rep = campaigns.hyper_campaign(n_cases=50, samples=100_000, seed=0)
        assert rep["violations"] == 0
        assert rep["closed_form"]["pass"], rep["closed_form"]


def test_criterion_06_zeta():
    with criterion(6, "rounding optimality, smoothing gap, Taylor campaign", 60):
        assert campaigns.rounding_competition(n_instances=20, competitors=100, seed=0)["pass"]
        assert all(row["pass"] and row["sup_gap"] <= 4 * row["lambda"] ** 2
                   for row in campaigns.zeta_gap_grid(points=10_000))
        golden = json.loads((GOLDEN / "taylor_campaign.json").read_text())
        rows = taylor_campaign(constant=TAYLOR_CONSTANT, **TAYLOR_ARGS)
        assert golden["constant"] == TAYLOR_CONSTANT
        assert all(r["pass"] for r in rows)
        assert [r["pass"] for r in rows] == golden["pass"]
        assert np.allclose([r["lhs"] for r in rows], golden["lhs"], rtol=1e-6, atol=1e-15)


def test_criterion_07_dimension_reduction():
    with criterion(7, "dimension reduction: median correlation shift < 0.1", 60):
        rep = campaigns.dimred_campaign(draws=20, n0=500, rho=0.7, seed=0)
        assert rep["median_shift"] < 0.1, rep["median_shift"]


def test_criterion_08_end_to_end_pipeline():
    with criterion(8, "CHSH end to end: measurements, golden trace, drift < 0.2", 300):
        rep = chsh_transfer()
        assert rep["outputs_are_measurements"]
        assert trace_text(rep) + "\n" == (GOLDEN / "pipeline_chsh_trace.json").read_text()
        assert rep["value_drift"] < 0.2, rep["value_drift"]


def test_criterion_09_games():
    with criterion(9, "classical CHSH, optimizer on EPR and on the product state", 120):
        assert classical_value(chsh()) == 0.75
        _, value, _ = optimize_strategy(chsh(), epr_pair(), 1, restarts=20, iters=100, seed=0)
        assert value >= 0.8535 - 1e-3
        _, value, _ = optimize_strategy(chsh(), depolarized_epr(1.0), 1, restarts=20, iters=100, seed=0)
        assert value <= 0.75 + 1e-6


@pytest.mark.parametrize("command", [
    ("verify", "hyper"),
    ("verify", "invariance"),
    ("verify", "zeta"),
    ("verify", "dimred"),
    ("verify", "smoothing"),
    ("pipeline",),
])
def test_criterion_10_determinism(command, tmp_path):
    label = " ".join(command)
    with criterion(10, f"byte-identical reports across thread counts: {label}", None):
        texts = []
        for threads in ("1", "4", "1"):
            out = tmp_path / f"{threads}-{len(texts)}.json"
            code = cli.main([*command, "--seed", "3", "--deterministic", "--threads", threads, "--out", str(out)])
            assert code == 0
            texts.append(out.read_bytes())
        assert texts[0] == texts[1] == texts[2]
