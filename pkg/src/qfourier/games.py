"""Binary two-player one-round games: classical value, entangled strategy
values on copies of a fixed state, and see-saw optimization."""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import montecarlo
from .correlation import correlation_value, expand_pair, state_power_matrix
from .errors import ArgumentError, CapacityError
from .operators import MAX_QUBITS, MeasurementOperator, partial_trace_matrix

CLASSICAL_CAP = 16
MONOTONE_TOL = 1e-10


class BinaryGame:
    """Questions X, Y; distribution mu[x, y]; predicate V[x, y, a, b] in {0, 1}."""

    def __init__(self, x_labels, y_labels, mu, v, name=None):
        self.x_labels = list(x_labels)
        self.y_labels = list(y_labels)
        mu = np.array(mu, dtype=float)
        v = np.array(v, dtype=float)
        nx, ny = len(self.x_labels), len(self.y_labels)
        if mu.shape != (nx, ny):
            raise ArgumentError(f"mu must have shape ({nx}, {ny})")
        if np.any(mu < 0) or abs(mu.sum() - 1) > 1e-12:
            raise ArgumentError("mu must be a probability table")
        if v.shape != (nx, ny, 2, 2):
            raise ArgumentError(f"V must have shape ({nx}, {ny}, 2, 2)")
        if not np.all((v == 0) | (v == 1)):
            raise ArgumentError("V must take values in {0, 1}")
        mu.setflags(write=False)
        v.setflags(write=False)
        self.mu = mu
        self.v = v
        self.name = name

    @property
    def n_x(self):
        return len(self.x_labels)

    @property
    def n_y(self):
        return len(self.y_labels)

    def to_json(self):
        return {"X": self.x_labels, "Y": self.y_labels, "mu": self.mu.tolist(), "V": self.v.astype(int).tolist()}

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        return cls(data["X"], data["Y"], data["mu"], data["V"], name=data.get("name"))


def chsh():
    v = np.zeros((2, 2, 2, 2))
    for x in range(2):
        for y in range(2):
            for a in range(2):
                for b in range(2):
                    v[x, y, a, b] = float((a ^ b) == (x & y))
    return BinaryGame([0, 1], [0, 1], np.full((2, 2), 0.25), v, name="chsh")


def trivial_game(value=1):
    return BinaryGame([0], [0], [[1.0]], np.full((1, 1, 2, 2), float(value)), name="trivial")


BUILTIN_GAMES = {"chsh": chsh, "trivial": trivial_game}


def load_game(source):
    """A built-in name, or a game in JSON given as text or as a file path."""
    if isinstance(source, BinaryGame):
        return source
    if source in BUILTIN_GAMES:
        return BUILTIN_GAMES[source]()
    try:
        return BinaryGame.from_json(source)
    except (json.JSONDecodeError, TypeError):
        pass
    with open(source) as fh:
        return BinaryGame.from_json(fh.read())


def classical_value(game):
    """Exact maximum over deterministic answer functions."""
    if game.n_x > CLASSICAL_CAP or game.n_y > CLASSICAL_CAP:
        raise CapacityError(f"classical search is capped at {CLASSICAL_CAP} questions per side")
    # weight[x, y, a, b] = mu(x, y) V(x, y, a, b)
    w = game.mu[:, :, None, None] * game.v
    best = 0.0
    xs = np.arange(game.n_x)
    for mask in range(1 << game.n_x):
        a = (mask >> xs) & 1
        # gain[y, b] = sum_x w[x, y, a_x, b]; Bob answers each y optimally
        gain = w[xs, :, a, :].sum(axis=0)
        best = max(best, float(gain.max(axis=1).sum()))
    return best


class Strategy:
    """Outcome-0 measurement operators for every question on ``copies`` qubits per side."""

    def __init__(self, copies, p_ops, q_ops):
        self.copies = int(copies)
        self.p_ops = [op if isinstance(op, MeasurementOperator) else MeasurementOperator(op) for op in p_ops]
        self.q_ops = [op if isinstance(op, MeasurementOperator) else MeasurementOperator(op) for op in q_ops]
        for op in self.p_ops + self.q_ops:
            if op.n_qubits != self.copies:
                raise ArgumentError("every operator must act on `copies` qubits")

    def to_json(self):
        return {"copies": self.copies, "P": [p.to_json() for p in self.p_ops],
                "Q": [q.to_json() for q in self.q_ops]}

    @classmethod
    def from_json(cls, data):
        if isinstance(data, str):
            data = json.loads(data)
        return cls(data["copies"], [MeasurementOperator.from_json(p) for p in data["P"]],
                   [MeasurementOperator.from_json(q) for q in data["Q"]])


def outcome_table(joint, p_mass, q_mass):
    """nu(a, b) for binary outcomes from Tr(P0 x Q0), Tr P0 psi_A, Tr Q0 psi_B."""
    return np.array([[joint, p_mass - joint], [q_mass - joint, 1 - p_mass - q_mass + joint]])


def value_from_tables(game, tables):
    """sum mu(x, y) sum V(x, y, a, b) nu_xy(a, b) for tables indexed [x][y]."""
    total = 0.0
    for x in range(game.n_x):
        for y in range(game.n_y):
            total += game.mu[x, y] * float(np.sum(game.v[x, y] * tables[x][y]))
    return total


def strategy_tables(game, strategy, psi):
    n = strategy.copies
    if 2 * n > MAX_QUBITS:
        raise CapacityError("strategy exceeds the dense operator cap")
    if psi.has_mixed_marginals():
        half = 1.0 / (1 << n)
        pairs = {}
        tables = []
        for x, p in enumerate(strategy.p_ops):
            row = []
            for y, q in enumerate(strategy.q_ops):
                key = (x, y)
                pe, qe = expand_pair(p, q, psi)
                pairs[key] = correlation_value(pe, qe, psi)
                row.append(outcome_table(pairs[key], p.trace() * half, q.trace() * half))
            tables.append(row)
        return tables
    big = state_power_matrix(psi, n)
    rho_a = partial_trace_matrix(big, 2 * n, range(1, n + 1))
    rho_b = partial_trace_matrix(big, 2 * n, range(n + 1, 2 * n + 1))
    tables = []
    for p in strategy.p_ops:
        row = []
        for q in strategy.q_ops:
            joint = float(np.real(np.sum(np.kron(p.matrix, q.matrix).T * big)))
            pa = float(np.real(np.trace(p.matrix @ rho_a)))
            qb = float(np.real(np.trace(q.matrix @ rho_b)))
            row.append(outcome_table(joint, pa, qb))
        tables.append(row)
    return tables


def strategy_value(game, strategy, psi):
    if len(strategy.p_ops) != game.n_x or len(strategy.q_ops) != game.n_y:
        raise ArgumentError("strategy does not match the game's question sets")
    return value_from_tables(game, strategy_tables(game, strategy, psi))


# --- see-saw optimization -------------------------------------------------------------


def _positive_projector(e):
    evals, evecs = np.linalg.eigh(e)
    vals = (evals > 0).astype(float)
    return (evecs * vals) @ evecs.conj().T


def _random_clamped(d, rng):
    a = rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))
    h = (a + a.conj().T) / 2
    evals, evecs = np.linalg.eigh(h)
    return (evecs * np.clip(evals, 0.0, 1.0)) @ evecs.conj().T


class _SeeSaw:
    def __init__(self, game, psi, copies):
        n = copies
        if 2 * n > MAX_QUBITS:
            raise CapacityError("copies exceed the dense operator cap")
        self.game = game
        self.n = n
        self.d = 1 << n
        self.big = state_power_matrix(psi, n)
        self.rho_a = partial_trace_matrix(self.big, 2 * n, range(1, n + 1))
        self.rho_b = partial_trace_matrix(self.big, 2 * n, range(n + 1, 2 * n + 1))
        # coefficient of each outcome-0 operator after expanding the complements
        v = game.v
        self.w = game.mu[:, :, None] * np.stack(
            [v[:, :, 0, 0] - v[:, :, 0, 1] - v[:, :, 1, 0] + v[:, :, 1, 1],
             v[:, :, 0, 1] - v[:, :, 1, 1],
             v[:, :, 1, 0] - v[:, :, 1, 1]], axis=-1)
        self.const = float(np.sum(game.mu * v[:, :, 1, 1]))

    def reduce_b(self, q):
        """Tr_B((id x Q) psi^n) as an A-side matrix."""
        prod = self.big @ np.kron(np.eye(self.d), q)
        r = partial_trace_matrix(prod, 2 * self.n, range(1, self.n + 1))
        return (r + r.conj().T) / 2

    def reduce_a(self, p):
        prod = self.big @ np.kron(p, np.eye(self.d))
        r = partial_trace_matrix(prod, 2 * self.n, range(self.n + 1, 2 * self.n + 1))
        return (r + r.conj().T) / 2

    def value(self, ps, qs):
        # nu_00 = J, nu_01 = pA - J, nu_10 = qB - J, nu_11 = 1 - pA - qB + J
        total = self.const
        pa = [np.real(np.trace(p @ self.rho_a)) for p in ps]
        qb = [np.real(np.trace(q @ self.rho_b)) for q in qs]
        for y, q in enumerate(qs):
            r = self.reduce_b(q)
            for x, p in enumerate(ps):
                j = np.real(np.trace(p @ r))
                total += self.w[x, y, 0] * j + self.w[x, y, 1] * pa[x] + self.w[x, y, 2] * qb[y]
        return float(total)

    def best_alice(self, qs):
        rs = [self.reduce_b(q) for q in qs]
        out = []
        for x in range(self.game.n_x):
            e = sum(self.w[x, y, 0] * rs[y] + self.w[x, y, 1] * self.rho_a for y in range(self.game.n_y))
            out.append(_positive_projector(e))
        return out

    def best_bob(self, ps):
        ss = [self.reduce_a(p) for p in ps]
        out = []
        for y in range(self.game.n_y):
            e = sum(self.w[x, y, 0] * ss[x] + self.w[x, y, 2] * self.rho_b for x in range(self.game.n_x))
            out.append(_positive_projector(e))
        return out

    def run(self, rng, iters, tol=1e-12):
        qs = [_random_clamped(self.d, rng) for _ in range(self.game.n_y)]
        ps = [_random_clamped(self.d, rng) for _ in range(self.game.n_x)]
        log = [self.value(ps, qs)]
        for _ in range(iters):
            ps = self.best_alice(qs)
            log.append(self.value(ps, qs))
            qs = self.best_bob(ps)
            log.append(self.value(ps, qs))
            for a, b in zip(log[-3:], log[-2:]):
                if b < a - MONOTONE_TOL:
                    raise AssertionError(f"see-saw step decreased the value ({a} -> {b})")
            if log[-1] - log[-3] < tol:
                break
        return ps, qs, log


def optimize_strategy(game, psi, copies, restarts=20, iters=100, seed=0, threads=None):
    """Best-of-restarts see-saw; returns (Strategy, value, log per restart)."""
    if restarts < 1:
        raise ArgumentError("need at least one restart")
    saw = _SeeSaw(game, psi, copies)

    def one(r):
        rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), 0x5EE5A, r])))
        return saw.run(rng, iters)

    threads = montecarlo.default_threads() if threads is None else max(1, int(threads))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(one, range(restarts)))
    else:
        results = [one(r) for r in range(restarts)]
    best = max(range(restarts), key=lambda r: (results[r][2][-1], -r))
    ps, qs, _ = results[best]
    strategy = Strategy(copies, [MeasurementOperator(p) for p in ps], [MeasurementOperator(q) for q in qs])
    logs = [res[2] for res in results]
    return strategy, results[best][2][-1], {"best_restart": best, "logs": logs}


def canonical_chsh_strategy(copies=1):
    """Standard optimal CHSH projectors for the EPR pair on the first copy, identity on the rest."""
    pad = np.eye(1 << (copies - 1))

    def proj(theta):
        v = np.array([np.cos(theta), np.sin(theta)])
        return np.kron(np.outer(v, v), pad)

    return Strategy(copies, [proj(0.0), proj(np.pi / 4)], [proj(np.pi / 8), proj(-np.pi / 8)])


def repeated_sequences(game, strategy):
    """The s = |X||Y| pair sequence: P^x repeated over y, Q^y cycled over x."""
    ps, qs, index = [], [], []
    for x in range(game.n_x):
        for y in range(game.n_y):
            ps.append(strategy.p_ops[x])
            qs.append(strategy.q_ops[y])
            index.append((x, y))
    return ps, qs, index


def evaluate_transfer(game, psi, strategy, params, threads=None, record_time=True):
    """Run the transfer pipeline on the repeated sequences and compare game values."""
    from .pipeline import run_pipeline

    omega = strategy_value(game, strategy, psi)
    ps, qs, index = repeated_sequences(game, strategy)
    result = run_pipeline(ps, qs, params, psi=psi, threads=threads, record_time=record_time)
    stats = result.pair_statistics()
    tables = [[None] * game.n_y for _ in range(game.n_x)]
    before = strategy_tables(game, strategy, psi)
    drift = []
    for u, (x, y) in enumerate(index):
        joint, pa, qb = stats[u]
        tables[x][y] = outcome_table(joint, pa, qb)
        drift.append(float(np.max(np.abs(tables[x][y] - before[x][y]))))
    omega_t = value_from_tables(game, tables)
    return {
        "omega": omega,
        "omega_transferred": omega_t,
        "value_drift": abs(omega - omega_t),
        "pair_drift": drift,
        "outputs_are_measurements": result.outputs_are_measurements(),
        "trace": result.trace.to_json(),
    }
