"""Command-line front end.

Every report is a JSON envelope {version, command, seed, config_hash, result}
plus timestamp and elapsed seconds unless --deterministic is given.  Exit
codes: 0 success, 2 precondition or argument error, 3 capacity, 4 stochastic
failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import io
import json
import sys
import time

import numpy as np

from . import __version__, campaigns, montecarlo
from .correlation import depolarized_epr, expand_pair, maximal_correlation, state_from_json, tsmooth_check
from .errors import QFourierError
from .fourier import fourier_expand, influences, pauli_basis, total_influence, variance
from .games import (
    Strategy,
    canonical_chsh_strategy,
    classical_value,
    evaluate_transfer,
    load_game,
    optimize_strategy,
)
from .operators import HermitianOperator, random_measurement
from .pipeline import Caps, PipelineParams, load_manifest, run_pipeline

EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--caps", default=None, help="h,n0,t (default 2,200,4)")
    p.add_argument("--epsilon", type=float, default=None, help="depolarizing noise of the shared state")
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--tau", type=float, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--format", choices=("json", "csv"), default="json")
    p.add_argument("--deterministic", action="store_true")
    return p


def build_parser():
    common = _common()
    parser = _Parser(prog="qfourier", description="Fourier analysis on qubit matrix spaces and strategy transfer.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("maxcorr", parents=[common], help="maximal correlation and aligned bases of a state")
    p.add_argument("--state", default=None, help="state JSON file (default: depolarized EPR)")
    p.add_argument("--copies", type=int, default=1)

    p = sub.add_parser("fourier", parents=[common], help="Fourier statistics of an operator file")
    p.add_argument("operator", help="operator JSON file")
    p.add_argument("--basis", choices=("pauli", "aligned-a", "aligned-b"), default="pauli")

    p = sub.add_parser("smooth", parents=[common], help="correlation shift under T_(1 - gamma)")
    p.add_argument("--p", dest="p_file", default=None)
    p.add_argument("--q", dest="q_file", default=None)
    p.add_argument("--qubits", type=int, default=2)
    p.add_argument("--constant", type=float, default=1.0)

    p = sub.add_parser("verify", parents=[common], help="verification campaigns")
    p.add_argument("suite", choices=("hyper", "invariance", "zeta", "dimred", "smoothing"))
    p.add_argument("--cases", type=int, default=None)

    p = sub.add_parser("pipeline", parents=[common], help="run the strategy-transfer pipeline")
    p.add_argument("manifest", nargs="?", default=None, help="run manifest JSON (default: CHSH demo)")
    p.add_argument("--copies", type=int, default=2)

    p = sub.add_parser("game", parents=[common], help="game values")
    p.add_argument("action", choices=("classical", "optimize", "transfer"))
    p.add_argument("--game", default="chsh")
    p.add_argument("--copies", type=int, default=1)
    p.add_argument("--restarts", type=int, default=20)
    p.add_argument("--iters", type=int, default=100)
    p.add_argument("--strategy", default=None, help="strategy JSON file (transfer; default: canonical CHSH)")
    return parser


# --- output ---------------------------------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def _flatten(obj, prefix=""):
    """Scalar leaves only; lists are skipped."""
    rows = []
    if isinstance(obj, dict):
        for k in sorted(obj):
            rows += _flatten(obj[k], f"{prefix}{k}.")
    elif not isinstance(obj, list):
        rows.append((prefix[:-1], obj))
    return rows


def _config_hash(args):
    skip = {"out", "format", "threads", "deterministic"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    blob = json.dumps(_jsonable(cfg), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def render(envelope, fmt):
    if fmt == "json":
        return json.dumps(envelope, sort_keys=True, indent=1) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["key", "value"])
    for key, val in _flatten(envelope):
        w.writerow([key, val])
    return buf.getvalue()


# --- commands ---------------------------------------------------------------------------------


def _state(args, default_eps=0.3):
    if getattr(args, "state", None):
        with open(args.state) as fh:
            return state_from_json(fh.read())
    return depolarized_epr(default_eps if args.epsilon is None else args.epsilon)


def _load_operator(path):
    with open(path) as fh:
        return HermitianOperator.from_json(fh.read())


def cmd_maxcorr(args):
    psi = _state(args, default_eps=0.25)
    basis_a, basis_b, c = psi.aligned
    return {"rho": maximal_correlation(psi, args.copies), "copies": args.copies, "singular_values": c,
            "basis_a": basis_a.to_json(), "basis_b": basis_b.to_json()}


def cmd_fourier(args):
    op = _load_operator(args.operator)
    if args.basis == "pauli":
        basis = pauli_basis()
    else:
        a, b, _ = _state(args).aligned
        basis = a if args.basis == "aligned-a" else b
    exp = fourier_expand(op, basis)
    return {"n_qubits": exp.n_qubits, "basis": args.basis, "mean": exp.mean(), "norm2": exp.norm2(),
            "variance": variance(exp), "degree": exp.degree(), "influences": influences(exp),
            "total_influence": total_influence(exp), "coefficients": exp.coeffs}


def cmd_smooth(args):
    psi = _state(args)
    rng = np.random.default_rng(np.random.SeedSequence([args.seed & (2**64 - 1), 0x53]))
    p = _load_operator(args.p_file) if args.p_file else random_measurement(args.qubits, rng)
    q = _load_operator(args.q_file) if args.q_file else random_measurement(args.qubits, rng)
    pe, qe = expand_pair(p, q, psi)
    eps = 0.1 if args.delta is None else args.delta
    return tsmooth_check(pe, qe, psi, eps, args.constant)


def cmd_verify(args):
    threads = args.threads
    suite = args.suite
    if suite == "hyper":
        return campaigns.hyper_campaign(args.cases or 50, args.samples or 100_000, args.seed, threads)
    if suite == "invariance":
        return campaigns.invariance_campaign(args.cases or 10, args.samples or 20_000, args.seed,
                                             0.3 if args.epsilon is None else args.epsilon, threads)
    if suite == "zeta":
        return campaigns.zeta_campaign(args.seed, args.cases or 100)
    if suite == "dimred":
        return campaigns.dimred_campaign(args.cases or 20, samples=args.samples or 20_000, seed=args.seed,
                                         threads=threads)
    return campaigns.smoothing_campaign(args.cases or 100, (0.05, 0.1) if args.delta is None else (args.delta,),
                                        args.seed)


def _params(args, copies, manifest_params=None):
    base = manifest_params or PipelineParams(copies=copies)
    fields = base.to_json()
    fields["caps"] = base.caps
    fields["seed"] = args.seed
    if args.caps is not None:
        fields["caps"] = Caps.parse(args.caps)
    for name in ("epsilon", "delta", "tau", "samples"):
        val = getattr(args, name)
        if val is not None:
            fields[name] = val
    return PipelineParams(**fields)


def cmd_pipeline(args):
    if args.manifest:
        with open(args.manifest) as fh:
            mp, psi, p_list, q_list, h_set = load_manifest(fh.read())
        params = _params(args, mp.copies, mp)
    else:
        params = _params(args, args.copies)
        strat = canonical_chsh_strategy(params.copies)
        p_list, q_list, psi, h_set = strat.p_ops, strat.q_ops, None, None
    res = run_pipeline(p_list, q_list, params, psi=psi, h_set=h_set, threads=args.threads,
                       record_time=not args.deterministic)
    out = res.trace.to_json()
    out["pair_statistics"] = [list(t) for t in res.pair_statistics()]
    out["outputs_are_measurements"] = res.outputs_are_measurements()
    return out


def cmd_game(args):
    game = load_game(args.game)
    if args.action == "classical":
        return {"game": args.game, "classical_value": classical_value(game)}
    psi = _state(args)
    if args.action == "optimize":
        strat, value, info = optimize_strategy(game, psi, args.copies, args.restarts, args.iters, args.seed,
                                               args.threads)
        return {"game": args.game, "copies": args.copies, "value": value, "best_restart": info["best_restart"],
                "final_values": [log[-1] for log in info["logs"]], "strategy": strat.to_json()}
    if args.strategy:
        with open(args.strategy) as fh:
            strat = Strategy.from_json(fh.read())
    else:
        strat = canonical_chsh_strategy(args.copies)
    params = _params(args, strat.copies)
    return evaluate_transfer(game, psi, strat, params, threads=args.threads, record_time=not args.deterministic)


COMMANDS = {
    "maxcorr": cmd_maxcorr,
    "fourier": cmd_fourier,
    "smooth": cmd_smooth,
    "verify": cmd_verify,
    "pipeline": cmd_pipeline,
    "game": cmd_game,
}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            parser.error("--threads must be positive")
        montecarlo.set_default_threads(args.threads)
    start = time.perf_counter()
    try:
        result = COMMANDS[args.command](args)
    except QFourierError as exc:
        print(f"qfourier: {type(exc).__name__}: {exc}", file=sys.stderr)
        diag = getattr(exc, "diagnostics", None)
        if diag:
            print(json.dumps(_jsonable(diag), sort_keys=True), file=sys.stderr)
        return exc.exit_code
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"qfourier: cannot read input: {exc}", file=sys.stderr)
        return 2
    finally:
        montecarlo.set_default_threads(None)
    envelope = {
        "version": __version__,
        "command": " ".join(x for x in (args.command, getattr(args, "suite", None), getattr(args, "action", None)) if x),
        "seed": args.seed,
        "config_hash": _config_hash(args),
        "result": _jsonable(result),
    }
    if not args.deterministic:
        envelope["timestamp"] = datetime.datetime.now(datetime.timezone.utc).isoformat()
        envelope["elapsed"] = time.perf_counter() - start
    text = render(envelope, args.format)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
