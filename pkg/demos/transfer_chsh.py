"""Push a two-copy CHSH strategy through the transfer pipeline and follow the
trace, the 2-norm and the correlation of every operator step by step.

    python3 demos/transfer_chsh.py
"""

from qfourier.correlation import depolarized_epr
from qfourier.games import canonical_chsh_strategy, chsh, evaluate_transfer
from qfourier.pipeline import Caps, PipelineParams

params = PipelineParams(delta=0.1, tau=0.3, epsilon=0.3, copies=2, caps=Caps(2, 200, 4), seed=0, samples=4096)
psi = depolarized_epr(params.epsilon)
report = evaluate_transfer(chsh(), psi, canonical_chsh_strategy(2), params)
trace = report["trace"]

derived = trace["derived"]
print(f"d1 = {derived['d1']:.1f}, log10 n0 = {derived['log10_n0']:.3g}: the true sizes are far out of reach,")
print(f"so the run is scaled to n0 = {derived['n0']}, t = {derived['t']}, D = {derived['D']} qubits per side.\n")

print(f"{'step':<20}{'Tr P0':>9}{'N2 P0':>9}{'Tr zeta P0':>12}{'corr pair0':>12}")
for rec in trace["steps"]:
    op = rec["operators"]["P0"]
    print(f"{rec['step']:<20}{op['trace']:9.4f}{op['n2']:9.4f}{op['zeta']:12.2e}{rec['pairs'][0]['correlation']:12.4f}")

print(f"\nCHSH value before: {report['omega']:.4f}")
print(f"CHSH value after:  {report['omega_transferred']:.4f}  (drift {report['value_drift']:.4f})")
print("outputs are measurement operators:", report["outputs_are_measurements"])
