"""Expand a two-qubit measurement, look at its influences, then watch noise
pull its correlation with a partner toward the constant part.

    python3 demos/fourier_and_noise.py
"""

import numpy as np

from qfourier.correlation import correlation_value, depolarized_epr, expand_pair, maximal_correlation, noise_operator
from qfourier.fourier import fourier_expand, influences, pauli_basis, variance
from qfourier.operators import random_measurement

rng = np.random.default_rng(7)
p = random_measurement(2, rng)
q = random_measurement(2, rng)

e = fourier_expand(p, pauli_basis())
print("mean (normalized trace):", round(e.mean(), 4))
print("variance:", round(variance(e), 4))
print("influences per qubit:", np.round(influences(e), 4))

# A noisy EPR pair has maximal correlation 1 - eps.  Expanding both sides in the
# state's aligned bases makes the correlation a weighted coefficient sum.
psi = depolarized_epr(0.3)
print("\nmaximal correlation of depolarized EPR(0.3):", round(maximal_correlation(psi), 6))
pe, qe = expand_pair(p, q, psi)
base = correlation_value(pe, qe, psi)
print("Tr(P x Q) psi^2 =", round(base, 6))

# Noise scales the coefficient at sigma by r^|sigma|.  The correlation drifts
# slowly at first because high-degree terms carry small weights already.
for r in (1.0, 0.99, 0.95, 0.8, 0.5, 0.0):
    c = correlation_value(noise_operator(pe, r), noise_operator(qe, r), psi)
    print(f"  noise {r:4.2f}: correlation {c:.6f}  shift {abs(c - base):.2e}")
