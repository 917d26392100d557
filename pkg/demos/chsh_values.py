"""CHSH from three angles: the classical value, the textbook quantum strategy,
and see-saw optimization as the shared state gets noisier.

    python3 demos/chsh_values.py
"""

import math

from qfourier.correlation import depolarized_epr, epr_pair
from qfourier.games import canonical_chsh_strategy, chsh, classical_value, optimize_strategy, strategy_value

game = chsh()
print("classical value:", classical_value(game))

value = strategy_value(game, canonical_chsh_strategy(1), epr_pair())
print(f"textbook angles on a perfect EPR pair: {value:.6f} (cos^2(pi/8) = {math.cos(math.pi / 8) ** 2:.6f})")

# The optimizer only gives lower bounds.  Once the noise is strong enough the
# best it finds falls back to 3/4, which any classical strategy can reach.
print("\n eps   one copy   two copies")
for eps in (0.05, 0.1, 0.2, 0.3, 0.5, 1.0):
    psi = depolarized_epr(eps)
    one = optimize_strategy(game, psi, 1, restarts=10, iters=60, seed=1)[1]
    two = optimize_strategy(game, psi, 2, restarts=10, iters=60, seed=1)[1]
    print(f"{eps:4.2f}   {one:.5f}    {two:.5f}")
