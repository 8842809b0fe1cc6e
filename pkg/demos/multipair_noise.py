"""Multi-pair emission washes out the fringe.

With mean pair number mu per pulse, photons from two independent pairs
can meet in the dt = 0 window. They never interfere, so they add a flat
floor. The expected visibility is v_d / (1 + 2 mu - mu / d). Here we scan
mu at d = 20 and compare the simulated net visibility with that law.

    python3 demos/multipair_noise.py
"""

import argparse

from timebin import ExperimentConfig, make_uniform_train
from timebin.analysis import multipair_sweep
from timebin.noise import analytic_visibility_d, multipair_rates, visibility_multipair

parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
parser.add_argument("--trains", type=int, default=100_000)
parser.add_argument("--d", type=int, default=20)
parser.add_argument("--seed", type=int, default=2)
args = parser.parse_args()

mu_values = [0.05, 0.1, 0.2, 0.3, 0.5]
v_d = analytic_visibility_d(args.d)

# The closed-form law is just the single-pair share of all coincidences.
for mu in mu_values:
    r = multipair_rates(mu, args.d)
    print(f"mu={mu:<5} single-pair share {r.r1 / r.total:.4f} -> V = {visibility_multipair(mu, args.d, v_d):.4f}")

base = ExperimentConfig(make_uniform_train(args.d, mu=mu_values[0]), n_trains=args.trains, seed=args.seed)
result = multipair_sweep(base, mu_values)
print("\n mu    V_net    err     law")
for row in result.rows:
    print(f"{row.x:<5} {row.v_net:.4f}  {row.v_err:.4f}  {row.prediction:.4f}")
