"""How the step exponent xi and the slow constant beta shape the error.

With alpha_k = alpha/(k+1)^xi and beta_k = beta/(k+1), the leading term
beta_k Sigma_y only describes the error when the fast iterate is fast
enough and ``-(Delta - I/(2 beta))`` is stable.  This sweep shows both
transitions on small ensembles.  Use the ``sweep`` CLI command with the
fig1a / fig1b presets for the full-size runs.

Run:  python demos/xi_and_beta_study.py
"""
import numpy as np

from twotimescale import theory
from twotimescale.cli import run_experiment
from twotimescale.config import load_preset
from twotimescale.densemat import norm2

PATHS, HORIZON = 200, 20_000

print("step exponent xi (fig1a problem, beta = 1)")
base = load_preset("fig1a")
for xi in (0.25, 0.6, 0.75):
    stats, _, _, sigma = run_experiment(base.with_overrides(xi=xi, paths=PATHS, horizon=HORIZON))
    print(f"  xi={xi:<5} ratio_y={stats.ratio_y[-1]:12.4g}   |Sigma_y|={norm2(sigma.Sigma_y):.4g}")

print("\nslow constant beta (fig1b problem, Delta = 1, threshold beta > 1/2)")
base = load_preset("fig1b")
print(f"  threshold from theory: {theory.beta_threshold(base.problem.summary.Delta):g}")
for beta in (0.4, 0.75, 1.0, 2.0):
    stats, _, _, sigma = run_experiment(base.with_overrides(beta=beta, paths=PATHS, horizon=HORIZON))
    target = norm2(sigma.Sigma_y) if sigma is not None else np.nan
    print(f"  beta={beta:<5} ratio_y={stats.ratio_y[-1]:12.4g}   |Sigma_y(beta)|={target:.4g}")
print(f"\nh(beta) = beta^2/(2 beta - 1) is minimised at beta = {theory.optimal_beta_scalar():.6f}")
