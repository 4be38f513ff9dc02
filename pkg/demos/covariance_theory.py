"""Asymptotic covariance of a two-time-scale iteration, three ways.

A scalar slow variable y and a scalar fast variable x are driven by a
two-state Markov chain.  The script

1. computes the long-run noise covariances by the Poisson route and by
   summing the autocovariance series, and compares them;
2. solves the Lyapunov/Sylvester system for the asymptotic covariances;
3. checks the slow-equation drive against a Monte-Carlo estimate of
   ``N E[h_N h_N^T]``;
4. simulates a small ensemble and watches ``|E[y y^T]| / beta_k`` settle.

Run:  python demos/covariance_theory.py
"""
import numpy as np

from twotimescale import engine, theory
from twotimescale.config import load_preset
from twotimescale.densemat import norm2

cfg = load_preset("fig1a")
problem = cfg.problem
s = problem.summary
print("mean Delta =", s.Delta.ravel()[0], " fixed point y*, x* =", s.y_star, s.x_star)

g = theory.gamma_via_poisson(problem)
g_series = theory.gamma_via_autocovariance(problem)
print("Gamma (x, xy, y) via Poisson:        ", g.Gamma_x.item(), g.Gamma_xy.item(), g.Gamma_y.item())
print("Gamma (x, xy, y) via autocovariances:", g_series.Gamma_x.item(), g_series.Gamma_xy.item(),
      g_series.Gamma_y.item())

sig = theory.sigma_triple(problem, g, beta=1.0)
print("Sigma_x, Sigma_xy, Sigma_y =", sig.Sigma_x.item(), sig.Sigma_xy.item(), sig.Sigma_y.item())

drive = theory.drive_matrix(problem, g, sig)
hN = theory.monte_carlo_hN(problem, N=2000, replications=1000, seed=0)
print(f"drive matrix {drive.item():.4f}; Monte-Carlo N E[h h^T] {hN.item():.4f}")

rates = theory.rate_exponents(cfg.schedule, s.Delta)
print(f"remainder exponents: y {rates.exp_y:.3f}, xy {rates.exp_xy:.3f}, x {rates.exp_x:.3f}")

# A short ensemble: the ratio approaches |Sigma_y| as k grows.
sched = cfg.schedule
stats = engine.monte_carlo(problem, sched, paths=200, horizon=20_000, seed=1,
                           checkpoints=engine.log_checkpoints(20_000, per_decade=2))
print("\n      k   ratio_y   (target %.3f)" % norm2(sig.Sigma_y))
for k, r in zip(stats.checkpoints, stats.ratio_y):
    if k >= 10:
        print(f"{k:7d}   {r:8.3f}")
