"""Off-policy evaluation with GTD, GTD2 and TDC as two-time-scale SA.

A random 3-state, 2-action MDP with two linear features is compiled into a
two-time-scale problem for each algorithm.  The script prints the fixed
point theta*, the stability precheck, and the predicted asymptotic
covariance trace, then compares it with a small simulated ensemble.

Run:  python demos/off_policy_td.py
"""
import numpy as np

from twotimescale import engine, rl

mdp, policies, features = rl.random_instance(3, 2, 2, seed=301)
print("theta* =", rl.theta_star(mdp, policies, features))

for alg in rl.ALGORITHMS:
    problem = rl.compile(alg, mdp, policies, features)
    lam = np.min(np.linalg.eigvals(problem.summary.Delta).real)
    beta = 2.0 / lam
    pre = rl.precheck(alg, mdp, policies, features, beta)
    print("\n" + pre.line())
    _, trace = rl.sigma_theta(alg, mdp, policies, features, beta)
    sched = engine.StepSchedule(alpha=1.0, beta=beta, xi=0.75, K0=1)
    init = engine.InitPolicy("fixed", y0=np.zeros(2), x0=np.zeros(2))
    stats = engine.monte_carlo(problem, sched, paths=100, horizon=100_000, seed=11, init=init,
                               checkpoints=[100_000])
    est = np.trace(stats.E_yy[-1]) / stats.beta_k[-1]
    print(f"  E|theta_k - theta*|^2 / beta_k at k=1e5: {est:.4f}   trace Sigma_theta: {trace:.4f}")
