"""Exact asymptotic covariance theory for linear two-time-scale SA.

Noise covariances (the Gamma triple) are computed exactly from the finite
chain, either through Poisson-equation solutions or through the summed
autocovariance series; both must agree.  The Sigma triple then follows from
three linear matrix equations solved in order:

    A22 Sx + Sx A22^T                        = Gx
    A22 Sxy + Sx A12^T                       = Gxy        (Sxy is dx x dy)
    (D - I/2b) Sy + Sy (D - I/2b)^T          = Gy - A12 Sxy - Syx A12^T

With ``Sxy = lim E[x^ y^T] / beta_k`` the middle equation is the
dimensionally consistent form of the cross-covariance relation.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .chain import mixing_profile, path_generator, solve_poisson, initial_states, next_states
from .densemat import (
    HURWITZ_TOL,
    NumericalError,
    inv,
    is_hurwitz,
    norm2,
    solve_linear,
    solve_lyapunov,
    solve_sylvester,
    symmetrize,
)
from .problem import TwoTimeScaleProblem

TAIL_TOL = 1e-10
MAX_SERIES_TERMS = 100_000


class HurwitzError(NumericalError):
    pass


class IdentityMismatch(NumericalError):
    """The two algebraic forms of the drive matrix disagree."""


@dataclass(frozen=True)
class NoiseCovariances:
    Gamma_x: np.ndarray   # dx x dx
    Gamma_xy: np.ndarray  # dx x dy
    Gamma_y: np.ndarray   # dy x dy


@dataclass(frozen=True)
class AsymptoticCovariances:
    Sigma_x: np.ndarray   # dx x dx
    Sigma_xy: np.ndarray  # dx x dy
    Sigma_y: np.ndarray   # dy x dy
    beta: float


@dataclass(frozen=True)
class RateExponents:
    varrho: float
    q_delta_beta: float
    Q_delta_beta: np.ndarray
    exp_y: float
    exp_xy: float
    exp_x: float
    canonical_varrho: float


def _weighted_cross(mu, F, G):
    """``sum_o mu(o) F[o] G[o]^T``."""
    return (F * mu[:, None]).T @ G


def gamma_via_poisson(problem: TwoTimeScaleProblem) -> NoiseCovariances:
    """Gamma triple from the Poisson solutions ``b^_i`` of the centred noise.

    ``Gx = E_mu[b^2 b~2^T + b~2 b^2^T - b~2 b~2^T]`` and likewise for the
    cross and slow blocks.
    """
    mu = problem.chain.mu
    bt1, bt2 = problem.noise
    bh1 = solve_poisson(problem.chain, bt1)
    bh2 = solve_poisson(problem.chain, bt2)
    Gx = _weighted_cross(mu, bh2, bt2) + _weighted_cross(mu, bt2, bh2) - _weighted_cross(mu, bt2, bt2)
    Gxy = _weighted_cross(mu, bh2, bt1) + _weighted_cross(mu, bt2, bh1) - _weighted_cross(mu, bt2, bt1)
    Gy = _weighted_cross(mu, bh1, bt1) + _weighted_cross(mu, bt1, bh1) - _weighted_cross(mu, bt1, bt1)
    return NoiseCovariances(symmetrize(Gx), Gxy, symmetrize(Gy))


def gamma_via_autocovariance(problem: TwoTimeScaleProblem, tail_tol: float = TAIL_TOL) -> NoiseCovariances:
    """Gamma triple from the stationary autocovariance series.

    Lag-j terms ``E[f(O_j) g(O_0)^T] = (P^j F)^T diag(mu) G`` are exact.
    The series stops at the first J where ``bmax^2 rho^J / (1 - rho) <
    tail_tol``; `rho` is the larger of the fitted TV rate and the second
    eigenvalue modulus, so the bound is never optimistic.
    """
    chain = problem.chain
    prof = mixing_profile(chain, k_max=max(200, 10 * chain.n))
    rho = max(prof.rho_hat, prof.slem)
    if not rho < 1.0:
        raise NumericalError("cannot certify geometric mixing (rho >= 1)")
    mu = chain.mu
    bt1, bt2 = problem.noise
    bmax = max(np.max(np.abs(bt1), initial=0.0), np.max(np.abs(bt2), initial=0.0))
    Gx = _weighted_cross(mu, bt2, bt2)
    Gxy = _weighted_cross(mu, bt2, bt1)
    Gy = _weighted_cross(mu, bt1, bt1)
    if bmax == 0.0:
        return NoiseCovariances(Gx, Gxy, Gy)
    f1, f2 = bt1.copy(), bt2.copy()
    for j in range(1, MAX_SERIES_TERMS + 1):
        f1 = chain.P @ f1  # rows: E[b~1(O_j) | O_0 = o]
        f2 = chain.P @ f2
        c22 = _weighted_cross(mu, f2, bt2)
        Gx += c22 + c22.T
        Gxy += _weighted_cross(mu, f2, bt1) + _weighted_cross(mu, bt2, f1)
        c11 = _weighted_cross(mu, f1, bt1)
        Gy += c11 + c11.T
        if bmax ** 2 * rho ** j / (1.0 - rho) < tail_tol:
            break
    return NoiseCovariances(symmetrize(Gx), Gxy, symmetrize(Gy))


def sigma_triple(problem: TwoTimeScaleProblem, gammas: NoiseCovariances, beta: float,
                 tol: float = HURWITZ_TOL) -> AsymptoticCovariances:
    """Solve for the asymptotic covariances (Sx, Sxy, Sy) at step constant `beta`."""
    s = problem.summary
    if not is_hurwitz(-s.A22, tol):
        raise HurwitzError("Sigma_x equation: -A22 is not Hurwitz")
    shifted = s.Delta - np.eye(problem.dy) / (2.0 * beta)
    if not is_hurwitz(-shifted, tol):
        raise HurwitzError(f"Sigma_y equation: -(Delta - I/(2 beta)) is not Hurwitz at beta={beta}")
    Sx = solve_lyapunov(s.A22, gammas.Gamma_x)
    Sxy = solve_sylvester(s.A22, np.zeros((problem.dy, problem.dy)), gammas.Gamma_xy - Sx @ s.A12.T)
    rhs = gammas.Gamma_y - s.A12 @ Sxy - Sxy.T @ s.A12.T
    Sy = solve_lyapunov(shifted, symmetrize(rhs))
    return AsymptoticCovariances(Sx, Sxy, Sy, float(beta))


def drive_matrix(problem: TwoTimeScaleProblem, gammas: NoiseCovariances,
                 sigmas: AsymptoticCovariances, tol: float = 1e-10) -> np.ndarray:
    """Right-hand side ``Gy - A12 Sxy - Syx A12^T`` of the slow Lyapunov equation.

    Also evaluates the Sigma-free form
    ``Gy + A12 A22^-1 Gx A22^-T A12^T - A12 A22^-1 Gxy - Gyx A22^-T A12^T``
    and raises :class:`IdentityMismatch` if the two differ by more than
    ``tol * (1 + |Gamma|)``.
    """
    s = problem.summary
    A12 = s.A12
    drive = symmetrize(gammas.Gamma_y - A12 @ sigmas.Sigma_xy - sigmas.Sigma_xy.T @ A12.T)
    K = A12 @ inv(s.A22)  # dy x dx
    alt = symmetrize(gammas.Gamma_y + K @ gammas.Gamma_x @ K.T
                     - K @ gammas.Gamma_xy - gammas.Gamma_xy.T @ K.T)
    scale = 1.0 + max(norm2(gammas.Gamma_x), norm2(gammas.Gamma_xy), norm2(gammas.Gamma_y))
    if norm2(drive - alt) > tol * scale * (1.0 + norm2(K)) ** 2:
        raise IdentityMismatch(f"drive forms differ by {norm2(drive - alt):.3e}")
    return drive


def drive_matrix_direct(problem: TwoTimeScaleProblem, gammas: NoiseCovariances) -> np.ndarray:
    """The Sigma-free form of the drive matrix alone."""
    s = problem.summary
    K = s.A12 @ inv(s.A22)
    return symmetrize(gammas.Gamma_y + K @ gammas.Gamma_x @ K.T
                      - K @ gammas.Gamma_xy - gammas.Gamma_xy.T @ K.T)


def monte_carlo_hN(problem: TwoTimeScaleProblem, N: int, replications: int, seed: int,
                   batch: int = 1000) -> np.ndarray:
    """``N * E[h_N h_N^T]`` estimated from stationary-start replications.

    ``h_N = (1/N) sum_{j<N} (b~1(O_j) - A12 A22^-1 b~2(O_j))``.  Replication
    r uses the chain stream of ``(seed, r)``, so the estimate does not depend
    on how replications are batched.
    """
    if N < 1 or replications < 1:
        raise ValueError("N and replications must be >= 1")
    s = problem.summary
    bt1, bt2 = problem.noise
    g = bt1 - bt2 @ solve_linear(s.A22.T, s.A12.T)  # rows: b~1 - A12 A22^-1 b~2
    chain = problem.chain
    cum = chain.cumulative
    sums = np.empty((replications, problem.dy))
    for start in range(0, replications, batch):
        idx = range(start, min(start + batch, replications))
        u = np.stack([path_generator(seed, r).random(N) for r in idx])
        state = initial_states(chain, "mu", u[:, 0])
        acc = g[state].copy()
        for j in range(1, N):
            state = next_states(cum, state, u[:, j])
            acc += g[state]
        sums[start:start + len(idx)] = acc
    h = sums / N
    return symmetrize(N * (h.T @ h) / replications)


def polyak_sigma(A_mean, Gamma_x) -> np.ndarray:
    """``A^-1 Gx A^-T``, the averaged-iterate covariance."""
    Ainv = inv(A_mean)
    return symmetrize(Ainv @ np.asarray(Gamma_x, dtype=float) @ Ainv.T)


def q_matrix(Delta, beta: float) -> np.ndarray:
    """Solution Q of ``M^T Q + Q M = I`` with ``M = Delta - I/(2 beta)``."""
    D = np.atleast_2d(np.asarray(Delta, dtype=float))
    M = D - np.eye(D.shape[0]) / (2.0 * beta)
    if not is_hurwitz(-M):
        raise HurwitzError(f"-(Delta - I/(2 beta)) is not Hurwitz at beta={beta}")
    return solve_lyapunov(M.T, np.eye(D.shape[0]))


def rate_exponents(schedule, Delta, varrho: float | None = None) -> RateExponents:
    """Exponents of the higher-order remainders for the three covariance blocks.

    With ``m = min(xi - 0.5, 1 - xi)``: y-block ``1 + (1 - varrho) m``,
    cross block ``min(xi + 0.5, 2 - xi)``, x-block ``min(1.5 xi, 1)``.
    `varrho` defaults to ``1 - q`` with ``q = beta/|Q| / (4 + beta/|Q|)``.
    """
    beta, xi = schedule.beta, schedule.xi
    Q = q_matrix(Delta, beta)
    inv_norm = 1.0 / norm2(Q)
    q = beta * inv_norm / (4.0 + beta * inv_norm)
    canonical = 1.0 - q
    if varrho is None:
        varrho = canonical
    if not 0.0 < varrho < 1.0:
        raise ValueError("varrho must lie in (0, 1)")
    m = min(xi - 0.5, 1.0 - xi)
    return RateExponents(
        varrho=varrho,
        q_delta_beta=q,
        Q_delta_beta=Q,
        exp_y=1.0 + (1.0 - varrho) * m,
        exp_xy=min(xi + 0.5, 2.0 - xi),
        exp_x=min(1.5 * xi, 1.0),
        canonical_varrho=canonical,
    )


def h_beta(beta: float) -> float:
    """``beta^2 / (2 beta - 1)``: scale of the averaged covariance vs beta."""
    if beta <= 0.5:
        raise ValueError("h_beta is defined for beta > 0.5")
    return beta * beta / (2.0 * beta - 1.0)


def optimal_beta_scalar(upper: float = 10.0) -> float:
    """Golden-section minimiser of :func:`h_beta` (the answer is beta = 1)."""
    res = minimize_scalar(h_beta, bracket=(0.6, 1.2, upper), method="golden", tol=1e-12)
    return float(res.x)


def beta_threshold(Delta) -> float:
    """Infimum of beta for which ``-(Delta - I/(2 beta))`` is Hurwitz."""
    lam = np.min(np.linalg.eigvals(np.atleast_2d(Delta)).real)
    if lam <= 0:
        return math.inf
    return 1.0 / (2.0 * lam)


def optimal_beta(problem: TwoTimeScaleProblem, gammas: NoiseCovariances, upper: float = 100.0) -> float:
    """beta minimising ``|beta * Sigma_y(beta)|`` over the admissible range."""
    lo = beta_threshold(problem.summary.Delta)
    if not math.isfinite(lo):
        raise HurwitzError("-Delta is not Hurwitz; no admissible beta")
    lo = lo * (1.0 + 1e-6) + 1e-9

    def objective(b):
        return b * norm2(sigma_triple(problem, gammas, b).Sigma_y)

    res = minimize_scalar(objective, bounds=(lo, max(upper, 2 * lo)), method="bounded",
                          options={"xatol": 1e-8})
    return float(res.x)
