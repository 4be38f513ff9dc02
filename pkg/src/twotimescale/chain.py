"""Finite-state Markov chains: stationary law, Poisson equation, mixing, sampling.

Randomness comes from numpy's Philox4x64 counter-based generator.  A path is
identified by ``(seed, path_index)``; the pair is turned into a Philox key
through :class:`numpy.random.SeedSequence` with ``spawn_key=(path_index,
stream)``, so every path owns independent streams that can be regenerated
in isolation and in any order.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .densemat import NumericalError, as_matrix

STOCHASTIC_TOL = 1e-12

# stream ids inside a path's seed sequence
STREAM_CHAIN = 0
STREAM_INIT = 1


class ChainError(ValueError):
    """Transition matrix violates the finite ergodic chain requirements."""


class MixingNotObserved(NumericalError):
    pass


def path_generator(seed: int, path_index: int = 0, stream: int = STREAM_CHAIN) -> np.random.Generator:
    """Independent Philox generator for one ``(seed, path_index, stream)``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(path_index), int(stream)))
    return np.random.Generator(np.random.Philox(ss))


def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    seen[start] = True
    frontier = [start]
    while frontier:
        nxt = np.flatnonzero(adj[frontier].any(axis=0) & ~seen)
        seen[nxt] = True
        frontier = list(nxt)
    return seen


def _period(adj: np.ndarray) -> int:
    # BFS levels from state 0; the period of an irreducible chain is the gcd
    # of level[u] + 1 - level[v] over all edges u -> v.
    n = adj.shape[0]
    level = np.full(n, -1)
    level[0] = 0
    queue = [0]
    while queue:
        u = queue.pop(0)
        for v in np.flatnonzero(adj[u]):
            if level[v] < 0:
                level[v] = level[u] + 1
                queue.append(v)
    g = 0
    for u, v in zip(*np.nonzero(adj)):
        g = math.gcd(g, int(abs(level[u] + 1 - level[v])))
    return g


@dataclass(frozen=True, eq=False)
class ChainSpec:
    """Finite, irreducible, aperiodic Markov chain given by a row-stochastic `P`.

    Validation happens at construction and raises :class:`ChainError`.
    """

    P: np.ndarray
    labels: tuple | None = field(default=None)

    def __post_init__(self):
        P = as_matrix(self.P, "P")
        n = P.shape[0]
        if P.shape != (n, n):
            raise ChainError(f"P must be square, got {P.shape}")
        if np.any(P < 0) or np.any(P > 1):
            raise ChainError("P has entries outside [0, 1]")
        rows = P.sum(axis=1)
        bad = np.flatnonzero(np.abs(rows - 1.0) > STOCHASTIC_TOL)
        if bad.size:
            raise ChainError(f"row {bad[0]} of P sums to {rows[bad[0]]!r}, not 1")
        adj = P > 0
        for s in range(n):
            if not _reachable(adj, s).all():
                raise ChainError(f"chain is reducible: state {s} does not reach every state")
        if n > 1 and _period(adj) != 1:
            raise ChainError(f"chain is periodic with period {_period(adj)}")
        P.setflags(write=False)
        object.__setattr__(self, "P", P)
        if self.labels is not None:
            if len(self.labels) != n:
                raise ChainError(f"{len(self.labels)} labels for {n} states")
            object.__setattr__(self, "labels", tuple(self.labels))

    @property
    def n(self) -> int:
        return self.P.shape[0]

    @cached_property
    def mu(self) -> np.ndarray:
        mu = stationary_distribution(self)
        mu.setflags(write=False)
        return mu

    @cached_property
    def cumulative(self) -> np.ndarray:
        """Row-wise CDFs used for inverse-CDF sampling."""
        c = np.cumsum(self.P, axis=1)
        c[:, -1] = 1.0
        c.setflags(write=False)
        return c


def stationary_distribution(chain: ChainSpec) -> np.ndarray:
    """Unique `mu` with ``mu @ P = mu`` and ``sum(mu) = 1``."""
    n = chain.n
    M = np.vstack([(np.eye(n) - chain.P).T, np.ones((1, n))])
    rhs = np.zeros(n + 1)
    rhs[-1] = 1.0
    mu, _, rank, _ = np.linalg.lstsq(M, rhs, rcond=None)
    if rank < n:
        raise NumericalError("stationary distribution is not unique (reducible chain?)")
    mu = np.clip(mu, 0.0, None)
    return mu / mu.sum()


def second_eigenvalue_modulus(chain: ChainSpec) -> float:
    """Second-largest eigenvalue modulus of P (0 for a one-state chain)."""
    if chain.n == 1:
        return 0.0
    mods = np.sort(np.abs(np.linalg.eigvals(chain.P)))[::-1]
    return float(mods[1])


def solve_poisson(chain: ChainSpec, h_tilde, tol: float = 1e-10) -> np.ndarray:
    """Mean-zero solution of ``h_hat = h_tilde + P h_hat``.

    Parameters
    ----------
    chain : ChainSpec
    h_tilde : array, shape (n,) or (n, d)
        One row per state; must have zero mean under the stationary law.

    Returns
    -------
    h_hat : array with the shape of `h_tilde`
        The unique solution with ``mu @ h_hat = 0``.
    """
    h = np.asarray(h_tilde, dtype=float)
    vec = h.ndim == 1
    H = h.reshape(-1, 1) if vec else h
    n = chain.n
    if H.shape[0] != n:
        raise ValueError(f"h_tilde has {H.shape[0]} rows for a {n}-state chain")
    mean = chain.mu @ H
    if np.max(np.abs(mean), initial=0.0) > tol * max(1.0, np.max(np.abs(H), initial=0.0)):
        raise ValueError(f"h_tilde is not centred under mu (mean {mean})")
    M = np.vstack([np.eye(n) - chain.P, chain.mu[None, :]])
    rhs = np.vstack([H, np.zeros((1, H.shape[1]))])
    sol, _, rank, _ = np.linalg.lstsq(M, rhs, rcond=None)
    if rank < n:
        raise NumericalError("Poisson system is rank deficient")
    return sol.ravel() if vec else sol


def poisson_series(chain: ChainSpec, h_tilde, tail_tol: float = 1e-12, max_terms: int = 100_000) -> np.ndarray:
    """Poisson solution as the series ``sum_k E[h(O_k) | O_0 = o]``.

    Summed until the geometric tail bound drops below `tail_tol`.  Slow but
    independent of :func:`solve_poisson`; used as a cross-check.
    """
    h = np.asarray(h_tilde, dtype=float)
    rho = max(second_eigenvalue_modulus(chain), 1e-300)
    term = h.copy()
    total = term.copy()
    for k in range(1, max_terms):
        term = chain.P @ term
        total = total + term
        tail = np.max(np.abs(term), initial=0.0) * rho / (1.0 - rho) if rho < 1 else np.inf
        if tail < tail_tol:
            break
    return total


@dataclass(frozen=True)
class MixingProfile:
    tau_mix: int
    rho_hat: float
    dtv_curve: list
    slem: float = float("nan")  # second-largest eigenvalue modulus of P


def tv_curve(chain: ChainSpec, k_max: int) -> list:
    """``[(k, max_o d_TV(P^k(o, .), mu)) for k = 1..k_max]`` from exact powers."""
    out = []
    Pk = np.eye(chain.n)
    for k in range(1, k_max + 1):
        Pk = Pk @ chain.P
        d = 0.5 * np.abs(Pk - chain.mu[None, :]).sum(axis=1).max()
        out.append((k, float(d)))
    return out


def mixing_profile(chain: ChainSpec, k_max: int = 200) -> MixingProfile:
    """Mixing time and a fitted geometric rate of the worst-case TV distance.

    `rho_hat` is the least-squares slope of ``log d_TV(k)`` against `k` over
    the points with ``d_TV > 1e-13``, clamped into (0, 1).
    """
    if k_max < 1:
        raise ValueError("k_max must be >= 1")
    curve = tv_curve(chain, k_max)
    tau = next((k for k, d in curve if d <= 0.25), None)
    if tau is None:
        raise MixingNotObserved(f"d_TV({k_max}) = {curve[-1][1]:.3g} > 1/4")
    pts = [(k, d) for k, d in curve if d > 1e-13]
    if len(pts) >= 2:
        ks = np.array([p[0] for p in pts], dtype=float)
        ls = np.log([p[1] for p in pts])
        slope = np.polyfit(ks, ls, 1)[0]
        rho = math.exp(slope)
    elif len(pts) == 1:
        rho = pts[0][1] ** (1.0 / pts[0][0])
    else:
        rho = 0.0
    rho = min(max(rho, 1e-12), 1.0 - 1e-12)
    return MixingProfile(tau_mix=tau, rho_hat=rho, dtv_curve=curve,
                         slem=second_eigenvalue_modulus(chain))


def next_states(cumulative: np.ndarray, current: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF transition for a batch of chains.

    ``next = #{j : cdf[current, j] <= u}``, i.e. the smallest j whose
    cumulative probability exceeds `u`.
    """
    n = cumulative.shape[1]
    nxt = (cumulative[current] <= u[:, None]).sum(axis=1)
    return np.minimum(nxt, n - 1)


def initial_states(chain: ChainSpec, initial, u: np.ndarray) -> np.ndarray:
    """Starting states: a fixed index, or draws from ``mu`` when `initial` is "mu"."""
    if isinstance(initial, str):
        if initial != "mu":
            raise ValueError(f"unknown initial distribution {initial!r}")
        cdf = np.cumsum(chain.mu)
        cdf[-1] = 1.0
        return np.minimum((cdf[None, :] <= u[:, None]).sum(axis=1), chain.n - 1)
    s = int(initial)
    if not 0 <= s < chain.n:
        raise ValueError(f"initial state {s} outside 0..{chain.n - 1}")
    return np.full(u.shape[0], s, dtype=np.int64)


def sample_path(chain: ChainSpec, initial="mu", horizon: int = 0, seed: int = 0,
                path_index: int = 0) -> np.ndarray:
    """States ``O_0..O_horizon`` of one seeded path (length ``horizon + 1``).

    The first uniform of the path's stream picks ``O_0`` (ignored for a fixed
    start, but still consumed), and each later uniform drives one transition.
    """
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    gen = path_generator(seed, path_index, STREAM_CHAIN)
    u = gen.random(horizon + 1)
    out = np.empty(horizon + 1, dtype=np.int64)
    s = initial_states(chain, initial, u[:1])
    out[0] = s[0]
    cum = chain.cumulative
    for k in range(1, horizon + 1):
        s = next_states(cum, s, u[k:k + 1])
        out[k] = s[0]
    return out
