"""Seeded simulation of two-time-scale, single-time-scale and averaged iterates.

All three iterate families are run by one kernel on the stacked state
``z = (y, x)``:

    z_{k+1} = z_k + s_k * (b(O_k) - M(O_k) z_k)

where ``M(o)``/``b(o)`` are per-state stacked tables and ``s_k`` is a
per-coordinate step vector (``beta_k`` on y and ``alpha_k`` on x for the
two-time-scale scheme, ``beta_k`` everywhere for the single-time-scale one,
``1/(k+1)`` and ``alpha_k`` for Polyak-Ruppert averaging).

Paths are vectorised in blocks, but every path draws from its own streams
keyed by ``(seed, path_index)`` and uses only elementwise arithmetic, so a
path's numbers are bitwise identical whatever block or worker it runs in.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .chain import (
    STREAM_CHAIN,
    STREAM_INIT,
    ChainSpec,
    initial_states,
    next_states,
    path_generator,
)
from .densemat import norm2
from .problem import TwoTimeScaleProblem, hat_coordinates

DIVERGENCE_THRESHOLD = 1e12
CHUNK = 2048


@dataclass(frozen=True)
class StepSchedule:
    """``alpha_k = alpha / (k + K0)^xi`` and ``beta_k = beta / (k + K0)``.

    The 0.5 < xi < 1 range needed for the optimal rate is reported by
    :func:`twotimescale.problem.validate`; here any xi in (0, 1] is allowed
    so unstable configurations can be simulated.
    """

    alpha: float = 1.0
    beta: float = 1.0
    xi: float = 0.75
    K0: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and self.beta > 0):
            raise ValueError("alpha and beta must be positive")
        if not 0.0 < self.xi <= 1.0:
            raise ValueError("xi must lie in (0, 1]")
        if not self.K0 >= 1.0:
            raise ValueError("K0 must be >= 1")

    def alpha_k(self, k):
        return self.alpha / (np.asarray(k, dtype=float) + self.K0) ** self.xi

    def beta_k(self, k):
        return self.beta / (np.asarray(k, dtype=float) + self.K0)


def step_sizes(schedule: StepSchedule, k: int) -> tuple[float, float]:
    return float(schedule.alpha_k(k)), float(schedule.beta_k(k))


def log_checkpoints(horizon: int, per_decade: int = 20, include_zero: bool = True) -> np.ndarray:
    """Integer checkpoints log-spaced on [1, horizon], plus 0 and `horizon`."""
    if horizon < 1:
        return np.array([0], dtype=np.int64)
    decades = math.log10(horizon)
    pts = np.unique(np.round(np.logspace(0, decades, max(2, int(math.ceil(decades * per_decade)) + 1))).astype(np.int64))
    pts = pts[(pts >= 1) & (pts <= horizon)]
    pts = np.union1d(pts, [horizon])
    if include_zero:
        pts = np.union1d([0], pts)
    return pts.astype(np.int64)


@dataclass(frozen=True)
class InitPolicy:
    """Initial iterates.

    kind ``"uniform"`` draws every coordinate of y0 then x0 uniformly from
    ``[low, high]`` using the path's own init stream; ``"fixed"`` uses `y0`
    and `x0`; ``"star"`` starts at the fixed point.  `chain_start` is
    ``"mu"`` (stationary draw) or a state index.
    """

    kind: str = "uniform"
    low: float = -5.0
    high: float = 5.0
    y0: tuple | None = None
    x0: tuple | None = None
    chain_start: str | int = "mu"

    def __post_init__(self):
        if self.kind not in ("uniform", "fixed", "star"):
            raise ValueError(f"unknown init kind {self.kind!r}")
        if self.kind == "uniform" and not self.low < self.high:
            raise ValueError("uniform init needs low < high")
        if self.kind == "fixed" and (self.y0 is None or self.x0 is None):
            raise ValueError("fixed init needs y0 and x0")


@dataclass
class Trajectory:
    checkpoints: np.ndarray
    y_values: np.ndarray          # (C, dy)
    x_values: np.ndarray          # (C, dx)
    seed: int
    path_index: int
    diverged: np.ndarray = field(default=None)  # (C,) bool, True from the divergence on

    @property
    def diverged_at(self) -> int | None:
        idx = np.flatnonzero(self.diverged)
        return int(self.checkpoints[idx[0]]) if idx.size else None


def _norms(mats) -> np.ndarray:
    """Spectral norm per checkpoint; NaN where the ensemble mean is undefined."""
    return np.array([norm2(m) if np.all(np.isfinite(m)) else np.nan for m in mats])


@dataclass
class EnsembleStats:
    checkpoints: np.ndarray
    alpha_k: np.ndarray
    beta_k: np.ndarray
    E_yy: np.ndarray          # (C, dy, dy)
    E_xy: np.ndarray          # (C, dx, dy)
    E_xx: np.ndarray          # (C, dx, dx)
    ratio_y: np.ndarray       # |E_yy| / beta_k
    ratio_x: np.ndarray       # |E_xx| / alpha_k
    stderr_y: np.ndarray      # standard error of the per-path ratio mean
    mse: np.ndarray           # E|y - y*|^2 + |x - x*|^2 over surviving paths
    diverged_paths: np.ndarray
    path_count: int
    path_ratio_y: np.ndarray  # (paths, C): |y^_k|^2 / beta_k per path, NaN once diverged

    @property
    def norm_Eyy(self):
        return _norms(self.E_yy)

    @property
    def norm_Exy(self):
        return _norms(self.E_xy)

    @property
    def norm_Exx(self):
        return _norms(self.E_xx)

    @property
    def all_diverged(self) -> bool:
        return bool(self.diverged_paths[-1] == self.path_count)


# -- mode tables ---------------------------------------------------------------

@dataclass(frozen=True)
class _Plan:
    """Everything the kernel needs, independent of which paths it runs."""

    chain: ChainSpec
    M: np.ndarray        # (n, D, D)
    b: np.ndarray        # (n, D)
    dy: int
    steps: np.ndarray    # (horizon, D) per-step step vector
    z_star: np.ndarray   # (D,)
    init: InitPolicy
    seed: int
    checkpoints: np.ndarray


def _step_matrix(dy: int, dx: int, y_steps, x_steps) -> np.ndarray:
    return np.concatenate([np.repeat(y_steps[:, None], dy, axis=1),
                           np.repeat(x_steps[:, None], dx, axis=1)], axis=1)


def _plan(problem: TwoTimeScaleProblem, schedule: StepSchedule, mode: str, kappa: float,
          horizon: int, checkpoints, init: InitPolicy, seed: int) -> _Plan:
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    cps = np.unique(np.asarray(checkpoints, dtype=np.int64))
    if cps.size == 0 or cps[0] < 0 or cps[-1] > horizon:
        raise ValueError("checkpoints must lie in [0, horizon]")
    k = np.arange(horizon, dtype=float)
    dy, dx = problem.dy, problem.dx
    if mode == "two-timescale":
        M, b = problem.stacked_tables(1.0)
        steps = _step_matrix(dy, dx, schedule.beta_k(k), schedule.alpha_k(k))
    elif mode == "single":
        if not kappa > 0:
            raise ValueError("kappa must be positive")
        M, b = problem.stacked_tables(kappa)
        bk = schedule.beta_k(k)
        steps = _step_matrix(dy, dx, bk, bk)
    elif mode == "polyak":
        M, b = problem.stacked_tables(1.0)
        steps = _step_matrix(dy, dx, 1.0 / (k + 1.0), schedule.alpha_k(k))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    s = problem.summary
    z_star = np.concatenate([s.y_star, s.x_star])
    return _Plan(problem.chain, M, b, dy, steps, z_star, init, int(seed), cps)


def _initial_iterates(plan: _Plan, path_indices) -> np.ndarray:
    D = plan.M.shape[1]
    init = plan.init
    if init.kind == "uniform":
        return np.stack([path_generator(plan.seed, p, STREAM_INIT).uniform(init.low, init.high, D)
                         for p in path_indices])
    if init.kind == "fixed":
        z0 = np.concatenate([np.ravel(init.y0), np.ravel(init.x0)]).astype(float)
        if z0.size != D:
            raise ValueError(f"fixed init has {z0.size} coordinates, problem has {D}")
    else:
        z0 = plan.z_star
    return np.tile(z0, (len(path_indices), 1))


def _run_block(plan: _Plan, path_indices) -> tuple[np.ndarray, np.ndarray]:
    """Simulate a block of paths; returns snapshots (P, C, D) and flags (P, C)."""
    path_indices = list(path_indices)
    P = len(path_indices)
    D = plan.M.shape[1]
    horizon = plan.steps.shape[0]
    cps = plan.checkpoints
    snaps = np.empty((P, cps.size, D))
    flags = np.zeros((P, cps.size), dtype=bool)

    z = _initial_iterates(plan, path_indices)
    gens = [path_generator(plan.seed, p, STREAM_CHAIN) for p in path_indices]
    cum = plan.chain.cumulative
    M, b, steps = plan.M, plan.b, plan.steps
    alive = np.ones(P, dtype=bool)
    dead_any = False
    thresh = DIVERGENCE_THRESHOLD / math.sqrt(D)
    dy = plan.dy

    ci = 0
    if cps[0] == 0:
        snaps[:, 0] = z
        ci = 1
    u = None
    state = None
    for k in range(horizon):
        t = k % CHUNK
        if t == 0:
            n_draw = min(CHUNK, horizon + 1 - k)
            u = np.stack([g.random(n_draw) for g in gens])
            if k == 0:
                state = initial_states(plan.chain, plan.init.chain_start, u[:, 0])
        if k > 0:
            state = next_states(cum, state, u[:, t])
        Ms = M[state]
        r = b[state]
        for j in range(D):
            r -= Ms[:, :, j] * z[:, j:j + 1]
        if dead_any:
            z += (steps[k] * r) * alive[:, None]
        else:
            z += steps[k] * r
        if np.abs(z).max() > thresh:
            ny = np.sqrt((z[:, :dy] ** 2).sum(axis=1))
            nx = np.sqrt((z[:, dy:] ** 2).sum(axis=1))
            blown = ((ny > DIVERGENCE_THRESHOLD) | (nx > DIVERGENCE_THRESHOLD)) & alive
            if blown.any():
                alive &= ~blown
                dead_any = True
                z[~np.isfinite(z)] = np.sign(z[~np.isfinite(z)]) * np.finfo(float).max
        if ci < cps.size and cps[ci] == k + 1:
            snaps[:, ci] = z
            flags[:, ci] = ~alive
            ci += 1
    return snaps, flags


def _trajectory(plan: _Plan, path_index: int) -> Trajectory:
    snaps, flags = _run_block(plan, [path_index])
    return Trajectory(plan.checkpoints.copy(), snaps[0, :, :plan.dy], snaps[0, :, plan.dy:],
                      plan.seed, path_index, flags[0])


def run_two_timescale(problem: TwoTimeScaleProblem, schedule: StepSchedule, horizon: int,
                      checkpoints=None, init: InitPolicy | None = None, seed: int = 0,
                      path_index: int = 0) -> Trajectory:
    """One path of the coupled (y, x) iteration with ``beta_k`` on y and ``alpha_k`` on x."""
    cps = log_checkpoints(horizon) if checkpoints is None else checkpoints
    plan = _plan(problem, schedule, "two-timescale", 1.0, horizon, cps, init or InitPolicy(), seed)
    return _trajectory(plan, path_index)


def run_single_timescale(problem: TwoTimeScaleProblem, kappa: float, schedule: StepSchedule,
                         horizon: int, checkpoints=None, init: InitPolicy | None = None,
                         seed: int = 0, path_index: int = 0) -> Trajectory:
    """One path of ``z += beta_k (b_kappa(O_k) - A_kappa(O_k) z)``.

    The x rows of the system are scaled by `kappa`, so with ``kappa =
    alpha/beta`` this is the coupled iteration with ``alpha_k = alpha
    beta_k / beta``.
    """
    cps = log_checkpoints(horizon) if checkpoints is None else checkpoints
    plan = _plan(problem, schedule, "single", kappa, horizon, cps, init or InitPolicy(), seed)
    return _trajectory(plan, path_index)


def polyak_problem(chain: ChainSpec, A_tables, b_tables) -> TwoTimeScaleProblem:
    """Embed ``x += alpha_k (b(O) - A(O) x)`` with a running average y.

    Uses ``A11 = I``, ``A12 = -I``, ``A21 = 0``, ``b1 = 0``, ``A22 = A(o)``,
    ``b2 = b(o)``; with ``beta = 1`` and ``K0 = 1`` the slow iterate is the
    running mean of the fast one.
    """
    n = chain.n
    b = np.asarray(b_tables, dtype=float).reshape(n, -1)
    d = b.shape[1]
    A = np.asarray(A_tables, dtype=float).reshape(n, d, d)
    eye = np.broadcast_to(np.eye(d), (n, d, d))
    return TwoTimeScaleProblem(chain, A11=eye, A12=-eye, A21=np.zeros((n, d, d)), A22=A,
                               b1=np.zeros((n, d)), b2=b)


def run_polyak(chain: ChainSpec, A_tables, b_tables, schedule: StepSchedule, horizon: int,
               checkpoints=None, init: InitPolicy | None = None, seed: int = 0,
               path_index: int = 0) -> Trajectory:
    """Linear SA on x with the running average ``y_{k+1} = y_k + (x_k - y_k)/(k+1)``.

    `init` sets (y0, x0); y0 is irrelevant after the first step since the
    first averaging step has weight one.
    """
    problem = polyak_problem(chain, A_tables, b_tables)
    cps = log_checkpoints(horizon) if checkpoints is None else checkpoints
    plan = _plan(problem, schedule, "polyak", 1.0, horizon, cps, init or InitPolicy(), seed)
    return _trajectory(plan, path_index)


def _blocks(paths: int, workers: int, max_block: int = 1024) -> list[range]:
    n_blocks = max(workers, math.ceil(paths / max_block))
    size = math.ceil(paths / n_blocks)
    return [range(s, min(s + size, paths)) for s in range(0, paths, size)]


def _run_block_star(args):
    return _run_block(*args)


def simulate_paths(plan: _Plan, paths: int, workers: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Snapshots for paths ``0..paths-1`` in path order."""
    blocks = _blocks(paths, workers)
    if workers > 1 and len(blocks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_block_star, [(plan, blk) for blk in blocks]))
    else:
        results = [_run_block(plan, blk) for blk in blocks]
    return (np.concatenate([r[0] for r in results], axis=0),
            np.concatenate([r[1] for r in results], axis=0))


def monte_carlo(problem: TwoTimeScaleProblem, schedule: StepSchedule, mode: str = "two-timescale",
                paths: int = 100, horizon: int = 10_000, checkpoints=None, seed: int = 0,
                init: InitPolicy | None = None, kappa: float = 1.0, workers: int = 1) -> EnsembleStats:
    """Ensemble estimates of ``E[y^ y^T]``, ``E[x^ y^T]``, ``E[x^ x^T]`` at checkpoints.

    Parameters
    ----------
    mode : {"two-timescale", "single", "polyak"}
        Which iteration to run; `kappa` applies to ``"single"`` only.
    paths, horizon, checkpoints, seed
        Path p uses streams ``(seed, p)``.  Checkpoints default to 20 per
        decade, log-spaced.
    workers : int
        Process count.  Results do not depend on it.

    Paths whose iterates exceed 1e12 in norm are frozen, counted in
    ``diverged_paths`` and left out of every mean from then on.
    """
    if paths < 1:
        raise ValueError("paths must be >= 1")
    cps = log_checkpoints(horizon) if checkpoints is None else checkpoints
    plan = _plan(problem, schedule, mode, kappa, horizon, cps, init or InitPolicy(), seed)
    snaps, flags = simulate_paths(plan, paths, workers)
    return ensemble_stats(problem, schedule, plan.checkpoints, snaps, flags)


def ensemble_stats(problem: TwoTimeScaleProblem, schedule: StepSchedule, checkpoints,
                   snaps: np.ndarray, flags: np.ndarray) -> EnsembleStats:
    """Reduce per-path snapshots (paths, C, D) in path order."""
    dy = problem.dy
    y, x = snaps[:, :, :dy], snaps[:, :, dy:]
    with np.errstate(all="ignore"):
        yh, xh = hat_coordinates(problem, y, x)
        s = problem.summary
        err2 = ((y - s.y_star) ** 2).sum(-1) + ((x - s.x_star) ** 2).sum(-1)
    cps = np.asarray(checkpoints)
    ak, bk = schedule.alpha_k(cps), schedule.beta_k(cps)
    C = cps.size
    ok = ~flags
    E_yy = np.zeros((C, dy, dy))
    E_xy = np.zeros((C, problem.dx, dy))
    E_xx = np.zeros((C, problem.dx, problem.dx))
    stderr = np.full(C, np.nan)
    mse = np.full(C, np.nan)
    path_ratio = np.full(flags.shape, np.nan)
    for c in range(C):
        live = ok[:, c]
        m = int(live.sum())
        if m == 0:
            E_yy[c] = E_xy[c] = E_xx[c] = np.nan
            continue
        a, bvec = yh[live, c], xh[live, c]
        E_yy[c] = a.T @ a / m
        E_xy[c] = bvec.T @ a / m
        E_xx[c] = bvec.T @ bvec / m
        E_yy[c] = 0.5 * (E_yy[c] + E_yy[c].T)
        E_xx[c] = 0.5 * (E_xx[c] + E_xx[c].T)
        pr = (a ** 2).sum(-1) / bk[c]
        path_ratio[live, c] = pr
        stderr[c] = pr.std(ddof=1) / math.sqrt(m) if m > 1 else 0.0
        mse[c] = err2[live, c].mean()
    with np.errstate(invalid="ignore"):
        ratio_y = _norms(E_yy) / bk
        ratio_x = _norms(E_xx) / ak
    return EnsembleStats(
        checkpoints=cps.copy(), alpha_k=ak, beta_k=bk, E_yy=E_yy, E_xy=E_xy, E_xx=E_xx,
        ratio_y=ratio_y, ratio_x=ratio_x, stderr_y=stderr, mse=mse,
        diverged_paths=flags.sum(axis=0), path_count=snaps.shape[0], path_ratio_y=path_ratio,
    )
