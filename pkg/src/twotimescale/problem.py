"""The linear two-time-scale problem with per-state (tabular) Markov noise.

The iteration being modelled is

    y_{k+1} = y_k + beta_k  (b1(O_k) - A11(O_k) y_k - A12(O_k) x_k)
    x_{k+1} = x_k + alpha_k (b2(O_k) - A21(O_k) y_k - A22(O_k) x_k)

with ``O_k`` a finite Markov chain.  Every noisy quantity is stored as a
table indexed by chain state, so stationary means are exact weighted sums.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .chain import ChainSpec
from .densemat import SingularMatrixError, is_hurwitz, HURWITZ_TOL, solve_linear

_BLOCKS = ("A11", "A12", "A21", "A22")


def _tables(values, n: int, rows: int, cols: int | None, name: str) -> np.ndarray:
    a = np.array(values, dtype=float)
    shape = (n, rows) if cols is None else (n, rows, cols)
    if a.size != np.prod(shape):
        raise ValueError(f"{name}: expected {n} states of shape {shape[1:]}, got array of shape {a.shape}")
    a = a.reshape(shape)
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or Inf")
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class StationarySummary:
    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    Delta: np.ndarray
    y_star: np.ndarray
    x_star: np.ndarray

    @property
    def A(self) -> np.ndarray:
        """Stacked mean matrix ``[[A11, A12], [A21, A22]]``."""
        return np.block([[self.A11, self.A12], [self.A21, self.A22]])


@dataclass(frozen=True, eq=False)
class TwoTimeScaleProblem:
    """Per-state tables ``A_ij[o]``, ``b_i[o]`` over a finite chain.

    Shapes: ``A11 (n, dy, dy)``, ``A12 (n, dy, dx)``, ``A21 (n, dx, dy)``,
    ``A22 (n, dx, dx)``, ``b1 (n, dy)``, ``b2 (n, dx)``.  Scalars and nested
    lists are accepted and reshaped; `dy` and `dx` are inferred from ``b1``
    and ``b2``.
    """

    chain: ChainSpec
    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray
    b1: np.ndarray
    b2: np.ndarray

    def __post_init__(self):
        n = self.chain.n
        b1 = np.array(self.b1, dtype=float)
        b2 = np.array(self.b2, dtype=float)
        dy = b1.size // n if b1.size % n == 0 else -1
        dx = b2.size // n if b2.size % n == 0 else -1
        if dy < 1 or dx < 1:
            raise ValueError(f"b1/b2 sizes {b1.size}/{b2.size} incompatible with {n} states")
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("b1", _tables(b1, n, dy, None, "b1"))
        set_("b2", _tables(b2, n, dx, None, "b2"))
        set_("A11", _tables(self.A11, n, dy, dy, "A11"))
        set_("A12", _tables(self.A12, n, dy, dx, "A12"))
        set_("A21", _tables(self.A21, n, dx, dy, "A21"))
        set_("A22", _tables(self.A22, n, dx, dx, "A22"))

    @property
    def n(self) -> int:
        return self.chain.n

    @property
    def dy(self) -> int:
        return self.b1.shape[1]

    @property
    def dx(self) -> int:
        return self.b2.shape[1]

    def mean(self, name: str) -> np.ndarray:
        """Exact stationary mean ``sum_o mu(o) T[o]`` of table `name`."""
        return np.tensordot(self.chain.mu, getattr(self, name), axes=1)

    @cached_property
    def summary(self) -> StationarySummary:
        return summarize(self)

    @cached_property
    def noise(self) -> tuple[np.ndarray, np.ndarray]:
        return centered_noise(self)

    def stacked_tables(self, kappa: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
        """Per-state ``A_kappa(o)`` (n, D, D) and ``b_kappa(o)`` (n, D) with D = dy + dx.

        The x rows are scaled by `kappa`; ``kappa = 1`` gives the plain stacked
        system.
        """
        top = np.concatenate([self.A11, self.A12], axis=2)
        bot = kappa * np.concatenate([self.A21, self.A22], axis=2)
        M = np.concatenate([top, bot], axis=1)
        b = np.concatenate([self.b1, kappa * self.b2], axis=1)
        return M, b


def summarize(problem: TwoTimeScaleProblem) -> StationarySummary:
    """Stationary means, ``Delta = A11 - A12 A22^{-1} A21`` and the fixed point.

    Eliminates x first (``x*(y) = A22^{-1}(b2 - A21 y)``), then solves the
    reduced y-system with `Delta`.
    """
    m = {k: problem.mean(k) for k in _BLOCKS + ("b1", "b2")}
    try:
        # per-state magnitudes serve as reference: a mean that cancels to
        # round-off level counts as singular
        ref = float(np.max(np.abs(problem.A22)))
        A22inv_A21 = solve_linear(m["A22"], m["A21"], scale=ref)
        A22inv_b2 = solve_linear(m["A22"], m["b2"], scale=ref)
    except SingularMatrixError as exc:
        raise SingularMatrixError("mean A22 is singular") from exc
    coupling = m["A12"] @ A22inv_A21
    Delta = m["A11"] - coupling
    try:
        ref = max(float(np.max(np.abs(problem.A11))), float(np.max(np.abs(coupling))))
        y_star = solve_linear(Delta, m["b1"] - m["A12"] @ A22inv_b2, scale=ref)
    except SingularMatrixError as exc:
        raise SingularMatrixError("Delta = A11 - A12 A22^-1 A21 is singular") from exc
    x_star = A22inv_b2 - A22inv_A21 @ y_star
    return StationarySummary(Delta=Delta, y_star=y_star, x_star=x_star, **m)


def centered_noise(problem: TwoTimeScaleProblem) -> tuple[np.ndarray, np.ndarray]:
    """Centred noise tables ``b~1 (n, dy)`` and ``b~2 (n, dx)``.

    ``b~i(o) = b_i(o) - b_i + (A_i1 - A_i1(o)) y* + (A_i2 - A_i2(o)) x*``,
    which has zero stationary mean.
    """
    s = problem.summary
    ys, xs = s.y_star, s.x_star
    bt1 = (problem.b1 - s.b1
           + (s.A11[None] - problem.A11) @ ys
           + (s.A12[None] - problem.A12) @ xs)
    bt2 = (problem.b2 - s.b2
           + (s.A21[None] - problem.A21) @ ys
           + (s.A22[None] - problem.A22) @ xs)
    return bt1, bt2


def hat_coordinates(problem: TwoTimeScaleProblem, y, x):
    """``(y - y*, x - x* + A22^{-1} A21 (y - y*))``.

    Works on single vectors or on stacks with the coordinate in the last axis.
    """
    s = problem.summary
    y_hat = np.asarray(y, dtype=float) - s.y_star
    L = solve_linear(s.A22, s.A21)
    x_hat = np.asarray(x, dtype=float) - s.x_star + y_hat @ L.T
    return y_hat, x_hat


def from_hat_coordinates(problem: TwoTimeScaleProblem, y_hat, x_hat):
    """Inverse of :func:`hat_coordinates`."""
    s = problem.summary
    y_hat = np.asarray(y_hat, dtype=float)
    L = solve_linear(s.A22, s.A21)
    return y_hat + s.y_star, np.asarray(x_hat, dtype=float) - y_hat @ L.T + s.x_star


@dataclass
class ValidationReport:
    checks: dict  # condition name -> bool
    details: dict

    @property
    def ok(self) -> bool:
        return all(self.checks.values())

    def lines(self) -> list[str]:
        return [f"{name}: {'pass' if ok else 'FAIL'}  {self.details.get(name, '')}".rstrip()
                for name, ok in self.checks.items()]


def validate(problem: TwoTimeScaleProblem, schedule=None, tol: float = HURWITZ_TOL) -> ValidationReport:
    """Check the standing assumptions; never raises on a failed condition.

    Conditions: ``-A22`` Hurwitz, ``-Delta`` Hurwitz, and, when a schedule
    is given, ``0.5 < xi < 1`` and ``-(Delta - I/(2 beta))`` Hurwitz.
    """
    checks, details = {}, {}
    mA22 = problem.mean("A22")
    checks["-A22 Hurwitz"] = is_hurwitz(-mA22, tol)
    details["-A22 Hurwitz"] = f"eig(A22) = {np.round(np.linalg.eigvals(mA22), 6).tolist()}"
    try:
        D = problem.summary.Delta
    except SingularMatrixError as exc:
        checks["-Delta Hurwitz"] = False
        details["-Delta Hurwitz"] = str(exc)
        D = None
    else:
        checks["-Delta Hurwitz"] = is_hurwitz(-D, tol)
        details["-Delta Hurwitz"] = f"eig(Delta) = {np.round(np.linalg.eigvals(D), 6).tolist()}"
    if schedule is not None:
        xi = schedule.xi
        checks["0.5 < xi < 1"] = 0.5 < xi < 1.0
        details["0.5 < xi < 1"] = f"xi = {xi}"
        name = "-(Delta - I/(2 beta)) Hurwitz"
        if D is None:
            checks[name] = False
        else:
            shifted = D - np.eye(D.shape[0]) / (2.0 * schedule.beta)
            checks[name] = is_hurwitz(-shifted, tol)
            details[name] = f"beta = {schedule.beta}, eig = {np.round(np.linalg.eigvals(shifted), 6).tolist()}"
    return ValidationReport(checks, details)
