"""Stability classes of block systems ``A = [[A11, A12], [A21, A22]]``.

Four nested classes of mean matrices are distinguished:

* A: every block matrix;
* B: some ``kappa > 0`` makes ``-A_kappa`` Hurwitz, where ``A_kappa`` scales
  the x rows ``[A21, A22]`` by kappa (a single-time-scale run with step
  ratio kappa converges);
* C: ``-A`` itself is Hurwitz;
* D: ``-A22`` and ``-Delta = -(A11 - A12 A22^{-1} A21)`` are both Hurwitz
  (the two-time-scale stability condition).

B is existential in kappa, so it is decided on a finite log-spaced grid;
membership in C or D implies B, which resolves most cases the grid misses.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .densemat import HURWITZ_TOL, SingularMatrixError, as_matrix, solve_linear, spectral_abscissa


def default_kappa_grid(points: int = 61, low: float = 1e-3, high: float = 1e3) -> np.ndarray:
    """Log-spaced grid; with the defaults it contains 1 exactly."""
    grid = np.logspace(np.log10(low), np.log10(high), points)
    i = np.argmin(np.abs(np.log(grid)))
    if abs(np.log(grid[i])) < 1e-9:
        grid[i] = 1.0
    return grid


@dataclass(frozen=True)
class BlockSystem:
    A11: np.ndarray
    A12: np.ndarray
    A21: np.ndarray
    A22: np.ndarray

    def __post_init__(self):
        blocks = {k: as_matrix(getattr(self, k), k) for k in ("A11", "A12", "A21", "A22")}
        dy, dx = blocks["A11"].shape[0], blocks["A22"].shape[0]
        want = {"A11": (dy, dy), "A12": (dy, dx), "A21": (dx, dy), "A22": (dx, dx)}
        for k, shape in want.items():
            if blocks[k].shape != shape:
                raise ValueError(f"{k} has shape {blocks[k].shape}, expected {shape}")
            object.__setattr__(self, k, blocks[k])

    @classmethod
    def from_matrix(cls, A, dy: int) -> "BlockSystem":
        A = as_matrix(A, "A")
        return cls(A[:dy, :dy], A[:dy, dy:], A[dy:, :dy], A[dy:, dy:])

    @property
    def A(self) -> np.ndarray:
        return np.block([[self.A11, self.A12], [self.A21, self.A22]])

    def scaled(self, kappa: float) -> np.ndarray:
        """``A_kappa``: the x rows multiplied by `kappa`."""
        return np.block([[self.A11, self.A12], [kappa * self.A21, kappa * self.A22]])

    def __mul__(self, c: float) -> "BlockSystem":
        return BlockSystem(c * self.A11, c * self.A12, c * self.A21, c * self.A22)

    __rmul__ = __mul__


@dataclass
class Classification:
    in_B: bool
    in_C: bool
    in_D: bool
    kappa: float | None = None           # witness with the largest stability margin
    kappa_smallest: float | None = None  # first witness in ascending order
    kappa_grid_exhausted: bool = False
    margin: float | None = None          # -max Re eig(-A_kappa) at `kappa`
    reasons: list = field(default_factory=list)

    @property
    def in_A(self) -> bool:
        return True

    def label(self) -> str:
        """Set-theoretic description, e.g. ``"B \\ (C u D)"``."""
        if not self.in_B:
            return "A only"
        if self.in_C and self.in_D:
            return "C n D"
        if self.in_C:
            return "C \\ D"
        if self.in_D:
            return "D \\ C"
        return "B \\ (C u D)"

    def membership_line(self) -> str:
        yn = lambda v: "yes" if v else "no"  # noqa: E731
        if self.in_B and self.kappa is not None:
            b = f"yes(kappa={self.kappa:.3g})"
        elif self.in_B:
            b = "yes(kappa=?)"
        else:
            b = "no"
        line = f"B:{b} C:{yn(self.in_C)} D:{yn(self.in_D)}"
        if self.kappa_grid_exhausted:
            line += " (kappa grid exhausted)"
        return line


def classify(system: BlockSystem, kappa_grid=None, tol: float = HURWITZ_TOL) -> Classification:
    """Decide membership in B, C and D and report a kappa witness.

    Parameters
    ----------
    system : BlockSystem
    kappa_grid : sequence of positive floats, optional
        Defaults to 61 log-spaced points on [1e-3, 1e3].
    tol : float
        Hurwitz margin shared with :func:`densemat.is_hurwitz`.

    Notes
    -----
    A grid point is skipped without an eigenvalue computation when
    ``tr(A11) + kappa tr(A22) <= 0`` (the eigenvalues of ``-A_kappa`` cannot
    all have negative real part).  ``kappa_grid_exhausted`` is raised when
    the grid holds no witness and B membership is left undecided: either
    the system is in D (so B holds, but no witness was found), or the trace
    test did not rule out every kappa > 0.
    """
    grid = default_kappa_grid() if kappa_grid is None else np.asarray(kappa_grid, dtype=float)
    if grid.size == 0 or np.any(grid <= 0) or not np.all(np.isfinite(grid)):
        raise ValueError("kappa grid must be a nonempty list of positive numbers")
    grid = np.sort(grid)
    reasons = []

    in_C = spectral_abscissa(-system.A) < -tol
    if not in_C:
        reasons.append("-A has an eigenvalue with real part >= 0")

    in_D = False
    if spectral_abscissa(-system.A22) < -tol:
        try:
            Delta = system.A11 - system.A12 @ solve_linear(system.A22, system.A21)
        except SingularMatrixError:
            reasons.append("A22 is singular")
        else:
            in_D = spectral_abscissa(-Delta) < -tol
            if not in_D:
                reasons.append("-Delta is not Hurwitz")
    else:
        reasons.append("-A22 is not Hurwitz")

    t11, t22 = float(np.trace(system.A11)), float(np.trace(system.A22))
    best, best_margin, first = None, -np.inf, None
    for kappa in grid:
        if t11 + kappa * t22 <= 0:
            continue
        margin = -spectral_abscissa(-system.scaled(kappa))
        if margin > tol:
            if first is None:
                first = float(kappa)
            if margin > best_margin:
                best, best_margin = float(kappa), margin

    exhausted = False
    if best is not None:
        in_B = True
    elif in_C:
        # kappa = 1 is a witness even when the grid omits it
        in_B, best, first = True, 1.0, 1.0
        best_margin = -spectral_abscissa(-system.A)
    elif in_D:
        in_B, exhausted = True, True
        reasons.append("in D, so some large kappa works, but none on the grid")
    else:
        in_B = False
        # the trace test excludes every kappa > 0 iff tr(A11) <= 0 and tr(A22) <= 0
        if t11 <= 0 and t22 <= 0:
            reasons.append("tr(A11) + kappa tr(A22) <= 0 for every kappa > 0")
        else:
            exhausted = True
            reasons.append("no kappa on the grid makes -A_kappa Hurwitz")
    return Classification(in_B=in_B, in_C=in_C, in_D=in_D, kappa=best, kappa_smallest=first,
                          kappa_grid_exhausted=exhausted,
                          margin=None if best is None else float(best_margin), reasons=reasons)
