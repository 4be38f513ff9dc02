"""Small dense real-matrix kernel.

Everything here works on plain ``numpy`` arrays.  Lyapunov and Sylvester
equations are solved by Kronecker vectorisation followed by a dense LU
solve, which costs O(d^6) but is exact up to round-off and more than fast
enough for the d <= ~20 systems this package deals with.
"""
from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla

MAX_DIM = 64
HURWITZ_TOL = 1e-9
PIVOT_TOL = 1e-12


class NumericalError(RuntimeError):
    """A computation failed for numerical reasons (not bad input)."""


class SingularMatrixError(NumericalError):
    pass


class ResonanceError(NumericalError):
    """Sylvester/Lyapunov operator is singular: spectra of A and -B meet."""


def as_matrix(M, name: str = "matrix") -> np.ndarray:
    """Return `M` as a finite 2-D float array (scalars become 1x1)."""
    a = np.array(M, dtype=float, copy=True)
    if a.ndim == 0:
        a = a.reshape(1, 1)
    elif a.ndim == 1:
        a = a.reshape(-1, 1)
    if a.ndim != 2 or a.shape[0] == 0 or a.shape[1] == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains NaN or Inf")
    return a


def _square(M, name="matrix") -> np.ndarray:
    a = as_matrix(M, name)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")
    return a


def eigenvalues(M) -> np.ndarray:
    """All eigenvalues of a square real matrix, with multiplicity.

    Returns a complex array.  LAPACK's ``geev`` (Hessenberg reduction plus
    shifted QR) does the work; its non-convergence is re-raised as
    :class:`NumericalError` so callers can tell it apart from bad input.
    """
    a = _square(M)
    if a.shape[0] > MAX_DIM:
        raise ValueError(f"dimension {a.shape[0]} exceeds the supported maximum {MAX_DIM}")
    try:
        return np.linalg.eigvals(a).astype(complex)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigenvalue iteration did not converge: {exc}") from exc


def spectral_abscissa(M) -> float:
    """Largest real part over the spectrum of `M`."""
    return float(np.max(eigenvalues(M).real))


def is_hurwitz(M, tol: float = HURWITZ_TOL) -> bool:
    """True iff every eigenvalue of `M` has real part below ``-tol``."""
    return spectral_abscissa(M) < -tol


def solve_linear(M, rhs, scale: float | None = None) -> np.ndarray:
    """Solve ``M @ X = rhs`` by partially pivoted LU.

    `rhs` may be a vector or a matrix; the result has the same shape.
    Raises :class:`SingularMatrixError` when a pivot falls below
    ``PIVOT_TOL`` times `scale` (default: the largest entry of `M`).  Pass
    the magnitude of the terms `M` was computed from to catch matrices that
    are zero up to cancellation.
    """
    a = _square(M)
    b = np.asarray(rhs, dtype=float)
    vec = b.ndim == 1
    b2 = b.reshape(-1, 1) if vec else b
    if b2.shape[0] != a.shape[0]:
        raise ValueError(f"rhs has {b2.shape[0]} rows, matrix is {a.shape[0]}x{a.shape[0]}")
    scale = max(np.max(np.abs(a)), scale or 0.0)
    if scale == 0.0:
        raise SingularMatrixError("matrix is identically zero")
    with warnings.catch_warnings():
        # singularity is reported below through the pivot test
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(a, check_finite=False)
    if np.min(np.abs(np.diag(lu))) <= PIVOT_TOL * scale:
        raise SingularMatrixError("matrix is singular to working precision")
    x = sla.lu_solve((lu, piv), b2, check_finite=False)
    return x.ravel() if vec else x


def inv(M) -> np.ndarray:
    a = _square(M)
    return solve_linear(a, np.eye(a.shape[0]))


def solve_sylvester(A, B, C) -> np.ndarray:
    """Solve ``A X + X B = C`` for X.

    With A (m x m), B (n x n) and C (m x n) the equation is rewritten as
    ``((I_n kron A) + (B^T kron I_m)) vec(X) = vec(C)`` (column-major vec).
    Raises :class:`ResonanceError` if some eigenvalue of A equals minus an
    eigenvalue of B, i.e. the operator is singular.
    """
    A = _square(A, "A")
    B = _square(B, "B")
    C = as_matrix(C, "C")
    m, n = A.shape[0], B.shape[0]
    if C.shape != (m, n):
        raise ValueError(f"C must be {m}x{n}, got {C.shape}")
    K = np.kron(np.eye(n), A) + np.kron(B.T, np.eye(m))
    try:
        x = solve_linear(K, C.reshape(-1, order="F"))
    except SingularMatrixError as exc:
        raise ResonanceError("spectra of A and -B overlap; solution not unique") from exc
    return x.reshape((m, n), order="F")


def solve_lyapunov(A, G) -> np.ndarray:
    """Solve ``A S + S A^T = G`` for symmetric G; returns symmetric S.

    When -A is Hurwitz and G is positive semidefinite, S is positive
    semidefinite.  The result is symmetrised to remove round-off asymmetry.
    """
    A = _square(A, "A")
    G = _square(G, "G")
    if G.shape != A.shape:
        raise ValueError(f"G must be {A.shape}, got {G.shape}")
    S = solve_sylvester(A, A.T, G)
    return 0.5 * (S + S.T)


def symmetrize(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return 0.5 * (S + S.T)


def norm2(M) -> float:
    """Spectral norm (largest singular value); 2-norm for vectors."""
    a = np.asarray(M, dtype=float)
    if a.ndim < 2:
        return float(np.linalg.norm(a))
    return float(np.linalg.norm(a, 2))


def residual_lyapunov(A, S, G) -> float:
    A = np.asarray(A, dtype=float)
    return norm2(A @ S + S @ A.T - G)


def residual_sylvester(A, B, X, C) -> float:
    return norm2(np.asarray(A) @ X + X @ np.asarray(B) - C)
