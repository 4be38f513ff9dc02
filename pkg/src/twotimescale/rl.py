"""Off-policy evaluation (GTD, GTD2, TDC) as linear two-time-scale problems.

The Markov noise is the tuple chain ``O_k = (s_k, a_k, s_{k+1})`` generated
by the behaviour policy.  For a tuple ``o = (s, a, s')`` with importance
ratio ``rho = pi(a|s) / pi_b(a|s)`` the sample matrices are

    A_o = rho phi(s) (phi(s) - gamma phi(s'))^T
    B_o = gamma rho phi(s') phi(s)^T
    C_o = phi(s) phi(s)^T
    b_o = rho r(s, a) phi(s)

and the slow iterate is theta, the fast one the correction vector omega.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .chain import ChainSpec
from .densemat import HURWITZ_TOL, SingularMatrixError, eigenvalues, solve_linear
from .problem import TwoTimeScaleProblem

ALGORITHMS = ("GTD", "GTD2", "TDC")
STOCHASTIC_TOL = 1e-12


class CoverageError(ValueError):
    """The target policy takes an action the behaviour policy never does."""


def _distribution_rows(p: np.ndarray, name: str) -> None:
    if np.any(p < 0):
        raise ValueError(f"{name} has negative entries")
    s = p.sum(axis=-1)
    bad = np.argwhere(np.abs(s - 1.0) > STOCHASTIC_TOL)
    if bad.size:
        idx = tuple(int(i) for i in bad[0])
        raise ValueError(f"{name} row {idx} sums to {s[idx]!r}, not 1")


@dataclass(frozen=True, eq=False)
class MDPSpec:
    """Finite MDP: ``P[s, a, s']``, rewards ``r[s, a]``, discount `gamma`."""

    P: np.ndarray
    r: np.ndarray
    gamma: float

    def __post_init__(self):
        P = np.array(self.P, dtype=float)
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError(f"P must have shape (nS, nA, nS), got {P.shape}")
        _distribution_rows(P, "P")
        r = np.array(self.r, dtype=float).reshape(P.shape[:2])
        if not 0.0 < self.gamma < 1.0:
            raise ValueError("gamma must lie strictly inside (0, 1)")
        P.setflags(write=False)
        r.setflags(write=False)
        object.__setattr__(self, "P", P)
        object.__setattr__(self, "r", r)

    @property
    def nS(self) -> int:
        return self.P.shape[0]

    @property
    def nA(self) -> int:
        return self.P.shape[1]


@dataclass(frozen=True, eq=False)
class PolicyPair:
    """Behaviour policy ``pi_b[s, a]`` and target policy ``pi[s, a]``."""

    pi_b: np.ndarray
    pi: np.ndarray

    def __post_init__(self):
        pb = np.array(self.pi_b, dtype=float)
        pt = np.array(self.pi, dtype=float)
        if pb.shape != pt.shape or pb.ndim != 2:
            raise ValueError(f"policies must both be (nS, nA), got {pb.shape} and {pt.shape}")
        _distribution_rows(pb, "pi_b")
        _distribution_rows(pt, "pi")
        bad = np.argwhere((pt > 0) & (pb == 0))
        if bad.size:
            s, a = bad[0]
            raise CoverageError(f"pi({a}|{s}) > 0 but pi_b({a}|{s}) = 0")
        pb.setflags(write=False)
        pt.setflags(write=False)
        object.__setattr__(self, "pi_b", pb)
        object.__setattr__(self, "pi", pt)

    @property
    def rho(self) -> np.ndarray:
        """Importance ratios ``pi / pi_b`` (0 where ``pi_b = 0``)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(self.pi_b > 0, self.pi / np.where(self.pi_b > 0, self.pi_b, 1.0), 0.0)


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Rows ``Phi[s]`` are the features ``phi(s)``; full column rank required."""

    Phi: np.ndarray

    def __post_init__(self):
        Phi = np.array(self.Phi, dtype=float)
        if Phi.ndim == 1:
            Phi = Phi[:, None]
        if np.linalg.matrix_rank(Phi) < Phi.shape[1]:
            raise ValueError(f"feature matrix ({Phi.shape[0]}x{Phi.shape[1]}) is not full column rank")
        Phi.setflags(write=False)
        object.__setattr__(self, "Phi", Phi)

    @property
    def d(self) -> int:
        return self.Phi.shape[1]


def _check_sizes(mdp: MDPSpec, policies: PolicyPair | None = None, features: FeatureMap | None = None):
    if policies is not None and policies.pi_b.shape != (mdp.nS, mdp.nA):
        raise ValueError(f"policies are {policies.pi_b.shape}, MDP has (nS, nA) = {(mdp.nS, mdp.nA)}")
    if features is not None and features.Phi.shape[0] != mdp.nS:
        raise ValueError(f"features have {features.Phi.shape[0]} rows, MDP has {mdp.nS} states")


def state_chain(mdp: MDPSpec, pi_b) -> ChainSpec:
    """Chain on S under the behaviour policy: ``sum_a pi_b(a|s) P(s'|s,a)``."""
    pi_b = np.asarray(pi_b, dtype=float)
    return ChainSpec(np.einsum("sa,sat->st", pi_b, mdp.P))


def tuple_chain(mdp: MDPSpec, pi_b) -> ChainSpec:
    """Chain on tuples ``(s, a, s')`` with positive stationary mass.

    ``(s, a, s') -> (s', a', s'')`` with probability ``pi_b(a'|s') P(s''|s',a')``.
    Labels are the ``(s, a, s')`` triples.  Raises ``ChainError`` if the
    behaviour policy does not induce an irreducible aperiodic chain on S.
    """
    pi_b = np.asarray(pi_b, dtype=float)
    mu_b = state_chain(mdp, pi_b).mu
    mass = mu_b[:, None, None] * pi_b[:, :, None] * mdp.P
    tuples = [tuple(int(i) for i in t) for t in np.argwhere(mass > 0)]
    index = {t: i for i, t in enumerate(tuples)}
    P = np.zeros((len(tuples), len(tuples)))
    for i, (_, _, s1) in enumerate(tuples):
        for a1 in range(mdp.nA):
            for s2 in range(mdp.nS):
                p = pi_b[s1, a1] * mdp.P[s1, a1, s2]
                if p > 0:
                    P[i, index[(s1, a1, s2)]] = p
    return ChainSpec(P, labels=tuple(tuples))


def tuple_stationary(mdp: MDPSpec, pi_b, labels) -> np.ndarray:
    """Closed-form ``mu(s, a, s') = mu_b(s) pi_b(a|s) P(s'|s, a)`` over `labels`."""
    pi_b = np.asarray(pi_b, dtype=float)
    mu_b = state_chain(mdp, pi_b).mu
    return np.array([mu_b[s] * pi_b[s, a] * mdp.P[s, a, s1] for s, a, s1 in labels])


def sample_matrices(mdp: MDPSpec, policies: PolicyPair, features: FeatureMap, labels):
    """Per-tuple ``A_o, B_o, C_o`` (n, d, d) and ``b_o`` (n, d)."""
    Phi, g, rho = features.Phi, mdp.gamma, policies.rho
    n, d = len(labels), features.d
    A = np.empty((n, d, d))
    B = np.empty((n, d, d))
    C = np.empty((n, d, d))
    b = np.empty((n, d))
    for i, (s, a, s1) in enumerate(labels):
        f, f1, w = Phi[s], Phi[s1], rho[s, a]
        A[i] = w * np.outer(f, f - g * f1)
        B[i] = g * w * np.outer(f1, f)
        C[i] = np.outer(f, f)
        b[i] = w * mdp.r[s, a] * f
    return A, B, C, b


def stationary_matrices(mdp: MDPSpec, policies: PolicyPair, features: FeatureMap):
    """Exact ``(A, B, C, b)``: the tuple-chain means of the sample matrices."""
    _check_sizes(mdp, policies, features)
    chain = tuple_chain(mdp, policies.pi_b)
    A, B, C, b = sample_matrices(mdp, policies, features, chain.labels)
    mu = chain.mu
    out = tuple(np.tensordot(mu, T, axes=1) for T in (A, B, C, b))
    Cm = out[2]
    if np.linalg.matrix_rank(Cm) < features.d:
        raise SingularMatrixError("C = E[phi phi^T] is rank deficient")
    return out


def compile(algorithm: str, mdp: MDPSpec, policies: PolicyPair, features: FeatureMap) -> TwoTimeScaleProblem:
    """Per-tuple tables of GTD, GTD2 or TDC in coupled (theta, omega) form.

    ========  ======  =======  =====  ======  ======  =====
    alg       A11     A12      b1     A21     A22     b2
    ========  ======  =======  =====  ======  ======  =====
    GTD       0       -A_o^T   0      A_o     I       b_o
    GTD2      0       -A_o^T   0      A_o     C_o     b_o
    TDC       A_o     B_o      b_o    A_o     C_o     b_o
    ========  ======  =======  =====  ======  ======  =====
    """
    alg = algorithm.upper()
    if alg not in ALGORITHMS:
        raise ValueError(f"unknown algorithm {algorithm!r}; choose from {ALGORITHMS}")
    _check_sizes(mdp, policies, features)
    chain = tuple_chain(mdp, policies.pi_b)
    A, B, C, b = sample_matrices(mdp, policies, features, chain.labels)
    n, d = b.shape
    zeros = np.zeros((n, d, d))
    if alg == "TDC":
        return TwoTimeScaleProblem(chain, A11=A, A12=B, A21=A, A22=C, b1=b, b2=b)
    A22 = np.broadcast_to(np.eye(d), (n, d, d)) if alg == "GTD" else C
    return TwoTimeScaleProblem(chain, A11=zeros, A12=-np.transpose(A, (0, 2, 1)), A21=A, A22=A22,
                               b1=np.zeros((n, d)), b2=b)


def delta_matrix(algorithm: str, A, B, C) -> np.ndarray:
    """Slow-scale drift: ``A^T A`` (GTD), ``A^T C^{-1} A`` (GTD2), ``A - B C^{-1} A`` (TDC)."""
    alg = algorithm.upper()
    if alg == "GTD":
        return A.T @ A
    if alg == "GTD2":
        return A.T @ solve_linear(C, A)
    if alg == "TDC":
        return A - B @ solve_linear(C, A)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def theta_star(mdp: MDPSpec, policies: PolicyPair, features: FeatureMap) -> np.ndarray:
    """TD fixed point ``A^{-1} b``."""
    A, _, _, b = stationary_matrices(mdp, policies, features)
    try:
        return solve_linear(A, b)
    except SingularMatrixError as exc:
        raise SingularMatrixError("A is singular; theta* undefined") from exc


@dataclass
class Precheck:
    algorithm: str
    beta: float
    Delta: np.ndarray
    eigenvalues: np.ndarray     # of Delta - I/(2 beta)
    passed: bool
    beta_threshold: float       # 1 / (2 min Re eig Delta); inf if Delta is not stable

    def line(self) -> str:
        return (f"{self.algorithm}: -(Delta - I/(2 beta)) Hurwitz at beta={self.beta:g}: "
                f"{'pass' if self.passed else 'FAIL'} (needs beta > {self.beta_threshold:.6g})")


def precheck(algorithm: str, mdp: MDPSpec, policies: PolicyPair, features: FeatureMap,
             beta: float, tol: float = HURWITZ_TOL) -> Precheck:
    """Advisory test that ``-(Delta_alg - I/(2 beta))`` is Hurwitz."""
    A, B, C, _ = stationary_matrices(mdp, policies, features)
    D = delta_matrix(algorithm, A, B, C)
    ev = eigenvalues(D - np.eye(D.shape[0]) / (2.0 * beta))
    lam = float(np.min(eigenvalues(D).real))
    thr = 1.0 / (2.0 * lam) if lam > 0 else np.inf
    return Precheck(algorithm.upper(), float(beta), D, ev, bool(np.max(-ev.real) < -tol), thr)


def sigma_theta(algorithm: str, mdp: MDPSpec, policies: PolicyPair, features: FeatureMap,
                beta: float):
    """Asymptotic covariance triple of the compiled problem and ``trace(Sigma^theta)``.

    ``trace(Sigma^theta)`` is the leading constant sigma^2 in
    ``E|theta_k - theta*|^2 ~ sigma^2 beta_k``.
    """
    from .theory import gamma_via_poisson, sigma_triple

    problem = compile(algorithm, mdp, policies, features)
    sig = sigma_triple(problem, gamma_via_poisson(problem), beta)
    return sig, float(np.trace(sig.Sigma_y))


def random_instance(nS: int = 3, nA: int = 2, d: int = 2, seed: int = 0, gamma: float = 0.9,
                    on_policy: bool = False):
    """Seeded random MDP, policy pair with full coverage, and features.

    Transition rows and policies are Dirichlet(1) draws mixed with 10% of
    the uniform distribution, so every transition and action has positive
    probability (irreducible, aperiodic, covered); rewards are uniform on
    [-1, 1] and features standard normal.
    """
    rng = np.random.default_rng(seed)
    P = 0.9 * rng.dirichlet(np.ones(nS), size=(nS, nA)) + 0.1 / nS
    P /= P.sum(axis=-1, keepdims=True)
    r = rng.uniform(-1.0, 1.0, size=(nS, nA))
    pi_b = 0.9 * rng.dirichlet(np.ones(nA), size=nS) + 0.1 / nA
    pi_b /= pi_b.sum(axis=-1, keepdims=True)
    if on_policy:
        pi = pi_b.copy()
    else:
        pi = 0.9 * rng.dirichlet(np.ones(nA), size=nS) + 0.1 / nA
        pi /= pi.sum(axis=-1, keepdims=True)
    while True:
        Phi = rng.standard_normal((nS, d))
        if np.linalg.matrix_rank(Phi) == d:
            break
    return MDPSpec(P, r, gamma), PolicyPair(pi_b, pi), FeatureMap(Phi)
