"""Shared fixtures and the acceptance summary printed after the run."""
import numpy as np
import pytest

from twotimescale.chain import ChainSpec
from twotimescale.problem import TwoTimeScaleProblem

ACCEPTANCE = {}


def record(criterion: str, passed: bool, detail: str) -> None:
    """Store one acceptance sub-check; a criterion passes iff all its sub-checks do."""
    ACCEPTANCE.setdefault(criterion, []).append((bool(passed), detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: int(k[1:])):
        checks = ACCEPTANCE[key]
        ok = all(c[0] for c in checks)
        detail = "; ".join(d if c else f"{d} [fails]" for c, d in checks)
        terminalreporter.write_line(f"{key}: {'PASS' if ok else 'FAIL'}  {detail}")


def random_problem(rng, n=None, dy=None, dx=None, stable=True, max_tries=200):
    """Random tabular problem; with `stable`, -A22 and -Delta are Hurwitz."""
    for _ in range(max_tries):
        n_ = n or int(rng.integers(2, 7))
        dy_ = dy or int(rng.integers(1, 4))
        dx_ = dx or int(rng.integers(1, 4))
        P = rng.random((n_, n_)) + 0.05
        P /= P.sum(axis=1, keepdims=True)
        chain = ChainSpec(P)
        tabs = dict(
            A11=rng.standard_normal((n_, dy_, dy_)) + 2 * np.eye(dy_),
            A12=0.5 * rng.standard_normal((n_, dy_, dx_)),
            A21=0.5 * rng.standard_normal((n_, dx_, dy_)),
            A22=rng.standard_normal((n_, dx_, dx_)) + 2 * np.eye(dx_),
            b1=rng.standard_normal((n_, dy_)),
            b2=rng.standard_normal((n_, dx_)),
        )
        p = TwoTimeScaleProblem(chain, **tabs)
        if not stable:
            return p
        s = p.summary
        if (np.linalg.eigvals(s.A22).real.min() > 0.1 and np.linalg.eigvals(s.Delta).real.min() > 0.1):
            return p
    raise RuntimeError("no stable instance found")


@pytest.fixture
def fig1a_problem():
    ch = ChainSpec([[5 / 8, 3 / 8], [3 / 4, 1 / 4]])
    return TwoTimeScaleProblem(ch, A11=[-0.5, -2], A12=[-1, -1], A21=[2.5, 1], A22=[0, 3],
                               b1=[-1.5, 3], b2=[3, -6])
