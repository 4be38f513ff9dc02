import numpy as np
import pytest

from twotimescale.chain import ChainSpec
from twotimescale.densemat import SingularMatrixError
from twotimescale.engine import StepSchedule
from twotimescale.problem import (TwoTimeScaleProblem, from_hat_coordinates, hat_coordinates,
                                  validate)

from conftest import random_problem


def test_fig1a_means(fig1a_problem):
    s = fig1a_problem.summary
    assert s.A11[0, 0] == pytest.approx(-1)
    assert s.A12[0, 0] == pytest.approx(-1)
    assert s.A21[0, 0] == pytest.approx(2)
    assert s.A22[0, 0] == pytest.approx(1)
    assert s.Delta[0, 0] == pytest.approx(1)
    assert abs(s.y_star[0]) < 1e-12 and abs(s.x_star[0]) < 1e-12


def test_fixed_point_solves_stacked_system():
    rng = np.random.default_rng(4)
    for _ in range(30):
        p = random_problem(rng)
        s = p.summary
        z = np.linalg.solve(s.A, np.concatenate([s.b1, s.b2]))
        np.testing.assert_allclose(np.concatenate([s.y_star, s.x_star]), z, atol=1e-9)
        Delta = s.A11 - s.A12 @ np.linalg.inv(s.A22) @ s.A21
        np.testing.assert_allclose(s.Delta, Delta, atol=1e-10)


def test_centered_noise_has_zero_mean():
    rng = np.random.default_rng(5)
    for _ in range(20):
        p = random_problem(rng)
        bt1, bt2 = p.noise
        np.testing.assert_allclose(p.chain.mu @ bt1, 0, atol=1e-12)
        np.testing.assert_allclose(p.chain.mu @ bt2, 0, atol=1e-12)
        # b~(o) is the residual of the per-state system at the fixed point
        s = p.summary
        r1 = p.b1 - p.A11 @ s.y_star - p.A12 @ s.x_star
        np.testing.assert_allclose(bt1, r1, atol=1e-12)


def test_hat_coordinates_round_trip():
    rng = np.random.default_rng(6)
    p = random_problem(rng, dy=2, dx=3)
    y = rng.standard_normal((7, 2))
    x = rng.standard_normal((7, 3))
    yh, xh = hat_coordinates(p, y, x)
    y2, x2 = from_hat_coordinates(p, yh, xh)
    np.testing.assert_allclose(y2, y, atol=1e-12)
    np.testing.assert_allclose(x2, x, atol=1e-12)
    s = p.summary
    yh0, xh0 = hat_coordinates(p, s.y_star, s.x_star)
    np.testing.assert_allclose(yh0, 0, atol=1e-12)
    np.testing.assert_allclose(xh0, 0, atol=1e-12)


def test_shape_errors():
    ch = ChainSpec([[0.5, 0.5], [0.5, 0.5]])
    with pytest.raises(ValueError, match="A12"):
        TwoTimeScaleProblem(ch, A11=[1, 1], A12=[[1, 2], [3, 4]], A21=[1, 1], A22=[1, 1],
                            b1=[0, 0], b2=[0, 0])
    with pytest.raises(ValueError):
        TwoTimeScaleProblem(ch, A11=[1, 1], A12=[1, 1], A21=[1, 1], A22=[1, 1], b1=[0, 0, 0], b2=[0, 0])


def test_singular_blocks_named():
    ch = ChainSpec([[0.5, 0.5], [0.5, 0.5]])
    p = TwoTimeScaleProblem(ch, A11=[1, 1], A12=[1, 1], A21=[1, 1], A22=[1, -1], b1=[0, 0], b2=[0, 0])
    with pytest.raises(SingularMatrixError, match="A22"):
        p.summary
    p = TwoTimeScaleProblem(ch, A11=[1, 1], A12=[1, 1], A21=[1, 1], A22=[1, 1], b1=[0, 0], b2=[0, 0])
    with pytest.raises(SingularMatrixError, match="Delta"):
        p.summary


def test_validate_reports(fig1a_problem):
    ok = validate(fig1a_problem, StepSchedule(1, 1, 0.75, 1))
    assert ok.ok
    bad = validate(fig1a_problem, StepSchedule(1, 0.4, 0.25, 1))
    assert not bad.checks["0.5 < xi < 1"]
    assert not bad.checks["-(Delta - I/(2 beta)) Hurwitz"]
    assert bad.checks["-A22 Hurwitz"]
    assert len(bad.lines()) == 4


def test_tables_are_immutable(fig1a_problem):
    with pytest.raises(ValueError):
        fig1a_problem.A11[0, 0, 0] = 3.0
