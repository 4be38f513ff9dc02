import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from twotimescale import chain as mc


P2 = [[5 / 8, 3 / 8], [3 / 4, 1 / 4]]


def random_chain(rng, n):
    P = rng.random((n, n)) + 0.02
    return mc.ChainSpec(P / P.sum(axis=1, keepdims=True))


def test_stationary_known():
    ch = mc.ChainSpec(P2)
    np.testing.assert_allclose(ch.mu, [2 / 3, 1 / 3], atol=1e-14)
    ch = mc.ChainSpec([[0.25, 0.75], [0.75, 0.25]])
    np.testing.assert_allclose(ch.mu, [0.5, 0.5], atol=1e-14)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(0, 2**31 - 1))
def test_stationary_matches_left_eigenvector(n, seed):
    ch = random_chain(np.random.default_rng(seed), n)
    w, V = np.linalg.eig(ch.P.T)
    v = np.real(V[:, np.argmin(np.abs(w - 1))])
    np.testing.assert_allclose(ch.mu, v / v.sum(), atol=1e-12)


def test_validation_errors():
    with pytest.raises(mc.ChainError, match="sums to"):
        mc.ChainSpec([[0.5, 0.49], [0.5, 0.5]])
    with pytest.raises(mc.ChainError, match="reducible"):
        mc.ChainSpec([[1.0, 0.0], [0.5, 0.5]])
    with pytest.raises(mc.ChainError, match="periodic"):
        mc.ChainSpec([[0.0, 1.0], [1.0, 0.0]])
    with pytest.raises(mc.ChainError, match="periodic"):
        mc.ChainSpec([[0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0]])
    with pytest.raises(mc.ChainError):
        mc.ChainSpec([[1.2, -0.2], [0.5, 0.5]])


def test_single_state_chain():
    ch = mc.ChainSpec([[1.0]])
    assert ch.mu[0] == 1.0
    assert mc.second_eigenvalue_modulus(ch) == 0.0


@settings(max_examples=30, deadline=None)
@given(st.integers(2, 7), st.integers(0, 2**31 - 1))
def test_poisson_solution_matches_series(n, seed):
    rng = np.random.default_rng(seed)
    ch = random_chain(rng, n)
    h = rng.standard_normal((n, 2))
    h -= ch.mu @ h
    sol = mc.solve_poisson(ch, h)
    np.testing.assert_allclose(sol, h + ch.P @ sol, atol=1e-10)
    np.testing.assert_allclose(ch.mu @ sol, 0.0, atol=1e-12)
    series = mc.poisson_series(ch, h, tail_tol=1e-13)
    np.testing.assert_allclose(sol, series - ch.mu @ series, atol=1e-9)


def test_poisson_rejects_uncentred():
    ch = mc.ChainSpec(P2)
    with pytest.raises(ValueError, match="centred"):
        mc.solve_poisson(ch, [1.0, 1.0])


def test_mixing_profile_two_state():
    ch = mc.ChainSpec(P2)
    prof = mc.mixing_profile(ch, 60)
    # P has eigenvalues 1 and -1/8: d_TV(k) is exactly geometric with ratio 1/8
    assert prof.rho_hat == pytest.approx(1 / 8, rel=1e-4)
    assert prof.slem == pytest.approx(1 / 8)
    assert prof.tau_mix == 1
    d = [v for _, v in prof.dtv_curve]
    assert all(a >= b for a, b in zip(d, d[1:]))


def test_mixing_not_observed():
    eps = 1e-4
    ch = mc.ChainSpec([[1 - eps, eps], [eps, 1 - eps]])
    with pytest.raises(mc.MixingNotObserved):
        mc.mixing_profile(ch, 10)


def test_sample_path_determinism_and_frequencies():
    ch = mc.ChainSpec(P2)
    a = mc.sample_path(ch, "mu", 20000, seed=3, path_index=5)
    b = mc.sample_path(ch, "mu", 20000, seed=3, path_index=5)
    c = mc.sample_path(ch, "mu", 20000, seed=3, path_index=6)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    freq = np.bincount(a, minlength=2) / a.size
    np.testing.assert_allclose(freq, ch.mu, atol=0.02)
    # transition frequencies
    T = np.zeros((2, 2))
    np.add.at(T, (a[:-1], a[1:]), 1)
    np.testing.assert_allclose(T / T.sum(axis=1, keepdims=True), ch.P, atol=0.02)


def test_sample_path_fixed_start_and_prefix():
    ch = mc.ChainSpec([[0.2, 0.3, 0.5], [0.6, 0.2, 0.2], [0.1, 0.1, 0.8]])
    long = mc.sample_path(ch, 2, 500, seed=9)
    short = mc.sample_path(ch, 2, 100, seed=9)
    assert long[0] == 2
    np.testing.assert_array_equal(long[:101], short)


def test_streams_are_independent_of_order():
    g1 = mc.path_generator(1, 7).random(5)
    _ = mc.path_generator(1, 3).random(5)
    g2 = mc.path_generator(1, 7).random(5)
    np.testing.assert_array_equal(g1, g2)
    assert not np.array_equal(mc.path_generator(1, 7, mc.STREAM_INIT).random(5), g1)
