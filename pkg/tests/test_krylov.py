"""Cholesky wrapper, PCG with Lanczos condition estimate, and the RNG."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vemfeti import IndefiniteOperatorError, Lcg64, SpdError, pcg
from vemfeti.krylov import chol_factor, lanczos_extremes


def random_spd(n, seed, shift=1.0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n))
    return A @ A.T + shift * np.eye(n)


@given(n=st.integers(2, 12), seed=st.integers(0, 2**31))
@settings(max_examples=30, deadline=None)
def test_chol_solve_matches_dense(n, seed):
    A = random_spd(n, seed)
    b = np.random.default_rng(seed + 1).standard_normal(n)
    x = chol_factor(A).solve(b)
    assert np.allclose(A @ x, b, atol=1e-8 * np.abs(b).max())


def test_chol_rejects_indefinite():
    A = np.diag([1.0, -1.0, 2.0])
    with pytest.raises(SpdError):
        chol_factor(A)


@given(n=st.integers(2, 20), seed=st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_pcg_solves_spd_system(n, seed):
    A = random_spd(n, seed)
    b = np.random.default_rng(seed + 7).standard_normal(n)
    rep = pcg(lambda v: A @ v, b, tol=1e-12, maxiter=10 * n)
    assert rep.converged
    assert np.allclose(A @ rep.x, b, atol=1e-9 * np.abs(b).max())


def test_pcg_preconditioned_identityish():
    # preconditioning with the exact inverse converges in one step and the
    # Lanczos estimate collapses to one
    A = random_spd(30, 5)
    Ainv = np.linalg.inv(A)
    b = np.arange(1.0, 31.0)
    rep = pcg(lambda v: A @ v, b, apply_M=lambda v: Ainv @ v, tol=1e-10)
    assert rep.converged
    assert rep.iterations == 1
    assert rep.kappa_est == pytest.approx(1.0, abs=1e-10)


def test_pcg_kappa_estimate_tracks_diagonal_spectrum():
    d = np.linspace(1.0, 50.0, 40)
    A = np.diag(d)
    b = np.ones(40)
    rep = pcg(lambda v: A @ v, b, tol=1e-13, maxiter=200)
    assert rep.converged
    assert rep.kappa_est <= 50.0 * (1 + 1e-8)
    assert rep.kappa_est > 25.0


def test_pcg_zero_rhs_short_circuits():
    rep = pcg(lambda v: v, np.zeros(4))
    assert rep.converged and rep.iterations == 0 and rep.kappa_est == 1.0


def test_pcg_raises_on_indefinite_operator():
    A = np.diag([1.0, -2.0])
    with pytest.raises(IndefiniteOperatorError):
        pcg(lambda v: A @ v, np.array([1.0, 1.0]), tol=1e-14)


def test_pcg_reports_nonconvergence():
    A = np.diag(np.linspace(1.0, 1e6, 200))
    rep = pcg(lambda v: A @ v, np.ones(200), tol=1e-14, maxiter=3)
    assert not rep.converged
    assert rep.iterations == 3


def test_lanczos_extremes_single_step():
    lo, hi = lanczos_extremes([0.25], [])
    assert lo == pytest.approx(4.0)
    assert hi == pytest.approx(4.0)


def test_lcg_deterministic_and_bounded():
    a = Lcg64(42).fill(1000)
    b = Lcg64(42).fill(1000)
    c = Lcg64(43).fill(1000)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c)
    assert (np.abs(a) <= 1.0).all()
    # crude uniformity: both halves populated
    assert (a > 0).sum() > 300 and (a < 0).sum() > 300
