"""Sparse Cholesky, preconditioned conjugate gradients, and a portable RNG.

The Cholesky factorization delegates to SuperLU restricted to symmetric
mode with pivoting disabled, which computes an LDL^T-like factorization;
positive definiteness is verified through the pivots. The PCG iteration
tracks its alpha/beta coefficients so the extreme eigenvalues of the
preconditioned operator can be estimated from the associated Lanczos
tridiagonal matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigvalsh_tridiagonal
from scipy.sparse.linalg import splu

from .errors import IndefiniteOperatorError, SpdError


def _symmetric_lu(A):
    return splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                options=dict(SymmetricMode=True))


class CholeskyFactor:
    """Factorization of a sparse symmetric positive definite matrix."""

    def __init__(self, A):
        A = sp.csc_matrix(A)
        if A.shape[0] != A.shape[1]:
            raise ValueError("matrix must be square")
        self.shape = A.shape
        if A.shape[0] == 0:
            self._lu = None
            return
        # Reading SuperLU.U caches csc copies of both triangular factors on
        # the object for its whole lifetime, which roughly triples the
        # memory held per factorization.  Check the pivots on a throwaway
        # factorization and keep a second one whose cache stays empty.
        try:
            probe = _symmetric_lu(A)
            pivots = probe.U.diagonal()
            bad = np.nonzero(pivots <= 0.0)[0]
            if len(bad):
                raise SpdError(
                    "matrix is not positive definite (pivot %d is %.3e)"
                    % (bad[0], pivots[bad[0]]), row=int(bad[0]))
            del probe, pivots
            self._lu = _symmetric_lu(A)
        except RuntimeError as exc:
            raise SpdError("factorization failed: %s" % exc, row=-1)

    def solve(self, b):
        b = np.asarray(b, dtype=float)
        if self.shape[0] == 0:
            return b.copy()
        return self._lu.solve(b)


def chol_factor(A):
    """Factor a sparse spd matrix, raising SpdError if it is not spd."""
    return CholeskyFactor(A)


def lanczos_extremes(alphas, betas, k=None):
    """Smallest and largest eigenvalue of the Lanczos tridiagonal matrix
    built from the first k PCG coefficients."""
    if k is None:
        k = len(alphas)
    if k == 0:
        return 1.0, 1.0
    diag = np.empty(k)
    off = np.empty(max(k - 1, 0))
    diag[0] = 1.0 / alphas[0]
    for j in range(1, k):
        diag[j] = 1.0 / alphas[j] + betas[j - 1] / alphas[j - 1]
        off[j - 1] = np.sqrt(betas[j - 1]) / alphas[j - 1]
    if k == 1:
        return float(diag[0]), float(diag[0])
    ev = eigvalsh_tridiagonal(diag, off)
    return float(ev[0]), float(ev[-1])


@dataclass
class PcgReport:
    """Outcome of a PCG run: solution, iteration count, convergence flag,
    condition number estimate, and relative residual history."""

    x: np.ndarray
    iterations: int
    converged: bool
    kappa_est: float
    resids: list = field(default_factory=list)
    alphas: list = field(default_factory=list)
    betas: list = field(default_factory=list)


def pcg(apply_A, b, apply_M=None, tol=1e-8, maxiter=1000):
    """Preconditioned conjugate gradients from the zero initial guess.

    Stops when ||r_k|| <= tol * ||r_0|| in the Euclidean norm. Raises
    IndefiniteOperatorError when a curvature p.Ap or an inner product
    r.Mr comes out nonpositive, which for exact data means A or M is not
    positive definite on the Krylov space. A run that exhausts maxiter is
    reported with converged=False rather than raised, so callers can decide.
    """
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    x = np.zeros(n)
    if n == 0:
        return PcgReport(x=x, iterations=0, converged=True, kappa_est=1.0)
    r = b.copy()
    rnorm0 = np.linalg.norm(r)
    if rnorm0 == 0.0:
        return PcgReport(x=x, iterations=0, converged=True, kappa_est=1.0)

    z = apply_M(r) if apply_M is not None else r.copy()
    rz = float(r @ z)
    if rz <= 0.0:
        raise IndefiniteOperatorError(
            "preconditioned inner product r.Mr = %.3e is not positive" % rz)
    p = z.copy()

    alphas = []
    betas = []
    resids = []
    converged = False
    it = 0
    for it in range(1, maxiter + 1):
        q = apply_A(p)
        pq = float(p @ q)
        if pq <= 0.0:
            raise IndefiniteOperatorError(
                "curvature p.Ap = %.3e is not positive at iteration %d" % (pq, it))
        alpha = rz / pq
        alphas.append(alpha)
        x += alpha * p
        r -= alpha * q
        rel = np.linalg.norm(r) / rnorm0
        resids.append(rel)
        if rel <= tol:
            converged = True
            break
        z = apply_M(r) if apply_M is not None else r.copy()
        rz_new = float(r @ z)
        if rz_new <= 0.0:
            raise IndefiniteOperatorError(
                "preconditioned inner product r.Mr = %.3e is not positive"
                % rz_new)
        beta = rz_new / rz
        betas.append(beta)
        p = z + beta * p
        rz = rz_new

    lo, hi = lanczos_extremes(alphas, betas)
    kappa = hi / lo if lo > 0 else float("inf")
    return PcgReport(x=x, iterations=it if alphas else 0, converged=converged,
                     kappa_est=kappa, resids=resids, alphas=alphas, betas=betas)


_LCG_MULT = 6364136223846793005
_LCG_INC = 1442695040888963407
_LCG_MASK = (1 << 64) - 1


class Lcg64:
    """Deterministic 64-bit linear congruential generator.

    Used for reproducible right-hand sides across platforms and runs; the
    stream depends only on the seed, never on library versions.
    """

    def __init__(self, seed):
        self.state = int(seed) & _LCG_MASK

    def next_uniform(self):
        """Next float in [-1, 1) with 53 significant bits."""
        self.state = (_LCG_MULT * self.state + _LCG_INC) & _LCG_MASK
        return 2.0 * ((self.state >> 11) / float(1 << 53)) - 1.0

    def fill(self, n):
        return np.array([self.next_uniform() for _ in range(n)])
