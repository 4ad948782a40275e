"""Iterative linear algebra kernels.

Self-contained implementations (no external solver behavior to pin
down): Jacobi-preconditioned conjugate gradients and conjugate
residuals, both with optional deflation of known directions, and a
block shift-invert subspace iteration for the lowest eigenpairs of the
generalized symmetric problem K v = lambda M v with diagonal M.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import ConvergenceError, SingularOperatorError


def _as_operator(a):
    if sp.issparse(a):
        return lambda x: a @ x
    if callable(a):
        return a
    raise TypeError("operator must be sparse matrix or callable")


class Deflator:
    """M-orthogonal projector off a span of vectors."""

    def __init__(self, vectors, m_diag=None):
        self.m = m_diag
        vs = []
        for v in vectors:
            w = v.astype(float).copy()
            for u in vs:
                w -= u * self._ip(u, w)
            nrm = np.sqrt(self._ip(w, w))
            if nrm > 1e-14:
                vs.append(w / nrm)
        self.vs = vs

    def _ip(self, a, b):
        if self.m is None:
            return float(a @ b)
        return float(a @ (self.m * b))

    def project(self, x):
        for u in self.vs:
            x = x - u * self._ip(u, x)
        return x


def pcg(a, rhs, tol=1e-12, maxiter=20000, precond=None, deflate=None,
        x0=None):
    """Preconditioned conjugate gradients for SPD (possibly on the
    complement of deflated directions)."""
    op = _as_operator(a)
    rhs = np.asarray(rhs, dtype=float)
    if deflate is not None:
        rhs = deflate.project(rhs)
    x = np.zeros_like(rhs) if x0 is None else x0.copy()
    r = rhs - op(x)
    if deflate is not None:
        r = deflate.project(r)
    prec = (lambda v: v) if precond is None else precond
    z = prec(r)
    p = z.copy()
    rz = float(r @ z)
    norm0 = np.sqrt(float(rhs @ rhs))
    if norm0 == 0.0:
        return x, 0
    for it in range(maxiter):
        ap = op(p)
        if deflate is not None:
            ap = deflate.project(ap)
        pap = float(p @ ap)
        if pap <= 0.0:
            raise SingularOperatorError(
                "conjugate gradients hit a non-positive direction")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        if np.sqrt(float(r @ r)) <= tol * norm0:
            return x, it + 1
        z = prec(r)
        if deflate is not None:
            z = deflate.project(z)
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(
        f"conjugate gradients exhausted {maxiter} iterations "
        f"(residual {np.sqrt(float(r @ r)) / norm0:.3e})",
        diagnosis="cg_budget")


def conjugate_residual(a, rhs, tol=1e-11, maxiter=20000, deflate=None):
    """Conjugate residual iteration: residual-minimizing Krylov method
    for symmetric (possibly indefinite) operators."""
    op = _as_operator(a)
    rhs = np.asarray(rhs, dtype=float)
    if deflate is not None:
        rhs = deflate.project(rhs)
    x = np.zeros_like(rhs)
    r = rhs.copy()
    p = r.copy()
    ar = op(r)
    if deflate is not None:
        ar = deflate.project(ar)
    ap = ar.copy()
    rar = float(r @ ar)
    norm0 = np.sqrt(float(rhs @ rhs))
    if norm0 == 0.0:
        return x, 0
    for it in range(maxiter):
        apap = float(ap @ ap)
        if apap == 0.0:
            raise SingularOperatorError("conjugate residual breakdown")
        alpha = rar / apap
        x += alpha * p
        r -= alpha * ap
        if np.sqrt(float(r @ r)) <= tol * norm0:
            return x, it + 1
        ar = op(r)
        if deflate is not None:
            ar = deflate.project(ar)
        rar_new = float(r @ ar)
        beta = rar_new / rar
        p = r + beta * p
        ap = ar + beta * ap
        rar = rar_new
    raise ConvergenceError(
        f"conjugate residual exhausted {maxiter} iterations",
        diagnosis="cr_budget")


@dataclass
class EigenResult:
    values: np.ndarray
    vectors: np.ndarray          # columns, M-orthonormal
    residuals: np.ndarray
    iterations: int


def lowest_eigenpairs_matrices(k: sp.csr_matrix, m_diag: np.ndarray,
                               count: int, tol: float = 1e-9,
                               maxiter: int = 60, shift: float = None,
                               rng=None) -> EigenResult:
    """Lowest `count` eigenpairs of K v = lambda M v (M diagonal).

    Block shift-invert subspace iteration: X <- (K - shift M)^(-1) M X,
    M-orthonormalization, Rayleigh-Ritz on the block; converged pairs
    are locked.  Inner solves use Jacobi-preconditioned CG on the
    (positive definite) shifted operator.
    """
    n = k.shape[0]
    rng = np.random.default_rng(rng)
    block = min(n, max(count + 4, int(np.ceil(count * 1.4))))
    if shift is None:
        # safely below the spectrum: K is positive semidefinite
        shift = -1e-3 * float(np.median(k.diagonal() / m_diag))
    kshift = (k - sp.diags(shift * m_diag)).tocsr()
    diag = kshift.diagonal()
    if np.any(diag <= 0):
        raise SingularOperatorError("shifted operator is not positive")
    inv_diag = 1.0 / diag

    def precond(v):
        return inv_diag * v

    def minv(x):
        sol, _ = pcg(kshift, x, tol=1e-10, maxiter=40000, precond=precond)
        return sol

    x = rng.standard_normal((n, block))
    x[:, 0] = 1.0  # constants are (near) the kernel of K
    x = _m_orthonormalize(x, m_diag)
    theta_old = None
    for it in range(maxiter):
        y = np.column_stack([minv(m_diag * x[:, j]) for j in range(block)])
        y = _m_orthonormalize(y, m_diag)
        kk = y.T @ (k @ y)
        kk = 0.5 * (kk + kk.T)
        theta, s = np.linalg.eigh(kk)
        x = y @ s
        if theta_old is not None and np.all(
                np.abs(theta[:count] - theta_old[:count])
                <= tol * np.maximum(1.0, np.abs(theta[:count]))):
            break
        theta_old = theta
    else:
        raise ConvergenceError(
            f"subspace iteration exhausted {maxiter} sweeps",
            diagnosis="eig_budget")

    vals = theta[:count]
    vecs = x[:, :count]
    res = np.empty(count)
    for j in range(count):
        r = k @ vecs[:, j] - vals[j] * (m_diag * vecs[:, j])
        res[j] = np.sqrt(float(r @ (r / m_diag))) / max(abs(vals[j]), 1.0)
    return EigenResult(values=vals, vectors=vecs, residuals=res,
                       iterations=it + 1)


def _m_orthonormalize(x, m_diag):
    q = x.copy()
    for j in range(q.shape[1]):
        for _ in range(2):  # re-orthogonalize for stability
            for i in range(j):
                q[:, j] -= q[:, i] * float(q[:, i] @ (m_diag * q[:, j]))
        nrm = np.sqrt(float(q[:, j] @ (m_diag * q[:, j])))
        if nrm < 1e-14:
            raise ConvergenceError("subspace collapsed during "
                                   "orthonormalization")
        q[:, j] /= nrm
    return q
