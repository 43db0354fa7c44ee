"""Sparse linear algebra: CSR assembly, Jacobi-preconditioned CG, and a
direct factorisation for symmetric (possibly indefinite) systems."""

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla


class LinearSolverError(RuntimeError):
    pass


class ConvergenceError(LinearSolverError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class IndefiniteMatrixError(LinearSolverError):
    pass


class SingularMatrixError(LinearSolverError):
    pass


def csr(rows, cols, vals, shape):
    """Assemble COO triplets into canonical CSR (sorted, duplicate-free columns)."""
    A = sp.coo_array((np.ravel(vals), (np.ravel(rows), np.ravel(cols))), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def is_symmetric(A, rtol=1e-12):
    A = sp.csr_array(A)
    scale = abs(A).max() if A.nnz else 0.0
    diff = A - A.T
    return diff.nnz == 0 or abs(diff).max() <= rtol * scale


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float


def cg_solve(A, b, tol=1e-10, max_iter=None, preconditioner="jacobi", x0=None):
    """Preconditioned conjugate gradients for SPD ``A``.

    Stops when ``|b - A x| <= tol |b|``. ``preconditioner`` is ``"jacobi"``,
    ``None`` or a callable applying ``M^{-1}``.
    """
    b = np.asarray(b, dtype=float)
    n = b.size
    max_iter = 10 * n if max_iter is None else max_iter
    if preconditioner == "jacobi":
        d = np.asarray(A.diagonal(), dtype=float)
        if np.any(d <= 0):
            raise IndefiniteMatrixError("nonpositive diagonal entry")
        apply_prec = lambda r: r / d  # noqa: E731
    elif preconditioner is None:
        apply_prec = lambda r: r  # noqa: E731
    else:
        apply_prec = preconditioner
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0)
    r = b - A @ x
    z = apply_prec(r)
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        Ap = A @ p
        curv = p @ Ap
        if curv <= 0:
            raise IndefiniteMatrixError(f"negative curvature {curv:.3e} at iteration {it}")
        step = rz / curv
        x += step * p
        r -= step * Ap
        res = np.linalg.norm(r) / bnorm
        if res <= tol:
            return CGResult(x, it, res)
        z = apply_prec(r)
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError(f"CG did not converge in {max_iter} iterations "
                           f"(relative residual {res:.3e})", res)


class SymmetricFactorization:
    """Reusable direct factorisation of a symmetric matrix.

    The matrix is symmetrically equilibrated (a few Ruiz sweeps) before an LU
    factorisation with threshold pivoting, which keeps badly scaled saddle
    systems (e.g. permeabilities of 1e-12) accurate.
    """

    def __init__(self, A, pivot_tol=1e-14, sweeps=5):
        A = sp.csc_array(A, dtype=float)
        n = A.shape[0]
        if A.shape != (n, n):
            raise ValueError("matrix must be square")
        scale = np.ones(n)
        As = A.copy()
        for _ in range(sweeps):
            rmax = np.asarray(abs(As).max(axis=1).todense()).ravel()
            if np.any(rmax == 0):
                raise SingularMatrixError("matrix has an empty row")
            d = 1.0 / np.sqrt(rmax)
            scale *= d
            As = sp.csc_array(sp.diags_array(d) @ As @ sp.diags_array(d))
        self.A = A
        self.scale = scale
        try:
            self._lu = spla.splu(As, permc_spec="COLAMD", diag_pivot_thresh=0.1)
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc)) from exc
        udiag = np.abs(self._lu.U.diagonal())
        if udiag.min() <= pivot_tol * max(1.0, abs(As).max()):
            raise SingularMatrixError(
                f"pivot {udiag.min():.3e} below threshold; matrix is singular")

    def backward_error(self, x, b):
        """Componentwise backward error ``max |b - A x|_i / (|A| |x| + |b|)_i``."""
        r = np.abs(b - self.A @ x)
        denom = abs(self.A) @ np.abs(x) + np.abs(b)
        mask = denom > 0
        if np.any(r[~mask] > 0):
            return np.inf
        return float(np.max(r[mask] / denom[mask], initial=0.0))

    def solve(self, b, check=1e-10):
        b = np.asarray(b, dtype=float)
        x = self.scale * self._lu.solve(self.scale * b)
        if check is not None:
            err = self.backward_error(x, b)
            if err > check:
                # one step of iterative refinement before giving up
                x += self.scale * self._lu.solve(self.scale * (b - self.A @ x))
                err = self.backward_error(x, b)
                if err > check:
                    raise SingularMatrixError(
                        f"direct solve backward error {err:.3e} exceeds {check:.1e}")
        return x


def ldlt_solve(A, b):
    """Solve a symmetric (indefinite) system ``A x = b`` directly."""
    return SymmetricFactorization(A).solve(b)
