import numpy as np
import pytest
import scipy.sparse as sp
from numpy.testing import assert_allclose

from porosplit.linsolve import (ConvergenceError, IndefiniteMatrixError, SingularMatrixError,
                                SymmetricFactorization, cg_solve, csr, is_symmetric,
                                ldlt_solve)


def laplacian(n):
    return sp.diags_array([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], offsets=[-1, 0, 1],
                          format="csr")


class TestCSR:
    def test_duplicates_summed_and_sorted(self):
        A = csr([0, 0, 1, 0], [1, 0, 1, 1], [1.0, 2.0, 3.0, 4.0], (2, 2))
        assert_allclose(A.toarray(), [[2.0, 5.0], [0.0, 3.0]])
        assert A.has_canonical_format
        for r in range(2):
            cols = A.indices[A.indptr[r]:A.indptr[r + 1]]
            assert np.all(np.diff(cols) > 0)

    def test_symmetry_probe(self):
        A = laplacian(5)
        assert is_symmetric(A)
        B = A.tolil()
        B[0, 1] = -1.5
        assert not is_symmetric(B.tocsr())


class TestCG:
    @pytest.mark.parametrize("prec", ["jacobi", None])
    def test_converges(self, prec, rng):
        A = laplacian(50) + sp.diags_array(rng.uniform(0.1, 1.0, 50))
        b = rng.standard_normal(50)
        res = cg_solve(A, b, tol=1e-12, preconditioner=prec)
        assert np.linalg.norm(A @ res.x - b) <= 1e-12 * np.linalg.norm(b) * 1.0001
        assert res.residual <= 1e-12

    def test_zero_rhs(self):
        res = cg_solve(laplacian(4), np.zeros(4))
        assert res.iterations == 0 and np.all(res.x == 0)

    def test_indefinite_detected(self):
        A = sp.diags_array([1.0, -1.0, 2.0])
        with pytest.raises(IndefiniteMatrixError):
            cg_solve(A, np.ones(3), preconditioner=None)
        with pytest.raises(IndefiniteMatrixError):
            cg_solve(A, np.ones(3))

    def test_iteration_cap(self):
        with pytest.raises(ConvergenceError) as err:
            cg_solve(laplacian(200), np.ones(200), tol=1e-14, max_iter=3)
        assert err.value.residual > 1e-14


class TestDirect:
    def saddle(self, rng, n=12, m=5, scale=1e12):
        A = sp.random_array((n, n), density=0.3, random_state=1)
        A = scale * (A @ A.T + sp.eye_array(n))
        B = sp.csr_array(rng.standard_normal((m, n)))
        D = sp.diags_array(-rng.uniform(1e-10, 1e-9, m))
        return sp.block_array([[A, -B.T], [-B, D]], format="csc")

    def test_badly_scaled_saddle(self, rng):
        K = self.saddle(rng)
        x_true = rng.standard_normal(K.shape[0])
        b = K @ x_true
        fac = SymmetricFactorization(K)
        x = fac.solve(b)
        assert fac.backward_error(x, b) < 1e-13
        assert_allclose(K @ x, b, rtol=1e-9, atol=1e-9 * np.abs(b).max())

    def test_factorization_reused(self, rng):
        K = self.saddle(rng)
        fac = SymmetricFactorization(K)
        for _ in range(3):
            b = rng.standard_normal(K.shape[0])
            assert fac.backward_error(fac.solve(b), b) < 1e-12

    def test_singular_raises(self):
        A = sp.csc_array(np.array([[1.0, 1.0], [1.0, 1.0]]))
        with pytest.raises(SingularMatrixError):
            SymmetricFactorization(A)

    def test_empty_row_raises(self):
        A = sp.csc_array(np.array([[1.0, 0.0], [0.0, 0.0]]))
        with pytest.raises(SingularMatrixError):
            ldlt_solve(A, np.ones(2))

    def test_matches_dense(self, rng):
        M = rng.standard_normal((8, 8))
        M = M + M.T
        b = rng.standard_normal(8)
        assert_allclose(ldlt_solve(sp.csc_array(M), b), np.linalg.solve(M, b), rtol=1e-9)
