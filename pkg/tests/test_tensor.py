"""Mandel algebra against explicit index loops."""

import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from numpy.testing import assert_allclose

from porosplit import tensor as tn

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)
mat3 = arrays(np.float64, (3, 3), elements=finite)


def sym(A):
    return 0.5 * (A + A.T)


def random_tensor4(rng, minor=True):
    """Full 3x3x3x3 array with minor symmetries."""
    T = rng.standard_normal((3, 3, 3, 3))
    if minor:
        T = 0.25 * (T + T.transpose(1, 0, 2, 3) + T.transpose(0, 1, 3, 2)
                    + T.transpose(1, 0, 3, 2))
    return T


def loop_ddot(S, T):
    return sum(S[i, j] * T[i, j] for i, j in itertools.product(range(3), repeat=2))


def loop_apply(P, S):
    out = np.zeros((3, 3))
    for i, j, k, l in itertools.product(range(3), repeat=4):
        out[i, j] += P[i, j, k, l] * S[k, l]
    return out


def loop_dyad(S, T):
    out = np.zeros((3, 3, 3, 3))
    for i, j, k, l in itertools.product(range(3), repeat=4):
        out[i, j, k, l] = S[i, j] * T[k, l]
    return out


class TestMandelRoundTrip:
    @given(mat3)
    def test_vector_roundtrip(self, A):
        S = sym(A)
        assert_allclose(tn.from_mandel(tn.to_mandel(S)), S, rtol=0, atol=1e-12)

    @given(mat3, mat3)
    def test_dot_is_double_contraction(self, A, B):
        S, T = sym(A), sym(B)
        ref = loop_ddot(S, T)
        assert tn.ddot(tn.to_mandel(S), tn.to_mandel(T)) == pytest.approx(ref, rel=1e-12,
                                                                            abs=1e-9)

    def test_component_order(self):
        S = np.array([[1.0, 6.0, 5.0], [6.0, 2.0, 4.0], [5.0, 4.0, 3.0]])
        r2 = np.sqrt(2.0)
        assert_allclose(tn.to_mandel(S), [1, 2, 3, 4 * r2, 5 * r2, 6 * r2])

    def test_tensor4_roundtrip(self, rng):
        T = random_tensor4(rng)
        assert_allclose(tn.mandel_to_tensor4(tn.tensor4_to_mandel(T)), T, atol=1e-14)


class TestOracleLoops:
    """100 random instances against 4-index loops, 1e-13 relative."""

    @pytest.fixture
    def cases(self, rng):
        out = []
        for _ in range(100):
            S, T = sym(rng.standard_normal((3, 3))), sym(rng.standard_normal((3, 3)))
            out.append((S, T, random_tensor4(rng)))
        return out

    def test_ddot(self, cases):
        for S, T, _ in cases:
            ref = loop_ddot(S, T)
            got = tn.ddot(tn.to_mandel(S), tn.to_mandel(T))
            assert abs(got - ref) <= 1e-13 * max(abs(ref), np.abs(S).max() * np.abs(T).max())

    def test_apply4(self, cases):
        for S, _, P in cases:
            ref = loop_apply(P, S)
            got = tn.from_mandel(tn.apply4(tn.tensor4_to_mandel(P), tn.to_mandel(S)))
            assert np.abs(got - ref).max() <= 1e-13 * np.abs(ref).max()

    def test_dyad(self, cases):
        for S, T, _ in cases:
            ref = loop_dyad(S, T)
            got = tn.mandel_to_tensor4(tn.dyad(tn.to_mandel(S), tn.to_mandel(T)))
            assert np.abs(got - ref).max() <= 1e-13 * np.abs(ref).max()

    def test_inverse_is_identity_on_symmetric_tensors(self, cases):
        for S, _, P in cases:
            M = tn.tensor4_to_mandel(P)
            M = M @ M.T + 6 * np.eye(6)  # well conditioned
            inv = tn.invert6(M)
            back = loop_apply(tn.mandel_to_tensor4(inv),
                              loop_apply(tn.mandel_to_tensor4(M), S))
            assert np.abs(back - S).max() <= 1e-12 * np.abs(S).max()

    def test_batched_matches_single(self, rng):
        P = rng.standard_normal((4, 5, 6, 6))
        S = rng.standard_normal((4, 5, 6))
        got = tn.apply4(P, S)
        for i, j in np.ndindex(4, 5):
            assert_allclose(got[i, j], P[i, j] @ S[i, j], rtol=1e-14)


class TestOperators:
    def test_projectors(self, rng):
        S = tn.to_mandel(sym(rng.standard_normal((3, 3))))
        dev = tn.apply4(tn.DEVIATORIC_PROJECTOR, S)
        assert tn.trace(dev) == pytest.approx(0.0, abs=1e-14)
        assert_allclose(dev, tn.deviator(S), atol=1e-14)
        assert_allclose(tn.apply4(tn.IDENTITY4, S), S)

    def test_invert_singular_raises(self):
        with pytest.raises(tn.SingularTensorError):
            tn.invert6(tn.TRACE_PROJECTOR)

    @settings(max_examples=30)
    @given(st.floats(1e6, 1e11), st.floats(-0.9, 0.45))
    def test_isotropic_stiffness(self, E, nu):
        D = tn.isotropic_from_young(E, nu)
        C = tn.invert6(D)
        # uniaxial stress: strain_11 = 1/E, lateral = -nu/E
        eps = C @ np.array([1.0, 0, 0, 0, 0, 0])
        assert eps[0] == pytest.approx(1.0 / E, rel=1e-10)
        assert eps[1] == pytest.approx(-nu / E, rel=1e-8, abs=1e-12 / E)

    def test_orthotropic_compliance(self):
        E1, E2, E3, n12, n13, n23, G12, G13, G23 = 3.0, 2.0, 1.0, 0.2, 0.1, 0.3, 0.9, 0.8, 0.7
        D = tn.orthotropic_stiffness(E1, E2, E3, n12, n13, n23, G12, G13, G23)
        C = np.linalg.inv(D)
        assert C[0, 0] == pytest.approx(1 / E1)
        assert C[0, 1] == pytest.approx(-n12 / E1)
        assert C[1, 2] == pytest.approx(-n23 / E2)
        # Mandel shear: eps_M = sigma_M / (2G)
        assert C[5, 5] == pytest.approx(1 / (2 * G12))
        assert C[3, 3] == pytest.approx(1 / (2 * G23))
        assert_allclose(D, D.T, atol=1e-14)

    def test_norm_and_skew(self, rng):
        S = sym(rng.standard_normal((3, 3)))
        assert tn.norm(tn.to_mandel(S)) == pytest.approx(np.sqrt(np.sum(S * S)))
        W = rng.standard_normal((3, 3))
        W = W - W.T
        assert tn.skew_contraction(S, W) == pytest.approx(0.0, abs=1e-14)
