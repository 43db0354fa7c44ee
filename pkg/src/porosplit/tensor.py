"""Second- and fourth-order tensor algebra in Mandel notation.

Symmetric second-order tensors are stored as 6-vectors
``[T11, T22, T33, sqrt(2) T23, sqrt(2) T13, sqrt(2) T12]`` and minor-symmetric
fourth-order tensors as 6x6 matrices acting on those vectors. With this scaling
the double contraction ``S:T`` is a plain dot product and applying a
fourth-order tensor is a matrix-vector product.

All functions accept leading batch dimensions (``(..., 6)`` and ``(..., 6, 6)``).
"""

import numpy as np

SQRT2 = np.sqrt(2.0)

# (i, j) index pair of each Mandel component
MANDEL_INDEX = ((0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1))
MANDEL_WEIGHT = np.array([1.0, 1.0, 1.0, SQRT2, SQRT2, SQRT2])

IDENTITY2 = np.array([1.0, 1.0, 1.0, 0.0, 0.0, 0.0])
IDENTITY4 = np.eye(6)
# I (x) I and the deviatoric projector I4 - (1/3) I (x) I
TRACE_PROJECTOR = np.outer(IDENTITY2, IDENTITY2)
DEVIATORIC_PROJECTOR = IDENTITY4 - TRACE_PROJECTOR / 3.0


class SingularTensorError(np.linalg.LinAlgError):
    """Raised when a 6x6 Mandel matrix cannot be inverted reliably."""


def to_mandel(A):
    """Symmetric 3x3 matrix (or batch) to Mandel 6-vector."""
    A = np.asarray(A, dtype=float)
    return np.stack([A[..., 0, 0], A[..., 1, 1], A[..., 2, 2],
                     SQRT2 * A[..., 1, 2], SQRT2 * A[..., 0, 2],
                     SQRT2 * A[..., 0, 1]], axis=-1)


def from_mandel(m):
    """Mandel 6-vector (or batch) to the full symmetric 3x3 matrix."""
    m = np.asarray(m, dtype=float)
    out = np.empty(m.shape[:-1] + (3, 3))
    out[..., 0, 0] = m[..., 0]
    out[..., 1, 1] = m[..., 1]
    out[..., 2, 2] = m[..., 2]
    out[..., 1, 2] = out[..., 2, 1] = m[..., 3] / SQRT2
    out[..., 0, 2] = out[..., 2, 0] = m[..., 4] / SQRT2
    out[..., 0, 1] = out[..., 1, 0] = m[..., 5] / SQRT2
    return out


def tensor4_to_mandel(P):
    """Minor-symmetric 3x3x3x3 array to its 6x6 Mandel matrix."""
    P = np.asarray(P, dtype=float)
    M = np.empty(P.shape[:-4] + (6, 6))
    for a, (i, j) in enumerate(MANDEL_INDEX):
        for b, (k, l) in enumerate(MANDEL_INDEX):
            M[..., a, b] = MANDEL_WEIGHT[a] * MANDEL_WEIGHT[b] * P[..., i, j, k, l]
    return M


def mandel_to_tensor4(M):
    """6x6 Mandel matrix to the full minor-symmetric 3x3x3x3 array."""
    M = np.asarray(M, dtype=float)
    P = np.empty(M.shape[:-2] + (3, 3, 3, 3))
    for a, (i, j) in enumerate(MANDEL_INDEX):
        for b, (k, l) in enumerate(MANDEL_INDEX):
            v = M[..., a, b] / (MANDEL_WEIGHT[a] * MANDEL_WEIGHT[b])
            P[..., i, j, k, l] = v
            P[..., j, i, k, l] = v
            P[..., i, j, l, k] = v
            P[..., j, i, l, k] = v
    return P


def ddot(S, T):
    """Double contraction ``S:T = S_ij T_ij`` of Mandel vectors."""
    return np.einsum("...i,...i->...", S, T)


def apply4(P, S):
    """Apply a fourth-order tensor: ``(PS)_ij = P_ijkl S_kl``."""
    return np.einsum("...ij,...j->...i", P, S)


def dyad(S, T):
    """Dyadic product ``(S (x) T)_ijkl = S_ij T_kl`` as a Mandel matrix."""
    return np.einsum("...i,...j->...ij", S, T)


def invert6(P, cond_limit=1e14):
    """Invert a 6x6 Mandel matrix (batched).

    Raises
    ------
    SingularTensorError
        If any matrix has an estimated condition number above ``cond_limit``.
    """
    P = np.asarray(P, dtype=float)
    cond = np.linalg.cond(P)
    if np.any(~np.isfinite(cond)) or np.any(cond > cond_limit):
        raise SingularTensorError(
            f"fourth-order tensor is singular (condition estimate {np.max(cond):.3e})")
    return np.linalg.inv(P)


def trace(S):
    return S[..., 0] + S[..., 1] + S[..., 2]


def deviator(S):
    return S - trace(S)[..., None] * IDENTITY2 / 3.0


def norm(S):
    """Frobenius norm ``sqrt(S:S)``."""
    return np.sqrt(ddot(S, S))


def skew_contraction(S, W):
    """Full 3x3 double contraction, used to check sym:skew = 0."""
    return np.einsum("...ij,...ij->...", S, W)


def isotropic_stiffness(bulk, shear):
    """Isotropic stiffness ``3K P_vol + 2G P_dev`` in Mandel form."""
    return bulk * TRACE_PROJECTOR + 2.0 * shear * DEVIATORIC_PROJECTOR


def isotropic_from_young(E, nu):
    return isotropic_stiffness(E / (3.0 * (1.0 - 2.0 * nu)), E / (2.0 * (1.0 + nu)))


def orthotropic_stiffness(E1, E2, E3, nu12, nu13, nu23, G12, G13, G23):
    """Orthotropic stiffness from engineering constants (material axes = x, y, z)."""
    S = np.zeros((6, 6))
    S[0, 0], S[1, 1], S[2, 2] = 1.0 / E1, 1.0 / E2, 1.0 / E3
    S[0, 1] = S[1, 0] = -nu12 / E1
    S[0, 2] = S[2, 0] = -nu13 / E1
    S[1, 2] = S[2, 1] = -nu23 / E2
    # Mandel shear compliance is 1/(2G)
    S[3, 3], S[4, 4], S[5, 5] = 1.0 / (2 * G23), 1.0 / (2 * G13), 1.0 / (2 * G12)
    return invert6(S)
