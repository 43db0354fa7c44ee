"""Trilinear (Q1) Galerkin discretisation of quasi-static momentum balance.

Pressure is frozen during a mechanics solve and enters through the total
stress ``sigma = sigma_eff - alpha p``. Plastic problems are solved with
Newton's method on the return-mapped residual; Gauss-point history is taken
from the last converged time level and only replaced after convergence.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .linsolve import SymmetricFactorization, cg_solve, csr
from .material import return_map_field
from .mesh import FACE_GAUSS, SIDES, face_point, shape_functions, trilinear_map

R2 = 1.0 / np.sqrt(2.0)


class NewtonError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


def strain_displacement(dNdx):
    """Mandel strain-displacement matrices, (..., 6, 24) from gradients (..., 8, 3)."""
    shape = dNdx.shape[:-2]
    B = np.zeros(shape + (6, 8, 3))
    gx, gy, gz = dNdx[..., 0], dNdx[..., 1], dNdx[..., 2]
    B[..., 0, :, 0] = gx
    B[..., 1, :, 1] = gy
    B[..., 2, :, 2] = gz
    B[..., 3, :, 1] = R2 * gz
    B[..., 3, :, 2] = R2 * gy
    B[..., 4, :, 0] = R2 * gz
    B[..., 4, :, 2] = R2 * gx
    B[..., 5, :, 0] = R2 * gy
    B[..., 5, :, 1] = R2 * gx
    return B.reshape(shape + (6, 24))


def strain_at_gauss(u, coords, xi):
    """Small strain (Mandel) at reference point ``xi`` of one cell.

    ``u`` holds the 8 vertex displacement vectors, ``coords`` the vertex positions.
    """
    _, dN = shape_functions(xi)
    _, J = trilinear_map(coords, xi)
    if abs(np.linalg.det(J)) < 1e-300:
        raise np.linalg.LinAlgError("singular Jacobian")
    dNdx = dN @ np.linalg.inv(J)
    return strain_displacement(dNdx) @ np.asarray(u, dtype=float).ravel()


class MechDiscretization:
    def __init__(self, mesh, model, dofmap, geometry=None):
        self.mesh = mesh
        self.model = model
        self.dofmap = dofmap
        self.geom = mesh.geometry() if geometry is None else geometry
        self.Bmat = strain_displacement(self.geom.dNdx)           # (nc, 8, 6, 24)
        self.cell_dofs = (3 * mesh.cells[:, :, None] + np.arange(3)).reshape(-1, 24)
        self.ndof = 3 * mesh.n_vertices
        self.free = dofmap.free_displacement
        self._elastic_factor = None
        self._K_elastic = None

    def strain(self, u):
        return np.einsum("cgij,cj->cgi", self.Bmat, u[self.cell_dofs])

    def internal_force(self, sigma):
        """``int B^T sigma`` for Gauss-point stresses ``sigma`` (nc, 8, 6)."""
        local = np.einsum("cgij,cgi,cg->cj", self.Bmat, sigma, self.geom.jxw)
        out = np.zeros(self.ndof)
        np.add.at(out, self.cell_dofs, local)
        return out

    def stiffness(self, tangent):
        """``sum_E int B^T D_ep B``; ``tangent`` is (6, 6) or per Gauss point."""
        tangent = np.asarray(tangent)
        if tangent.ndim == 2:
            local = np.einsum("cgia,ij,cgjb,cg->cab", self.Bmat, tangent, self.Bmat,
                              self.geom.jxw)
        else:
            local = np.einsum("cgia,cgij,cgjb,cg->cab", self.Bmat, tangent, self.Bmat,
                              self.geom.jxw)
        rows = np.repeat(self.cell_dofs, 24, axis=1)
        cols = np.tile(self.cell_dofs, (1, 24))
        return csr(rows, cols, local, (self.ndof, self.ndof))

    @property
    def K_elastic(self):
        if self._K_elastic is None:
            self._K_elastic = self.stiffness(self.model.D)
        return self._K_elastic

    def elastic_factorization(self):
        if self._elastic_factor is None:
            K = self.K_elastic[self.free][:, self.free]
            self._elastic_factor = SymmetricFactorization(K)
        return self._elastic_factor

    def pressure_force(self, p):
        """``int B^T alpha p`` for cell pressures ``p``."""
        sig = self.model.alpha * np.asarray(p, dtype=float)[:, None, None]
        return self.internal_force(np.broadcast_to(sig, self.geom.x.shape[:2] + (6,)))

    def body_force_vector(self, f):
        f = np.asarray(f, dtype=float)
        local = np.einsum("ga,i,cg->cai", self.geom.N, f, self.geom.jxw).reshape(-1, 24)
        out = np.zeros(self.ndof)
        np.add.at(out, self.cell_dofs, local)
        return out

    def traction_vector(self, traction):
        """Consistent nodal loads of side tractions ``{side: vector or callable(x)}``."""
        mesh = self.mesh
        out = np.zeros(self.ndof)
        if not traction:
            return out
        coords = mesh.vertices[mesh.cells]
        from .mesh import cofactor

        for side, t in traction.items():
            if side not in SIDES:
                raise ValueError(f"unknown side {side!r}")
            faces = mesh.side_faces(side)
            if np.any(mesh.mech_marker[faces] != 2):
                raise ValueError(f"traction applied on side {side!r} which is not "
                                 "mechanics-Neumann")
            for f in faces:
                lf = mesh.face_local[f]
                xi = face_point(lf, FACE_GAUSS)
                N, dN = shape_functions(xi)
                cellc = coords[mesh.face_owner[f]]
                x = N @ cellc
                J = np.einsum("gak,ai->gik", dN, cellc)
                nref = np.zeros(3)
                nref[lf // 2] = 1.0
                dA = np.linalg.norm(cofactor(J) @ nref, axis=-1)
                tv = np.array([t(p) for p in x]) if callable(t) else np.broadcast_to(
                    np.asarray(t, dtype=float), (len(x), 3))
                local = np.einsum("ga,gi,g->ai", N, tv, dA)
                dofs = 3 * mesh.cells[mesh.face_owner[f]][:, None] + np.arange(3)
                np.add.at(out, dofs, local)
        return out


@dataclass
class MechSystem:
    K_stiff: object          # tangent stiffness on all dofs
    rhs_u: np.ndarray        # traction + body force + pressure coupling
    constrained: np.ndarray  # bool mask
    p_frozen: np.ndarray
    external: np.ndarray     # traction + body force only


def assemble_mechanics(disc, p_frozen, states=None, traction=None, body_force=None,
                       tangent=None):
    """Assemble the linearised mechanics system with pressure frozen at ``p_frozen``.

    ``states`` is accepted for interface symmetry with :func:`solve_mechanics`;
    the stiffness uses ``tangent`` (per Gauss point) or the elastic ``D``.
    """
    F_ext = disc.traction_vector(traction)
    if body_force is not None:
        F_ext = F_ext + disc.body_force_vector(body_force)
    F = F_ext + disc.pressure_force(p_frozen)
    K = disc.K_elastic if tangent is None else disc.stiffness(tangent)
    return MechSystem(K, F, disc.dofmap.constrained.copy(), np.asarray(p_frozen), F_ext)


@dataclass
class MechResult:
    u: np.ndarray
    sigma: np.ndarray        # total stress at Gauss points
    sigma_eff: np.ndarray
    eps: np.ndarray
    states: object           # GaussPointState field (uncommitted trial history)
    tangent: np.ndarray      # D_ep per Gauss point
    du: np.ndarray           # accumulated Newton corrections
    iterations: int
    residual: float


def solve_mechanics(disc, system, states_old, u0=None, tol=1e-10, max_iter=25,
                    linear_solver="direct", linear_tol=1e-12):
    """Newton iteration until ``|R| <= tol * scale`` on the free dofs.

    ``scale`` is the largest of the load norm and the internal-force norm, so
    pure pressure loading (zero external force) is measured sensibly.
    """
    model = disc.model
    free = disc.free
    u = np.zeros(disc.ndof) if u0 is None else np.array(u0, dtype=float)
    u[system.constrained] = 0.0
    du_total = np.zeros(disc.ndof)
    p_gp = np.broadcast_to(system.p_frozen[:, None], disc.geom.detJ.shape)
    elastic = model.plasticity is None
    res = np.inf

    def evaluate(u):
        eps = disc.strain(u)
        sig_eff, tangent, states = return_map_field(eps, states_old, model, p_gp)
        f_int = disc.internal_force(sig_eff)
        R = f_int - system.rhs_u
        scale = max(np.linalg.norm(system.rhs_u[free]), np.linalg.norm(f_int[free]), 1e-300)
        return eps, sig_eff, tangent, states, R, scale

    eps, sig_eff, tangent, states, R, scale = evaluate(u)
    for it in range(max_iter + 1):
        res = np.linalg.norm(R[free]) / scale
        if res <= tol:
            sigma = sig_eff - model.alpha * p_gp[..., None]
            return MechResult(u, sigma, sig_eff, eps, states, tangent, du_total, it, res)
        if it == max_iter:
            break
        if elastic and linear_solver == "direct":
            step = disc.elastic_factorization().solve(-R[free])
        else:
            K = disc.K_elastic if elastic else disc.stiffness(tangent)
            Kf = K[free][:, free]
            if linear_solver == "cg":
                step = cg_solve(Kf, -R[free], tol=linear_tol).x
            else:
                step = SymmetricFactorization(Kf).solve(-R[free])
        # backtracking on the residual norm; the full step is taken whenever it helps
        r0 = np.linalg.norm(R[free])
        for _ in range(12):
            trial = u.copy()
            trial[free] += step
            out = evaluate(trial)
            if np.linalg.norm(out[4][free]) < r0 or elastic:
                break
            step = 0.5 * step
        u = trial
        du_total[free] += step
        eps, sig_eff, tangent, states, R, scale = out
    raise NewtonError(f"Newton did not converge in {max_iter} iterations "
                      f"(relative residual {res:.3e})", res)


def reaction_forces(disc, sigma_eff, system):
    """Residual forces on constrained dofs (the support reactions), per dof."""
    R = disc.internal_force(sigma_eff) - system.rhs_u
    out = np.zeros(disc.ndof)
    out[system.constrained] = R[system.constrained]
    return out


def galerkin_residual(disc, d_sigma):
    """``int d_sigma : eps(q)`` for all free test dofs ``q``."""
    return disc.internal_force(d_sigma)[disc.free]


def stress_invariants(sigma):
    """Mean stress and von Mises equivalent stress."""
    mean = tn.trace(sigma) / 3.0
    vm = np.sqrt(1.5) * tn.norm(tn.deviator(sigma))
    return mean, vm
