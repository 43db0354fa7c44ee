"""Mixed finite elements for the flow subproblem.

Pressures are piecewise constant. Fluxes use the lowest-order face space on
hexahedra: one unknown per face holding the mean normal flux density in the
face orientation, with reference basis functions mapped by the contravariant
Piola transform. Time stepping is backward Euler with the fixed-stress
accumulation term ``C (p - p^n)`` and lagged stress / plastic porosity on the
right-hand side.
"""

from dataclasses import dataclass

import numpy as np

from . import tensor as tn
from .linsolve import SymmetricFactorization, csr
from .mesh import FACE_GAUSS, GAUSS_POINTS, LOCAL_FACE_AXIS, LOCAL_FACE_SIGN, face_point, trilinear_map


def _reference_flux_basis(xi):
    """Unit-flux reference basis for the 6 local faces at points ``xi``: (..., 6, 3)."""
    xi = np.asarray(xi, dtype=float)
    out = np.zeros(xi.shape[:-1] + (6, 3))
    for lf in range(6):
        d = LOCAL_FACE_AXIS[lf]
        out[..., lf, d] = (LOCAL_FACE_SIGN[lf] + xi[..., d]) / 8.0
    return out


class FlowDiscretization:
    """Geometry-dependent flow operators for one mesh and material."""

    def __init__(self, mesh, model, geometry=None):
        self.mesh = mesh
        self.model = model
        self.geom = mesh.geometry() if geometry is None else geometry
        self.volumes = self.geom.jxw.sum(axis=1)
        self.areas = mesh.face_areas()
        self.vhat = _reference_flux_basis(GAUSS_POINTS)  # (8 gp, 6, 3)
        self._basis = None
        self.A_zz, self.B_div = assemble_darcy(self)

    @property
    def basis(self):
        """Physical basis values ``v_f`` at Gauss points, (nc, 8 gp, 6, 3).

        Includes the face sign and area, so ``sum_f z_f basis[..., f, :]`` is the
        flux field.
        """
        if self._basis is None:
            mesh, g = self.mesh, self.geom
            scale = mesh.cell_face_sign * self.areas[mesh.cell_faces]  # (nc, 6)
            v = np.einsum("cgij,gfj->cgfi", g.J, self.vhat) / g.detJ[:, :, None, None]
            self._basis = v * scale[:, None, :, None]
        return self._basis

    def flux_at_gauss(self, z):
        return np.einsum("cgfi,cf->cgi", self.basis, z[self.mesh.cell_faces])

    def cell_integral(self, values):
        """``int_E values`` for Gauss-point values of shape (nc, 8)."""
        return np.einsum("cg,cg->c", self.geom.jxw, values)


def assemble_darcy(disc):
    """Assemble ``A_zz = (kappa^{-1} v_f, v_g)`` and ``B_div[c, f] = int_c div v_f``."""
    mesh = disc.mesh
    kinv = disc.model.kappa_inv
    v = disc.basis
    local = np.einsum("cgfi,ij,cghj,cg->cfh", v, kinv, v, disc.geom.jxw)
    rows = np.repeat(mesh.cell_faces, 6, axis=1)
    cols = np.tile(mesh.cell_faces, (1, 6))
    A = csr(rows, cols, local, (mesh.n_faces, mesh.n_faces))
    div = mesh.cell_face_sign * disc.areas[mesh.cell_faces]
    B = csr(np.repeat(np.arange(mesh.n_cells), 6), mesh.cell_faces.ravel(), div.ravel(),
            (mesh.n_cells, mesh.n_faces))
    return A, B


def source_vector(disc, q):
    """Cell values of a source given as scalar, per-cell array or callable ``q(x)``."""
    if callable(q):
        return np.asarray([q(x) for x in disc.mesh.cell_centers()], dtype=float)
    return np.broadcast_to(np.asarray(q, dtype=float), (disc.mesh.n_cells,)).copy()


def dirichlet_vector(disc, g):
    """Face-averaged Dirichlet pressure on flow-Dirichlet faces (NaN elsewhere).

    ``g`` is a mapping side name -> value or callable ``g(x)``, a callable for
    all Dirichlet faces, or a per-face array.
    """
    from .mesh import SIDES

    mesh = disc.mesh
    out = np.full(mesh.n_faces, np.nan)
    dfaces = np.flatnonzero(mesh.flow_marker == 1)
    if g is None:
        if len(dfaces):
            raise ValueError("missing Dirichlet pressure data on flow-Dirichlet faces")
        return out
    if isinstance(g, np.ndarray) and g.shape == (mesh.n_faces,):
        out[dfaces] = g[dfaces]
    else:
        coords = mesh.vertices[mesh.cells]
        for f in dfaces:
            side = SIDES[mesh.face_side[f]]
            val = g.get(side) if isinstance(g, dict) else g
            if val is None:
                raise ValueError(f"missing Dirichlet pressure for side {side!r}")
            if callable(val):
                xi = face_point(mesh.face_local[f], FACE_GAUSS)
                x, _ = trilinear_map(coords[mesh.face_owner[f]], xi)
                out[f] = np.mean([val(p) for p in x])
            else:
                out[f] = float(val)
    if np.any(np.isnan(out[dfaces])):
        raise ValueError("missing Dirichlet pressure data on a flow-Dirichlet face")
    return out


def coupling_rhs(disc, d_sigma, d_phi_p, C, B):
    """Pressure-row contribution ``-(C/3)(B:d_sigma, theta) - (d_phi_p, theta)``."""
    integrand = C / 3.0 * tn.ddot(B, d_sigma) + d_phi_p
    return -disc.cell_integral(integrand)


def assemble_flow_rhs(disc, p_n, sigma_n, phi_p_n, sigma_lagged, phi_p_lagged, dt, q,
                      g_dirichlet, gravity=True):
    """Right-hand sides ``(rhs_p, rhs_z)`` of the fixed-stress flow step.

    ``rhs_p = dt (q, theta) + C (p^n, theta) - (C/3)(B:(sigma_lag - sigma^n), theta)
    - (phi_lag - phi^n, theta)`` and
    ``rhs_z = -(g, v.n)_{Dirichlet} + (rho0 g, v)``.
    """
    model = disc.model
    C, B = model.C, model.B
    qv = source_vector(disc, q)
    rhs_p = dt * qv * disc.volumes + C * p_n * disc.volumes
    rhs_p += coupling_rhs(disc, sigma_lagged - sigma_n, phi_p_lagged - phi_p_n, C, B)
    rhs_z = np.zeros(disc.mesh.n_faces)
    gvec = dirichlet_vector(disc, g_dirichlet)
    dfaces = np.flatnonzero(disc.mesh.flow_marker == 1)
    rhs_z[dfaces] -= gvec[dfaces] * disc.areas[dfaces]
    if gravity and np.any(model.gravity != 0):
        rhs_z += gravity_rhs(disc)
    return rhs_p, rhs_z


def gravity_rhs(disc):
    """``(rho0 g, v_f)`` for every face."""
    model = disc.model
    rg = model.fluid_density * model.gravity
    local = np.einsum("cgfi,i,cg->cf", disc.basis, rg, disc.geom.jxw)
    out = np.zeros(disc.mesh.n_faces)
    np.add.at(out, disc.mesh.cell_faces, local)
    return out


@dataclass
class FlowSystem:
    A_zz: object
    B_div: object
    A_pp: np.ndarray        # diagonal of C (p, theta)
    rhs_p: np.ndarray
    rhs_z: np.ndarray
    dt: float
    free: np.ndarray        # free flux dofs (flow Neumann faces removed)

    def matrix(self):
        """Symmetric saddle matrix on (free fluxes, pressures)."""
        import scipy.sparse as sp

        A = self.A_zz[self.free][:, self.free]
        B = self.B_div[:, self.free]
        D = sp.diags_array(-self.A_pp / self.dt)
        return sp.block_array([[A, -B.T], [-B, D]], format="csc")

    def vector(self):
        return np.concatenate([self.rhs_z[self.free], -self.rhs_p / self.dt])


class FlowOperator:
    """Factorised flow saddle operator, reused across coupling iterations."""

    def __init__(self, disc, dt):
        self.disc = disc
        self.dt = dt
        mesh = disc.mesh
        self.free = np.flatnonzero(mesh.flow_marker != 2)
        self.A_pp = disc.model.C * disc.volumes
        self._template = FlowSystem(disc.A_zz, disc.B_div, self.A_pp, None, None, dt, self.free)
        self.factorization = SymmetricFactorization(self._template.matrix())
        self.n_solves = 0

    def system(self, rhs_p, rhs_z):
        return FlowSystem(self.disc.A_zz, self.disc.B_div, self.A_pp, rhs_p, rhs_z,
                          self.dt, self.free)

    def solve(self, rhs_p, rhs_z):
        sysm = self.system(rhs_p, rhs_z)
        x = self.factorization.solve(sysm.vector())
        nfree = len(self.free)
        z = np.zeros(self.disc.mesh.n_faces)
        z[self.free] = x[:nfree]
        self.n_solves += 1
        return x[nfree:], z


def solve_flow(system):
    """Solve an assembled :class:`FlowSystem`; returns ``(p, z)``."""
    x = SymmetricFactorization(system.matrix()).solve(system.vector())
    nfree = len(system.free)
    z = np.zeros(system.A_zz.shape[0])
    z[system.free] = x[:nfree]
    return x[nfree:], z


def flow_residuals(disc, p, z, rhs_p, rhs_z, dt):
    """Residuals of the mass and Darcy equations (Darcy rows on free faces only)."""
    C = disc.model.C
    r_p = C * disc.volumes * p + dt * (disc.B_div @ z) - rhs_p
    r_z = disc.A_zz @ z - disc.B_div.T @ p - rhs_z
    free = disc.mesh.flow_marker != 2
    return r_p, r_z[free]


def local_mass_residual(disc, p_new, z_new, sigma_new, phi_new, p_old, sigma_old, phi_old,
                        dt, q):
    """Per-cell ``int_E (zeta^{n+1} - zeta^n) + dt int_dE z.n - dt int_E q``."""
    model = disc.model
    C, B = model.C, model.B
    zeta_new = fluid_content_gauss(p_new, sigma_new, phi_new, C, B)
    zeta_old = fluid_content_gauss(p_old, sigma_old, phi_old, C, B)
    qv = source_vector(disc, q)
    return (disc.cell_integral(zeta_new - zeta_old) + dt * (disc.B_div @ z_new)
            - dt * qv * disc.volumes)


def fluid_content_gauss(p, sigma, phi_p, C, B):
    """Fluid content at Gauss points from cell pressures and Gauss-point stresses."""
    return C * p[:, None] + C / 3.0 * tn.ddot(B, sigma) + phi_p
