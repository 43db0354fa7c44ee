"""Structured (optionally distorted) hexahedral meshes of a box.

Cells use the VTK hexahedron vertex ordering. Reference coordinates live in
``[-1, 1]^3``; local faces are numbered ``xi-, xi+, eta-, eta+, zeta-, zeta+``.
Every face carries one orientation, pointing from its owner cell to its
neighbour (or out of the domain on the boundary).
"""

from dataclasses import dataclass, field, replace

import numpy as np

SIDES = ("xmin", "xmax", "ymin", "ymax", "zmin", "zmax")
FLOW_MARKERS = ("dirichlet", "neumann")
MECH_MARKERS = ("dirichlet", "neumann")

# reference coordinates of the 8 hex vertices (VTK order)
REF_VERTICES = np.array([
    [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
    [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1],
], dtype=float)

# local face -> (reference axis, side sign)
LOCAL_FACE_AXIS = np.array([0, 0, 1, 1, 2, 2])
LOCAL_FACE_SIGN = np.array([-1.0, 1.0, -1.0, 1.0, -1.0, 1.0])
LOCAL_FACE_VERTICES = np.array([
    [0, 3, 7, 4], [1, 2, 6, 5],
    [0, 1, 5, 4], [3, 2, 6, 7],
    [0, 1, 2, 3], [4, 5, 6, 7],
])

_G = 1.0 / np.sqrt(3.0)
GAUSS_1D = np.array([-_G, _G])
# 2x2x2 rule, unit weights
GAUSS_POINTS = np.array([[a, b, c] for c in GAUSS_1D for b in GAUSS_1D for a in GAUSS_1D])
GAUSS_WEIGHTS = np.ones(8)
FACE_GAUSS = np.array([[a, b] for b in GAUSS_1D for a in GAUSS_1D])


class MeshError(ValueError):
    pass


def shape_functions(xi):
    """Trilinear shape functions and reference gradients at points ``xi``.

    Returns ``N`` with shape ``(..., 8)`` and ``dN`` with shape ``(..., 8, 3)``.
    """
    xi = np.asarray(xi, dtype=float)
    s = 1.0 + xi[..., None, :] * REF_VERTICES  # (..., 8, 3)
    N = s.prod(axis=-1) / 8.0
    dN = np.empty(s.shape)
    dN[..., 0] = REF_VERTICES[:, 0] * s[..., 1] * s[..., 2] / 8.0
    dN[..., 1] = REF_VERTICES[:, 1] * s[..., 0] * s[..., 2] / 8.0
    dN[..., 2] = REF_VERTICES[:, 2] * s[..., 0] * s[..., 1] / 8.0
    return N, dN


def trilinear_map(coords, xi):
    """Physical point and Jacobian ``J[i, k] = dx_i/dxi_k`` of a hex cell.

    ``coords`` are the 8 vertex positions of the cell.
    """
    N, dN = shape_functions(xi)
    x = N @ coords
    J = np.einsum("...ak,ai->...ik", dN, coords)
    return x, J


def face_point(local_face, st):
    """Reference coordinates of the face parameter points ``st`` (shape (..., 2))."""
    st = np.asarray(st, dtype=float)
    axis = LOCAL_FACE_AXIS[local_face]
    others = [d for d in range(3) if d != axis]
    xi = np.empty(st.shape[:-1] + (3,))
    xi[..., axis] = LOCAL_FACE_SIGN[local_face]
    xi[..., others[0]] = st[..., 0]
    xi[..., others[1]] = st[..., 1]
    return xi


def cofactor(J):
    """Cofactor matrix ``det(J) J^{-T}`` (batched)."""
    c = np.empty(J.shape)
    c[..., 0, 0] = J[..., 1, 1] * J[..., 2, 2] - J[..., 1, 2] * J[..., 2, 1]
    c[..., 0, 1] = J[..., 1, 2] * J[..., 2, 0] - J[..., 1, 0] * J[..., 2, 2]
    c[..., 0, 2] = J[..., 1, 0] * J[..., 2, 1] - J[..., 1, 1] * J[..., 2, 0]
    c[..., 1, 0] = J[..., 0, 2] * J[..., 2, 1] - J[..., 0, 1] * J[..., 2, 2]
    c[..., 1, 1] = J[..., 0, 0] * J[..., 2, 2] - J[..., 0, 2] * J[..., 2, 0]
    c[..., 1, 2] = J[..., 0, 1] * J[..., 2, 0] - J[..., 0, 0] * J[..., 2, 1]
    c[..., 2, 0] = J[..., 0, 1] * J[..., 1, 2] - J[..., 0, 2] * J[..., 1, 1]
    c[..., 2, 1] = J[..., 0, 2] * J[..., 1, 0] - J[..., 0, 0] * J[..., 1, 2]
    c[..., 2, 2] = J[..., 0, 0] * J[..., 1, 1] - J[..., 0, 1] * J[..., 1, 0]
    return c


@dataclass(frozen=True)
class CellGeometry:
    """Per-cell data at the 2x2x2 Gauss points (arrays indexed [cell, gp, ...])."""

    x: np.ndarray        # (nc, 8, 3) physical Gauss points
    J: np.ndarray        # (nc, 8, 3, 3)
    detJ: np.ndarray     # (nc, 8)
    dNdx: np.ndarray     # (nc, 8, 8, 3) physical shape gradients
    N: np.ndarray        # (8, 8) shape values at Gauss points

    @property
    def jxw(self):
        """Quadrature weights times Jacobian determinant, (nc, 8)."""
        return self.detJ * GAUSS_WEIGHTS


@dataclass(frozen=True)
class HexMesh:
    vertices: np.ndarray          # (nv, 3)
    cells: np.ndarray             # (nc, 8)
    faces: np.ndarray             # (nf, 4) vertex indices
    face_owner: np.ndarray        # (nf,)
    face_neighbor: np.ndarray     # (nf,) -1 on the boundary
    face_local: np.ndarray        # (nf,) local face index within the owner
    cell_faces: np.ndarray        # (nc, 6) global face ids by local face
    cell_face_sign: np.ndarray    # (nc, 6) +1 if the face orientation is outward
    face_side: np.ndarray         # (nf,) index into SIDES, -1 for interior faces
    shape: tuple
    box: tuple
    flow_marker: np.ndarray = field(default=None)  # (nf,) 0 interior, 1 dirichlet, 2 neumann
    mech_marker: np.ndarray = field(default=None)

    @property
    def n_cells(self):
        return len(self.cells)

    @property
    def n_faces(self):
        return len(self.faces)

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def boundary_faces(self):
        return np.flatnonzero(self.face_neighbor < 0)

    @property
    def interior_faces(self):
        return np.flatnonzero(self.face_neighbor >= 0)

    @property
    def h(self):
        """Largest cell diameter (longest vertex-to-vertex distance)."""
        c = self.vertices[self.cells]
        d = np.linalg.norm(c[:, :, None, :] - c[:, None, :, :], axis=-1)
        return float(d.max())

    def side_faces(self, side):
        return np.flatnonzero(self.face_side == SIDES.index(side))

    def cell_coords(self, cell=None):
        if cell is None:
            return self.vertices[self.cells]
        return self.vertices[self.cells[cell]]

    def geometry(self):
        """Gauss-point geometry of every cell (recomputed on each call)."""
        coords = self.vertices[self.cells]
        N, dN = shape_functions(GAUSS_POINTS)
        x = np.einsum("ga,cai->cgi", N, coords)
        J = np.einsum("gak,cai->cgik", dN, coords)
        detJ = np.linalg.det(J)
        if np.any(detJ <= 0.0):
            raise MeshError("nonpositive Jacobian determinant in cell "
                            f"{int(np.argwhere(detJ <= 0)[0, 0])}")
        invJ = np.linalg.inv(J)
        dNdx = np.einsum("gak,cgki->cgai", dN, invJ)
        return CellGeometry(x=x, J=J, detJ=detJ, dNdx=dNdx, N=N)

    def cell_volumes(self):
        return self.geometry().jxw.sum(axis=1)

    def cell_centers(self):
        N, _ = shape_functions(np.zeros(3))
        return np.einsum("a,cai->ci", N, self.vertices[self.cells])

    def face_area_vectors(self):
        """Outward area vectors of every (cell, local face) at the face Gauss points.

        Returns an array ``(nc, 6, 4, 3)``; summing over the Gauss axis gives the
        face area vector.
        """
        coords = self.vertices[self.cells]
        out = np.empty((self.n_cells, 6, 4, 3))
        for lf in range(6):
            xi = face_point(lf, FACE_GAUSS)
            _, dN = shape_functions(xi)
            J = np.einsum("gak,cai->cgik", dN, coords)
            normal_ref = np.zeros(3)
            normal_ref[LOCAL_FACE_AXIS[lf]] = LOCAL_FACE_SIGN[lf]
            out[:, lf] = cofactor(J) @ normal_ref
        return out

    def face_areas(self):
        """Area of every global face, integrated with the 2x2 face rule."""
        av = self.face_area_vectors()
        owner = self.face_owner
        local = self.face_local
        return np.linalg.norm(av[owner, local], axis=-1).sum(axis=-1)

    def face_centers(self):
        return self.vertices[self.faces].mean(axis=1)


def _hash_unit(i, j, k, d, seed):
    """Deterministic integer hash of a vertex index to [-1, 1) (splitmix64 finaliser)."""
    mask = (1 << 64) - 1
    x = (i * 73856093) ^ (j * 19349663) ^ (k * 83492791) ^ (d * 2654435761)
    x = (x + (seed + 1) * 0x9E3779B97F4A7C15) & mask
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & mask
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & mask
    x ^= x >> 31
    return 2.0 * (x >> 11) / float(1 << 53) - 1.0


def generate_brick(nx, ny, nz, box=((0.0, 1.0), (0.0, 1.0), (0.0, 1.0)),
                   distortion=0.0, seed=0):
    """Structured ``nx * ny * nz`` hexahedral mesh of an axis-aligned box.

    Interior vertices are shifted by ``distortion * spacing * r`` per axis with
    ``r`` in [-1, 1) drawn from a deterministic integer hash of the vertex
    index, so boundary sides stay planar and axis-aligned.
    """
    if min(nx, ny, nz) < 1:
        raise MeshError("cell counts must be >= 1")
    if not 0.0 <= distortion < 1.0:
        raise MeshError("distortion must lie in [0, 1)")
    box = tuple(tuple(float(v) for v in b) for b in box)
    n = (nx, ny, nz)
    axes = [np.linspace(box[d][0], box[d][1], n[d] + 1) for d in range(3)]
    spacing = [(box[d][1] - box[d][0]) / n[d] for d in range(3)]

    def vid(i, j, k):
        return i + (nx + 1) * (j + (ny + 1) * k)

    I, J, K = np.meshgrid(np.arange(nx + 1), np.arange(ny + 1), np.arange(nz + 1),
                          indexing="ij")
    I, J, K = (a.transpose(2, 1, 0).ravel() for a in (I, J, K))  # vid order
    vertices = np.stack([axes[0][I], axes[1][J], axes[2][K]], axis=1)
    if distortion > 0.0:
        interior = ((I > 0) & (I < nx) & (J > 0) & (J < ny) & (K > 0) & (K < nz))
        for v in np.flatnonzero(interior):
            for d in range(3):
                r = _hash_unit(int(I[v]), int(J[v]), int(K[v]), d, int(seed))
                vertices[v, d] += distortion * spacing[d] * r

    ci, cj, ck = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    ci, cj, ck = (a.transpose(2, 1, 0).ravel() for a in (ci, cj, ck))
    cells = np.stack([vid(ci + a, cj + b, ck + c) for a, b, c in
                      ((REF_VERTICES + 1) / 2).astype(int)], axis=1)

    def cid(i, j, k):
        return i + nx * (j + ny * k)

    faces, owner, neighbor, local, side = [], [], [], [], []
    cell_faces = -np.ones((nx * ny * nz, 6), dtype=int)
    cell_sign = np.zeros((nx * ny * nz, 6))
    # axis-normal faces: index along the axis runs 0..n[d]
    for d in range(3):
        lo_face, hi_face = 2 * d, 2 * d + 1
        dims = list(n)
        dims[d] += 1
        for k in range(dims[2]):
            for j in range(dims[1]):
                for i in range(dims[0]):
                    idx = [i, j, k]
                    a = idx[d]
                    lower = list(idx)
                    lower[d] = a - 1
                    upper = list(idx)
                    f = len(faces)
                    if a == 0:
                        own, nb, lf, sd = cid(*upper), -1, lo_face, 2 * d
                    elif a == n[d]:
                        own, nb, lf, sd = cid(*lower), -1, hi_face, 2 * d + 1
                    else:
                        own, nb, lf, sd = cid(*lower), cid(*upper), hi_face, -1
                    faces.append(cells[own, LOCAL_FACE_VERTICES[lf]])
                    owner.append(own)
                    neighbor.append(nb)
                    local.append(lf)
                    side.append(sd)
                    cell_faces[own, lf] = f
                    cell_sign[own, lf] = 1.0
                    if nb >= 0:
                        cell_faces[nb, lo_face] = f
                        cell_sign[nb, lo_face] = -1.0
    mesh = HexMesh(
        vertices=vertices, cells=cells, faces=np.array(faces), face_owner=np.array(owner),
        face_neighbor=np.array(neighbor), face_local=np.array(local),
        cell_faces=cell_faces, cell_face_sign=cell_sign, face_side=np.array(side),
        shape=n, box=box)
    mesh.geometry()  # rejects nonpositive Jacobians
    return mesh


def classify_boundary(mesh, rules):
    """Attach flow and mechanics markers to every boundary face.

    ``rules`` maps each of the six side names to a ``(flow, mech)`` pair with
    entries ``"dirichlet"`` or ``"neumann"``.
    """
    flow = np.zeros(mesh.n_faces, dtype=int)
    mech = np.zeros(mesh.n_faces, dtype=int)
    unknown = set(rules) - set(SIDES)
    if unknown:
        raise MeshError(f"unknown boundary side(s): {sorted(unknown)}")
    for s, name in enumerate(SIDES):
        if name not in rules:
            raise MeshError(f"boundary side {name!r} has no assignment")
        fm, mm = rules[name]
        if fm not in FLOW_MARKERS or mm not in MECH_MARKERS:
            raise MeshError(f"bad marker pair {rules[name]!r} for side {name!r}")
        ids = np.flatnonzero(mesh.face_side == s)
        flow[ids] = FLOW_MARKERS.index(fm) + 1
        mech[ids] = MECH_MARKERS.index(mm) + 1
        if mm == "dirichlet":
            axis, bound = s // 2, mesh.box[s // 2][s % 2]
            verts = np.unique(mesh.faces[ids])
            span = max(abs(b[1] - b[0]) for b in mesh.box)
            if np.any(np.abs(mesh.vertices[verts, axis] - bound) > 1e-12 * span):
                raise MeshError(
                    f"mechanics Dirichlet side {name!r} is not axis-aligned")
    return replace(mesh, flow_marker=flow, mech_marker=mech)


@dataclass(frozen=True)
class DofMap:
    """Global numbering: pressures, then face fluxes, then displacements."""

    n_cells: int
    n_faces: int
    n_vertices: int
    constrained: np.ndarray      # (3 * nv,) bool, displacement components fixed to 0
    flux_fixed: np.ndarray       # (nf,) bool, flow Neumann faces (zero flux)

    @property
    def pressure(self):
        return slice(0, self.n_cells)

    @property
    def flux(self):
        return slice(self.n_cells, self.n_cells + self.n_faces)

    @property
    def displacement(self):
        start = self.n_cells + self.n_faces
        return slice(start, start + 3 * self.n_vertices)

    @property
    def size(self):
        return self.n_cells + self.n_faces + 3 * self.n_vertices

    @property
    def free_displacement(self):
        return np.flatnonzero(~self.constrained)

    @property
    def free_flux(self):
        return np.flatnonzero(~self.flux_fixed)


def build_dofmap(mesh):
    if mesh.flow_marker is None:
        raise MeshError("mesh has no boundary markers; call classify_boundary first")
    constrained = np.zeros(3 * mesh.n_vertices, dtype=bool)
    for f in np.flatnonzero(mesh.mech_marker == 1):
        axis = mesh.face_side[f] // 2
        constrained[3 * mesh.faces[f] + axis] = True
    flux_fixed = mesh.flow_marker == 2
    return DofMap(mesh.n_cells, mesh.n_faces, mesh.n_vertices, constrained, flux_fixed)
