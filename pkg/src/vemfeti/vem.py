"""Lowest-order virtual element discretization of -div(rho grad u) = g.

Degrees of freedom are vertex values. On each face and cell the discrete
bilinear form uses the energy projection onto linear polynomials plus a
diameter-scaled stabilization acting on the projection residual; both are
computable from vertex values alone. Polynomial bases are centred at
centroids and scaled by diameters so all coefficient systems are well
conditioned, independent of the mesh size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .mesh import _face_frame


def face_projector(mesh, f):
    """Coefficient matrix of the energy projection onto linears on face f.

    Returns a (3, k) array P where row r holds the coefficients of the
    basis {1, xi, eta} (tangential coordinates centred at the face centroid
    and scaled by the face diameter) and k is the number of face vertices:
    the projection of v is sum_i v(V_i) P[:, i] in that basis. The
    projection preserves linears and matches the vertex average of v.
    """
    area, centroid, normal, diam = [a[f] for a in mesh.face_data()]
    pts = mesh.vertices[mesh.faces[f]]
    k = len(pts)
    t1, t2 = _face_frame(pts, normal)
    xi = ((pts - centroid) @ t1) / diam
    eta = ((pts - centroid) @ t2) / diam

    # edge data; loop direction is the stored orientation
    nxt = np.roll(pts, -1, axis=0)
    tang = nxt - pts
    elen = np.linalg.norm(tang, axis=1)
    # in-plane outward edge normal for the stored (counter-clockwise) loop
    enrm = np.cross(tang / elen[:, None], normal)

    G = np.zeros((3, 3))
    G[0, 0] = 1.0
    G[0, 1] = xi.mean()
    G[0, 2] = eta.mean()
    G[1, 1] = G[2, 2] = area / diam**2

    B = np.zeros((3, k))
    B[0, :] = 1.0 / k
    # int_e phi_i (grad m . n_e) by the trapezoid rule, exact for linears
    for r, t in ((1, t1), (2, t2)):
        coef = (enrm @ t) / diam * elen / 2.0
        B[r, :] += coef
        B[r, :] += np.roll(coef, 1)
    return np.linalg.solve(G, B)


def face_average(mesh, f):
    """Weights w with sum 1 such that the mean of the projection of v over
    face f equals sum_i w_i v(V_i). Cached on the mesh."""
    cache = mesh._geom.setdefault("face_avg", {})
    w = cache.get(f)
    if w is None:
        w = face_projector(mesh, f)[0]
        cache[f] = w
    return w


def element_projector(mesh, c):
    """Energy projection onto linears on cell c.

    Returns (P, vids) where vids are the cell vertex indices and P is
    (4, len(vids)): coefficients in the basis {1, X, Y, Z} with X =
    (x - centroid_x)/diam etc. Face integrals of virtual functions are
    replaced by integrals of their face projections, which keeps the
    operator computable and exact for linears.
    """
    vids = mesh.cell_vertices(c)
    pos = {v: i for i, v in enumerate(vids)}
    k = len(vids)
    vol, centroid, diam = [a[c] for a in mesh.cell_data()]
    farea, fcentroid, fnormal, _ = mesh.face_data()

    P = np.zeros((4, k))
    for f, s in zip(mesh.cells[c], mesh.cell_signs[c]):
        w = face_average(mesh, f)
        n_out = fnormal[f] * s
        cols = [pos[v] for v in mesh.faces[f]]
        contrib = farea[f] * np.outer(n_out, w)
        P[1:, cols] += contrib
    P[1:] *= diam / vol

    M = (mesh.vertices[vids] - centroid) / diam
    P[0] = 1.0 / k - (M.mean(axis=0) @ P[1:])
    return P, vids


def element_stiffness(mesh, c, rho=1.0):
    """Local stiffness matrix of cell c with constant coefficient rho.

    Consistency part from the projection, stabilization part equal to the
    cell diameter times the Euclidean product of projection residuals.
    Returns (K, vids).
    """
    P, vids = element_projector(mesh, c)
    vol, centroid, diam = [a[c] for a in mesh.cell_data()]
    Kc = (vol / diam**2) * (P[1:].T @ P[1:])
    D = np.empty((len(vids), 4))
    D[:, 0] = 1.0
    D[:, 1:] = (mesh.vertices[vids] - centroid) / diam
    R = np.eye(len(vids)) - D @ P
    Ks = diam * (R.T @ R)
    return rho * (Kc + Ks), vids


def _cell_rho(rho, nc):
    if np.isscalar(rho) or rho is None:
        return np.full(nc, 1.0 if rho is None else float(rho))
    arr = np.asarray(rho, dtype=float)
    if arr.shape != (nc,):
        raise ValueError("rho must be scalar or one value per cell")
    return arr


@dataclass
class AssembledProblem:
    """Stiffness and load of the vertex unknowns after eliminating the
    Dirichlet boundary.

    K_ff : free-free stiffness block (csr)
    K_fb : free-boundary coupling block (csr)
    f    : load vector on free vertices
    free : global indices of free vertices
    fixed: global indices of boundary vertices
    """

    K_ff: sp.csr_matrix
    K_fb: sp.csr_matrix
    f: np.ndarray
    free: np.ndarray
    fixed: np.ndarray


def assemble_full(mesh, rho=None, load=None):
    """Assemble stiffness over all vertices (no boundary conditions).

    Returns (K, f) with K in csr format. rho is a scalar or per-cell array;
    load maps a point to the source density (None means zero). The load is
    integrated with the one-point rule value(centroid) * volume, split
    evenly over the cell vertices.
    """
    nc = mesh.num_cells
    rhoc = _cell_rho(rho, nc)
    vols, centroids, _ = mesh.cell_data()
    rows, cols, vals = [], [], []
    f = np.zeros(mesh.num_vertices)
    for c in range(nc):
        K, vids = element_stiffness(mesh, c, rhoc[c])
        ii, jj = np.meshgrid(vids, vids, indexing="ij")
        rows.append(ii.ravel())
        cols.append(jj.ravel())
        vals.append(K.ravel())
        if load is not None:
            f[vids] += load(centroids[c]) * vols[c] / len(vids)
    K = sp.coo_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(mesh.num_vertices, mesh.num_vertices),
    ).tocsr()
    return K, f


def assemble(mesh, rho=None, load=None):
    """Assemble the problem with homogeneous Dirichlet data eliminated.

    The returned AssembledProblem keeps the free-boundary coupling block so
    inhomogeneous boundary values can be lifted: solve
    K_ff u_f = f - K_fb u_b.
    """
    K, f = assemble_full(mesh, rho=rho, load=load)
    fixed = np.nonzero(mesh.boundary)[0]
    free = np.nonzero(~mesh.boundary)[0]
    K_ff = K[free][:, free].tocsr()
    K_fb = K[free][:, fixed].tocsr()
    return AssembledProblem(K_ff=K_ff, K_fb=K_fb, f=f[free], free=free, fixed=fixed)


def solve_direct(mesh, rho=None, load=None, boundary_values=None):
    """Solve the discrete problem directly and return all vertex values.

    boundary_values is either None (homogeneous) or a callable evaluated at
    boundary vertex positions.
    """
    prob = assemble(mesh, rho=rho, load=load)
    u = np.zeros(mesh.num_vertices)
    rhs = prob.f.copy()
    if boundary_values is not None:
        ub = np.array([boundary_values(x) for x in mesh.vertices[prob.fixed]])
        u[prob.fixed] = ub
        rhs -= prob.K_fb @ ub
    if len(prob.free):
        u[prob.free] = spsolve(prob.K_ff.tocsc(), rhs)
    return u
