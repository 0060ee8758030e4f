"""Polyhedral meshes of the unit cube.

A mesh stores vertices, oriented polygonal faces, and cells that reference
faces with a sign: +1 means the stored face loop is counter-clockwise when
seen from outside that cell. Interior faces are shared by exactly two cells
with opposite signs. Generated meshes also carry integer lattice coordinates
(vertex = int_coords / lattice_denom) so that gluing and interface tests can
be done in exact arithmetic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.spatial.distance import pdist

from .errors import (
    ConformityError,
    DegenerateGeometryError,
    MeshError,
    ParseError,
    UnsupportedFeatureError,
)

PLANARITY_RTOL = 1e-10
DUPLICATE_RTOL = 1e-12


class PolyMesh:
    """Conforming polyhedral mesh with oriented faces.

    vertices   : (nv, 3) float array
    faces      : list of int arrays, each an oriented vertex loop
    cells      : list of int arrays of face indices
    cell_signs : list of +-1 arrays aligned with cells
    boundary   : (nv,) bool array, True for vertices on the domain boundary
    """

    def __init__(self, vertices, faces, cells, cell_signs, boundary=None,
                 int_coords=None, lattice_denom=None):
        self.vertices = np.asarray(vertices, dtype=float)
        self.faces = [np.asarray(f, dtype=np.int64) for f in faces]
        self.cells = [np.asarray(c, dtype=np.int64) for c in cells]
        self.cell_signs = [np.asarray(s, dtype=np.int64) for s in cell_signs]
        self.int_coords = None if int_coords is None else np.asarray(int_coords, dtype=np.int64)
        self.lattice_denom = lattice_denom
        self._geom = {}
        if boundary is None:
            boundary = self._boundary_from_faces()
        self.boundary = np.asarray(boundary, dtype=bool)

    @property
    def num_vertices(self):
        return self.vertices.shape[0]

    @property
    def num_faces(self):
        return len(self.faces)

    @property
    def num_cells(self):
        return len(self.cells)

    def face_cells(self):
        """(nf, 2) array of incident cells, -1 where absent."""
        key = "face_cells"
        if key not in self._geom:
            fc = np.full((self.num_faces, 2), -1, dtype=np.int64)
            for ci, (cf, cs) in enumerate(zip(self.cells, self.cell_signs)):
                for f, s in zip(cf, cs):
                    slot = 0 if s > 0 else 1
                    if fc[f, slot] != -1:
                        raise ConformityError(
                            "face %d referenced twice with sign %+d" % (f, s))
                    fc[f, slot] = ci
            self._geom[key] = fc
        return self._geom[key]

    def _boundary_from_faces(self):
        tag = np.zeros(self.vertices.shape[0], dtype=bool)
        fc = self.face_cells()
        for f, loop in enumerate(self.faces):
            if (fc[f] == -1).any():
                tag[loop] = True
        return tag

    # cached geometry -----------------------------------------------------

    def face_data(self):
        """Per-face area, centroid, unit normal and diameter."""
        if "face_area" not in self._geom:
            nf = self.num_faces
            area = np.empty(nf)
            centroid = np.empty((nf, 3))
            normal = np.empty((nf, 3))
            diam = np.empty(nf)
            for f, loop in enumerate(self.faces):
                a, c, n, d = face_geometry(self, f)
                area[f], centroid[f], normal[f], diam[f] = a, c, n, d
            self._geom["face_area"] = area
            self._geom["face_centroid"] = centroid
            self._geom["face_normal"] = normal
            self._geom["face_diam"] = diam
        g = self._geom
        return g["face_area"], g["face_centroid"], g["face_normal"], g["face_diam"]

    def cell_data(self):
        """Per-cell volume, centroid and diameter."""
        if "cell_volume" not in self._geom:
            nc = self.num_cells
            vol = np.empty(nc)
            centroid = np.empty((nc, 3))
            diam = np.empty(nc)
            for c in range(nc):
                vol[c], centroid[c], diam[c] = cell_geometry(self, c)
            self._geom["cell_volume"] = vol
            self._geom["cell_centroid"] = centroid
            self._geom["cell_diam"] = diam
        g = self._geom
        return g["cell_volume"], g["cell_centroid"], g["cell_diam"]

    def cell_vertices(self, c):
        """Sorted unique vertex indices of cell c."""
        key = "cell_verts"
        if key not in self._geom:
            self._geom[key] = [
                np.unique(np.concatenate([self.faces[f] for f in cf]))
                for cf in self.cells
            ]
        return self._geom[key][c]

    # validation ----------------------------------------------------------

    def validate(self):
        """Check structural and geometric invariants, raising on violation."""
        nv = self.num_vertices
        if not np.isfinite(self.vertices).all():
            raise MeshError("non-finite vertex coordinates")
        for f, loop in enumerate(self.faces):
            if len(loop) < 3:
                raise MeshError("face %d has fewer than 3 vertices" % f)
            if loop.min() < 0 or loop.max() >= nv:
                raise MeshError("face %d references invalid vertex" % f)
            if len(np.unique(loop)) != len(loop):
                raise MeshError("face %d repeats a vertex" % f)
        for c, cf in enumerate(self.cells):
            if len(cf) < 4:
                raise MeshError("cell %d has fewer than 4 faces" % c)
            if cf.min() < 0 or cf.max() >= self.num_faces:
                raise MeshError("cell %d references invalid face" % c)

        self._check_duplicate_vertices()

        # planarity and convexity of each face
        for f, loop in enumerate(self.faces):
            pts = self.vertices[loop]
            n = _newell_normal(pts)
            nn = np.linalg.norm(n)
            if nn == 0.0:
                raise DegenerateGeometryError("face %d has zero area" % f)
            n = n / nn
            c = pts.mean(axis=0)
            d = np.abs((pts - c) @ n)
            diam = pdist(pts).max()
            if d.max() > PLANARITY_RTOL * max(diam, 1e-300):
                raise DegenerateGeometryError(
                    "face %d nonplanar: offset %.3e over diameter %.3e"
                    % (f, d.max(), diam))
            _check_face_convex(pts, n, f, diam)

        # incidence: interior faces twice with opposite signs, boundary once
        fc = self.face_cells()
        counts = (fc >= 0).sum(axis=1)
        if (counts == 0).any():
            raise ConformityError("face %d belongs to no cell" % int(np.argmin(counts)))

        # boundary tags match incidence
        tag = self._boundary_from_faces()
        if not np.array_equal(tag, self.boundary):
            raise ConformityError("boundary tags disagree with face incidence")

        # positive volumes (cell_data raises on degenerate cells) and
        # closed cell boundaries
        area, _, normal, _ = self.face_data()
        self.cell_data()
        for c, (cf, cs) in enumerate(zip(self.cells, self.cell_signs)):
            flux = (cs[:, None] * normal[cf] * area[cf, None]).sum(axis=0)
            scale = area[cf].sum()
            if np.linalg.norm(flux) > 1e-10 * scale:
                raise ConformityError(
                    "cell %d is not closed: residual %.3e" % (c, np.linalg.norm(flux)))
        return self

    def _check_duplicate_vertices(self):
        v = self.vertices
        if v.shape[0] < 2:
            return
        span = v.max(axis=0) - v.min(axis=0)
        tol = DUPLICATE_RTOL * max(np.linalg.norm(span), 1e-300)
        order = np.lexsort((v[:, 2], v[:, 1], v[:, 0]))
        sv = v[order]
        same = np.linalg.norm(np.diff(sv, axis=0), axis=1) <= tol
        if same.any():
            k = int(np.argmax(same))
            raise ConformityError(
                "duplicate vertices %d and %d at %s"
                % (order[k], order[k + 1], sv[k]))


def _newell_normal(pts):
    """Area-weighted normal of a (possibly slightly nonplanar) loop."""
    nxt = np.roll(pts, -1, axis=0)
    return 0.5 * np.sum(np.cross(pts, nxt), axis=0)


def _check_face_convex(pts, n, f, diam):
    prev = pts - np.roll(pts, 1, axis=0)
    nxt = np.roll(pts, -1, axis=0) - pts
    turn = np.cross(prev, nxt) @ n
    if (turn < -1e-9 * diam * diam).any():
        raise UnsupportedFeatureError("face %d is not convex" % f)


# ---------------------------------------------------------------------------
# geometry queries


def face_geometry(mesh, f):
    """Return (area, centroid, unit normal, diameter) of face f.

    The polygon is fanned into triangles about the vertex average; for the
    supported (planar convex) faces this is exact.
    """
    pts = mesh.vertices[mesh.faces[f]]
    origin = pts.mean(axis=0)
    a = pts - origin
    b = np.roll(pts, -1, axis=0) - origin
    cr = np.cross(a, b)
    nraw = 0.5 * cr.sum(axis=0)
    nn = np.linalg.norm(nraw)
    if nn == 0.0:
        raise DegenerateGeometryError("face %d has zero area" % f)
    unit = nraw / nn
    tri_area = 0.5 * (cr @ unit)
    area = tri_area.sum()
    if area <= 0.0:
        raise DegenerateGeometryError("face %d area %.3e" % (f, area))
    tri_centroid = (a + b) / 3.0 + origin
    centroid = (tri_area[:, None] * tri_centroid).sum(axis=0) / area
    diam = pdist(pts).max()
    return area, centroid, unit, diam


def cell_geometry(mesh, c):
    """Return (volume, centroid, diameter) of cell c.

    Each face is fanned about its vertex average and every triangle spans a
    signed tetrahedron with the global origin; summing signed tetrahedron
    volumes and centroids is exact for closed polyhedral boundaries.
    """
    vol = 0.0
    mom = np.zeros(3)
    for f, s in zip(mesh.cells[c], mesh.cell_signs[c]):
        pts = mesh.vertices[mesh.faces[f]]
        if s < 0:
            pts = pts[::-1]
        origin = pts.mean(axis=0)
        p0 = pts
        p1 = np.roll(pts, -1, axis=0)
        v6 = np.einsum("ij,ij->i", np.cross(origin[None, :], p0), p1)
        vol += v6.sum() / 6.0
        mom += ((origin[None, :] + p0 + p1) * v6[:, None]).sum(axis=0) / 24.0
    if vol <= 0.0:
        raise DegenerateGeometryError("cell %d has volume %.3e" % (c, vol))
    centroid = mom / vol
    diam = pdist(mesh.vertices[mesh.cell_vertices(c)]).max()
    return vol, centroid, diam


# ---------------------------------------------------------------------------
# shape quality


@dataclass(frozen=True)
class MeshQuality:
    h: float
    h_min: float
    gamma_star: float


def _polygon_inradius(pts2):
    """Chebyshev inradius of a convex polygon given as 2D CCW points."""
    nxt = np.roll(pts2, -1, axis=0)
    edge = nxt - pts2
    # inward normal of edge (left side of travel direction for CCW loops)
    nrm = np.stack([-edge[:, 1], edge[:, 0]], axis=1)
    ln = np.linalg.norm(nrm, axis=1)
    nrm = nrm / ln[:, None]
    # maximize r subject to n_e . x >= n_e . p_e + r
    a_ub = np.hstack([-nrm, np.ones((len(pts2), 1))])
    b_ub = -np.einsum("ij,ij->i", nrm, pts2)
    res = linprog(c=[0.0, 0.0, -1.0], A_ub=a_ub, b_ub=b_ub,
                  bounds=[(None, None)] * 3, method="highs")
    if not res.success:
        raise DegenerateGeometryError("face inradius LP failed: %s" % res.message)
    return res.x[2]


def _cell_inradius(planes_n, planes_b):
    """Chebyshev inradius of a convex cell from outward plane data n.x <= b."""
    a_ub = np.hstack([planes_n, np.ones((len(planes_b), 1))])
    res = linprog(c=[0.0, 0.0, 0.0, -1.0], A_ub=a_ub, b_ub=planes_b,
                  bounds=[(None, None)] * 4, method="highs")
    if not res.success:
        raise DegenerateGeometryError("cell inradius LP failed: %s" % res.message)
    return res.x[3]


def _face_frame(pts, normal):
    k = int(np.argmin(np.abs(normal)))
    t1 = np.cross(normal, np.eye(3)[k])
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(normal, t1)
    return t1, t2


def _face_inradius(mesh, f):
    """Inradius of face f, cached on the mesh (orientation independent)."""
    cache = mesh._geom.setdefault("face_inradius", {})
    r = cache.get(f)
    if r is None:
        _, _, normal, _ = mesh.face_data()
        pts = mesh.vertices[mesh.faces[f]]
        t1, t2 = _face_frame(pts, normal[f])
        pts2 = np.stack([pts @ t1, pts @ t2], axis=1)
        r = _polygon_inradius(pts2)
        cache[f] = r
    return r


def cell_quality(mesh, c):
    """Shape-regularity indicator of a single cell.

    The indicator is the minimum of volume/h^3, face areas/h^2, edge
    lengths/h, face inradii/h, the cell inradius/h, and for every face the
    largest available pyramid height over h, where h is the cell diameter.
    """
    area, _, normal, _ = mesh.face_data()
    vols, _, diams = mesh.cell_data()
    vol, h = vols[c], diams[c]
    verts = mesh.vertices[mesh.cell_vertices(c)]

    terms = [vol / h**3]
    planes_n = []
    planes_b = []
    for f, s in zip(mesh.cells[c], mesh.cell_signs[c]):
        pts = mesh.vertices[mesh.faces[f]]
        n_out = normal[f] * s
        base = pts[0] @ n_out
        planes_n.append(n_out)
        planes_b.append(base)
        if ((verts @ n_out) - base).max() > 1e-9 * h:
            raise UnsupportedFeatureError("cell %d is not convex" % c)
        terms.append(area[f] / h**2)
        edges = np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)
        terms.append(edges.min() / h)
        terms.append(_face_inradius(mesh, f) / h)
        # tallest pyramid over this face whose apex is a cell vertex
        height = (base - verts @ n_out).max()
        terms.append(height / h)
    terms.append(_cell_inradius(np.asarray(planes_n), np.asarray(planes_b)) / h)
    return min(terms)


def mesh_quality(mesh):
    """Global quality summary (h, h_min, gamma_star).

    h is the largest cell diameter, h_min the smallest distance between two
    vertices of the same cell, gamma_star the worst cell_quality value.
    """
    _, _, diams = mesh.cell_data()
    hmins = []
    gammas = []
    for c in range(mesh.num_cells):
        hmins.append(pdist(mesh.vertices[mesh.cell_vertices(c)]).min())
        gammas.append(cell_quality(mesh, c))
    return MeshQuality(h=float(diams.max()), h_min=min(hmins),
                       gamma_star=min(gammas))


# ---------------------------------------------------------------------------
# construction from per-cell face loops


def _mesh_from_loops(cell_loops, denom):
    """Assemble a PolyMesh from per-cell lists of integer-coordinate loops.

    Loops must be counter-clockwise seen from outside their cell. Vertices
    and faces are deduplicated exactly on the integer lattice; a face seen
    from two cells must appear with reversed orientation the second time.
    """
    vid = {}
    coords = []
    faces = []
    face_key = {}
    face_count = []
    cells = []
    signs = []
    for loops in cell_loops:
        cf = []
        cs = []
        for loop in loops:
            ids = []
            for p in loop:
                i = vid.get(p)
                if i is None:
                    i = len(coords)
                    vid[p] = i
                    coords.append(p)
                ids.append(i)
            key = tuple(sorted(ids))
            f = face_key.get(key)
            if f is None:
                f = len(faces)
                face_key[key] = f
                faces.append(np.array(ids, dtype=np.int64))
                face_count.append(1)
                cf.append(f)
                cs.append(1)
            else:
                if face_count[f] != 1:
                    raise ConformityError("face %d shared by more than 2 cells" % f)
                if not _is_reversal(faces[f], ids):
                    raise ConformityError(
                        "face %d seen with inconsistent orientation" % f)
                face_count[f] += 1
                cf.append(f)
                cs.append(-1)
        cells.append(np.array(cf, dtype=np.int64))
        signs.append(np.array(cs, dtype=np.int64))
    ic = np.array(coords, dtype=np.int64)
    verts = ic / float(denom)
    on_wall = ((ic == 0) | (ic == denom)).any(axis=1)
    mesh = PolyMesh(verts, faces, cells, signs, boundary=on_wall,
                    int_coords=ic, lattice_denom=denom)
    return mesh


def _is_reversal(stored, ids):
    m = len(stored)
    if m != len(ids):
        return False
    rev = ids[::-1]
    start = int(np.nonzero(stored == rev[0])[0][0])
    rolled = np.roll(stored, -start)
    return bool((rolled == rev).all())


# ---------------------------------------------------------------------------
# generators


def generate_cube_grid(n):
    """Uniform n x n x n hexahedral grid of the unit cube."""
    if n < 1:
        raise MeshError("cube grid needs n >= 1, got %r" % (n,))
    cell_loops = []
    for i, j, k in itertools.product(range(n), repeat=3):
        x0, x1 = i, i + 1
        y0, y1 = j, j + 1
        z0, z1 = k, k + 1
        loops = [
            [(x0, y0, z0), (x0, y0, z1), (x0, y1, z1), (x0, y1, z0)],  # -x
            [(x1, y0, z0), (x1, y1, z0), (x1, y1, z1), (x1, y0, z1)],  # +x
            [(x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1)],  # -y
            [(x0, y1, z0), (x0, y1, z1), (x1, y1, z1), (x1, y1, z0)],  # +y
            [(x0, y0, z0), (x0, y1, z0), (x1, y1, z0), (x1, y0, z0)],  # -z
            [(x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1)],  # +z
        ]
        cell_loops.append(loops)
    return _mesh_from_loops(cell_loops, n)


_DIAG_OFFSETS = [np.array(d, dtype=np.int64)
                 for d in itertools.product((-2, 2), repeat=3)]
_AXIS_OFFSETS = [np.array(d, dtype=np.int64) * 4 for d in
                 [(1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0), (0, 0, 1), (0, 0, -1)]]


def _voronoi_cell(site, site_set, U):
    """Integer vertex loops of the Voronoi cell of `site`, clipped to [0,U]^3.

    Only bisectors of lattice neighbours within reach and nearby walls can
    be active; every true vertex of these cells has integer coordinates,
    which is checked exactly.
    """
    planes_n = []
    planes_b = []
    for a in range(3):
        if site[a] <= 4:
            e = np.zeros(3, dtype=np.int64)
            e[a] = -1
            planes_n.append(e)
            planes_b.append(0)
        if U - site[a] <= 4:
            e = np.zeros(3, dtype=np.int64)
            e[a] = 1
            planes_n.append(e)
            planes_b.append(U)
    for off in _AXIS_OFFSETS + _DIAG_OFFSETS:
        t = site + off
        if tuple(t) in site_set:
            n = off
            b = (int(t @ t) - int(site @ site)) // 2
            planes_n.append(n)
            planes_b.append(b)
    N = np.array(planes_n, dtype=np.int64)
    b = np.array(planes_b, dtype=np.int64)
    P = len(b)

    combos = np.array(list(itertools.combinations(range(P), 3)), dtype=np.int64)
    A = N[combos].astype(float)
    dets = np.linalg.det(A)
    keep = np.abs(dets) > 0.5
    combos = combos[keep]
    x = np.linalg.solve(A[keep], b[combos].astype(float)[..., None])[..., 0]
    xi = np.rint(x).astype(np.int64)
    # exact verification: solves the 3 equations and satisfies all planes
    eq = np.einsum("tij,tj->ti", N[combos], xi) == b[combos]
    feas = (xi @ N.T <= b[None, :]).all(axis=1)
    good = eq.all(axis=1) & feas
    exact_err = (~eq.all(axis=1)) & (np.abs(x - xi).max(axis=1) < 1e-6)
    if exact_err.any():
        raise MeshError("non-integer Voronoi vertex near site %s" % (site,))
    verts = sorted({tuple(v) for v in xi[good]})
    V = np.array(verts, dtype=np.int64)

    loops = []
    for p in range(P):
        on = V[(V @ N[p]) == b[p]]
        if len(on) < 3:
            continue
        loop = _order_loop(on, N[p])
        if loop is not None:
            loops.append(loop)
    return loops


def _order_loop(pts, n_out):
    """Order coplanar integer points CCW about the outward normal.

    Returns None for degenerate (zero-area) contact sets. The loop starts at
    the lexicographically smallest point so construction is reproducible.
    """
    nf = n_out.astype(float)
    nf /= np.linalg.norm(nf)
    t1, t2 = _face_frame(pts.astype(float), nf)
    ctr = pts.mean(axis=0)
    rel = pts - ctr
    ang = np.arctan2(rel @ t2, rel @ t1)
    order = np.argsort(ang)
    p = pts[order]
    # exact doubled-area vector; sign fixes orientation, zero means degenerate
    s = np.zeros(3, dtype=np.int64)
    for i in range(1, len(p) - 1):
        s += np.cross(p[i] - p[0], p[i + 1] - p[0])
    if (s == 0).all():
        return None
    if s @ n_out < 0:
        p = p[::-1]
    k = np.lexsort((p[:, 2], p[:, 1], p[:, 0]))[0]
    p = np.roll(p, -k, axis=0)
    return [tuple(v) for v in p]


def _corner_pyramids(corner, U):
    """Split the lattice cube anchored at a domain corner into 6 pyramids."""
    lo = np.array([0 if c == 0 else U - 4 for c in corner], dtype=np.int64)
    hi = lo + 4
    apex = tuple(lo + 2)
    x0, y0, z0 = lo
    x1, y1, z1 = hi
    bases = [
        [(x0, y0, z0), (x0, y0, z1), (x0, y1, z1), (x0, y1, z0)],
        [(x1, y0, z0), (x1, y1, z0), (x1, y1, z1), (x1, y0, z1)],
        [(x0, y0, z0), (x1, y0, z0), (x1, y0, z1), (x0, y0, z1)],
        [(x0, y1, z0), (x0, y1, z1), (x1, y1, z1), (x1, y1, z0)],
        [(x0, y0, z0), (x0, y1, z0), (x1, y1, z0), (x1, y0, z0)],
        [(x0, y0, z1), (x1, y0, z1), (x1, y1, z1), (x0, y1, z1)],
    ]
    cells = []
    for base in bases:
        loops = [list(base)]
        for a, bpt in zip(base, base[1:] + base[:1]):
            loops.append([bpt, a, apex])
        cells.append(loops)
    return cells


def generate_truncated_octahedra(n):
    """Body-centred tessellation of the unit cube with spacing a = 1/(2n).

    Interior cells are the truncated octahedra of the body-centred lattice;
    a one-cell layer of axis-aligned cubes lines the boundary so the mesh
    trace on every side of the cube is a uniform a x a grid, with transition
    cells (chamfered cubes) in between. For n >= 2 the eight corner cubes
    are split into six square pyramids each, which carry the lowest shape
    regularity of the family. All vertices live on the lattice of a/4, so
    the construction is exact in integer arithmetic.
    """
    if n < 1:
        raise MeshError("truncated octahedra need n >= 1, got %r" % (n,))
    m = 2 * n
    U = 8 * n
    sites = []
    for i, j, k in itertools.product(range(m), repeat=3):
        sites.append(np.array((4 * i + 2, 4 * j + 2, 4 * k + 2), dtype=np.int64))
    corner_range = range(2, m - 1)
    for i, j, k in itertools.product(corner_range, repeat=3):
        sites.append(np.array((4 * i, 4 * j, 4 * k), dtype=np.int64))
    site_set = {tuple(s) for s in sites}

    corner_sites = {tuple(np.array((4 * i + 2, 4 * j + 2, 4 * k + 2)))
                    for i, j, k in itertools.product((0, m - 1), repeat=3)}
    split_corners = m >= 4

    cell_loops = []
    for s in sites:
        if split_corners and tuple(s) in corner_sites:
            continue
        cell_loops.append(_voronoi_cell(s, site_set, U))
    if split_corners:
        for corner in itertools.product((0, 1), repeat=3):
            cell_loops.extend(_corner_pyramids(corner, U))
    return _mesh_from_loops(cell_loops, U)


# ---------------------------------------------------------------------------
# .poly3d file format


def write_polymesh(mesh, path):
    """Write a mesh in the poly3d text format (version 1)."""
    lines = ["poly3d 1",
             "%d %d %d" % (mesh.num_vertices, mesh.num_faces, mesh.num_cells)]
    for v in mesh.vertices:
        lines.append("%s %s %s" % (repr(float(v[0])), repr(float(v[1])),
                                   repr(float(v[2]))))
    for loop in mesh.faces:
        lines.append("%d %s" % (len(loop), " ".join(str(i) for i in loop)))
    for cf, cs in zip(mesh.cells, mesh.cell_signs):
        refs = " ".join(str(int(s) * (int(f) + 1)) for f, s in zip(cf, cs))
        lines.append("%d %s" % (len(cf), refs))
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_polymesh(path):
    """Read a .poly3d file, validate the mesh, and return it."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.readlines()

    tokens = []
    for lineno, line in enumerate(raw, start=1):
        body = line.split("#", 1)[0].strip()
        if body:
            tokens.append((lineno, body))
    if not tokens:
        raise ParseError("empty file", line=1)

    pos = 0

    def take():
        nonlocal pos
        if pos >= len(tokens):
            raise ParseError("unexpected end of file", line=tokens[-1][0])
        t = tokens[pos]
        pos += 1
        return t

    lineno, header = take()
    if header.split() != ["poly3d", "1"]:
        raise ParseError("expected header 'poly3d 1', got %r" % header, line=lineno)
    lineno, counts = take()
    parts = counts.split()
    if len(parts) != 3:
        raise ParseError("expected '<nv> <nf> <nc>'", line=lineno)
    try:
        nv, nf, nc = (int(p) for p in parts)
    except ValueError:
        raise ParseError("counts must be integers", line=lineno)
    if min(nv, nf, nc) <= 0:
        raise ParseError("counts must be positive", line=lineno)

    verts = np.empty((nv, 3))
    for i in range(nv):
        lineno, body = take()
        parts = body.split()
        if len(parts) != 3:
            raise ParseError("vertex %d needs 3 coordinates" % i, line=lineno)
        try:
            verts[i] = [float(p) for p in parts]
        except ValueError:
            raise ParseError("bad vertex coordinate in %r" % body, line=lineno)

    faces = []
    for f in range(nf):
        lineno, body = take()
        parts = body.split()
        try:
            vals = [int(p) for p in parts]
        except ValueError:
            raise ParseError("bad face index in %r" % body, line=lineno)
        if not vals or len(vals) != vals[0] + 1:
            raise ParseError("face %d length mismatch" % f, line=lineno)
        loop = vals[1:]
        if any(i < 0 or i >= nv for i in loop):
            raise ParseError("face %d vertex index out of range" % f, line=lineno)
        faces.append(np.array(loop, dtype=np.int64))

    cells = []
    signs = []
    for c in range(nc):
        lineno, body = take()
        parts = body.split()
        try:
            vals = [int(p) for p in parts]
        except ValueError:
            raise ParseError("bad cell face reference in %r" % body, line=lineno)
        if not vals or len(vals) != vals[0] + 1:
            raise ParseError("cell %d length mismatch" % c, line=lineno)
        refs = vals[1:]
        if any(r == 0 or abs(r) > nf for r in refs):
            raise ParseError("cell %d face reference out of range" % c, line=lineno)
        cells.append(np.array([abs(r) - 1 for r in refs], dtype=np.int64))
        signs.append(np.array([1 if r > 0 else -1 for r in refs], dtype=np.int64))
    if pos != len(tokens):
        raise ParseError("trailing data", line=tokens[pos][0])

    mesh = PolyMesh(verts, faces, cells, signs)
    mesh.validate()
    return mesh
