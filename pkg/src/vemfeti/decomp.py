"""Decomposition of the unit cube into N^3 box subdomains.

Two construction paths produce the same data structure: replicating a
reference subdomain mesh into every box (mirrored across shared box sides
so the traces match node for node), or partitioning one global mesh whose
cells respect the box boundaries. Subdomain matrices are kept separate
(the broken space); continuity is recovered through interface constraints.

Interface nodes are classified by how many of the N-1 internal partition
planes per axis they lie on: three planes meet at a corner node, two at an
edge node, one at a face node. The number of subdomain copies of a node
must be 8, 4, 2 respectively, which is checked.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import ConformityError, MeshError, UsageError
from .krylov import Lcg64
from .vem import assemble_full, element_stiffness, face_average

PLANE_TOL = 1e-9


@dataclass
class Subdomain:
    """One box of the decomposition with its local discrete problem.

    nodes_all : global node ids of all local vertices (Dirichlet included)
    free_mask : which of nodes_all are unknowns
    vmap      : global node ids of the free local dofs (= nodes_all[free_mask])
    K         : local stiffness over free dofs, coefficient included
    f         : local load over free dofs
    """

    box: tuple
    nodes_all: np.ndarray
    free_mask: np.ndarray
    vmap: np.ndarray
    K: sp.csr_matrix
    f: np.ndarray


@dataclass
class DecomposedProblem:
    """Broken-space description of the decomposed problem.

    Global node ids cover every vertex of the glued mesh (including the
    Dirichlet boundary); coords give their positions. int_coords/denom are
    set when the node positions live on an integer lattice, enabling exact
    interface tests.
    """

    N: int
    coords: np.ndarray
    on_dirichlet: np.ndarray
    subs: list
    rho: np.ndarray
    int_coords: np.ndarray = None
    denom: int = None
    cell_boxes: np.ndarray = None

    @property
    def num_nodes(self):
        return self.coords.shape[0]

    @property
    def num_subdomains(self):
        return len(self.subs)


def box_index(N):
    """Lexicographic list of the N^3 box coordinates."""
    return [b for b in itertools.product(range(N), repeat=3)]


def rho_const(N, value):
    if value <= 0:
        raise UsageError("coefficient must be positive, got %r" % value)
    return np.full(N**3, float(value))


def rho_checkerboard(N, r1, r2):
    """Checkerboard coefficient by box color (even coordinate sum gets r1)."""
    if r1 <= 0 or r2 <= 0:
        raise UsageError("coefficients must be positive")
    vals = np.empty(N**3)
    for ell, b in enumerate(box_index(N)):
        vals[ell] = r1 if sum(b) % 2 == 0 else r2
    return vals


# ---------------------------------------------------------------------------
# replication of a reference subdomain


def replicate(ref_mesh, N, rho, load=None):
    """Tile the unit cube with N^3 mirrored copies of the reference mesh.

    Copies in boxes with an odd coordinate are reflected along that axis,
    so two neighbouring boxes always present the same wall trace to their
    shared side and the glued mesh is conforming for any reference mesh.
    Neighbouring copies evaluate the shared-wall coordinates through the
    identical arithmetic, so deduplication needs no tolerance even for
    references read from file. The local stiffness of every copy equals
    the reference stiffness times rho/N because the discrete operator
    scales linearly under uniform scaling of the geometry and is
    invariant under reflections.
    """
    if N < 1:
        raise UsageError("subdomain count per axis must be >= 1, got %r" % N)
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (N**3,):
        raise UsageError("rho must have one value per subdomain")

    nv = ref_mesh.num_vertices
    lattice = ref_mesh.int_coords is not None and ref_mesh.lattice_denom is not None
    if lattice:
        D = ref_mesh.lattice_denom
        ic = ref_mesh.int_coords
        M = N * D
    else:
        rc = ref_mesh.vertices
        if rc.min() < -PLANE_TOL or rc.max() > 1.0 + PLANE_TOL:
            raise MeshError("reference mesh must live in the unit cube")

    gid = {}
    coords_all = []
    sub_nodes = []
    for b in box_index(N):
        if lattice:
            glob = np.empty((nv, 3), dtype=np.int64)
            for a in range(3):
                if b[a] % 2 == 0:
                    glob[:, a] = b[a] * D + ic[:, a]
                else:
                    glob[:, a] = b[a] * D + (D - ic[:, a])
        else:
            glob = np.empty((nv, 3))
            for a in range(3):
                if b[a] % 2 == 0:
                    glob[:, a] = b[a] + rc[:, a]
                else:
                    glob[:, a] = b[a] + (1.0 - rc[:, a])
        ids = np.empty(nv, dtype=np.int64)
        for v in range(nv):
            key = (glob[v, 0], glob[v, 1], glob[v, 2])
            g = gid.get(key)
            if g is None:
                g = len(coords_all)
                gid[key] = g
                coords_all.append(key)
            ids[v] = g
        sub_nodes.append(ids)

    if lattice:
        coords_int = np.array(coords_all, dtype=np.int64)
        coords = coords_int / float(M)
        on_dirichlet = ((coords_int == 0) | (coords_int == M)).any(axis=1)
    else:
        coords_int = None
        M = None
        coords = np.array(coords_all) / float(N)
        glob_c = np.array(coords_all)
        on_dirichlet = ((np.abs(glob_c) <= PLANE_TOL)
                        | (np.abs(glob_c - N) <= PLANE_TOL)).any(axis=1)

    K_ref, _ = assemble_full(ref_mesh)
    vols, centroids, _ = ref_mesh.cell_data()
    s = 1.0 / N

    subs = []
    for ell, b in enumerate(box_index(N)):
        ids = sub_nodes[ell]
        free = ~on_dirichlet[ids]
        K = (K_ref[free][:, free] * (rho[ell] * s)).tocsr()
        f_all = np.zeros(nv)
        if load is not None:
            for c in range(ref_mesh.num_cells):
                x = np.empty(3)
                for a in range(3):
                    cc = centroids[c, a]
                    x[a] = (b[a] + (cc if b[a] % 2 == 0 else 1.0 - cc)) / N
                vids = ref_mesh.cell_vertices(c)
                f_all[vids] += load(x) * vols[c] * s**3 / len(vids)
        subs.append(Subdomain(box=b, nodes_all=ids, free_mask=free,
                              vmap=ids[free], K=K, f=f_all[free]))
    return DecomposedProblem(N=N, coords=coords, on_dirichlet=on_dirichlet,
                             subs=subs, rho=rho, int_coords=coords_int, denom=M)


# ---------------------------------------------------------------------------
# partitioning of a global mesh


def partition_box(mesh, N):
    """Assign each cell to the box containing its centroid.

    Cells must respect the partition: every vertex of a cell has to lie in
    the closed box of its centroid up to a small tolerance.
    """
    if N < 1:
        raise UsageError("subdomain count per axis must be >= 1, got %r" % N)
    _, centroids, _ = mesh.cell_data()
    boxes = np.clip(np.floor(centroids * N).astype(np.int64), 0, N - 1)
    tol = PLANE_TOL
    for c in range(mesh.num_cells):
        pts = mesh.vertices[mesh.cell_vertices(c)]
        lo = boxes[c] / N - tol
        hi = (boxes[c] + 1) / N + tol
        if (pts < lo).any() or (pts > hi).any():
            raise MeshError("cell %d straddles the box partition" % c)
    return boxes


def decompose(mesh, N, rho, load=None):
    """Split a global mesh into N^3 box subdomains with broken matrices."""
    rho = np.asarray(rho, dtype=float)
    if rho.shape != (N**3,):
        raise UsageError("rho must have one value per subdomain")
    boxes = partition_box(mesh, N)
    order = {b: ell for ell, b in enumerate(box_index(N))}
    cells_of = [[] for _ in range(N**3)]
    for c in range(mesh.num_cells):
        cells_of[order[tuple(boxes[c])]].append(c)

    vols, centroids, _ = mesh.cell_data()
    on_dirichlet = mesh.boundary
    subs = []
    for ell, b in enumerate(box_index(N)):
        if not cells_of[ell]:
            raise MeshError("box %s of the partition contains no cells" % (b,))
        nodes = np.unique(np.concatenate(
            [mesh.cell_vertices(c) for c in cells_of[ell]]))
        loc = {g: i for i, g in enumerate(nodes)}
        nl = len(nodes)
        rows, cols, vals = [], [], []
        f_all = np.zeros(nl)
        for c in cells_of[ell]:
            Ke, vids = element_stiffness(mesh, c, rho[ell])
            li = np.array([loc[g] for g in vids])
            ii, jj = np.meshgrid(li, li, indexing="ij")
            rows.append(ii.ravel())
            cols.append(jj.ravel())
            vals.append(Ke.ravel())
            if load is not None:
                f_all[li] += load(centroids[c]) * vols[c] / len(vids)
        K_all = sp.coo_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
            shape=(nl, nl)).tocsr()
        free = ~on_dirichlet[nodes]
        subs.append(Subdomain(box=b, nodes_all=nodes, free_mask=free,
                              vmap=nodes[free], K=K_all[free][:, free].tocsr(),
                              f=f_all[free]))

    int_coords = None
    denom = None
    if (mesh.int_coords is not None and mesh.lattice_denom is not None
            and mesh.lattice_denom % N == 0):
        int_coords = mesh.int_coords
        denom = mesh.lattice_denom
    return DecomposedProblem(N=N, coords=mesh.vertices.copy(),
                             on_dirichlet=on_dirichlet.copy(), subs=subs,
                             rho=rho, int_coords=int_coords, denom=denom,
                             cell_boxes=boxes)


# ---------------------------------------------------------------------------
# interface classification


@dataclass
class Interface:
    """Classified interface of a decomposition.

    instances : global node -> [(subdomain, local free index)], sorted
    planes    : global node -> per-axis plane index or -1 (interface only)
    corners   : node ids on three planes
    edges     : edge key -> sorted node ids strictly inside the open segment
    faces     : face key -> sorted node ids in the open face
    An edge key is (free_axis, plane_lo, plane_hi, segment); plane_lo is the
    plane index of the smaller pinned axis. A face key is
    (axis, plane, box_p, box_q) with the transverse box coordinates in axis
    order.
    """

    instances: dict
    planes: dict
    corners: list
    edges: dict
    faces: dict


def build_instances(dec):
    """Map each global node to the subdomain copies holding it as a dof."""
    inst = {}
    for ell, sub in enumerate(dec.subs):
        for i, g in enumerate(sub.vmap):
            inst.setdefault(int(g), []).append((ell, i))
    return inst


def _node_planes(dec):
    """Per-node plane indices along each axis, -1 when not on a plane."""
    N = dec.N
    if dec.int_coords is not None:
        step = dec.denom // N
        q, r = np.divmod(dec.int_coords, step)
        planes = np.where(r == 0, q, -1)
    else:
        t = dec.coords * N
        j = np.rint(t)
        planes = np.where(np.abs(t - j) <= PLANE_TOL, j.astype(np.int64), -1)
    # walls of the cube are Dirichlet, not interface planes
    planes = np.where((planes <= 0) | (planes >= N), -1, planes)
    return planes


def _segment_of(dec, g, axis):
    """Index of the macro segment along `axis` containing node g."""
    if dec.int_coords is not None:
        step = dec.denom // dec.N
        return int(dec.int_coords[g, axis] // step)
    k = int(np.floor(dec.coords[g, axis] * dec.N))
    return min(max(k, 0), dec.N - 1)


def classify_interface(dec):
    """Classify the interface nodes and verify the sharing counts."""
    inst = build_instances(dec)
    planes = _node_planes(dec)

    corners = []
    edges = {}
    faces = {}
    plane_of = {}
    for g, copies in inst.items():
        copies.sort()
        cut = [a for a in range(3) if planes[g, a] >= 0]
        expected = 2 ** len(cut)
        if len(copies) != expected:
            raise ConformityError(
                "node %d lies on %d partition planes but has %d subdomain "
                "copies" % (g, len(cut), len(copies)))
        if not cut:
            continue
        plane_of[g] = tuple(planes[g])
        if len(cut) == 3:
            corners.append(g)
        elif len(cut) == 2:
            free_axis = ({0, 1, 2} - set(cut)).pop()
            a1, a2 = cut
            key = (free_axis, int(planes[g, a1]), int(planes[g, a2]),
                   _segment_of(dec, g, free_axis))
            edges.setdefault(key, []).append(g)
        else:
            a = cut[0]
            tr = [x for x in range(3) if x != a]
            key = (a, int(planes[g, a]), _segment_of(dec, g, tr[0]),
                   _segment_of(dec, g, tr[1]))
            faces.setdefault(key, []).append(g)
    corners.sort()
    for key in edges:
        edges[key].sort()
    for key in faces:
        faces[key].sort()
    return Interface(instances=inst, planes=plane_of, corners=corners,
                     edges=edges, faces=faces)


# ---------------------------------------------------------------------------
# primal constraint functionals


@dataclass
class Constraint:
    """A primal continuity functional: value = sum_g weights[g] * u(g).

    Raw weights may touch Dirichlet or already-primal nodes; they are
    restricted and renormalized during the change of basis.
    """

    kind: str
    key: tuple
    weights: dict


def _edge_constraint(dec, key):
    """Average over a macro edge segment by the trapezoid rule.

    Weights are computed from the node spacing along the edge, endpoints
    (corner nodes, possibly Dirichlet) included, and sum to one.
    """
    axis = key[0]
    all_nodes = _nodes_on_segment(dec, key)
    if dec.int_coords is not None:
        t = dec.int_coords[all_nodes, axis].astype(float)
    else:
        t = dec.coords[all_nodes, axis]
    order = np.argsort(t)
    all_nodes = [all_nodes[i] for i in order]
    t = t[order]
    gaps = np.diff(t)
    if (gaps <= 0).any():
        raise ConformityError("coincident nodes on macro edge %s" % (key,))
    w = np.zeros(len(t))
    w[:-1] += gaps / 2.0
    w[1:] += gaps / 2.0
    w /= t[-1] - t[0]
    return Constraint(kind="E", key=key,
                      weights={int(g): float(wi) for g, wi in zip(all_nodes, w)})


def _nodes_on_segment(dec, key):
    """Nodes of the closed macro edge segment, endpoints included."""
    axis, j1, j2, seg = key
    a1, a2 = [a for a in range(3) if a != axis]
    N = dec.N
    if dec.int_coords is not None:
        step = dec.denom // N
        ic = dec.int_coords
        on = ((ic[:, a1] == j1 * step) & (ic[:, a2] == j2 * step)
              & (ic[:, axis] >= seg * step) & (ic[:, axis] <= (seg + 1) * step))
    else:
        x = dec.coords
        on = ((np.abs(x[:, a1] * N - j1) <= PLANE_TOL)
              & (np.abs(x[:, a2] * N - j2) <= PLANE_TOL)
              & (x[:, axis] * N >= seg - PLANE_TOL)
              & (x[:, axis] * N <= seg + 1 + PLANE_TOL))
    return [int(g) for g in np.nonzero(on)[0]]


def _face_constraints_replicated(dec, ref_mesh):
    """Mean value over each macro face, aggregated from the wall faces of
    the reference mesh. The mean of the projection is used per mesh face,
    so the weights are exactly those of the discrete face averages."""
    walls = {}
    farea, _, _, _ = ref_mesh.face_data()
    if ref_mesh.int_coords is not None:
        ic = ref_mesh.int_coords.astype(float)
        denom = float(ref_mesh.lattice_denom)
    else:
        ic = ref_mesh.vertices
        denom = 1.0
    for f, loop in enumerate(ref_mesh.faces):
        for a in range(3):
            for side, val in ((0, 0.0), (1, denom)):
                if (np.abs(ic[loop, a] - val) <= PLANE_TOL * denom).all():
                    walls.setdefault((a, side), []).append(f)

    out = {}
    for ell, sub in enumerate(dec.subs):
        b = sub.box
        for a in range(3):
            j = b[a] + 1
            if j >= dec.N:
                continue
            # the wall of this copy facing plane j: high wall for an even
            # box coordinate, low wall after mirroring for an odd one
            side = 1 if b[a] % 2 == 0 else 0
            tr = [x for x in range(3) if x != a]
            key = (a, j, b[tr[0]], b[tr[1]])
            acc = out.setdefault(key, {})
            for f in walls.get((a, side), []):
                w = face_average(ref_mesh, f)
                gids = sub.nodes_all[ref_mesh.faces[f]]
                for g, wi in zip(gids, w):
                    g = int(g)
                    acc[g] = acc.get(g, 0.0) + farea[f] * wi
    cons = []
    for key in sorted(out):
        acc = out[key]
        total = sum(acc.values())
        cons.append(Constraint(kind="F", key=key,
                               weights={g: v / total for g, v in sorted(acc.items())}))
    return cons


def _face_constraints_partitioned(dec, mesh, boxes):
    """Mean value over each macro face from the interface faces of the
    global mesh (faces whose two cells live in different boxes)."""
    order = {b: ell for ell, b in enumerate(box_index(dec.N))}
    fc = mesh.face_cells()
    farea, fcent, _, _ = mesh.face_data()
    N = dec.N
    out = {}
    for f in range(mesh.num_faces):
        c0, c1 = fc[f]
        if c0 < 0 or c1 < 0:
            continue
        b0, b1 = tuple(boxes[c0]), tuple(boxes[c1])
        if b0 == b1:
            continue
        diff = [a for a in range(3) if b0[a] != b1[a]]
        if len(diff) != 1:
            raise ConformityError("face %d joins non-adjacent boxes" % f)
        a = diff[0]
        j = max(b0[a], b1[a])
        tr = [x for x in range(3) if x != a]
        p = int(np.floor(fcent[f, tr[0]] * N))
        q = int(np.floor(fcent[f, tr[1]] * N))
        key = (a, j, min(p, N - 1), min(q, N - 1))
        acc = out.setdefault(key, {})
        w = face_average(mesh, f)
        for g, wi in zip(mesh.faces[f], w):
            g = int(g)
            acc[g] = acc.get(g, 0.0) + farea[f] * wi
    cons = []
    for key in sorted(out):
        acc = out[key]
        total = sum(acc.values())
        cons.append(Constraint(kind="F", key=key,
                               weights={g: v / total for g, v in sorted(acc.items())}))
    return cons


def primal_constraints(dec, iface, variant, ref_mesh=None, mesh=None):
    """Build the raw primal constraints of a variant in processing order.

    variant is a subset of the letters V, E, F: corner values, edge
    averages, face averages. Constraints are ordered V, then E by key, then
    F by key, which is also the order of the change of basis.
    """
    variant = variant.upper()
    if not variant or set(variant) - set("VEF") or len(set(variant)) != len(variant):
        raise UsageError("unknown constraint variant %r" % variant)
    cons = []
    if "V" in variant:
        for g in iface.corners:
            cons.append(Constraint(kind="V", key=(g,), weights={g: 1.0}))
    if "E" in variant:
        for key in sorted(iface.edges):
            cons.append(_edge_constraint(dec, key))
    if "F" in variant:
        if ref_mesh is not None:
            cons.extend(_face_constraints_replicated(dec, ref_mesh))
        elif mesh is not None:
            if dec.cell_boxes is None:
                raise UsageError("face averages need the partition assignment")
            cons.extend(_face_constraints_partitioned(dec, mesh, dec.cell_boxes))
        else:
            raise UsageError("face averages need the source mesh")
    return cons


# ---------------------------------------------------------------------------
# scaling and jump operators


def scaling_weights(dec, iface, gamma=1.0):
    """Coefficient-based interface weights d(sub, node) summing to one per
    node. gamma below one half loses the robustness of the scaled jump
    operator, so it is rejected."""
    if gamma < 0.5:
        raise UsageError("scaling exponent must be >= 0.5, got %r" % gamma)
    d = {}
    for g, copies in iface.instances.items():
        if len(copies) < 2:
            continue
        vals = np.array([dec.rho[ell] ** gamma for ell, _ in copies])
        tot = vals.sum()
        for (ell, _), v in zip(copies, vals):
            d[(ell, g)] = v / tot
    return d


@dataclass
class JumpOperator:
    """Fully redundant pointwise jump rows over the dual interface nodes.

    Row r enforces u(sub_a, loc_a) - u(sub_b, loc_b) = 0; the scaled rows
    carry the coefficient weight of the other copy, which makes the scaled
    and plain rows a partition of unity across every node.
    """

    rows: list = field(default_factory=list)

    @property
    def num_rows(self):
        return len(self.rows)


def build_jump(iface, scaling, primal_nodes):
    """Jump rows at every interface node that is not primal-designated."""
    op = JumpOperator()
    for g in sorted(iface.instances):
        copies = iface.instances[g]
        if len(copies) < 2 or g in primal_nodes:
            continue
        for (la, ia), (lb, ib) in itertools.combinations(copies, 2):
            op.rows.append((la, ia, lb, ib, scaling[(la, g)], scaling[(lb, g)]))
    return op


# ---------------------------------------------------------------------------
# loads and a direct reference solve on the glued problem


def free_index(dec):
    """Global free-dof numbering: position among the non-Dirichlet nodes."""
    fidx = np.full(dec.num_nodes, -1, dtype=np.int64)
    free = ~dec.on_dirichlet
    fidx[free] = np.arange(int(free.sum()))
    return fidx


def set_random_load(dec, seed):
    """Right-hand side vector with entries uniform in [-1, 1].

    The vector lives on the global free dofs; each subdomain copy of a
    shared node receives an equal fraction so the assembled load is the
    drawn vector itself.
    """
    count = np.zeros(dec.num_nodes)
    for sub in dec.subs:
        count[sub.vmap] += 1.0
    fidx = free_index(dec)
    v = Lcg64(seed).fill(int((~dec.on_dirichlet).sum()))
    for sub in dec.subs:
        sub.f = v[fidx[sub.vmap]] / count[sub.vmap]


def glued_system(dec):
    """Assembled stiffness and load of the glued problem on the free dofs."""
    fidx = free_index(dec)
    nfree = int((~dec.on_dirichlet).sum())
    rows, cols, vals = [], [], []
    f = np.zeros(nfree)
    for sub in dec.subs:
        gi = fidx[sub.vmap]
        coo = sub.K.tocoo()
        rows.append(gi[coo.row])
        cols.append(gi[coo.col])
        vals.append(coo.data)
        np.add.at(f, gi, sub.f)
    K = sp.csr_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nfree, nfree))
    return K, f


def solve_glued(dec):
    """Sparse direct solve of the assembled glued problem.

    Returns vertex values over all global nodes, zero on the Dirichlet
    boundary, in the same layout as the iterative solver's recovery.
    """
    K, f = glued_system(dec)
    u = np.zeros(dec.num_nodes)
    u[~dec.on_dirichlet] = sp.linalg.spsolve(K.tocsc(), f)
    return u
