"""Dual-primal iterative substructuring for the decomposed problem.

Each primal constraint is turned into an explicit degree of freedom by a
local change of basis: one interface dof per constraint is redesignated to
carry the constraint value, and those designated dofs are assembled across
subdomains into a global coarse problem. The remaining (dual) interface
dofs are joined by pointwise jump constraints enforced through Lagrange
multipliers; conjugate gradients runs on the multiplier system with a
coefficient-scaled Dirichlet preconditioner.

The partially assembled operator is never formed: its inverse action is
computed from subdomain factorizations plus a dense factorization of the
coarse Schur complement.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .decomp import build_jump, classify_interface, scaling_weights
from .errors import (
    ConformityError,
    EmptyPrimalSpaceError,
    NumericalError,
    SpdError,
    UsageError,
)
from .krylov import chol_factor, pcg


@dataclass
class PrimalConstraint:
    """A restricted, normalized primal functional ready for the basis change.

    weights sum to one over free, non-designated nodes (plus the designated
    node itself); owners are the subdomains that hold every support node.
    """

    kind: str
    key: tuple
    weights: dict
    designated: int
    owners: list


def designate(dec, iface, constraints):
    """Restrict raw constraints and pick one designated dof for each.

    First pass: walking the constraints in order, drop Dirichlet and
    already-designated nodes from the support and mark the largest-weight
    node (ties to the lowest node id) as designated. Constraints whose
    support empties out are redundant and dropped. Second pass: remove all
    designated nodes of other constraints from every support, so no
    functional references another one's designated dof and the change of
    basis stays triangular-free.
    """
    free = ~dec.on_dirichlet
    primal = set()
    chosen = []
    for c in constraints:
        w = {g: v for g, v in c.weights.items() if free[g] and g not in primal}
        if not w:
            continue
        gstar = max(w, key=lambda g: (abs(w[g]), -g))
        primal.add(gstar)
        chosen.append((c, gstar))

    final = []
    for c, gstar in chosen:
        w = {g: v for g, v in c.weights.items()
             if free[g] and (g == gstar or g not in primal)}
        s = sum(w.values())
        if abs(s) < 1e-6 * max(abs(v) for v in w.values()):
            raise NumericalError(
                "support of %s constraint %s degenerated after restriction"
                % (c.kind, c.key))
        w = {g: v / s for g, v in w.items()}
        owners = None
        for g in w:
            subs_g = {ell for ell, _ in iface.instances.get(g, [])}
            owners = subs_g if owners is None else owners & subs_g
        if owners is None or len(owners) < 2:
            raise ConformityError(
                "constraint %s %s is not shared by two subdomains"
                % (c.kind, c.key))
        final.append(PrimalConstraint(kind=c.kind, key=c.key, weights=w,
                                      designated=gstar, owners=sorted(owners)))
    if not final:
        raise EmptyPrimalSpaceError(
            "no admissible primal constraints; the coarse problem is empty")
    return final


@dataclass
class SubdomainOps:
    """Per-subdomain transformed operators and factorizations."""

    T: sp.csr_matrix
    ploc: np.ndarray       # designated local dofs, aligned with pids
    pids: np.ndarray       # coarse ids of the designated dofs
    bloc: np.ndarray       # remaining local dofs
    inv_b: np.ndarray      # local dof -> position in bloc, -1 if designated
    inv_dual: np.ndarray   # local dof -> position in the dual list, -1 else
    num_dual: int
    KBB: object
    KBP: sp.csr_matrix
    AII: object
    Kdd: sp.csr_matrix
    KdI: sp.csr_matrix
    KId: sp.csr_matrix
    gB: np.ndarray


@dataclass
class FetiOperators:
    """Assembled FETI-DP operators for one decomposition and variant."""

    dec: object
    iface: object
    primal: list
    subs: list
    n_coarse: int
    S_cho: tuple
    g_Pi: np.ndarray
    jump: list             # (la, posA, lb, posB, da, db) into bloc positions
    scaling: dict

    @property
    def num_dual(self):
        return len(self.jump)


def _build_T(n, owned, loc_of):
    """Sparse change of basis u = T w for one subdomain.

    owned is a list of (constraint, coarse id); the designated row of T
    expresses the original vertex value through the constraint value and
    the other support dofs.
    """
    rows = list(range(n))
    cols = list(range(n))
    vals = [1.0] * n
    for pc, _ in owned:
        j = loc_of[pc.designated]
        cj = pc.weights[pc.designated]
        rows.append(j)
        cols.append(j)
        vals.append(1.0 / cj - 1.0)  # overrides the identity entry by summing
        for g, cg in pc.weights.items():
            if g == pc.designated:
                continue
            rows.append(j)
            cols.append(loc_of[g])
            vals.append(-cg / cj)
    T = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    return T


def prepare_operators(dec, constraints, gamma=1.0):
    """Factor all subdomain blocks and the coarse problem for a variant."""
    iface = classify_interface(dec)
    primal = designate(dec, iface, constraints)
    n_coarse = len(primal)
    scaling = scaling_weights(dec, iface, gamma=gamma)

    owned_by = [[] for _ in dec.subs]
    for cid, pc in enumerate(primal):
        for ell in pc.owners:
            owned_by[ell].append((pc, cid))

    designated_nodes = {pc.designated for pc in primal}
    interface_nodes = {g for g, copies in iface.instances.items()
                       if len(copies) >= 2}

    subs_ops = []
    S = np.zeros((n_coarse, n_coarse))
    g_Pi = np.zeros(n_coarse)
    for ell, sub in enumerate(dec.subs):
        n = len(sub.vmap)
        loc_of = {int(g): i for i, g in enumerate(sub.vmap)}
        T = _build_T(n, owned_by[ell], loc_of)
        Khat = (T.T @ sub.K @ T).tocsr()

        ploc = np.array([loc_of[pc.designated] for pc, _ in owned_by[ell]],
                        dtype=np.int64)
        pids = np.array([cid for _, cid in owned_by[ell]], dtype=np.int64)
        if len(np.unique(ploc)) != len(ploc):
            raise ConformityError(
                "two constraints designate the same dof in subdomain %d" % ell)
        mask = np.ones(n, dtype=bool)
        mask[ploc] = False
        bloc = np.nonzero(mask)[0]
        inv_b = np.full(n, -1, dtype=np.int64)
        inv_b[bloc] = np.arange(len(bloc))

        KBB = chol_factor(Khat[bloc][:, bloc])
        KBP = Khat[bloc][:, ploc].tocsr()
        KPP = Khat[ploc][:, ploc].toarray()

        if len(pids):
            X = KBB.solve(KBP.toarray())
            S_loc = KPP - KBP.T @ X
            S[np.ix_(pids, pids)] += S_loc

        gt = T.T @ sub.f
        gB = gt[bloc]
        if len(pids):
            g_Pi[pids] += gt[ploc]

        is_iface = np.array([int(g) in interface_nodes for g in sub.vmap])
        is_desig = np.array([int(g) in designated_nodes for g in sub.vmap])
        dual = np.nonzero(is_iface & ~is_desig)[0]
        interior = np.nonzero(~is_iface)[0]
        AII = chol_factor(Khat[interior][:, interior])
        Kdd = Khat[dual][:, dual].tocsr()
        KdI = Khat[dual][:, interior].tocsr()
        KId = Khat[interior][:, dual].tocsr()
        if (inv_b[dual] < 0).any():
            raise ConformityError("a dual dof was designated in subdomain %d" % ell)
        inv_dual = np.full(n, -1, dtype=np.int64)
        inv_dual[dual] = np.arange(len(dual))

        subs_ops.append(SubdomainOps(
            T=T, ploc=ploc, pids=pids, bloc=bloc, inv_b=inv_b,
            inv_dual=inv_dual, num_dual=len(dual), KBB=KBB, KBP=KBP, AII=AII,
            Kdd=Kdd, KdI=KdI, KId=KId, gB=gB))

    try:
        S_cho = sla.cho_factor(S, lower=True)
    except np.linalg.LinAlgError as exc:
        raise SpdError("coarse problem is not positive definite: %s" % exc,
                       row=-1)

    raw_jump = build_jump(iface, scaling, designated_nodes)
    jump = []
    for la, ia, lb, ib, da, db in raw_jump.rows:
        pa = subs_ops[la].inv_b[ia]
        pb = subs_ops[lb].inv_b[ib]
        qa = subs_ops[la].inv_dual[ia]
        qb = subs_ops[lb].inv_dual[ib]
        if min(pa, pb, qa, qb) < 0:
            raise ConformityError("jump row touches a designated dof")
        jump.append((la, int(pa), lb, int(pb), da, db, int(qa), int(qb)))

    return FetiOperators(dec=dec, iface=iface, primal=primal, subs=subs_ops,
                         n_coarse=n_coarse, S_cho=S_cho, g_Pi=g_Pi, jump=jump,
                         scaling=scaling)


def _solve_partial(ops, vB, vPi):
    """Apply the inverse of the partially assembled operator.

    Input and output are (list of per-subdomain vectors over bloc, coarse
    vector): eliminate the subdomain blocks, solve the coarse Schur
    complement, and back-substitute.
    """
    y1 = []
    rPi = vPi.copy()
    for so, v in zip(ops.subs, vB):
        y = so.KBB.solve(v)
        y1.append(y)
        if len(so.pids):
            rPi[so.pids] -= so.KBP.T @ y
    uPi = sla.cho_solve(ops.S_cho, rPi) if ops.n_coarse else rPi
    out = []
    for so, y in zip(ops.subs, y1):
        if len(so.pids):
            y = y - so.KBB.solve(so.KBP @ uPi[so.pids])
        out.append(y)
    return out, uPi


def _jump_apply(ops, yB):
    out = np.empty(len(ops.jump))
    for r, (la, pa, lb, pb, _, _, _, _) in enumerate(ops.jump):
        out[r] = yB[la][pa] - yB[lb][pb]
    return out


def _jump_transpose(ops, lam):
    vB = [np.zeros(len(so.bloc)) for so in ops.subs]
    for r, (la, pa, lb, pb, _, _, _, _) in enumerate(ops.jump):
        vB[la][pa] += lam[r]
        vB[lb][pb] -= lam[r]
    return vB


def apply_F(ops, lam):
    """Dual operator: jump of the partially assembled inverse of a jump."""
    vB = _jump_transpose(ops, lam)
    yB, _ = _solve_partial(ops, vB, np.zeros(ops.n_coarse))
    return _jump_apply(ops, yB)


def apply_M(ops, lam):
    """Scaled Dirichlet preconditioner.

    The scaled jump transpose lands on the dual dofs; each subdomain applies
    its transformed Schur complement (interior dofs eliminated through the
    interior factorization shared by all variants), and the scaled jump
    maps back.
    """
    w = [np.zeros(so.num_dual) for so in ops.subs]
    for r, (la, _, lb, _, da, db, qa, qb) in enumerate(ops.jump):
        w[la][qa] += db * lam[r]
        w[lb][qb] -= da * lam[r]
    y = []
    for so, wd in zip(ops.subs, w):
        if so.num_dual:
            y.append(so.Kdd @ wd - so.KdI @ so.AII.solve(so.KId @ wd))
        else:
            y.append(wd)
    out = np.empty(len(ops.jump))
    for r, (la, _, lb, _, da, db, qa, qb) in enumerate(ops.jump):
        out[r] = db * y[la][qa] - da * y[lb][qb]
    return out


def dense_feti_operators(ops, limit=4000):
    """Dense multiplier operator and preconditioner, column by column.

    Intended for small problems only (inspection, eigenvalue checks);
    refuses to build matrices beyond `limit` columns.
    """
    m = ops.num_dual
    if m > limit:
        raise UsageError("dense operators limited to %d multipliers, got %d"
                         % (limit, m))
    F = np.empty((m, m))
    M = np.empty((m, m))
    e = np.zeros(m)
    for j in range(m):
        e[j] = 1.0
        F[:, j] = apply_F(ops, e)
        M[:, j] = apply_M(ops, e)
        e[j] = 0.0
    return F, M


def recover_solution(ops, lam):
    """Primal solution from converged multipliers.

    Solves the partially assembled system with the jump forces added,
    transforms back to vertex values, and averages the interface copies
    with the scaling weights.
    """
    vB = _jump_transpose(ops, lam)
    for so, v in zip(ops.subs, vB):
        v += so.gB
    wB, wPi = _solve_partial(ops, vB, ops.g_Pi.copy())

    dec = ops.dec
    u = np.zeros(dec.num_nodes)
    done = np.zeros(dec.num_nodes, dtype=bool)
    for ell, (so, sub) in enumerate(zip(ops.subs, dec.subs)):
        n = len(sub.vmap)
        wfull = np.empty(n)
        wfull[so.bloc] = wB[ell]
        if len(so.ploc):
            wfull[so.ploc] = wPi[so.pids]
        ul = so.T @ wfull
        for i, g in enumerate(sub.vmap):
            g = int(g)
            d = ops.scaling.get((ell, g))
            if d is None:
                u[g] = ul[i]
                done[g] = True
            else:
                u[g] += d * ul[i]
                done[g] = True
    return u


@dataclass
class FetiResult:
    u: np.ndarray
    iterations: int
    converged: bool
    kappa_est: float
    num_primal: int
    num_dual: int
    resids: list


def solve_fetidp(dec, constraints, tol=1e-8, gamma=1.0, maxiter=1000):
    """Run preconditioned conjugate gradients on the multiplier system."""
    ops = prepare_operators(dec, constraints, gamma=gamma)
    yB, _ = _solve_partial(ops, [so.gB for so in ops.subs], ops.g_Pi.copy())
    rhs = -_jump_apply(ops, yB)
    report = pcg(lambda lam: apply_F(ops, lam), rhs,
                 apply_M=lambda lam: apply_M(ops, lam),
                 tol=tol, maxiter=maxiter)
    u = recover_solution(ops, report.x)
    return FetiResult(u=u, iterations=report.iterations,
                      converged=report.converged, kappa_est=report.kappa_est,
                      num_primal=ops.n_coarse, num_dual=ops.num_dual,
                      resids=report.resids)
