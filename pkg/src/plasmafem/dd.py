"""Non-overlapping decomposition of the mixed augmented problem.

Each subdomain carries its own Taylor-Hood space (interface nodes duplicated)
and its constrained saddle system K_i u_i = r_i. Continuity across the
interfaces is imposed by a real jump operator J (+1 on the higher-indexed copy,
-1 on the lower) with multiplier lambda:

    K_i u_i + J_i^T lambda = r_i,      sum_i J_i u_i = 0.

Eliminating u_i gives the interface system S lambda = d with
S = sum_i J_i K_i^{-1} J_i^T and d = sum_i J_i K_i^{-1} r_i, solved by GMRES.
"""

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import InvalidParameterError, MeshStructureError
from .fem import FeSpace, SourceData, assemble_system, constrain, dirichlet_plan, p2_values
from .krylov import GmresConfig, gmres
from .mesh import submesh
from .quadrature import tri_rule
from .solvers import DirectSolver, SolutionField, SolveReport


@dataclass
class Subdomain:
    index: int
    space: FeSpace
    node_map: np.ndarray      # local node -> global node
    vertex_map: np.ndarray    # local vertex -> global vertex
    system: object
    constrained: object
    solver: DirectSolver = None
    J: sp.csr_matrix = None   # (n_rows, n_free_local)


@dataclass
class DecomposedProblem:
    mesh: object
    partition: object
    global_space: FeSpace
    subdomains: list
    n_rows: int
    row_node: np.ndarray      # global node (vector rows) or vertex (scalar rows)
    row_comp: np.ndarray      # rotated component 0..2, or -1 for pressure rows
    row_pair: np.ndarray      # (hi, lo) subdomain pair
    plan: object
    workers: int = 1

    @property
    def J(self):
        """Jump operator over the concatenated free unknowns of all subdomains."""
        return sp.hstack([d.J for d in self.subdomains], format="csr")

    @property
    def vector_rows(self):
        return np.flatnonzero(self.row_comp >= 0)


def _local_node_map(global_space, local_space, vertex_map):
    nv = global_space.n_vertices
    e = local_space.edges
    gedges = global_space.edge_ids(vertex_map[e[:, 0]], vertex_map[e[:, 1]])
    return np.concatenate([vertex_map, nv + gedges])


def build_decomposed(mesh, partition, medium, src=None, s=1.0, diagnostic=False,
                     constrain_pressure=True, workers=1):
    """Per-subdomain mixed augmented systems plus the interface jump operator.

    ``constrain_pressure`` adds jump rows for the P1 pressure at interface
    vertices; without them the decomposed discrete problem is not the
    monodomain one (see the ledger).
    """
    src = src or SourceData()
    if src.antenna_mode:
        raise InvalidParameterError("decomposed solves support essential boundary data only")
    gspace = FeSpace(mesh)
    plan = dirichlet_plan(gspace, src.E_A)
    subs = []
    for i in range(1, partition.n_subdomains + 1):
        smesh, vmap = submesh(mesh, partition, i)
        space = FeSpace(smesh)
        nmap = _local_node_map(gspace, space, vmap)
        lplan = plan.restrict(nmap)
        system = assemble_system(space, medium, src, s, diagnostic=diagnostic, plan=lplan)
        c = constrain(system, "mixed_aug")
        subs.append(Subdomain(i, space, nmap, vmap, system, c))

    # copies of each global node / vertex
    owners = {}
    for d in subs:
        for ln, gn in enumerate(d.node_map):
            owners.setdefault(int(gn), []).append((d.index, ln))
    vowners = {}
    for d in subs:
        for lv, gv in enumerate(d.vertex_map):
            vowners.setdefault(int(gv), []).append((d.index, lv))
    iface_nodes = sorted(g for g, lst in owners.items() if len(lst) > 1)
    expected = partition.interface_nodes()
    if not np.all(np.isin(expected, iface_nodes)):
        raise MeshStructureError("nonconforming interface: interface vertex not shared")

    rows = {d.index: ([], [], []) for d in subs}  # row ids, local free positions, values
    row_node, row_comp, row_pair = [], [], []
    pos_of = {d.index: d.constrained.free for d in subs}

    def free_pos(d_index, dof):
        free = pos_of[d_index]
        k = np.searchsorted(free, dof)
        return int(k) if k < len(free) and free[k] == dof else -1

    r = 0
    for gn in iface_nodes:
        copies = sorted(owners[gn])
        for (lo, llo), (hi, lhi) in zip(copies[:-1], copies[1:]):
            for c in range(3):
                plo = free_pos(lo, 3 * llo + c)
                phi = free_pos(hi, 3 * lhi + c)
                if plo < 0 or phi < 0:
                    if (plo < 0) != (phi < 0):
                        raise MeshStructureError(f"inconsistent constraints at node {gn}")
                    continue
                rows[hi][0].append(r); rows[hi][1].append(phi); rows[hi][2].append(1.0)
                rows[lo][0].append(r); rows[lo][1].append(plo); rows[lo][2].append(-1.0)
                row_node.append(gn); row_comp.append(c); row_pair.append((hi, lo))
                r += 1
    if constrain_pressure:
        for gv in sorted(g for g, lst in vowners.items() if len(lst) > 1):
            copies = sorted(vowners[gv])
            for (lo, llo), (hi, lhi) in zip(copies[:-1], copies[1:]):
                nv_lo = subs[lo - 1].space.n_vector
                nv_hi = subs[hi - 1].space.n_vector
                plo = free_pos(lo, nv_lo + llo)
                phi = free_pos(hi, nv_hi + lhi)
                rows[hi][0].append(r); rows[hi][1].append(phi); rows[hi][2].append(1.0)
                rows[lo][0].append(r); rows[lo][1].append(plo); rows[lo][2].append(-1.0)
                row_node.append(gv); row_comp.append(-1); row_pair.append((hi, lo))
                r += 1
    for d in subs:
        ri, ci, vi = rows[d.index]
        d.J = sp.csr_matrix((vi, (ri, ci)), shape=(r, len(d.constrained.free)))
    return DecomposedProblem(mesh=mesh, partition=partition, global_space=gspace,
                             subdomains=subs, n_rows=r, row_node=np.array(row_node, np.int64),
                             row_comp=np.array(row_comp, np.int64),
                             row_pair=np.array(row_pair, np.int64).reshape(-1, 2),
                             plan=plan, workers=workers)


def factorize(problem):
    def one(d):
        if d.solver is None:
            d.solver = DirectSolver(d.constrained.matrix)
        return d
    _map(problem, one, problem.subdomains)
    return problem


def _map(problem, fn, items):
    if problem.workers > 1:
        with ThreadPoolExecutor(problem.workers) as ex:
            return list(ex.map(fn, items))
    return [fn(x) for x in items]


def _ordered_sum(parts, n):
    out = np.zeros(n, complex)
    for p in parts:
        out += p
    return out


def schur_apply(problem, lam):
    """S lambda = sum_i J_i K_i^{-1} J_i^T lambda (ordered reduction)."""
    factorize(problem)
    lam = np.asarray(lam, complex)
    parts = _map(problem, lambda d: d.J @ d.solver.solve(d.J.T @ lam), problem.subdomains)
    return _ordered_sum(parts, problem.n_rows)


def schur_rhs(problem):
    factorize(problem)
    parts = _map(problem, lambda d: d.J @ d.solver.solve(d.constrained.rhs), problem.subdomains)
    return _ordered_sum(parts, problem.n_rows)


def schur_matrix(problem):
    """Dense S by column-wise application (small problems only)."""
    n = problem.n_rows
    S = np.zeros((n, n), complex)
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        S[:, k] = schur_apply(problem, e)
    return S


class SchurOperator:
    """Callable S over cached subdomain factorizations."""

    def __init__(self, problem):
        self.problem = factorize(problem)
        self.shape = (problem.n_rows, problem.n_rows)

    def apply(self, lam):
        return schur_apply(self.problem, lam)

    __call__ = apply


def gmres_solve(operator, rhs, config=None, M=None):
    """Restarted GMRES on the interface system; returns a GmresResult."""
    return gmres(operator, rhs, config, M=M)


def diagonal_preconditioner(problem):
    """Inverse-free approximation of S^{-1}: diag(sum_i J_i K_i J_i^T)."""
    d = np.zeros(problem.n_rows, complex)
    for sub in problem.subdomains:
        Kd = sub.constrained.matrix.diagonal()
        d += (sub.J.multiply(sub.J)) @ Kd
    mag = np.abs(d)
    small = mag <= 1e-14 * mag.max() if mag.max() > 0 else np.ones_like(mag, bool)
    if small.any():
        d[small] = np.median(mag[~small]) if (~small).any() else 1.0
    return lambda v: d * v


@dataclass
class DecomposedReport:
    iterations: int
    residual: float
    history: list
    n_multipliers: int
    jump_residual: float
    factor_time: float
    solve_time: float
    subdomain_unknowns: list = field(default_factory=list)


def solve_decomposed(problem, config=None):
    """GMRES on the interface system, then back-substitution and gluing.

    Returns (SolutionField on the global space, lambda, DecomposedReport).
    """
    cfg = config or GmresConfig()
    t0 = time.perf_counter()
    factorize(problem)
    t1 = time.perf_counter()
    d = schur_rhs(problem)
    M = diagonal_preconditioner(problem) if cfg.preconditioner == "diagonal" else None
    if problem.n_rows:
        res = gmres_solve(SchurOperator(problem), d, cfg, M=M)
        lam, iters, rres, hist = res.x, res.iterations, res.residual, res.history
    else:
        lam, iters, rres, hist = np.zeros(0, complex), 0, 0.0, [0.0]

    gs = problem.global_space
    E = np.zeros(gs.n_vector, complex)
    p = np.zeros(gs.n_scalar, complex)
    jump = np.zeros(problem.n_rows, complex)
    locals_ = []
    for sub in problem.subdomains:
        u = sub.solver.solve(sub.constrained.rhs - sub.J.T @ lam)
        jump += sub.J @ u
        full = sub.constrained.expand(u)
        nv = sub.space.n_vector
        El, pl = full[:nv], full[nv:]
        E.reshape(-1, 3)[sub.node_map] = El.reshape(-1, 3)
        p[sub.vertex_map] = pl
        locals_.append((El, pl))
    einf = np.abs(E).max()
    jump_res = float(np.abs(jump).max() / einf) if einf > 0 and len(jump) else 0.0
    t2 = time.perf_counter()
    sol = SolutionField(E=E, p=p, residual_norm=rres, formulation_tag="mixed_aug", space=gs,
                        report=SolveReport(
                            formulation="mixed_aug_dd", n_unknowns=gs.n_vector + gs.n_scalar,
                            n_free=sum(len(s.constrained.free) for s in problem.subdomains),
                            factor_nnz=sum(s.solver.factor_nnz for s in problem.subdomains),
                            factor_time=t1 - t0, solve_time=t2 - t1, refinement_steps=1,
                            residual_norm=rres, p_l2=gs.l2_norm_scalar(p),
                            p_h1=float(np.hypot(gs.l2_norm_scalar(p), gs.h1_seminorm_scalar(p)))))
    sol.local_fields = locals_
    report = DecomposedReport(iterations=iters, residual=rres, history=hist,
                              n_multipliers=problem.n_rows, jump_residual=jump_res,
                              factor_time=t1 - t0, solve_time=t2 - t1,
                              subdomain_unknowns=[len(s.constrained.free)
                                                  for s in problem.subdomains])
    return sol, lam, report


# --------------------------------------------------------------------------
# Multiplier interpretation
# --------------------------------------------------------------------------

@dataclass
class MultiplierInterpretation:
    normal_ratio: float        # ||normal-direction part|| / ||tangential part||
    curl_distance: float       # dual-norm distance to the curl E trace functional
    curl_reference_norm: float
    relative_curl_distance: float
    n_nodes: int
    normal_norm: float = float("nan")       # nodal l2 norm of the K* n part
    tangential_norm: float = float("nan")   # nodal l2 norm of the tangential part


def _interface_curl_functional(problem, solution, key):
    """<n_hi x curl E_h, N_k e_c> over interface Sigma_key, averaged over both sides.

    Returns (dict global node -> 3-vector, P2 surface mass (nodes x nodes), node list).
    """
    mesh = problem.mesh
    gs = problem.global_space
    tris = problem.partition.interfaces[key]
    nodes = gs.tri_nodes(tris)
    lam, w = tri_rule()
    N = p2_values(lam, [(0, 1), (0, 2), (1, 2)])
    x = mesh.vertices[tris]
    cr = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
    area = 0.5 * np.linalg.norm(cr, axis=1)
    n = cr / (2 * area[:, None])  # outward from the higher-indexed subdomain
    xq = np.einsum("qk,ekd->eqd", lam, x)
    # curl on each side: find the two tets sharing each face
    fid = mesh.face_index(tris)
    tf = mesh.tet_faces.ravel()
    owner = np.repeat(np.arange(mesh.n_tets), 4)
    order = np.argsort(tf, kind="stable")
    first = np.searchsorted(tf[order], fid)
    t_a, t_b = owner[order][first], owner[order][first + 1]
    curl = np.zeros(xq.shape, complex)
    for t in (t_a, t_b):
        bary = _barycentric(gs, t, xq)
        curl += 0.5 * _curl_at(gs, solution.E, t, bary)
    ncurl = np.cross(n[:, None, :], curl)
    loc = np.einsum("eqc,qa,q,e->eac", ncurl, N, w, area)
    ids = np.unique(nodes)
    pos = {int(g): k for k, g in enumerate(ids)}
    F = np.zeros((len(ids), 3), complex)
    idx = np.vectorize(pos.get)(nodes)
    np.add.at(F, idx.ravel(), loc.reshape(-1, 3))
    mloc = np.einsum("qa,qb,q,e->eab", N, N, w, area)
    Ms = sp.coo_matrix((mloc.ravel(), (np.repeat(idx, 6, axis=1).ravel(),
                                       np.tile(idx, (1, 6)).ravel())),
                       shape=(len(ids), len(ids))).tocsr()
    return F, Ms, ids


def _barycentric(gs, tets, xq):
    v0 = gs.mesh.vertices[gs.mesh.tets[tets, 0]]
    l123 = np.einsum("ekd,eqd->eqk", gs.grad_lambda[tets, 1:], xq - v0[:, None, :])
    return np.concatenate([1 - l123.sum(-1, keepdims=True), l123], axis=-1)


def _curl_at(gs, E, tets, bary):
    from .fem import p2_dlam
    out = np.zeros(bary.shape[:2] + (3,), complex)
    Eloc = np.asarray(E).reshape(-1, 3)[gs.tet_nodes[tets]]
    for q in range(bary.shape[1]):
        dN = p2_dlam(bary[:, q])  # (e, 10, 4)
        gN = np.einsum("eak,ekd->ead", dN, gs.grad_lambda[tets])
        grad = np.einsum("eak,eac->eck", gN, Eloc)
        out[:, q] = np.stack([grad[:, 2, 1] - grad[:, 1, 2], grad[:, 0, 2] - grad[:, 2, 0],
                              grad[:, 1, 0] - grad[:, 0, 1]], axis=-1)
    return out


def interpret_multiplier(problem, solution, lam):
    """Split lambda into the K* n direction and the tangential plane, and compare with curl E.

    For every interface Sigma_(i,j) (i > j), rows belonging to that pair at
    nodes of that interface only are used. The normal-part ratio uses nodes
    whose three components are all free; the curl distance is the dual norm
    sqrt(d^H M^{-1} d) over free rows, M the P2 surface mass matrix.
    """
    lam = np.asarray(lam)
    medium = problem.subdomains[0].system.medium
    plan = problem.plan
    frame_of = {int(g): plan.frames[k] for k, g in enumerate(plan.node_ids)}
    num = den = 0.0
    dist2 = ref2 = 0.0
    n_nodes = 0
    vrows = problem.vector_rows
    for key in problem.partition.interfaces:
        F, Ms, ids = _interface_curl_functional(problem, solution, key)
        tris = problem.partition.interfaces[key]
        x = problem.mesh.vertices[tris]
        nrm = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
        n = nrm[0] / np.linalg.norm(nrm[0])
        # only rows of this pair at nodes of this interface
        sel = vrows[np.all(problem.row_pair[vrows] == key, axis=1)]
        sel = sel[np.isin(problem.row_node[sel], ids)]
        pos = np.searchsorted(ids, problem.row_node[sel])
        # rotated reference values at each row
        T = np.array([frame_of.get(int(g), np.eye(3)) for g in problem.row_node[sel]])
        ref = np.einsum("kji,kj->ki", T, F[pos])[np.arange(len(sel)), problem.row_comp[sel]]
        d = lam[sel] - ref
        # dual norm with the rotated mass restricted to free rows
        Mfull = sp.kron(Ms, sp.identity(3)).tocsr()
        Tb = sp.block_diag([frame_of.get(int(g), np.eye(3)) for g in ids], format="csr")
        Mrot = (Tb.T @ Mfull @ Tb).tocsr()
        dof = 3 * pos + problem.row_comp[sel]
        Mff = Mrot[dof][:, dof].tocsc()
        solver = DirectSolver(Mff)
        dist2 += float(np.real(np.vdot(d, solver.solve(d))))
        ref2 += float(np.real(np.vdot(ref, solver.solve(ref))))

        # normal / tangential split at nodes with all components free
        nodes, counts = np.unique(problem.row_node[sel], return_counts=True)
        full = nodes[(counts == 3) & ~np.isin(nodes, plan.node_ids)]
        for g in full:
            rr = sel[problem.row_node[sel] == g]
            l3 = np.zeros(3, complex)
            l3[problem.row_comp[rr]] = lam[rr]
            xg = problem.global_space.node_coords[g]
            Kstar_n = np.conj(medium.tensor(xg)).T @ n
            alpha = (l3 @ n) / (Kstar_n @ n)
            t = l3 - alpha * Kstar_n
            t = t - (t @ n) * n
            num += float(np.sum(np.abs(alpha * Kstar_n) ** 2))
            den += float(np.sum(np.abs(t) ** 2))
            n_nodes += 1
    ratio = float(np.sqrt(num / den)) if den > 0 else float("nan")
    dist = float(np.sqrt(max(dist2, 0.0)))
    refn = float(np.sqrt(max(ref2, 0.0)))
    return MultiplierInterpretation(normal_ratio=ratio, curl_distance=dist,
                                    curl_reference_norm=refn,
                                    relative_curl_distance=dist / refn if refn > 0 else float("nan"),
                                    n_nodes=n_nodes, normal_norm=float(np.sqrt(num)),
                                    tangential_norm=float(np.sqrt(den)))
