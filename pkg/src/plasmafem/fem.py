"""Taylor-Hood P2/P1 spaces, sesquilinear forms and essential boundary conditions.

Conventions
-----------
* Global vector dof of node ``a`` and component ``c`` is ``3*a + c``; nodes are
  the mesh vertices followed by the edges (midpoint nodes).
* Local P2 node order on a tet: the 4 vertices, then edges 01,02,03,12,13,23.
* Matrices store ``M[i, j] = form(phi_j, phi_i)``: row = test, column = trial.
  Forms are linear in the first argument and antilinear in the second.
* ``div(K v)`` uses the P2 interpolant of K on each element.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import AbsorptionMissingError, InvalidParameterError
from .mesh import GAMMA_A, GAMMA_C
from .plasma import numerical_range_bounds
from .quadrature import tet_rule, tri_rule

CHUNK = 2048


# --------------------------------------------------------------------------
# Reference P2 basis in barycentric coordinates
# --------------------------------------------------------------------------

_EDGE_PAIRS = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]
_TRI_EDGE_PAIRS = [(0, 1), (0, 2), (1, 2)]


def p2_values(lam, pairs=_EDGE_PAIRS):
    """P2 basis values at barycentric points ``lam`` (nq, d+1) -> (nq, nnodes)."""
    nv = lam.shape[1]
    vals = [lam[:, i] * (2 * lam[:, i] - 1) for i in range(nv)]
    vals += [4 * lam[:, i] * lam[:, j] for i, j in pairs]
    return np.stack(vals, axis=1)


def p2_dlam(lam, pairs=_EDGE_PAIRS):
    """Derivatives w.r.t. barycentric coordinates -> (nq, nnodes, d+1)."""
    nq, nv = lam.shape
    out = np.zeros((nq, nv + len(pairs), nv))
    for i in range(nv):
        out[:, i, i] = 4 * lam[:, i] - 1
    for k, (i, j) in enumerate(pairs):
        out[:, nv + k, i] = 4 * lam[:, j]
        out[:, nv + k, j] = 4 * lam[:, i]
    return out


def _grad_lambda(x):
    """Barycentric gradients (n, 4, 3) and volumes (n,) for tets with vertex coords x (n, 4, 3)."""
    J = np.transpose(x[:, 1:] - x[:, :1], (0, 2, 1))  # columns x1-x0, x2-x0, x3-x0
    Jinv = np.linalg.inv(J)
    g = np.empty((len(x), 4, 3))
    g[:, 1:] = Jinv
    g[:, 0] = -Jinv.sum(axis=1)
    return g, np.abs(np.linalg.det(J)) / 6.0


# --------------------------------------------------------------------------
# Space
# --------------------------------------------------------------------------

class FeSpace:
    """P2 vector (3 components per node) and P1 scalar Lagrange spaces on a mesh."""

    def __init__(self, mesh):
        self.mesh = mesh
        self.n_vertices = mesh.n_vertices
        self.edges = mesh.edges
        self.n_nodes = self.n_vertices + len(self.edges)
        self.tet_nodes = np.hstack([mesh.tets, self.n_vertices + mesh.tet_edges])
        mid = 0.5 * (mesh.vertices[self.edges[:, 0]] + mesh.vertices[self.edges[:, 1]])
        self.node_coords = np.vstack([mesh.vertices, mid])
        self.n_vector = 3 * self.n_nodes
        self.n_scalar = self.n_vertices
        self.grad_lambda, self.volumes = _grad_lambda(mesh.vertices[mesh.tets])

    @cached_property
    def vector_dofs(self):
        """(nt, 30) global vector dofs, local index 3*node + component."""
        return (3 * self.tet_nodes[:, :, None] + np.arange(3)).reshape(-1, 30)

    @property
    def scalar_dofs(self):
        return self.mesh.tets

    def edge_ids(self, a, b):
        key = np.sort(np.column_stack([a, b]), axis=1)
        view = lambda z: np.ascontiguousarray(z).view([("", z.dtype)] * 2).ravel()
        e = self.edges
        return np.searchsorted(view(e), view(key.astype(e.dtype)))

    def tri_nodes(self, tris):
        """(n, 6) P2 nodes of triangles: 3 vertices then edges 01, 02, 12."""
        tris = np.asarray(tris)
        nv = self.n_vertices
        cols = [tris[:, 0], tris[:, 1], tris[:, 2]]
        cols += [nv + self.edge_ids(tris[:, i], tris[:, j]) for i, j in _TRI_EDGE_PAIRS]
        return np.column_stack(cols)

    @cached_property
    def boundary_tri_nodes(self):
        return self.tri_nodes(self.mesh.boundary_tris)

    # interpolation and evaluation -------------------------------------------

    def interpolate(self, func):
        """Nodal P2 interpolant of a vector field -> complex vector dofs."""
        vals = np.asarray(func(self.node_coords), dtype=complex)
        return vals.reshape(-1)

    def interpolate_scalar(self, func):
        return np.asarray(func(self.mesh.vertices), dtype=complex)

    def quadrature_points(self, tets=None):
        lam, _ = tet_rule()
        tets = slice(None) if tets is None else tets
        x = self.mesh.vertices[self.mesh.tets[tets]]
        return np.einsum("qk,ekd->eqd", lam, x)

    def evaluate(self, E, tets=None):
        """(values, curls) of vector field E at tet quadrature points, each (nt, nq, 3)."""
        lam, _ = tet_rule()
        tets = np.arange(self.mesh.n_tets) if tets is None else tets
        N = p2_values(lam)
        dN = p2_dlam(lam)
        gN = np.einsum("qak,ekd->eqad", dN, self.grad_lambda[tets])
        Eloc = np.asarray(E).reshape(-1, 3)[self.tet_nodes[tets]]  # (nt, 10, 3)
        vals = np.einsum("qa,eac->eqc", N, Eloc)
        grad = np.einsum("eqak,eac->eqck", gN, Eloc)  # d E_c / d x_k
        curl = np.stack([grad[..., 2, 1] - grad[..., 1, 2],
                         grad[..., 0, 2] - grad[..., 2, 0],
                         grad[..., 1, 0] - grad[..., 0, 1]], axis=-1)
        return vals, curl

    def evaluate_scalar(self, p, tets=None):
        """(values, gradients) of a P1 scalar at quadrature points."""
        lam, _ = tet_rule()
        tets = np.arange(self.mesh.n_tets) if tets is None else tets
        ploc = np.asarray(p)[self.mesh.tets[tets]]
        return (np.einsum("qk,ek->eq", lam, ploc),
                np.einsum("ekd,ek->ed", self.grad_lambda[tets], ploc)[:, None, :]
                * np.ones((1, len(lam), 1)))

    def l2_norm_vector(self, E):
        _, w = tet_rule()
        vals, _ = self.evaluate(E)
        return float(np.sqrt(np.einsum("eqc,q,e->", np.abs(vals) ** 2, w, self.volumes)))

    def l2_error_vector(self, E, exact):
        _, w = tet_rule()
        vals, _ = self.evaluate(E)
        ex = exact(self.quadrature_points())
        return float(np.sqrt(np.einsum("eqc,q,e->", np.abs(vals - ex) ** 2, w, self.volumes)))

    def l2_norm_scalar(self, p):
        _, w = tet_rule()
        vals, _ = self.evaluate_scalar(p)
        return float(np.sqrt(np.einsum("eq,q,e->", np.abs(vals) ** 2, w, self.volumes)))

    def h1_seminorm_scalar(self, p):
        g = np.einsum("ekd,ek->ed", self.grad_lambda, np.asarray(p)[self.mesh.tets])
        return float(np.sqrt(np.einsum("ed,e->", np.abs(g) ** 2, self.volumes)))

    @cached_property
    def scalar_mass(self):
        """P1 mass matrix (exact)."""
        loc = (np.ones((4, 4)) + np.eye(4)) / 20.0
        vals = self.volumes[:, None, None] * loc
        return _scatter(self.mesh.tets, self.mesh.tets, vals, self.n_scalar, self.n_scalar)

    @cached_property
    def scalar_stiffness(self):
        vals = np.einsum("eid,ejd,e->eij", self.grad_lambda, self.grad_lambda, self.volumes)
        return _scatter(self.mesh.tets, self.mesh.tets, vals, self.n_scalar, self.n_scalar)

    @cached_property
    def vector_mass(self):
        """P2 vector mass matrix (real)."""
        lam, w = tet_rule()
        N = p2_values(lam)
        loc = np.einsum("qa,qb,q->ab", N, N, w)
        vals = np.einsum("ab,e,cd->eacbd", loc, self.volumes, np.eye(3)).reshape(-1, 30, 30)
        return _scatter(self.vector_dofs, self.vector_dofs, vals, self.n_vector, self.n_vector)

    @cached_property
    def curl_stiffness(self):
        """Real curl-curl matrix (curl phi_j, curl phi_i)."""
        return assemble_curlcurl(self)


def build_taylor_hood_space(mesh):
    return FeSpace(mesh)


def _scatter(rows, cols, vals, n, m):
    """Assemble element blocks vals (ne, r, c) at rows (ne, r), cols (ne, c)."""
    ne, r, c = vals.shape
    R = np.broadcast_to(rows[:, :, None], (ne, r, c)).ravel()
    C = np.broadcast_to(cols[:, None, :], (ne, r, c)).ravel()
    A = sp.coo_matrix((vals.ravel(), (R, C)), shape=(n, m)).tocsr()
    A.sum_duplicates()
    return A


# --------------------------------------------------------------------------
# Media and sources
# --------------------------------------------------------------------------

def _check_absorption(K, diagnostic):
    zeta = float(numerical_range_bounds(K)[0].min())
    if zeta <= 0 and not diagnostic:
        raise AbsorptionMissingError(zeta)
    return zeta


def check_augmentation(s):
    s = complex(s)
    if not (s.real > 0 and s.imag <= 0):
        raise InvalidParameterError(f"augmentation parameter s = {s} needs Re s > 0 and Im s <= 0")
    return s


@dataclass
class SourceData:
    """Volumic source f, divergence datum g, antenna current j_A or Dirichlet E_A.

    ``f`` maps points (..., 3) to complex (..., 3); ``g`` to complex (...).
    With ``j_A`` set, GammaA carries the natural (antenna) condition; otherwise
    it carries the essential condition with tangential data E_A (zero if None).
    """
    f: object = None
    g: object = None
    j_A: object = None
    E_A: object = None

    @property
    def antenna_mode(self):
        return self.j_A is not None


# --------------------------------------------------------------------------
# Assembly
# --------------------------------------------------------------------------

@dataclass
class _Basis:
    lam: np.ndarray
    w: np.ndarray
    N: np.ndarray
    dN: np.ndarray


def _basis():
    lam, w = tet_rule()
    return _Basis(lam, w, p2_values(lam), p2_dlam(lam))


def _element_data(space, medium, tets, bs, Knodes):
    """Per-chunk geometry, K at quadrature points and div(K phi) for local dofs."""
    gl = space.grad_lambda[tets]
    vol = space.volumes[tets]
    gN = np.einsum("qak,ekd->eqad", bs.dN, gl)                          # (e,q,10,3)
    xq = np.einsum("qk,ekd->eqd", bs.lam, space.mesh.vertices[space.mesh.tets[tets]])
    Kq = medium.tensor(xq)                                              # (e,q,3,3)
    Kloc = Knodes[space.tet_nodes[tets]]                                # (e,10,3,3)
    Kh = np.einsum("qa,eakd->eqkd", bs.N, Kloc)
    divKh = np.einsum("eqak,eakd->eqd", gN, Kloc)                       # sum_k d_k Kh[k,d]
    DK = (divKh[:, :, None, :] * bs.N[None, :, :, None]
          + np.einsum("eqkd,eqbk->eqbd", Kh, gN)).reshape(len(tets), len(bs.w), 30)
    wv = vol[:, None] * bs.w[None, :]
    return dict(gN=gN, xq=xq, Kq=Kq, Kh=Kh, DK=DK, wv=wv, gl=gl)


def _chunks(n):
    for start in range(0, n, CHUNK):
        yield np.arange(start, min(n, start + CHUNK))


def assemble_curlcurl(space):
    bs = _basis()
    I, J, V = [], [], []
    eye = np.eye(3)
    for tets in _chunks(space.mesh.n_tets):
        gN = np.einsum("qak,ekd->eqad", bs.dN, space.grad_lambda[tets])
        wv = space.volumes[tets][:, None] * bs.w
        G = np.einsum("eqak,eqbk,eq->eab", gN, gN, wv)
        C = (np.einsum("eab,cd->eacbd", G, eye)
             - np.einsum("eqbc,eqad,eq->eacbd", gN, gN, wv)).reshape(-1, 30, 30)
        dofs = space.vector_dofs[tets]
        I.append(np.broadcast_to(dofs[:, :, None], C.shape).ravel())
        J.append(np.broadcast_to(dofs[:, None, :], C.shape).ravel())
        V.append(C.ravel())
    n = space.n_vector
    A = sp.coo_matrix((np.concatenate(V), (np.concatenate(I), np.concatenate(J))), shape=(n, n))
    return A.tocsr()


def assemble_forms(space, medium, src=None, *, diagnostic=False, parts=None):
    """One pass over the elements building every matrix and load vector.

    Returns a dict with keys (as requested by ``parts``):
    ``A0`` (form a), ``Sdiv`` ((div K u | div K v)), ``B`` (form b), ``Bbeta``
    (form beta), ``rhs_f`` ((f|v) plus antenna term), ``rhs_g`` ((g | div K v)),
    ``rhs_scalar`` ((g|q)), and ``zeta`` (sampled at quadrature points).
    """
    parts = set(parts or ("A0", "Sdiv", "B", "Bbeta", "rhs_f", "rhs_g", "rhs_scalar"))
    src = src or SourceData()
    bs = _basis()
    k2 = (medium.omega / medium.constants.c) ** 2
    Knodes = medium.tensor(space.node_coords)
    nt = space.mesh.n_tets
    nv, ns = space.n_vector, space.n_scalar
    eye = np.eye(3)
    mats = {k: ([], [], []) for k in ("A0", "Sdiv", "B", "Bbeta") if k in parts}
    rhs_f = np.zeros(nv, complex)
    rhs_g = np.zeros(nv, complex)
    rhs_s = np.zeros(ns, complex)
    zeta = np.inf

    for tets in _chunks(nt):
        d = _element_data(space, medium, tets, bs, Knodes)
        zeta = min(zeta, _check_absorption(d["Kq"], diagnostic))
        gN, wv, DK, Kq, Kh = d["gN"], d["wv"], d["DK"], d["Kq"], d["Kh"]
        vdofs = space.vector_dofs[tets]
        sdofs = space.mesh.tets[tets]
        lam_q = bs.lam  # P1 basis values at quadrature points

        def push(key, rows, cols, vals):
            I, J, V = mats[key]
            I.append(np.broadcast_to(rows[:, :, None], vals.shape).ravel())
            J.append(np.broadcast_to(cols[:, None, :], vals.shape).ravel())
            V.append(vals.ravel())

        if "A0" in parts:
            G = np.einsum("eqak,eqbk,eq->eab", gN, gN, wv)
            C = (np.einsum("eab,cd->eacbd", G, eye)
                 - np.einsum("eqbc,eqad,eq->eacbd", gN, gN, wv))
            M = np.einsum("eqcd,qa,qb,eq->eacbd", Kq, bs.N, bs.N, wv)
            push("A0", vdofs, vdofs, (C - k2 * M).reshape(-1, 30, 30))
        if "Sdiv" in parts:
            push("Sdiv", vdofs, vdofs, np.einsum("eqj,eqi,eq->eij", DK, DK.conj(), wv))
        if "B" in parts:
            push("B", sdofs, vdofs, np.einsum("eqj,qi,eq->eij", DK, lam_q, wv))
        if "Bbeta" in parts:
            Bb = -np.einsum("eqkd,qb,eik,eq->eibd", Kh, bs.N, d["gl"], wv)
            push("Bbeta", sdofs, vdofs, Bb.reshape(-1, 4, 30))

        if src.f is not None and "rhs_f" in parts:
            fq = np.asarray(src.f(d["xq"]), dtype=complex)
            loc = np.einsum("eqc,qa,eq->eac", fq, bs.N, wv).reshape(-1, 30)
            np.add.at(rhs_f, vdofs.ravel(), loc.ravel())
        if src.g is not None:
            gq = np.asarray(src.g(d["xq"]), dtype=complex)
            if "rhs_g" in parts:
                loc = np.einsum("eq,eqi,eq->ei", gq, DK.conj(), wv)
                np.add.at(rhs_g, vdofs.ravel(), loc.ravel())
            if "rhs_scalar" in parts:
                loc = np.einsum("eq,qi,eq->ei", gq, lam_q, wv)
                np.add.at(rhs_s, sdofs.ravel(), loc.ravel())

    if src.j_A is not None and "rhs_f" in parts:
        rhs_f += antenna_load(space, medium, src.j_A)

    shapes = {"A0": (nv, nv), "Sdiv": (nv, nv), "B": (ns, nv), "Bbeta": (ns, nv)}
    out = {"zeta": zeta}
    for key, (I, J, V) in mats.items():
        A = sp.coo_matrix((np.concatenate(V), (np.concatenate(I), np.concatenate(J))),
                          shape=shapes[key]).tocsr()
        A.sum_duplicates()
        out[key] = A
    out.update(rhs_f=rhs_f, rhs_g=rhs_g, rhs_scalar=rhs_s)
    return out


def antenna_load(space, medium, j_A):
    """i w mu0 <j_A, phi_T> over GammaA triangles."""
    mesh = space.mesh
    sel = np.flatnonzero(mesh.boundary_tags == GAMMA_A)
    out = np.zeros(space.n_vector, complex)
    if len(sel) == 0:
        return out
    tris = mesh.boundary_tris[sel]
    nodes = space.boundary_tri_nodes[sel]
    lam, w = tri_rule()
    N = p2_values(lam, _TRI_EDGE_PAIRS)
    x = mesh.vertices[tris]
    cr = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
    area = 0.5 * np.linalg.norm(cr, axis=1)
    n = cr / (2 * area[:, None])
    xq = np.einsum("qk,ekd->eqd", lam, x)
    jq = np.asarray(j_A(xq), dtype=complex)
    jn = np.abs(np.einsum("eqc,ec->eq", jq, n))
    scale = np.maximum(1.0, np.abs(jq).max())
    if np.any(jn > 1e-10 * scale):
        raise InvalidParameterError(
            f"j_A has a normal component of {jn.max():.3e} on GammaA (must be tangential)")
    coef = 1j * medium.omega * medium.constants.mu0
    loc = coef * np.einsum("eqc,qa,q,e->eac", jq, N, w, area)
    dofs = (3 * nodes[:, :, None] + np.arange(3)).ravel()
    np.add.at(out, dofs, loc.ravel())
    return out


def assemble_a_s(space, medium, s, *, diagnostic=False):
    """Matrix of a_s(u, v) = (curl u|curl v) - (w/c)^2 (K u|v) + s (div K u|div K v)."""
    if s != 0:
        check_augmentation(s)
    f = assemble_forms(space, medium, diagnostic=diagnostic, parts=("A0", "Sdiv"))
    return (f["A0"] + complex(s) * f["Sdiv"]).tocsr()


def assemble_b(space, medium, *, diagnostic=False):
    """Matrix of b(v, q) = (div K v | q): shape (n_scalar, n_vector)."""
    return assemble_forms(space, medium, diagnostic=diagnostic, parts=("B",))["B"]


def assemble_beta(space, medium, *, diagnostic=False):
    """Matrix of beta(v, q) = -(K v | grad q): shape (n_scalar, n_vector)."""
    return assemble_forms(space, medium, diagnostic=diagnostic, parts=("Bbeta",))["Bbeta"]


def assemble_rhs(space, medium, src, s, *, diagnostic=False):
    """(rhs_vector, rhs_scalar): L_s(phi_i) with antenna term, and (g | q_i)."""
    if s != 0:
        check_augmentation(s)
    f = assemble_forms(space, medium, src, diagnostic=diagnostic,
                       parts=("rhs_f", "rhs_g", "rhs_scalar"))
    return f["rhs_f"] + complex(s) * f["rhs_g"], f["rhs_scalar"]


# --------------------------------------------------------------------------
# Essential boundary conditions
# --------------------------------------------------------------------------

CREASE_COS = np.cos(np.deg2rad(30.0))


def tangent_frame(n):
    """Orthonormal columns (n, t1, t2); for n = e3 this is (e3, e1, e2)."""
    n = np.asarray(n, float)
    a = np.zeros(3)
    a[np.argmin(np.abs(n))] = 1.0
    t1 = a - (a @ n) * n
    t1 /= np.linalg.norm(t1)
    t2 = np.cross(n, t1)
    return np.column_stack([n, t1, t2])


@dataclass
class DirichletPlan:
    """Constrained boundary nodes with local frames and values.

    At node ``node_ids[k]`` the field is written in the basis given by the
    columns of ``frames[k]``; local components where ``mask[k]`` is set are
    fixed to ``values[k]``.
    """
    node_ids: np.ndarray
    frames: np.ndarray
    mask: np.ndarray
    values: np.ndarray
    kind: np.ndarray  # 1: single face normal, 2: edge/corner

    @property
    def n_constrained(self):
        return int(self.mask.sum())

    def constrained_dofs(self):
        """Rotated-basis global indices 3*node + local component."""
        k, c = np.nonzero(self.mask)
        return np.sort(3 * self.node_ids[k] + c)

    def constrained_values(self):
        k, c = np.nonzero(self.mask)
        idx = 3 * self.node_ids[k] + c
        order = np.argsort(idx)
        return self.values[k, c][order]

    def rotation(self, n_vector):
        """Sparse block-diagonal orthogonal T with x = T y (y in local frames)."""
        rows, cols, vals = [], [], []
        is_rot = np.zeros(n_vector // 3, bool)
        is_rot[self.node_ids] = True
        free = np.flatnonzero(~is_rot)
        for c in range(3):
            rows.append(3 * free + c)
            cols.append(3 * free + c)
            vals.append(np.ones(len(free)))
        base = 3 * self.node_ids
        for i in range(3):
            for j in range(3):
                rows.append(base + i)
                cols.append(base + j)
                vals.append(self.frames[:, i, j])
        return sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                             shape=(n_vector, n_vector)).tocsr()

    def restrict(self, node_map):
        """Plan for a subspace whose local node i is global node node_map[i]."""
        inv = {int(g): i for i, g in enumerate(node_map)}
        keep = [k for k, g in enumerate(self.node_ids) if int(g) in inv]
        keep = np.array(keep, dtype=np.int64)
        local = np.array([inv[int(self.node_ids[k])] for k in keep], dtype=np.int64)
        order = np.argsort(local)
        keep, local = keep[order], local[order]
        return DirichletPlan(local, self.frames[keep], self.mask[keep],
                             self.values[keep], self.kind[keep])


def _node_groups(space, include_tags):
    """node -> list of [weighted normal sum, has_GammaA] clustered by crease angle."""
    mesh = space.mesh
    sel = np.flatnonzero(np.isin(mesh.boundary_tags, include_tags))
    if len(sel) == 0:
        return {}
    tris = mesh.boundary_tris[sel]
    x = mesh.vertices[tris]
    cr = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
    normals = _oriented_normals(mesh, tris, cr)  # area-weighted outward
    is_a = mesh.boundary_tags[sel] == GAMMA_A
    nodes = space.tri_nodes(tris)
    groups = {}
    for t in range(len(sel)):
        nt = normals[t]
        u = nt / np.linalg.norm(nt)
        for node in nodes[t]:
            gl = groups.setdefault(int(node), [])
            for g in gl:
                m = g[0] / np.linalg.norm(g[0])
                if m @ u > CREASE_COS:
                    g[0] = g[0] + nt
                    g[1] = g[1] or bool(is_a[t])
                    break
            else:
                gl.append([nt.copy(), bool(is_a[t])])
    return groups


def _oriented_normals(mesh, tris, cr):
    fid = mesh.face_index(tris)
    owner = np.empty(len(mesh.faces), dtype=np.int64)
    owner[mesh.tet_faces.ravel()] = np.repeat(np.arange(mesh.n_tets), 4)
    cen = mesh.vertices[mesh.tets[owner[fid]]].mean(axis=1)
    x0 = mesh.vertices[tris[:, 0]]
    flip = np.einsum("ij,ij->i", cr, x0 - cen) < 0
    cr = cr.copy()
    cr[flip] *= -1
    return 0.5 * cr


def dirichlet_plan(space, E_A=None, antenna_mode=False):
    """Essential-condition plan: E x n = E_A x n on GammaA (unless antenna mode), 0 on GammaC."""
    tags = [GAMMA_C] if antenna_mode else [GAMMA_A, GAMMA_C]
    groups = _node_groups(space, tags)
    ids = np.array(sorted(groups), dtype=np.int64)
    m = len(ids)
    frames = np.zeros((m, 3, 3))
    mask = np.zeros((m, 3), bool)
    values = np.zeros((m, 3), complex)
    kind = np.zeros(m, np.int64)
    data = None
    if E_A is not None and m:
        data = np.asarray(E_A(space.node_coords[ids]), dtype=complex).reshape(m, 3)
    for k, node in enumerate(ids):
        gl = groups[int(node)]
        if len(gl) == 1:
            n = gl[0][0] / np.linalg.norm(gl[0][0])
            T = tangent_frame(n)
            frames[k] = T
            mask[k] = (False, True, True)
            kind[k] = 1
            if data is not None and gl[0][1]:
                values[k, 1:] = T[:, 1:].T @ data[k]
        else:
            frames[k] = np.eye(3)
            mask[k] = True
            kind[k] = 2
            P = np.zeros((3, 3))
            rhs = np.zeros(3, complex)
            for nsum, has_a in gl:
                n = nsum / np.linalg.norm(nsum)
                Pk = np.eye(3) - np.outer(n, n)
                P += Pk
                if data is not None and has_a:
                    rhs += Pk @ data[k]
            values[k] = np.linalg.solve(P, rhs)
    return DirichletPlan(ids, frames, mask, values, kind)


def classify_nodes(space, antenna_mode=False):
    """Per-node class: 'interior', 'GammaA', 'GammaC' or 'edge/corner'."""
    out = np.full(space.n_nodes, "interior", dtype="<U11")
    groups = _node_groups(space, [GAMMA_A, GAMMA_C])
    for node, gl in groups.items():
        if len(gl) > 1:
            out[node] = "edge/corner"
        else:
            out[node] = GAMMA_A if gl[0][1] else GAMMA_C
    return out


# --------------------------------------------------------------------------
# Assembled system and elimination
# --------------------------------------------------------------------------

FORMULATIONS = ("plain", "augmented", "mixed_unaug", "mixed_aug")


@dataclass
class AssembledSystem:
    space: FeSpace
    medium: object
    s: complex
    A0: sp.csr_matrix
    Sdiv: sp.csr_matrix
    B: sp.csr_matrix
    Bbeta: sp.csr_matrix
    rhs_f: np.ndarray
    rhs_g: np.ndarray
    rhs_scalar: np.ndarray
    dirichlet_plan: DirichletPlan
    zeta: float
    src: SourceData = field(default_factory=SourceData)
    diagnostic: bool = False

    @property
    def A_s(self):
        return (self.A0 + self.s * self.Sdiv).tocsr()

    @property
    def rhs_vector(self):
        return self.rhs_f + self.s * self.rhs_g


def assemble_system(space, medium, src=None, s=1.0, *, diagnostic=False, plan=None):
    """Assemble every block needed by the four formulations."""
    s = check_augmentation(s)
    src = src or SourceData()
    f = assemble_forms(space, medium, src, diagnostic=diagnostic)
    if plan is None:
        plan = dirichlet_plan(space, src.E_A, antenna_mode=src.antenna_mode)
    return AssembledSystem(space=space, medium=medium, s=s, A0=f["A0"], Sdiv=f["Sdiv"],
                           B=f["B"], Bbeta=f["Bbeta"], rhs_f=f["rhs_f"], rhs_g=f["rhs_g"],
                           rhs_scalar=f["rhs_scalar"], dirichlet_plan=plan, zeta=f["zeta"],
                           src=src, diagnostic=diagnostic)


def boundary_scalar_dofs(space):
    tris = space.mesh.boundary_tris
    return np.unique(tris) if len(tris) else np.zeros(0, np.int64)


def formulation_matrix(system, formulation):
    """(matrix, rhs, n_vector) of the monolithic system before constraints."""
    nv = system.space.n_vector
    if formulation == "plain":
        return system.A0.tocsr(), system.rhs_f.copy(), nv
    if formulation == "augmented":
        return system.A_s, system.rhs_vector, nv
    if formulation == "mixed_unaug":
        A, C = system.A0, system.Bbeta
        rhs = np.concatenate([system.rhs_f, system.rhs_scalar])
    elif formulation == "mixed_aug":
        A, C = system.A_s, system.B
        rhs = np.concatenate([system.rhs_vector, system.rhs_scalar])
    else:
        raise InvalidParameterError(f"unknown formulation {formulation!r}; use one of {FORMULATIONS}")
    M = sp.bmat([[A, C.conj().T], [C, None]], format="csr")
    return M, rhs, nv


@dataclass
class ConstrainedSystem:
    """Reduced system M_ff y_f = rhs_f after rotation and elimination."""
    matrix: sp.csc_matrix
    rhs: np.ndarray
    free: np.ndarray
    fixed: np.ndarray
    fixed_values: np.ndarray
    T: sp.csr_matrix
    n_total: int
    n_vector: int

    def expand(self, y_free):
        y = np.zeros(self.n_total, complex)
        y[self.free] = y_free
        y[self.fixed] = self.fixed_values
        return self.T @ y


def apply_essential_bc(M, rhs, n_vector, plan, extra_fixed=None):
    """Rotate boundary nodes into their frames and eliminate constrained dofs.

    ``extra_fixed`` lists further (non-vector) dofs constrained to zero, e.g.
    the boundary pressure dofs of the unaugmented mixed formulation.
    """
    n = M.shape[0]
    Tv = plan.rotation(n_vector)
    T = sp.block_diag([Tv, sp.identity(n - n_vector)], format="csr") if n > n_vector else Tv
    Mr = (T.T @ M @ T).tocsr()
    br = T.T @ rhs
    fixed = plan.constrained_dofs()
    vals = plan.constrained_values()
    if extra_fixed is not None and len(extra_fixed):
        fixed = np.concatenate([fixed, np.asarray(extra_fixed)])
        vals = np.concatenate([vals, np.zeros(len(extra_fixed), complex)])
        order = np.argsort(fixed)
        fixed, vals = fixed[order], vals[order]
    is_free = np.ones(n, bool)
    is_free[fixed] = False
    free = np.flatnonzero(is_free)
    Mff = Mr[free][:, free].tocsc()
    b = br[free] - Mr[free][:, fixed] @ vals if len(fixed) else br[free]
    return ConstrainedSystem(Mff, b, free, fixed, vals, T, n, n_vector)


def constrain(system, formulation):
    M, rhs, nv = formulation_matrix(system, formulation)
    extra = None
    if formulation == "mixed_unaug":
        extra = nv + boundary_scalar_dofs(system.space)
    return apply_essential_bc(M, rhs, nv, system.dirichlet_plan, extra)


def divergence_residual(system, E):
    """||div(K E) - g||_{L2} with the interpolated-K convention."""
    space = system.space
    bs = _basis()
    Knodes = system.medium.tensor(space.node_coords)
    total = 0.0
    for tets in _chunks(space.mesh.n_tets):
        d = _element_data(space, system.medium, tets, bs, Knodes)
        Eloc = np.asarray(E)[space.vector_dofs[tets]]
        div = np.einsum("eqi,ei->eq", d["DK"], Eloc)
        if system.src.g is not None:
            div = div - np.asarray(system.src.g(d["xq"]))
        total += float(np.einsum("eq,eq->", np.abs(div) ** 2, d["wv"]))
    return float(np.sqrt(total))
