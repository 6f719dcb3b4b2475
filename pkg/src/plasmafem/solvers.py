"""Monodomain solvers: plain, augmented and the two mixed formulations.

Also the scalar K-Laplacian solver and the K-Helmholtz decomposition.
"""

import time
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import AbsorptionMissingError, InvalidParameterError, SolverError
from .fem import (FORMULATIONS, FeSpace, SourceData, _chunks,
                  assemble_system, constrain, divergence_residual, p2_dlam,
                  p2_values)
from .plasma import numerical_range_bounds
from .quadrature import tet_rule

RESIDUAL_TOL = 1e-10


# --------------------------------------------------------------------------
# Direct sparse solves
# --------------------------------------------------------------------------

class DirectSolver:
    """Sparse LU (SuperLU) with one step of iterative refinement per solve."""

    def __init__(self, matrix):
        self.matrix = sp.csc_matrix(matrix)
        t = time.perf_counter()
        try:
            self.lu = spla.splu(self.matrix)
        except RuntimeError as e:
            raise SolverError(f"sparse factorization failed: {e}") from e
        self.factor_time = time.perf_counter() - t
        self.factor_nnz = int(self.lu.L.nnz + self.lu.U.nnz)

    @property
    def shape(self):
        return self.matrix.shape

    def _lu_solve(self, b):
        if np.iscomplexobj(self.matrix.data):
            return self.lu.solve(b)
        return self.lu.solve(np.ascontiguousarray(b.real)) + 1j * self.lu.solve(
            np.ascontiguousarray(b.imag))

    def solve(self, rhs, refine=1):
        rhs = np.asarray(rhs, dtype=complex)
        x = self._lu_solve(rhs)
        for _ in range(refine):
            x = x + self._lu_solve(rhs - self.matrix @ x)
        if not np.all(np.isfinite(x)):
            raise SolverError("non-finite solution (singular factorization)")
        return x

    def relative_residual(self, x, rhs):
        nb = np.linalg.norm(rhs)
        r = np.linalg.norm(self.matrix @ x - rhs)
        return float(r / nb) if nb > 0 else float(r)


# --------------------------------------------------------------------------
# Results
# --------------------------------------------------------------------------

@dataclass
class SolveReport:
    formulation: str
    n_unknowns: int
    n_free: int
    factor_nnz: int
    factor_time: float
    solve_time: float
    refinement_steps: int
    residual_norm: float
    p_l2: float = 0.0
    p_h1: float = 0.0
    div_residual: float = 0.0

    def to_dict(self):
        return asdict(self)


@dataclass
class SolutionField:
    E: np.ndarray
    p: np.ndarray
    residual_norm: float
    formulation_tag: str
    space: FeSpace = field(repr=False)
    report: SolveReport = None


def _guard(system):
    if system.zeta <= 0 and not system.diagnostic:
        raise AbsorptionMissingError(system.zeta)


def solve(system, formulation, tol=RESIDUAL_TOL):
    """Solve an assembled system with the named formulation."""
    if formulation not in FORMULATIONS:
        raise InvalidParameterError(f"unknown formulation {formulation!r}; use one of {FORMULATIONS}")
    _guard(system)
    t0 = time.perf_counter()
    c = constrain(system, formulation)
    solver = DirectSolver(c.matrix)
    x = solver.solve(c.rhs)
    res = solver.relative_residual(x, c.rhs)
    if res > tol:
        raise SolverError(f"{formulation}: residual {res:.2e} exceeds {tol:.0e}")
    full = c.expand(x)
    space = system.space
    nv = space.n_vector
    E = full[:nv]
    p = full[nv:] if formulation.startswith("mixed") else np.zeros(space.n_scalar, complex)
    report = SolveReport(
        formulation=formulation, n_unknowns=c.n_total, n_free=len(c.free),
        factor_nnz=solver.factor_nnz, factor_time=solver.factor_time,
        solve_time=time.perf_counter() - t0, refinement_steps=1, residual_norm=res,
        p_l2=space.l2_norm_scalar(p), p_h1=float(np.hypot(space.l2_norm_scalar(p),
                                                          space.h1_seminorm_scalar(p))),
        div_residual=divergence_residual(system, E))
    return SolutionField(E=E, p=p, residual_norm=res, formulation_tag=formulation,
                         space=space, report=report)


def solve_plain(system, tol=RESIDUAL_TOL):
    """a(E, F) = l(F) for all F."""
    return solve(system, "plain", tol)


def solve_augmented(system, tol=RESIDUAL_TOL):
    """a_s(E, F) = L_s(F) for all F."""
    return solve(system, "augmented", tol)


def solve_mixed_unaugmented(system, tol=RESIDUAL_TOL):
    """Saddle system with the beta coupling; p in H^1_0."""
    return solve(system, "mixed_unaug", tol)


def solve_mixed_augmented(system, tol=RESIDUAL_TOL):
    """Saddle system with a_s and the b coupling; p in L^2."""
    return solve(system, "mixed_aug", tol)


def solve_problem(mesh_or_space, medium, src=None, formulation="mixed_aug", s=1.0,
                  diagnostic=False):
    """Assemble and solve in one call."""
    space = mesh_or_space if isinstance(mesh_or_space, FeSpace) else FeSpace(mesh_or_space)
    system = assemble_system(space, medium, src or SourceData(), s, diagnostic=diagnostic)
    return solve(system, formulation)


# --------------------------------------------------------------------------
# Scalar Lagrange machinery for the K-Laplacian
# --------------------------------------------------------------------------

class ScalarSpace:
    """Continuous P1 or P2 scalar Lagrange space sharing the FeSpace node numbering."""

    def __init__(self, space, degree=1):
        if degree not in (1, 2):
            raise InvalidParameterError("degree must be 1 or 2")
        self.space = space
        self.degree = degree
        if degree == 1:
            self.cells = space.mesh.tets
            self.n = space.n_vertices
            self.coords = space.mesh.vertices
            bnd = space.mesh.boundary_tris
        else:
            self.cells = space.tet_nodes
            self.n = space.n_nodes
            self.coords = space.node_coords
            bnd = space.boundary_tri_nodes
        self.boundary = np.unique(bnd) if len(bnd) else np.zeros(0, np.int64)
        self.interior = np.setdiff1d(np.arange(self.n), self.boundary)
        lam, w = tet_rule()
        self.w = w
        if degree == 1:
            self.N = lam
            self.dN = np.broadcast_to(np.eye(4), (len(w), 4, 4))
        else:
            self.N = p2_values(lam)
            self.dN = p2_dlam(lam)

    def gradients(self, tets):
        return np.einsum("qak,ekd->eqad", self.dN, self.space.grad_lambda[tets])

    def stiffness(self, medium, diagnostic=False):
        """A[i, j] = (K grad N_j | grad N_i) with K at quadrature points.

        The imaginary part of K may be uniformly positive or uniformly negative
        (the K* variant); the returned zeta is the bound for whichever sign holds.
        """
        sp_ = self.space
        I, J, V = [], [], []
        z_pos = z_neg = np.inf
        for tets in _chunks(sp_.mesh.n_tets):
            gN = self.gradients(tets)
            xq = sp_.quadrature_points(tets)
            K = medium.tensor(xq)
            z_pos = min(z_pos, float(numerical_range_bounds(K)[0].min()))
            z_neg = min(z_neg, float(numerical_range_bounds(
                np.conj(np.swapaxes(K, -1, -2)))[0].min()))
            wv = sp_.volumes[tets][:, None] * self.w
            loc = np.einsum("eqik,eqkl,eqjl,eq->eij", gN, K, gN, wv)
            cells = self.cells[tets]
            I.append(np.broadcast_to(cells[:, :, None], loc.shape).ravel())
            J.append(np.broadcast_to(cells[:, None, :], loc.shape).ravel())
            V.append(loc.ravel())
        A = sp.coo_matrix((np.concatenate(V), (np.concatenate(I), np.concatenate(J))),
                          shape=(self.n, self.n)).tocsr()
        zeta = max(z_pos, z_neg)
        if zeta <= 0 and not diagnostic:
            raise AbsorptionMissingError(zeta)
        return A, zeta

    def load(self, f=None, flux=None):
        """<f, psi_i> for an L2 datum f, plus -(F | grad psi_i) for f = div F."""
        sp_ = self.space
        out = np.zeros(self.n, complex)
        for tets in _chunks(sp_.mesh.n_tets):
            xq = sp_.quadrature_points(tets)
            wv = sp_.volumes[tets][:, None] * self.w
            cells = self.cells[tets]
            if f is not None:
                loc = np.einsum("eq,qa,eq->ea", np.asarray(f(xq), complex), self.N, wv)
                np.add.at(out, cells.ravel(), loc.ravel())
            if flux is not None:
                gN = self.gradients(tets)
                loc = -np.einsum("eqd,eqad,eq->ea", np.asarray(flux(xq), complex), gN, wv)
                np.add.at(out, cells.ravel(), loc.ravel())
        return out

    def evaluate(self, phi, tets=None):
        tets = np.arange(self.space.mesh.n_tets) if tets is None else tets
        loc = np.asarray(phi)[self.cells[tets]]
        return (np.einsum("qa,ea->eq", self.N, loc),
                np.einsum("eqad,ea->eqd", self.gradients(tets), loc))

    def l2_error(self, phi, exact):
        vals, _ = self.evaluate(phi)
        ex = exact(self.space.quadrature_points())
        return float(np.sqrt(np.einsum("eq,q,e->", np.abs(vals - ex) ** 2, self.w,
                                       self.space.volumes)))

    def h1_seminorm(self, phi):
        _, g = self.evaluate(phi)
        return float(np.sqrt(np.einsum("eqd,q,e->", np.abs(g) ** 2, self.w, self.space.volumes)))


@dataclass
class KLaplacianResult:
    phi: np.ndarray
    scalar_space: ScalarSpace = field(repr=False)
    zeta: float
    h1_seminorm: float
    residual_norm: float


def solve_K_laplacian(medium, space, f=None, flux=None, load=None, degree=1,
                      diagnostic=False, tol=RESIDUAL_TOL):
    """phi in H^1_0 with (K grad phi | grad psi) = <f, psi> for all psi in H^1_0.

    The datum is an L2 function ``f``, a divergence-form ``flux`` F (f = div F),
    or a precomputed ``load`` vector.
    """
    if not isinstance(space, FeSpace):
        space = FeSpace(space)
    ss = ScalarSpace(space, degree)
    A, zeta = ss.stiffness(medium, diagnostic)
    if zeta <= 0 and not diagnostic:
        raise AbsorptionMissingError(zeta)
    b = np.zeros(ss.n, complex) if load is None else np.asarray(load, complex).copy()
    if f is not None or flux is not None:
        b = b + ss.load(f, flux)
    phi = np.zeros(ss.n, complex)
    free = ss.interior
    res = 0.0
    if len(free) and np.any(b[free]):
        solver = DirectSolver(A[free][:, free])
        phi[free] = solver.solve(b[free])
        res = solver.relative_residual(phi[free], b[free])
        if res > tol:
            raise SolverError(f"K-Laplacian residual {res:.2e} exceeds {tol:.0e}")
    return KLaplacianResult(phi=phi, scalar_space=ss, zeta=zeta,
                            h1_seminorm=ss.h1_seminorm(phi), residual_norm=res)


# --------------------------------------------------------------------------
# Helmholtz decomposition u = grad(phi) + u_T with div(K u_T) = 0
# --------------------------------------------------------------------------

@dataclass
class HelmholtzResult:
    phi: np.ndarray
    u_T: np.ndarray        # element-local nodal values (n_tets, 10, 3)
    grad_phi: np.ndarray   # element-local nodal values (n_tets, 10, 3)
    u_local: np.ndarray
    residual: float        # relative weak residual of div(K u_T)
    phi_h1: float
    u_T_l2: float


def _local_nodal(space, u):
    u = np.asarray(u, dtype=complex)
    if u.ndim == 3:
        return u
    return u.reshape(-1, 3)[space.tet_nodes]


def _local_eval(space, uloc, tets):
    lam, _ = tet_rule()
    return np.einsum("qa,eac->eqc", p2_values(lam), uloc[tets])


def weak_divergence(space, ss, medium, uloc):
    """(K u | grad psi_i) for all scalar basis functions; u element-local P2."""
    out = np.zeros(ss.n, complex)
    for tets in _chunks(space.mesh.n_tets):
        xq = space.quadrature_points(tets)
        K = medium.tensor(xq)
        uq = _local_eval(space, uloc, tets)
        wv = space.volumes[tets][:, None] * ss.w
        Ku = np.einsum("eqij,eqj->eqi", K, uq)
        loc = np.einsum("eqi,eqai,eq->ea", Ku, ss.gradients(tets), wv)
        np.add.at(out, ss.cells[tets].ravel(), loc.ravel())
    return out


def helmholtz_decompose(medium, space, u, degree=1, diagnostic=False):
    """Split u = grad(phi) + u_T, phi in H^1_0, with (K u_T | grad psi) = 0 for all psi.

    ``u`` is a global P2 vector-dof array or element-local values (n_tets, 10, 3).
    """
    uloc = _local_nodal(space, u)
    ss = ScalarSpace(space, degree)
    rhs = weak_divergence(space, ss, medium, uloc)
    kl = solve_K_laplacian(medium, space, load=rhs, degree=degree, diagnostic=diagnostic)
    phi = kl.phi
    # grad(phi) at the 10 local P2 nodes of each tet
    node_bary = np.vstack([np.eye(4), 0.5 * (np.eye(4)[[0, 0, 0, 1, 1, 2]]
                                             + np.eye(4)[[1, 2, 3, 2, 3, 3]])])
    dN = np.eye(4)[None].repeat(10, 0) if degree == 1 else p2_dlam(node_bary)
    gN = np.einsum("qak,ekd->eqad", dN, space.grad_lambda)
    grad_phi = np.einsum("eqad,ea->eqd", gN, phi[ss.cells])
    u_T = uloc - grad_phi
    r = weak_divergence(space, ss, medium, u_T)[ss.interior]
    scale = np.linalg.norm(rhs[ss.interior])
    residual = float(np.linalg.norm(r) / scale) if scale > 0 else float(np.linalg.norm(r))
    _, w = tet_rule()
    uTq = _local_eval(space, u_T, np.arange(space.mesh.n_tets))
    uT_l2 = float(np.sqrt(np.einsum("eqc,q,e->", np.abs(uTq) ** 2, w, space.volumes)))
    return HelmholtzResult(phi=phi, u_T=u_T, grad_phi=grad_phi, u_local=uloc,
                           residual=residual, phi_h1=kl.h1_seminorm, u_T_l2=uT_l2)
