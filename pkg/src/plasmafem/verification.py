"""Manufactured solutions, convergence studies, inf-sup probes and spectral reports."""

import csv
import io
import itertools
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import SizeGuardError, UnsupportedGeometryError
from .fem import (FeSpace, SourceData, assemble_forms, assemble_system,
                  dirichlet_plan)
from .mesh import unit_cube_mesh
from .plasma import (PlasmaEnvironment, numerical_range_bounds, response_tensor,
                     tensor_eigenvalues, tensor_gradient)
from .quadrature import tet_rule
from .solvers import DirectSolver, solve

PI = np.pi
CURL_RICH_AMPLITUDES = (1.0 + 0.5j, -0.7 + 0.2j, 0.4 - 0.9j)


# --------------------------------------------------------------------------
# Manufactured solutions on the unit cube
# --------------------------------------------------------------------------

def _trig(x):
    s = np.sin(PI * x)
    c = np.cos(PI * x)
    return s, c


def _C(x):
    """(cos sin sin, sin cos sin, sin sin cos) of pi x."""
    sx, cx = _trig(x[..., 0])
    sy, cy = _trig(x[..., 1])
    sz, cz = _trig(x[..., 2])
    return np.stack([cx * sy * sz, sx * cy * sz, sx * sy * cz], axis=-1)


def _dC(x):
    """Jacobian dC_j/dx_k, shape (..., 3, 3)."""
    sx, cx = _trig(x[..., 0])
    sy, cy = _trig(x[..., 1])
    sz, cz = _trig(x[..., 2])
    s, c = (sx, sy, sz), (cx, cy, cz)
    out = np.empty(x.shape[:-1] + (3, 3))
    for j in range(3):
        for k in range(3):
            fac = []
            for m in range(3):
                if m == k:
                    fac.append(-PI * s[m] if m == j else PI * c[m])
                else:
                    fac.append(c[m] if m == j else s[m])
            out[..., j, k] = fac[0] * fac[1] * fac[2]
    return out


@dataclass
class MmsCase:
    """Smooth exact field with zero tangential trace on the unit cube and its data."""
    medium: object
    variant: str
    amplitudes: np.ndarray
    fd_step: float = 1e-4

    @property
    def k2(self):
        return (self.medium.omega / self.medium.constants.c) ** 2

    def E_exact(self, x):
        return np.asarray(self.amplitudes) * _C(np.asarray(x, float))

    def grad_E(self, x):
        """dE_j/dx_k, (..., 3, 3)."""
        return np.asarray(self.amplitudes)[:, None] * _dC(np.asarray(x, float))

    def curl_exact(self, x):
        g = self.grad_E(x)
        return np.stack([g[..., 2, 1] - g[..., 1, 2], g[..., 0, 2] - g[..., 2, 0],
                         g[..., 1, 0] - g[..., 0, 1]], axis=-1)

    def curlcurl_exact(self, x):
        # curl curl E = grad div E - lap E, with lap E = -3 pi^2 E
        a = np.asarray(self.amplitudes)
        C = _C(np.asarray(x, float))
        return PI**2 * (3 * a - a.sum()) * C

    def f(self, x):
        x = np.asarray(x, float)
        K = self.medium.tensor(x)
        return self.curlcurl_exact(x) - self.k2 * np.einsum("...ij,...j->...i", K, self.E_exact(x))

    def g(self, x):
        """div(K E) = sum_k d_k K_kj E_j + K_kj d_k E_j."""
        x = np.asarray(x, float)
        K = self.medium.tensor(x)
        dK = tensor_gradient(self.medium, x, self.fd_step)  # [..., k, i, j]
        divK = np.einsum("...kkj->...j", dK)
        return (np.einsum("...j,...j->...", divK, self.E_exact(x))
                + np.einsum("...kj,...jk->...", K, self.grad_E(x)))

    @property
    def source(self):
        return SourceData(f=self.f, g=self.g)


def is_unit_cube(mesh, tol=1e-12):
    v = mesh.vertices
    if not (np.allclose(v.min(0), 0, atol=tol) and np.allclose(v.max(0), 1, atol=tol)):
        return False
    if abs(mesh.volumes.sum() - 1.0) > 1e-10:
        return False
    bv = mesh.vertices[np.unique(mesh.boundary_tris)]
    on_face = np.any((np.abs(bv) < tol) | (np.abs(bv - 1) < tol), axis=1)
    return bool(on_face.all())


def make_mms_case(medium, variant="curl-rich", mesh=None, amplitudes=None):
    """Gradient-type (grad of sin sin sin) or curl-rich manufactured case."""
    if mesh is not None and not is_unit_cube(mesh):
        raise UnsupportedGeometryError("manufactured cases are defined on the unit cube only")
    if variant == "gradient-type":
        amp = np.full(3, PI, dtype=complex)
    elif variant == "curl-rich":
        amp = np.asarray(amplitudes if amplitudes is not None else CURL_RICH_AMPLITUDES, complex)
        if len(set(amp.tolist())) != 3:
            raise ValueError("curl-rich amplitudes must be distinct")
    else:
        raise ValueError(f"unknown variant {variant!r}; use 'gradient-type' or 'curl-rich'")
    return MmsCase(medium=medium, variant=variant, amplitudes=amp)


# --------------------------------------------------------------------------
# Convergence studies
# --------------------------------------------------------------------------

@dataclass
class ConvergenceRow:
    n: int
    h: float
    n_dofs: int
    l2_error: float
    p_l2: float
    div_residual: float
    order: float = float("nan")


@dataclass
class ConvergenceTable:
    formulation: str
    variant: str
    rows: list = field(default_factory=list)

    def orders(self):
        return [r.order for r in self.rows[1:]]

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "h", "n_dofs", "l2_error", "p_l2", "div_residual", "order"])
        for r in self.rows:
            w.writerow([r.n, repr(r.h), r.n_dofs, repr(r.l2_error), repr(r.p_l2),
                        repr(r.div_residual), repr(r.order)])
        return buf.getvalue()

    def to_text(self):
        lines = [f"{self.formulation} / {self.variant}",
                 f"{'n':>4} {'h':>10} {'dofs':>8} {'L2 error':>11} {'|p|L2':>11} "
                 f"{'div res':>11} {'order':>6}"]
        for r in self.rows:
            lines.append(f"{r.n:4d} {r.h:10.4e} {r.n_dofs:8d} {r.l2_error:11.4e} "
                         f"{r.p_l2:11.4e} {r.div_residual:11.4e} {r.order:6.2f}")
        return "\n".join(lines)


def _append_row(table, row):
    if table.rows:
        prev = table.rows[-1]
        row.order = float(np.log(prev.l2_error / row.l2_error) / np.log(prev.h / row.h))
    table.rows.append(row)


def run_convergence(case, formulation="mixed_aug", levels=(2, 4, 8), s=1.0):
    """Solve the manufactured case on unit-cube meshes with n = levels cells per side.

    Returns the table for ``formulation`` (a name or a sequence of names; a
    sequence returns a dict of tables sharing one assembly per level).
    """
    forms = [formulation] if isinstance(formulation, str) else list(formulation)
    tables = {f: ConvergenceTable(f, case.variant) for f in forms}
    for n in levels:
        mesh = unit_cube_mesh(n)
        space = FeSpace(mesh)
        system = assemble_system(space, case.medium, case.source, s)
        for f in forms:
            sol = solve(system, f)
            err = space.l2_error_vector(sol.E, case.E_exact)
            _append_row(tables[f], ConvergenceRow(
                n=n, h=mesh.h, n_dofs=space.n_vector, l2_error=err,
                p_l2=sol.report.p_l2, div_residual=sol.report.div_residual))
    return tables[formulation] if isinstance(formulation, str) else tables


@dataclass
class EquivalenceReport:
    errors: dict
    distances: dict

    @property
    def max_distance(self):
        return max(self.distances.values())

    @property
    def max_error(self):
        return max(self.errors.values())


def compare_formulations(case, n, s=1.0, formulations=("plain", "augmented", "mixed_unaug",
                                                       "mixed_aug")):
    """L2 errors of each formulation and pairwise L2 distances between their fields."""
    mesh = unit_cube_mesh(n)
    space = FeSpace(mesh)
    system = assemble_system(space, case.medium, case.source, s)
    fields = {f: solve(system, f).E for f in formulations}
    errors = {f: space.l2_error_vector(E, case.E_exact) for f, E in fields.items()}
    dist = {(a, b): space.l2_norm_vector(fields[a] - fields[b])
            for a, b in itertools.combinations(formulations, 2)}
    return EquivalenceReport(errors=errors, distances=dist)


# --------------------------------------------------------------------------
# Discrete inf-sup
# --------------------------------------------------------------------------

MAX_DENSE_DIM = 4000


def _free_vector_basis(space):
    """Rotation T and free rotated dofs for fields with zero tangential trace."""
    plan = dirichlet_plan(space)
    T = plan.rotation(space.n_vector)
    fixed = plan.constrained_dofs()
    free = np.setdiff1d(np.arange(space.n_vector), fixed)
    return T, free


def check_discrete_infsup(space, medium, which="b", diagnostic=False, max_dim=MAX_DENSE_DIM,
                          return_vector=False):
    """Smallest generalized singular value of the coupling form.

    ``which='beta'``: inf over q in P1 cap H^1_0 (H^1 norm) of sup over v with
    zero tangential trace (H(curl) norm) of |beta(v, q)|.
    ``which='b'``: inf over q in P1 (L2 norm) of sup over v (X norm:
    L2 + curl + div K) of |b(v, q)|.
    """
    if which not in ("b", "beta"):
        raise ValueError("which must be 'b' or 'beta'")
    parts = ("Bbeta",) if which == "beta" else ("B", "Sdiv")
    f = assemble_forms(space, medium, diagnostic=diagnostic, parts=parts)
    T, vfree = _free_vector_basis(space)
    MV = space.vector_mass + space.curl_stiffness
    if which == "b":
        MV = MV + f["Sdiv"]
        Bm = f["B"]
        qdofs = np.arange(space.n_scalar)
        MQ = space.scalar_mass
    else:
        Bm = f["Bbeta"]
        bnd = np.unique(space.mesh.boundary_tris)
        qdofs = np.setdiff1d(np.arange(space.n_scalar), bnd)
        MQ = space.scalar_mass + space.scalar_stiffness
    nq = len(qdofs)
    if nq > max_dim:
        raise SizeGuardError(f"dense inf-sup needs a {nq}x{nq} eigenproblem (limit {max_dim})")
    if nq == 0:
        raise SizeGuardError("no pressure dofs: mesh too coarse")
    MV = (T.T @ MV @ T).tocsr()[vfree][:, vfree]
    Bm = (Bm @ T).tocsr()[qdofs][:, vfree]
    MQ = MQ.tocsr()[qdofs][:, qdofs].toarray()
    lu = DirectSolver(MV)
    BH = Bm.conj().T.tocsc()
    S = np.zeros((nq, nq), complex)
    for start in range(0, nq, 256):
        cols = slice(start, min(nq, start + 256))
        X = lu.solve(BH[:, cols].toarray(), refine=0)
        S[:, cols] = Bm @ X
    S = 0.5 * (S + S.conj().T)
    lam, vec = sla.eigh(S, MQ, subset_by_index=[0, 0])
    value = float(np.sqrt(max(lam[0], 0.0)))
    if return_vector:
        q = np.zeros(space.n_scalar, complex)
        q[qdofs] = vec[:, 0]
        return value, q
    return value


def infsup_proof_bound(space, medium, q=None, diagnostic=False):
    """Quotient |b(v, q)| / (||v||_X ||q||) for the candidate v = grad(phi), Delta_K phi = q.

    phi is the discrete P2 K-Laplacian solution and grad(phi) is averaged into
    the P2 vector space. For a fixed q this bounds sup_v |b(v, q)|/||v|| from
    below; at the minimising q of check_discrete_infsup it is therefore at most
    the dense inf-sup value.
    """
    from .solvers import ScalarSpace, solve_K_laplacian  # noqa: deferred, avoids a cycle
    rng = np.random.default_rng(0)
    if q is None:
        q = rng.standard_normal(space.n_scalar) + 1j * rng.standard_normal(space.n_scalar)
    # load -<q, psi> for P2 test functions psi, q the P1 field
    ss2 = ScalarSpace(space, 2)
    qq = np.einsum("qk,ek->eq", tet_rule()[0], q[space.mesh.tets])
    wv = space.volumes[:, None] * ss2.w
    loc = -np.einsum("eq,qa,eq->ea", qq, ss2.N, wv)
    load = np.zeros(ss2.n, complex)
    np.add.at(load, ss2.cells.ravel(), loc.ravel())
    kl = solve_K_laplacian(medium, space, f=None, load=load, degree=2, diagnostic=diagnostic)
    phi = kl.phi  # P2 scalar, zero on the boundary
    # grad of a P2 scalar is P1 per element; interpolate nodally (averaging) into P2 vectors
    ss = kl.scalar_space
    node_bary = np.vstack([np.eye(4), 0.5 * (np.eye(4)[[0, 0, 0, 1, 1, 2]]
                                             + np.eye(4)[[1, 2, 3, 2, 3, 3]])])
    from .fem import p2_dlam
    gN = np.einsum("qak,ekd->eqad", p2_dlam(node_bary), space.grad_lambda)
    g_loc = np.einsum("eqad,ea->eqd", gN, phi[ss.cells])
    acc = np.zeros((space.n_nodes, 3), complex)
    cnt = np.zeros(space.n_nodes)
    np.add.at(acc, space.tet_nodes.ravel(), g_loc.reshape(-1, 3))
    np.add.at(cnt, space.tet_nodes.ravel(), 1)
    v = (acc / cnt[:, None]).ravel()
    T, vfree = _free_vector_basis(space)
    y = T.T @ v
    mask = np.zeros(space.n_vector, bool)
    mask[vfree] = True
    y[~mask] = 0
    v = T @ y
    f = assemble_forms(space, medium, diagnostic=diagnostic, parts=("B", "Sdiv"))
    MV = space.vector_mass + space.curl_stiffness + f["Sdiv"]
    bval = np.vdot(q, f["B"] @ v)
    nv = np.sqrt(np.real(np.vdot(v, MV @ v)))
    nq = np.sqrt(np.real(np.vdot(q, space.scalar_mass @ q)))
    return float(abs(bval) / (nv * nq))


# --------------------------------------------------------------------------
# Spectral report
# --------------------------------------------------------------------------

def spectral_report(medium, mesh):
    """Eigenvalue statistics of K at the mesh quadrature points."""
    space = mesh if isinstance(mesh, FeSpace) else FeSpace(mesh)
    x = space.quadrature_points().reshape(-1, 3)
    if isinstance(medium, PlasmaEnvironment):
        lam = np.stack(tensor_eigenvalues(response_tensor(medium, x)), axis=-1)
        K = response_tensor(medium, x).K
    else:
        K = medium.tensor(x)
        lam = np.sort_complex(np.linalg.eigvals(K))
    lo, hi = numerical_range_bounds(K)
    stats = []
    for i in range(3):
        li = lam[:, i]
        stats.append({"re_min": float(li.real.min()), "re_max": float(li.real.max()),
                      "im_min": float(li.imag.min()), "im_max": float(li.imag.max()),
                      "abs_max": float(np.abs(li).max())})
    return {
        "n_points": int(len(x)),
        "zeta": float(lam.imag.min()),
        "eta": float(np.abs(lam).max()),
        "numerical_range_zeta": float(lo.min()),
        "numerical_range_eta": float(hi.max()),
        "eigenvalues": stats,
        "sign_pattern": {"re_lambda1_nonneg": int((lam[:, 0].real >= 0).sum()),
                         "re_lambda2_nonpos": int((lam[:, 1].real <= 0).sum())},
        "absorbing": bool(lam.imag.min() > 0),
    }
