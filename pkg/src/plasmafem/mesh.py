"""Tetrahedral meshes with tagged boundaries, partitions and interface skeletons.

Plain-text dump format (``dump_mesh`` / ``load_mesh``)::

    plasmafem-mesh 1
    vertices <nv>
    <x> <y> <z>            # one line per vertex, '%.17g'
    tets <nt>
    <a> <b> <c> <d>        # 0-based vertex ids
    boundary <nb>
    <a> <b> <c> <tag>      # tag is GammaA or GammaC

Lines starting with '#' are ignored.
"""

import itertools
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from .errors import InvalidParameterError, MeshParseError, MeshStructureError

GAMMA_A = "GammaA"
GAMMA_C = "GammaC"
SIGMA = "Sigma"  # interface faces, only inside subdomain meshes
BOUNDARY_TAGS = (GAMMA_A, GAMMA_C)

# face k of a tet is opposite local vertex k
TET_FACES = np.array([[1, 2, 3], [0, 2, 3], [0, 1, 3], [0, 1, 2]])
TET_EDGES = np.array([[0, 1], [0, 2], [0, 3], [1, 2], [1, 3], [2, 3]])


def signed_volumes(vertices, tets):
    x = vertices[tets]
    d = x[:, 1:] - x[:, :1]
    return np.linalg.det(d) / 6.0


def triangle_areas(vertices, tris):
    x = vertices[tris]
    return 0.5 * np.linalg.norm(np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]), axis=1)


def _orient(vertices, tets):
    vol = signed_volumes(vertices, tets)
    tets = tets.copy()
    neg = vol < 0
    tets[neg, 0], tets[neg, 1] = tets[neg, 1].copy(), tets[neg, 0].copy()
    return tets, np.abs(vol)


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    tets: np.ndarray
    boundary_tris: np.ndarray
    boundary_tags: np.ndarray

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_tets(self):
        return len(self.tets)

    @cached_property
    def volumes(self):
        return signed_volumes(self.vertices, self.tets)

    @cached_property
    def diameter(self):
        return float(np.linalg.norm(self.vertices.max(0) - self.vertices.min(0)))

    @cached_property
    def h(self):
        """Largest edge length."""
        e = self.edges
        return float(np.linalg.norm(self.vertices[e[:, 1]] - self.vertices[e[:, 0]], axis=1).max())

    @cached_property
    def _edge_data(self):
        all_e = np.sort(self.tets[:, TET_EDGES].reshape(-1, 2), axis=1)
        edges, inv = np.unique(all_e, axis=0, return_inverse=True)
        return edges, inv.reshape(-1, 6)

    @property
    def edges(self):
        """Sorted unique vertex pairs, lexicographic order."""
        return self._edge_data[0]

    @property
    def tet_edges(self):
        """(nt, 6) global edge ids in local edge order (01,02,03,12,13,23)."""
        return self._edge_data[1]

    @cached_property
    def _face_data(self):
        all_f = np.sort(self.tets[:, TET_FACES].reshape(-1, 3), axis=1)
        faces, inv, counts = np.unique(all_f, axis=0, return_inverse=True, return_counts=True)
        return faces, inv.reshape(-1, 4), counts

    @property
    def faces(self):
        return self._face_data[0]

    @property
    def tet_faces(self):
        return self._face_data[1]

    @property
    def face_tet_count(self):
        return self._face_data[2]

    def face_index(self, tris):
        """Global face ids of the given triangles (-1 where not a tet face)."""
        faces = self.faces
        key = np.sort(np.asarray(tris), axis=1)
        view = lambda a: np.ascontiguousarray(a).view([("", a.dtype)] * 3).ravel()
        fv, kv = view(faces), view(key.astype(faces.dtype))
        pos = np.searchsorted(fv, kv)
        pos = np.clip(pos, 0, len(fv) - 1)
        return np.where(fv[pos] == kv, pos, -1)

    def boundary_normals(self):
        """Outward unit normals of the boundary triangles."""
        return _outward_normals(self, self.boundary_tris)

    def summary(self):
        tags, counts = np.unique(self.boundary_tags, return_counts=True)
        return {
            "vertices": self.n_vertices,
            "tets": self.n_tets,
            "edges": len(self.edges),
            "boundary_tris": len(self.boundary_tris),
            "boundary_tags": {str(t): int(c) for t, c in zip(tags, counts)},
            "volume": float(self.volumes.sum()),
            "h_max": self.h,
        }


def make_mesh(vertices, tets, boundary_tris, boundary_tags):
    """Build a Mesh, orienting every tet to positive volume."""
    vertices = np.ascontiguousarray(vertices, dtype=float)
    tets = np.asarray(tets, dtype=np.int64).reshape(-1, 4)
    tets, vol = _orient(vertices, tets)
    scale = np.ptp(vertices, axis=0).max() if len(vertices) else 1.0
    if np.any(vol <= 1e-14 * scale**3):
        raise MeshStructureError(f"degenerate tet(s): {np.flatnonzero(vol <= 0)[:5].tolist()}")
    tris = np.asarray(boundary_tris, dtype=np.int64).reshape(-1, 3)
    tags = np.asarray(boundary_tags, dtype="<U6")
    if len(tags) != len(tris):
        raise MeshStructureError("boundary_tags length differs from boundary_tris")
    return Mesh(vertices, tets, tris, tags)


def _outward_normals(mesh, tris):
    """Unit normals of triangles lying on tet faces, pointing out of their (first) tet."""
    tris = np.asarray(tris)
    x = mesh.vertices[tris]
    n = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
    n /= np.linalg.norm(n, axis=1)[:, None]
    fid = mesh.face_index(tris)
    if np.any(fid < 0):
        raise MeshStructureError("triangle is not a face of the mesh")
    # first tet owning each face
    owner = np.full(len(mesh.faces), -1)
    flat = mesh.tet_faces.ravel()
    owner[flat[::-1]] = np.repeat(np.arange(mesh.n_tets), 4)[::-1]
    t = owner[fid]
    centroid = mesh.vertices[mesh.tets[t]].mean(axis=1)
    flip = np.einsum("ij,ij->i", n, x[:, 0] - centroid) < 0
    n[flip] *= -1
    return n


# --------------------------------------------------------------------------
# Validation
# --------------------------------------------------------------------------

def validate_mesh(mesh):
    """List of violation strings; an empty list means the mesh is valid."""
    report = []
    vol = signed_volumes(mesh.vertices, mesh.tets)
    for t in np.flatnonzero(vol <= 0):
        report.append(f"tet {t}: nonpositive signed volume {vol[t]:.3e}")

    tol = 1e-12 * mesh.diameter
    pairs = cKDTree(mesh.vertices).query_pairs(tol) if mesh.n_vertices else set()
    for i, j in sorted(pairs):
        report.append(f"vertices {i} and {j} coincide within {tol:.1e}")

    used = np.zeros(mesh.n_vertices, bool)
    used[mesh.tets.ravel()] = True
    for v in np.flatnonzero(~used):
        report.append(f"vertex {v}: not used by any tet")

    counts = mesh.face_tet_count
    for f in np.flatnonzero(counts > 2):
        report.append(f"face {mesh.faces[f].tolist()}: shared by {counts[f]} tets (nonconforming)")

    fid = mesh.face_index(mesh.boundary_tris)
    seen = np.zeros(len(mesh.faces), int)
    for k, f in enumerate(fid):
        if f < 0:
            report.append(f"boundary tri {k}: not a face of any tet")
            continue
        seen[f] += 1
        if counts[f] != 1:
            report.append(f"boundary tri {k}: interior face tagged as boundary (coverage)")
    for f in np.flatnonzero((counts == 1) & (seen == 0)):
        report.append(f"face {mesh.faces[f].tolist()}: boundary face without tag (coverage gap)")
    for f in np.flatnonzero(seen > 1):
        report.append(f"face {mesh.faces[f].tolist()}: tagged {seen[f]} times")
    bad_tags = set(np.unique(mesh.boundary_tags).tolist()) - set(BOUNDARY_TAGS) - {SIGMA}
    for t in sorted(bad_tags):
        report.append(f"unknown boundary tag {t!r}")
    return report


def check_mesh(mesh):
    report = validate_mesh(mesh)
    if report:
        raise MeshStructureError("; ".join(report[:10]))
    return mesh


# --------------------------------------------------------------------------
# Gmsh MSH 2.2 ASCII
# --------------------------------------------------------------------------

_GMSH_NAMES = {1: "line", 2: "triangle", 3: "quadrangle", 4: "tetrahedron",
               5: "hexahedron", 6: "prism (pentahedron)", 7: "pyramid", 15: "point"}


def parse_gmsh(data, tag_map=None):
    """Parse a Gmsh 2.2 ASCII mesh.

    ``tag_map`` maps physical tags to GammaA/GammaC. Without one, physical tag 1
    is GammaA and every other nonzero tag is GammaC.
    """
    if isinstance(data, bytes):
        data = data.decode("ascii", errors="replace")
    lines = data.splitlines()
    pos = 0

    def next_line():
        nonlocal pos
        while pos < len(lines):
            line = lines[pos].strip()
            pos += 1
            if line:
                return line
        raise MeshParseError("unexpected end of file", pos)

    def expect(word):
        line = next_line()
        if line != word:
            raise MeshParseError(f"expected {word!r}, found {line[:40]!r}", pos)

    expect("$MeshFormat")
    head = next_line().split()
    if len(head) != 3 or not head[0].startswith("2.") or head[1] != "0":
        raise MeshParseError(f"unsupported MeshFormat {' '.join(head)!r} (need 2.2 ASCII)", pos)
    expect("$EndMeshFormat")

    node_index = {}
    coords = []
    tets = []
    tris = []
    tri_tags = []
    tri_lines = []
    got_nodes = got_elems = False
    while True:
        while pos < len(lines) and not lines[pos].strip():
            pos += 1
        if pos >= len(lines):
            break
        line = next_line()
        if line == "$Nodes":
            n = _int(next_line(), pos)
            for _ in range(n):
                parts = next_line().split()
                if len(parts) != 4:
                    raise MeshParseError("node line needs 4 fields", pos)
                try:
                    node_index[int(parts[0])] = len(coords)
                    coords.append([float(v) for v in parts[1:]])
                except ValueError:
                    raise MeshParseError(f"bad node line {' '.join(parts)!r}", pos) from None
            expect("$EndNodes")
            got_nodes = True
        elif line == "$Elements":
            n = _int(next_line(), pos)
            for _ in range(n):
                parts = next_line().split()
                try:
                    vals = [int(p) for p in parts]
                    etype, ntags = vals[1], vals[2]
                except (ValueError, IndexError):
                    raise MeshParseError(f"bad element line {' '.join(parts)!r}", pos) from None
                tags = vals[3:3 + ntags]
                nodes = vals[3 + ntags:]
                if etype == 15:
                    continue
                if etype not in (2, 4):
                    name = _GMSH_NAMES.get(etype, "unknown")
                    raise MeshParseError(f"unsupported element type {etype} ({name})", pos)
                need = 3 if etype == 2 else 4
                if len(nodes) != need:
                    raise MeshParseError(f"element type {etype} needs {need} nodes", pos)
                try:
                    ids = [node_index[v] for v in nodes]
                except KeyError as e:
                    raise MeshParseError(f"unknown node id {e.args[0]}", pos) from None
                if etype == 4:
                    tets.append(ids)
                else:
                    phys = tags[0] if tags else 0
                    if phys == 0:
                        raise MeshParseError("untagged boundary triangle", pos)
                    if tag_map is None:
                        tag = GAMMA_A if phys == 1 else GAMMA_C
                    elif phys in tag_map:
                        tag = tag_map[phys]
                    else:
                        raise MeshParseError(f"physical tag {phys} not in tag map", pos)
                    if tag not in BOUNDARY_TAGS:
                        raise MeshParseError(f"tag {tag!r} is not GammaA/GammaC", pos)
                    tris.append(ids)
                    tri_tags.append(tag)
                    tri_lines.append(pos)
            expect("$EndElements")
            got_elems = True
        elif line.startswith("$"):
            # skip unknown sections
            end = "$End" + line[1:]
            while next_line() != end:
                pass
        else:
            raise MeshParseError(f"unexpected content {line[:40]!r}", pos)
    if not (got_nodes and got_elems):
        raise MeshParseError("missing $Nodes or $Elements section", pos)
    if not tets:
        raise MeshParseError("no tetrahedra found", pos)

    vertices = np.array(coords, dtype=float)
    tets = np.array(tets, dtype=np.int64)
    # keep only vertices referenced by tets, reindexed contiguously
    used = np.unique(tets)
    remap = -np.ones(len(vertices), dtype=np.int64)
    remap[used] = np.arange(len(used))
    tris = np.array(tris, dtype=np.int64).reshape(-1, 3)
    if np.any(remap[tris] < 0):
        k = int(np.flatnonzero((remap[tris] < 0).any(axis=1))[0])
        raise MeshParseError("boundary triangle uses a vertex not in any tet", tri_lines[k])
    try:
        mesh = make_mesh(vertices[used], remap[tets], remap[tris], tri_tags)
    except MeshStructureError as e:
        raise MeshParseError(str(e), pos) from None

    counts = mesh.face_tet_count
    if np.any(counts > 2):
        raise MeshParseError("nonconforming mesh: a face is shared by more than two tets", pos)
    fid = mesh.face_index(mesh.boundary_tris)
    for k, f in enumerate(fid):
        if f < 0 or counts[f] != 1:
            raise MeshParseError("triangle is not a boundary face of the tet mesh", tri_lines[k])
    covered = np.zeros(len(counts), bool)
    covered[fid] = True
    missing = np.flatnonzero((counts == 1) & ~covered)
    if len(missing):
        raise MeshParseError(
            f"untagged boundary triangle {mesh.faces[missing[0]].tolist()} "
            f"({len(missing)} boundary faces lack a tag)", pos)
    return mesh


def _int(text, line):
    try:
        return int(text)
    except ValueError:
        raise MeshParseError(f"expected an integer, found {text[:40]!r}", line) from None


def write_gmsh(mesh, tag_ids=None):
    """Serialise to Gmsh 2.2 ASCII (inverse of parse_gmsh with its default tag map)."""
    tag_ids = tag_ids or {GAMMA_A: 1, GAMMA_C: 2}
    out = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", str(mesh.n_vertices)]
    out += [f"{i + 1} {x:.17g} {y:.17g} {z:.17g}" for i, (x, y, z) in enumerate(mesh.vertices)]
    out += ["$EndNodes", "$Elements", str(len(mesh.boundary_tris) + mesh.n_tets)]
    k = 1
    for tri, tag in zip(mesh.boundary_tris, mesh.boundary_tags):
        t = tag_ids[str(tag)]
        out.append(f"{k} 2 2 {t} {t} " + " ".join(str(v + 1) for v in tri))
        k += 1
    for tet in mesh.tets:
        out.append(f"{k} 4 2 100 100 " + " ".join(str(v + 1) for v in tet))
        k += 1
    out += ["$EndElements", ""]
    return "\n".join(out)


# --------------------------------------------------------------------------
# Plain-text dump
# --------------------------------------------------------------------------

def dump_mesh(mesh):
    out = ["plasmafem-mesh 1", f"vertices {mesh.n_vertices}"]
    out += ["%.17g %.17g %.17g" % tuple(v) for v in mesh.vertices]
    out.append(f"tets {mesh.n_tets}")
    out += ["%d %d %d %d" % tuple(t) for t in mesh.tets]
    out.append(f"boundary {len(mesh.boundary_tris)}")
    out += ["%d %d %d %s" % (a, b, c, tag)
            for (a, b, c), tag in zip(mesh.boundary_tris, mesh.boundary_tags)]
    return "\n".join(out) + "\n"


def load_mesh(text):
    if isinstance(text, bytes):
        text = text.decode("ascii")
    rows = [(i + 1, l.split()) for i, l in enumerate(text.splitlines())
            if l.strip() and not l.lstrip().startswith("#")]
    it = iter(rows)

    def section(name):
        ln, parts = next(it, (None, None))
        if parts is None or parts[0] != name or len(parts) != 2:
            raise MeshParseError(f"expected '{name} <count>'", ln)
        return int(parts[1])

    ln, head = next(it, (None, None))
    if head != ["plasmafem-mesh", "1"]:
        raise MeshParseError("missing 'plasmafem-mesh 1' header", ln)
    try:
        nv = section("vertices")
        verts = [[float(v) for v in next(it)[1]] for _ in range(nv)]
        nt = section("tets")
        tets = [[int(v) for v in next(it)[1]] for _ in range(nt)]
        nb = section("boundary")
        tris, tags = [], []
        for _ in range(nb):
            _, p = next(it)
            tris.append([int(v) for v in p[:3]])
            tags.append(p[3])
    except (StopIteration, ValueError, IndexError) as e:
        raise MeshParseError(f"truncated or malformed dump ({e})") from None
    return make_mesh(np.array(verts).reshape(-1, 3), tets, tris, tags)


def read_mesh(path, tag_map=None):
    """Read a .msh (Gmsh 2.2) or plain-text dump file."""
    with open(path, "rb") as fh:
        data = fh.read()
    if data.lstrip().startswith(b"$MeshFormat"):
        return parse_gmsh(data, tag_map)
    return load_mesh(data)


# --------------------------------------------------------------------------
# Generators and refinement
# --------------------------------------------------------------------------

_CUBE_FACES = {"x0": (0, 0.0), "x1": (0, 1.0), "y0": (1, 0.0), "y1": (1, 1.0),
               "z0": (2, 0.0), "z1": (2, 1.0)}


def box_mesh(n, lower=(0.0, 0.0, 0.0), upper=(1.0, 1.0, 1.0), antenna_face="x0"):
    """Structured Kuhn mesh of a box: n^3 cells, each split into 6 tets.

    ``n`` may be an int or a triple. ``antenna_face`` (x0, x1, y0, y1, z0, z1 or
    None) is tagged GammaA; the rest of the boundary is GammaC.
    """
    nx, ny, nz = (n, n, n) if np.isscalar(n) else n
    if min(nx, ny, nz) < 1:
        raise InvalidParameterError("n must be >= 1")
    lower = np.asarray(lower, float)
    upper = np.asarray(upper, float)
    gx, gy, gz = (np.linspace(lower[k], upper[k], m + 1) for k, m in enumerate((nx, ny, nz)))
    X, Y, Z = np.meshgrid(gx, gy, gz, indexing="ij")
    vertices = np.column_stack([X.ravel(), Y.ravel(), Z.ravel()])
    vid = lambda i, j, k: (i * (ny + 1) + j) * (nz + 1) + k

    I, J, K = np.meshgrid(np.arange(nx), np.arange(ny), np.arange(nz), indexing="ij")
    I, J, K = I.ravel(), J.ravel(), K.ravel()
    tets = []
    for perm in itertools.permutations(range(3)):
        corner = np.zeros(3, int)
        path = [corner.copy()]
        for axis in perm:
            corner[axis] = 1
            path.append(corner.copy())
        tets.append(np.column_stack([vid(I + c[0], J + c[1], K + c[2]) for c in path]))
    tets = np.stack(tets, axis=1).reshape(-1, 4)

    mesh = make_mesh(vertices, tets, np.zeros((0, 3), int), [])
    return _tag_box_boundary(mesh, lower, upper, antenna_face)


def unit_cube_mesh(n, antenna_face="x0"):
    return box_mesh(n, antenna_face=antenna_face)


def _tag_box_boundary(mesh, lower, upper, antenna_face):
    bf = mesh.faces[mesh.face_tet_count == 1]
    tags = np.full(len(bf), GAMMA_C, dtype="<U6")
    if antenna_face is not None:
        if antenna_face not in _CUBE_FACES:
            raise InvalidParameterError(f"antenna_face must be one of {sorted(_CUBE_FACES)}")
        axis, side = _CUBE_FACES[antenna_face]
        plane = lower[axis] if side == 0.0 else upper[axis]
        on = np.all(np.abs(mesh.vertices[bf][:, :, axis] - plane) < 1e-12, axis=1)
        tags[on] = GAMMA_A
    return Mesh(mesh.vertices, mesh.tets, bf, tags)


def refine_uniform(mesh):
    """Red refinement: every tet into 8, every boundary triangle into 4."""
    edges = mesh.edges
    nv = mesh.n_vertices
    mid = 0.5 * (mesh.vertices[edges[:, 0]] + mesh.vertices[edges[:, 1]])
    vertices = np.vstack([mesh.vertices, mid])
    m = nv + mesh.tet_edges  # local edges 01,02,03,12,13,23
    x0, x1, x2, x3 = mesh.tets.T
    x01, x02, x03, x12, x13, x23 = m.T
    children = [
        (x0, x01, x02, x03), (x01, x1, x12, x13), (x02, x12, x2, x23), (x03, x13, x23, x3),
        (x01, x02, x03, x13), (x01, x02, x12, x13), (x02, x03, x13, x23), (x02, x12, x13, x23),
    ]
    tets = np.stack([np.column_stack(c) for c in children], axis=1).reshape(-1, 4)

    def edge_id(a, b):
        key = np.sort(np.column_stack([a, b]), axis=1)
        view = lambda z: np.ascontiguousarray(z).view([("", z.dtype)] * 2).ravel()
        return nv + np.searchsorted(view(edges), view(key))

    a, b, c = mesh.boundary_tris.T
    ab, ac, bc = edge_id(a, b), edge_id(a, c), edge_id(b, c)
    tris = np.stack([np.column_stack(t) for t in
                     [(a, ab, ac), (ab, b, bc), (ac, bc, c), (ab, bc, ac)]], axis=1).reshape(-1, 3)
    tags = np.repeat(mesh.boundary_tags, 4)
    return make_mesh(vertices, tets, tris, tags)


# --------------------------------------------------------------------------
# Partitions
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class AxisSplit:
    axis: int
    cuts: tuple

    def assign(self, mesh):
        c = mesh.vertices[mesh.tets].mean(axis=1)[:, self.axis]
        return 1 + np.searchsorted(np.sort(np.asarray(self.cuts, float)), c)


@dataclass(frozen=True)
class GridSplit:
    """Tensor-product split; ``cuts`` is a triple of cut-value sequences."""
    cuts: tuple

    def assign(self, mesh):
        c = mesh.vertices[mesh.tets].mean(axis=1)
        idx = [np.searchsorted(np.sort(np.asarray(cu, float)), c[:, k])
               for k, cu in enumerate(self.cuts)]
        dims = [len(cu) + 1 for cu in self.cuts]
        return 1 + np.ravel_multi_index(idx, dims)


@dataclass(frozen=True)
class Partition:
    """Non-overlapping decomposition into subdomains numbered 1..n_subdomains.

    ``interfaces[(i, j)]`` with i > j holds triangles ordered so that their
    right-hand normal points out of subdomain i.
    """
    subdomain_of: np.ndarray
    interfaces: dict = field(default_factory=dict)
    exterior_of: dict = field(default_factory=dict)

    @property
    def n_subdomains(self):
        return int(self.subdomain_of.max())

    def tets_of(self, i):
        return np.flatnonzero(self.subdomain_of == i)

    def interface_normals(self, mesh, key):
        x = mesh.vertices[self.interfaces[key]]
        n = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
        return n / np.linalg.norm(n, axis=1)[:, None]

    def interface_nodes(self):
        """Sorted vertex ids lying on any interface."""
        if not self.interfaces:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate([t.ravel() for t in self.interfaces.values()]))


def build_partition(mesh, rule):
    """Partition from an AxisSplit/GridSplit rule or an explicit per-tet id array."""
    if hasattr(rule, "assign"):
        ids = np.asarray(rule.assign(mesh))
    else:
        ids = np.asarray(rule)
    if ids.shape != (mesh.n_tets,):
        raise MeshStructureError(f"partition assigns {ids.size} tets, mesh has {mesh.n_tets}")
    if not np.issubdtype(ids.dtype, np.integer):
        if not np.all(ids == np.round(ids)):
            raise MeshStructureError("subdomain ids must be integers")
        ids = ids.astype(np.int64)
    if ids.min() < 1:
        raise MeshStructureError("subdomain ids must be >= 1")
    nd = int(ids.max())
    present = np.bincount(ids, minlength=nd + 1)[1:]
    if np.any(present == 0):
        raise MeshStructureError(f"empty subdomain(s): {(np.flatnonzero(present == 0) + 1).tolist()}")

    # face adjacency between tets
    tf = mesh.tet_faces.ravel()
    owner = np.repeat(np.arange(mesh.n_tets), 4)
    order = np.argsort(tf, kind="stable")
    tf_s, own_s = tf[order], owner[order]
    pair = np.flatnonzero(tf_s[1:] == tf_s[:-1])
    t1, t2 = own_s[pair], own_s[pair + 1]
    same = ids[t1] == ids[t2]
    graph = coo_matrix((np.ones(same.sum()), (t1[same], t2[same])),
                       shape=(mesh.n_tets, mesh.n_tets))
    ncomp, _ = connected_components(graph, directed=False)
    if ncomp != nd:
        raise MeshStructureError(
            f"disconnected subdomain: {ncomp} face-connected components for {nd} subdomains")

    interfaces = {}
    diff = ~same
    if diff.any():
        ta, tb = t1[diff], t2[diff]
        fid = tf_s[pair[diff]]
        hi = np.where(ids[ta] > ids[tb], ta, tb)
        lo = np.where(ids[ta] > ids[tb], tb, ta)
        tris = mesh.faces[fid].copy()
        # orient each triangle outward from the higher-indexed tet
        x = mesh.vertices[tris]
        n = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
        cen = mesh.vertices[mesh.tets[hi]].mean(axis=1)
        flip = np.einsum("ij,ij->i", n, x[:, 0] - cen) < 0
        tris[flip, 1], tris[flip, 2] = tris[flip, 2].copy(), tris[flip, 1].copy()
        keys = np.column_stack([ids[hi], ids[lo]])
        for key in sorted(set(map(tuple, keys.tolist()))):
            sel = np.all(keys == key, axis=1)
            interfaces[(int(key[0]), int(key[1]))] = tris[sel]

    # exterior boundary triangles per subdomain
    fid = mesh.face_index(mesh.boundary_tris)
    face_owner = np.empty(len(mesh.faces), dtype=np.int64)
    face_owner[tf] = owner
    bsub = ids[face_owner[fid]]
    exterior = {i: np.flatnonzero(bsub == i) for i in range(1, nd + 1)}
    return Partition(subdomain_of=ids, interfaces=interfaces, exterior_of=exterior)


def submesh(mesh, partition, i):
    """Subdomain mesh with exterior triangles tagged as in ``mesh`` and interface ones as Sigma.

    Returns (Mesh, global vertex ids of the local vertices).
    """
    tets = mesh.tets[partition.tets_of(i)]
    gverts = np.unique(tets)
    local = -np.ones(mesh.n_vertices, dtype=np.int64)
    local[gverts] = np.arange(len(gverts))
    ext = partition.exterior_of[i]
    tris = [mesh.boundary_tris[ext]]
    tags = [mesh.boundary_tags[ext]]
    for (a, b), t in partition.interfaces.items():
        if i in (a, b):
            tris.append(t)
            tags.append(np.full(len(t), SIGMA, dtype="<U6"))
    tris = np.vstack(tris)
    return (Mesh(mesh.vertices[gverts], local[tets], local[tris], np.concatenate(tags)),
            gverts)
