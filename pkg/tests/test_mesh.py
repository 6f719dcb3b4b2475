import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plasmafem.errors import InvalidParameterError, MeshParseError, MeshStructureError
from plasmafem.mesh import (
    GAMMA_A, GAMMA_C, SIGMA, AxisSplit, GridSplit, Mesh, box_mesh, build_partition,
    dump_mesh, load_mesh, make_mesh, parse_gmsh, read_mesh, refine_uniform,
    submesh, triangle_areas, unit_cube_mesh, validate_mesh, write_gmsh,
)

REF_TET = """$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 0 1 0
4 0 0 1
$EndNodes
$Elements
5
1 2 2 1 1 2 3 4
2 2 2 2 2 1 3 4
3 2 2 2 2 1 2 4
4 2 2 2 2 1 2 3
5 4 2 100 100 1 2 3 4
$EndElements
"""

# Kuhn split of the unit cube by hand: 6 tets along the main diagonal 0 -> 7
CUBE_VERTS = [(x, y, z) for x in (0, 1) for y in (0, 1) for z in (0, 1)]


def _kuhn_cube_gmsh():
    vid = {v: i + 1 for i, v in enumerate(CUBE_VERTS)}
    tets = []
    for perm in itertools.permutations(range(3)):
        c = [0, 0, 0]
        path = [tuple(c)]
        for a in perm:
            c[a] = 1
            path.append(tuple(c))
        tets.append([vid[p] for p in path])
    # boundary faces: tet faces whose vertices share a constant coordinate 0 or 1
    tris = []
    for t in tets:
        for f in itertools.combinations(t, 3):
            pts = [CUBE_VERTS[i - 1] for i in f]
            for a in range(3):
                if len({p[a] for p in pts}) == 1:
                    tag = 1 if (a == 0 and pts[0][0] == 0) else 2
                    tris.append((tag, f))
    lines = ["$MeshFormat", "2.2 0 8", "$EndMeshFormat", "$Nodes", "8"]
    lines += [f"{i + 1} {x} {y} {z}" for i, (x, y, z) in enumerate(CUBE_VERTS)]
    lines += ["$EndNodes", "$Elements", str(len(tris) + len(tets))]
    k = 1
    for tag, f in tris:
        lines.append(f"{k} 2 2 {tag} {tag} {f[0]} {f[1]} {f[2]}")
        k += 1
    for t in tets:
        lines.append(f"{k} 4 2 100 100 " + " ".join(map(str, t)))
        k += 1
    lines.append("$EndElements")
    return "\n".join(lines) + "\n", tets


def _det_volume(p):
    # exact rational determinant, independent of numpy
    a, b, c, d = [[Fraction(v) for v in q] for q in p]
    u = [b[i] - a[i] for i in range(3)]
    v = [c[i] - a[i] for i in range(3)]
    w = [d[i] - a[i] for i in range(3)]
    det = (u[0] * (v[1] * w[2] - v[2] * w[1]) - u[1] * (v[0] * w[2] - v[2] * w[0])
           + u[2] * (v[0] * w[1] - v[1] * w[0]))
    return abs(det) / 6


def test_reference_tet():
    mesh = parse_gmsh(REF_TET.encode())
    assert mesh.n_tets == 1
    assert len(mesh.boundary_tris) == 4
    assert list(mesh.boundary_tags).count(GAMMA_A) == 1
    assert validate_mesh(mesh) == []


def test_kuhn_cube_volume():
    text, tets = _kuhn_cube_gmsh()
    mesh = parse_gmsh(text)
    assert mesh.n_tets == 6
    assert len(mesh.boundary_tris) == 12
    oracle = sum(_det_volume([CUBE_VERTS[i - 1] for i in t]) for t in tets)
    assert oracle == 1
    assert abs(mesh.volumes.sum() - 1.0) < 1e-14
    assert np.all(mesh.volumes > 0)
    assert validate_mesh(mesh) == []


def test_vertex_ids_reindexed():
    # gmsh ids with gaps and an unused node
    text = REF_TET.replace("$Nodes\n4\n1 0 0 0", "$Nodes\n5\n99 5 5 5\n1 0 0 0")
    mesh = parse_gmsh(text)
    assert mesh.n_vertices == 4
    assert mesh.tets.max() == 3


def test_pentahedron_rejected():
    text = REF_TET.replace("$Elements\n5\n", "$Elements\n6\n6 6 2 7 7 1 2 3 4 1 2\n")
    with pytest.raises(MeshParseError, match="6") as exc:
        parse_gmsh(text)
    assert "prism" in str(exc.value)
    assert exc.value.line is not None


def test_point_elements_skipped():
    text = REF_TET.replace("$Elements\n5\n", "$Elements\n6\n9 15 2 0 0 1\n")
    assert parse_gmsh(text).n_tets == 1


@pytest.mark.parametrize("mutate, pattern", [
    (lambda s: s.replace("$MeshFormat\n", "$MeshFormt\n"), "MeshFormat"),
    (lambda s: s.replace("2.2 0 8", "4.1 0 8"), "unsupported MeshFormat"),
    (lambda s: s.replace("2.2 0 8", "2.2 1 8"), "unsupported MeshFormat"),
    (lambda s: s.replace("1 2 2 1 1 2 3 4", "1 2 2 0 0 2 3 4"), "untagged"),
    (lambda s: s.replace("4 2 2 2 2 1 2 3\n", "").replace("$Elements\n5", "$Elements\n4"),
     "untagged"),
    (lambda s: s.replace("2 1 0 0", "2 1 zero 0"), "bad node line"),
    (lambda s: s.replace("$EndElements\n", ""), "end of file"),
    (lambda s: s.replace("5 4 2 100 100 1 2 3 4", "5 4 2 100 100 1 2 3 7"), "unknown node"),
])
def test_parse_errors_have_line_numbers(mutate, pattern):
    with pytest.raises(MeshParseError, match=pattern) as exc:
        parse_gmsh(mutate(REF_TET))
    assert str(exc.value).startswith("line ")


def test_tag_map():
    mesh = parse_gmsh(REF_TET, tag_map={1: GAMMA_C, 2: GAMMA_A})
    assert list(mesh.boundary_tags).count(GAMMA_A) == 3
    with pytest.raises(MeshParseError, match="not in tag map"):
        parse_gmsh(REF_TET, tag_map={1: GAMMA_A})


def test_nonconforming_rejected():
    # a third tet reusing face (1,2,3) makes it shared by three tets
    text = REF_TET.replace("4\n1 0 0 0", "6\n5 0 0 -1\n6 0.1 0.1 -1\n1 0 0 0")
    text = text.replace("$Elements\n5\n", "$Elements\n7\n")
    text = text.replace("$EndElements", "6 4 2 100 100 1 2 3 5\n7 4 2 100 100 1 2 3 6\n$EndElements")
    with pytest.raises(MeshParseError, match="line"):
        parse_gmsh(text)


def test_gmsh_roundtrip_bit_exact(tmp_path):
    mesh = box_mesh(2, lower=(0.1, -0.3, 1 / 3), upper=(0.7, 0.2, 1.0))
    again = parse_gmsh(write_gmsh(mesh))
    assert np.array_equal(again.vertices, mesh.vertices)
    assert np.array_equal(again.tets, mesh.tets)
    p = tmp_path / "m.msh"
    p.write_text(write_gmsh(mesh))
    assert np.array_equal(read_mesh(p).vertices, mesh.vertices)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False),
                min_size=3, max_size=3))
def test_dump_roundtrip_bit_exact(shift):
    m = box_mesh(1)
    mesh = Mesh(m.vertices * np.pi + np.asarray(shift), m.tets, m.boundary_tris, m.boundary_tags)
    again = load_mesh(dump_mesh(mesh))
    assert np.array_equal(again.vertices, mesh.vertices)
    assert np.array_equal(again.tets, mesh.tets)
    assert np.array_equal(again.boundary_tris, mesh.boundary_tris)
    assert list(again.boundary_tags) == list(mesh.boundary_tags)


def test_dump_file_roundtrip(tmp_path):
    mesh = box_mesh((2, 1, 1))
    p = tmp_path / "m.txt"
    p.write_text("# fixture\n" + dump_mesh(mesh))
    assert np.array_equal(read_mesh(p).vertices, mesh.vertices)


def test_load_mesh_errors():
    with pytest.raises(MeshParseError, match="header"):
        load_mesh("mesh 1\n")
    with pytest.raises(MeshParseError, match="truncated"):
        load_mesh(dump_mesh(box_mesh(1))[:-40])


@pytest.mark.parametrize("n", [1, 2, 3])
def test_box_mesh_valid(n):
    mesh = unit_cube_mesh(n)
    assert mesh.n_tets == 6 * n**3
    assert validate_mesh(mesh) == []
    assert abs(mesh.volumes.sum() - 1.0) < 1e-13
    a = triangle_areas(mesh.vertices, mesh.boundary_tris)
    assert abs(a.sum() - 6.0) < 1e-12
    assert abs(a[mesh.boundary_tags == GAMMA_A].sum() - 1.0) < 1e-12
    x = mesh.vertices[mesh.boundary_tris[mesh.boundary_tags == GAMMA_A]]
    assert np.all(x[..., 0] == 0.0)


def test_box_mesh_bad_args():
    with pytest.raises(InvalidParameterError):
        box_mesh(0)
    with pytest.raises(InvalidParameterError):
        box_mesh(1, antenna_face="w0")
    assert GAMMA_A not in box_mesh(1, antenna_face=None).boundary_tags


def test_validate_inverted_tet():
    m = box_mesh(1)
    tets = m.tets.copy()
    tets[3, [0, 1]] = tets[3, [1, 0]]
    report = validate_mesh(Mesh(m.vertices, tets, m.boundary_tris, m.boundary_tags))
    assert any(r.startswith("tet 3:") for r in report)


def test_validate_interior_face_tagged():
    m = box_mesh(1)
    counts = m.face_tet_count
    interior = m.faces[np.flatnonzero(counts == 2)[0]]
    tris = np.vstack([m.boundary_tris, interior])
    tags = np.append(m.boundary_tags, GAMMA_C)
    report = validate_mesh(Mesh(m.vertices, m.tets, tris, tags))
    # face-incidence oracle: the added face is shared by two tets
    shared = sum(1 for t in m.tets if set(interior) <= set(t))
    assert shared == 2
    assert any("interior face tagged as boundary" in r for r in report)


def test_validate_coverage_gap_and_duplicates():
    m = box_mesh(1)
    report = validate_mesh(Mesh(m.vertices, m.tets, m.boundary_tris[1:], m.boundary_tags[1:]))
    assert any("coverage gap" in r for r in report)
    verts = np.vstack([m.vertices, m.vertices[:1]])
    report = validate_mesh(Mesh(verts, m.tets, m.boundary_tris, m.boundary_tags))
    assert any("coincide" in r for r in report)
    assert any("not used" in r for r in report)


def test_make_mesh_orients_and_rejects_degenerate():
    v = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1.0]])
    m = make_mesh(v, [[1, 0, 2, 3]], [], [])
    assert m.volumes[0] > 0
    with pytest.raises(MeshStructureError, match="degenerate"):
        make_mesh(v, [[0, 1, 2, 2]], [], [])


def test_refine_uniform():
    m = unit_cube_mesh(1)
    r = refine_uniform(m)
    assert r.n_tets == 8 * m.n_tets
    assert len(r.boundary_tris) == 4 * len(m.boundary_tris)
    assert validate_mesh(r) == []
    assert abs(r.volumes.sum() - 1.0) < 1e-13
    assert abs(r.h - m.h / 2) < 1e-12
    gamma_a = triangle_areas(r.vertices, r.boundary_tris[r.boundary_tags == GAMMA_A]).sum()
    assert abs(gamma_a - 1.0) < 1e-12


def test_partition_single():
    m = unit_cube_mesh(2)
    p = build_partition(m, np.ones(m.n_tets, int))
    assert p.n_subdomains == 1
    assert p.interfaces == {}
    assert np.array_equal(p.exterior_of[1], np.arange(len(m.boundary_tris)))


def test_partition_two_boxes():
    m = unit_cube_mesh(4)
    p = build_partition(m, AxisSplit(0, (0.5,)))
    assert list(p.interfaces) == [(2, 1)]
    tris = p.interfaces[(2, 1)]
    assert np.all(m.vertices[tris][..., 0] == 0.5)
    assert abs(triangle_areas(m.vertices, tris).sum() - 1.0) < 1e-12
    # stored normal points from 2 into 1, i.e. -x
    n = p.interface_normals(m, (2, 1))
    assert np.allclose(n, [-1, 0, 0])


def _face_scan_oracle(mesh, ids):
    faces = {}
    for t, tet in enumerate(mesh.tets.tolist()):
        for f in itertools.combinations(sorted(tet), 3):
            faces.setdefault(f, []).append(t)
    return {f for f, ts in faces.items() if len(ts) == 2 and ids[ts[0]] != ids[ts[1]]}


def test_partition_four_way_interfaces():
    m = unit_cube_mesh(4)
    p = build_partition(m, GridSplit(((0.5,), (0.5,), ())))
    assert p.n_subdomains == 4
    got = [tuple(sorted(t)) for tris in p.interfaces.values() for t in tris.tolist()]
    assert len(got) == len(set(got))  # pairwise disjoint
    assert set(got) == _face_scan_oracle(m, p.subdomain_of)
    for (i, j) in p.interfaces:
        assert i > j


def test_partition_normals_point_out_of_higher():
    m = unit_cube_mesh(3)
    p = build_partition(m, GridSplit(((0.4,), (0.6,), (0.5,))))
    cen = m.vertices[m.tets].mean(axis=1)
    for (i, j), tris in p.interfaces.items():
        n = p.interface_normals(m, (i, j))
        x0 = m.vertices[tris[:, 0]]
        hi = cen[p.subdomain_of == i]
        for k in range(len(tris)):
            # the owning tet of subdomain i lies behind the face
            d = np.linalg.norm(hi - m.vertices[tris[k]].mean(axis=0), axis=1)
            owner = hi[np.argmin(d)]
            assert np.dot(n[k], x0[k] - owner) > 0


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(1, 3), min_size=1, max_size=3, unique=True),
       st.integers(0, 2))
def test_partition_is_set_partition(cut_steps, axis):
    m = unit_cube_mesh(4)
    cuts = tuple(c / 4 for c in sorted(cut_steps))
    p = build_partition(m, AxisSplit(axis, cuts))
    assert p.n_subdomains == len(cuts) + 1
    all_tets = np.concatenate([p.tets_of(i) for i in range(1, p.n_subdomains + 1)])
    assert np.array_equal(np.sort(all_tets), np.arange(m.n_tets))
    ext = np.concatenate(list(p.exterior_of.values()))
    assert np.array_equal(np.sort(ext), np.arange(len(m.boundary_tris)))


def test_partition_errors():
    m = unit_cube_mesh(2)
    with pytest.raises(MeshStructureError, match="empty"):
        build_partition(m, np.where(np.arange(m.n_tets) < 5, 1, 3))
    with pytest.raises(MeshStructureError, match="assigns"):
        build_partition(m, np.ones(3, int))
    # two opposite corner cells in subdomain 2
    c = m.vertices[m.tets].mean(axis=1)
    ids = np.where((np.all(c < 0.5, axis=1)) | (np.all(c > 0.5, axis=1)), 2, 1)
    with pytest.raises(MeshStructureError, match="disconnected"):
        build_partition(m, ids)


def test_submesh():
    m = unit_cube_mesh(2)
    p = build_partition(m, AxisSplit(2, (0.5,)))
    sub, gverts = submesh(m, p, 1)
    assert sub.n_tets == m.n_tets // 2
    assert validate_mesh(sub) == []
    assert np.array_equal(sub.vertices, m.vertices[gverts])
    sig = sub.boundary_tris[sub.boundary_tags == SIGMA]
    assert np.all(sub.vertices[sig][..., 2] == 0.5)
