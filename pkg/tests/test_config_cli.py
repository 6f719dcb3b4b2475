import copy
import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plasmafem.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, EXIT_PROPERTY, EXIT_SOLVER, main, tensor_report
from plasmafem.config import load_config, parse_config
from plasmafem.errors import ConfigError
from plasmafem.plasma import response_tensor

from conftest import DESK_OMEGA, desk_environment

DENSITY = {"type": "affine", "value": 5e13, "gradient": [2.5e13, 0.0, 0.0]}
BASE = {
    "environment": {"omega": DESK_OMEGA, "B0": [0.0, 0.0045, 0.015],
                    "species": [{"name": "e", "density": DENSITY},
                                {"name": "D+", "density": DENSITY}],
                    "T_e": 1e4, "k_parallel": 644.0},
    "mesh": {"box": {"n": 2}},
    "source": {"type": "mms", "variant": "curl-rich"},
    "dd": {"partition": {"type": "axis", "axis": 0, "cuts": [0.5]},
           "gmres": {"restart": 200, "tolerance": 1e-10}},
}


def _cfg(**changes):
    d = copy.deepcopy(BASE)
    d.update(changes)
    return d


def _write(tmp_path, data, name="run.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return str(p)


def _run(tmp_path, cmd, data, *extra, out="out"):
    return main([cmd, "--config", _write(tmp_path, data), "--output", str(tmp_path / out),
                 *extra])


# configuration -----------------------------------------------------------------

def test_round_trip_base():
    cfg = parse_config(BASE)
    again = parse_config(json.loads(cfg.to_json()))
    assert again.to_json() == cfg.to_json()


complex_pair = st.tuples(st.floats(-1e3, 1e3), st.floats(-1e3, 1e3)).map(list)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 6), omega=st.floats(1e6, 1e11), kp=st.floats(0, 1e4),
       s_re=st.floats(0.01, 10), s_im=st.floats(-10, 0),
       formulation=st.sampled_from(["plain", "augmented", "mixed_unaug", "mixed_aug"]),
       E_A=st.none() | st.lists(complex_pair, min_size=3, max_size=3),
       landau=st.booleans(), cut=st.floats(0.1, 0.9))
def test_round_trip_idempotent(n, omega, kp, s_re, s_im, formulation, E_A, landau, cut):
    d = _cfg(mesh={"box": {"n": n, "antenna_face": "y1"}}, formulation=formulation,
             s=[s_re, s_im], bc={"mode": "dirichlet", "E_A": E_A},
             source={"type": "constant", "f": [[1.0, 2.0], 0.5, [0.0, -1.0]], "g": [0.1, 0.2]})
    d["environment"] = dict(d["environment"], omega=omega, k_parallel=kp, landau=landau)
    d["dd"] = {"partition": {"type": "axis", "axis": 2, "cuts": [cut]}, "workers": 2}
    first = parse_config(d).to_json()
    second = parse_config(json.loads(first)).to_json()
    assert first == second


@pytest.mark.parametrize("mutate, path", [
    (lambda d: d["environment"]["species"][0].update(mass=-1.0), "species[0].mass"),
    (lambda d: d["environment"]["species"][1].update(mass="heavy"), "species[1].mass"),
    (lambda d: d["environment"]["species"].append({"name": "Xe", "density": 1e12}),
     "species[2].charge_number"),
    (lambda d: d["environment"].update(omega=0), "environment.omega"),
    (lambda d: d.update(formulation="hybrid"), "formulation"),
    (lambda d: d.update(s=[1.0, 0.5]), "s"),
    (lambda d: d.update(s=[-1.0, 0.0]), "s"),
    (lambda d: d.update(bc={"mode": "dirichlet", "j_A": [0, 0, 1]}), "bc.j_A"),
    (lambda d: d.update(bc={"mode": "antenna", "E_A": [0, 0, 0], "j_A": [0, 0, 1]}), "bc.E_A"),
    (lambda d: d["dd"]["partition"].update(type="metis"), "dd.partition.type"),
    (lambda d: d["dd"]["gmres"].update(tolerance=2.0), "dd.gmres"),
    (lambda d: d.update(mesh={"box": {"n": 0}}), "mesh.box.n"),
    (lambda d: d.update(colour="red"), "colour"),
])
def test_config_errors_name_field(mutate, path):
    d = copy.deepcopy(BASE)
    mutate(d)
    with pytest.raises(ConfigError) as info:
        parse_config(d)
    assert info.value.path == path
    assert path in str(info.value)


def test_relative_mesh_path(tmp_path):
    from plasmafem.mesh import unit_cube_mesh, write_gmsh
    (tmp_path / "cube.msh").write_text(write_gmsh(unit_cube_mesh(1)))
    cfg = load_config(_write(tmp_path, _cfg(mesh={"path": "cube.msh"})))
    assert cfg.load_mesh().n_tets == unit_cube_mesh(1).n_tets


# tensor -------------------------------------------------------------------------

def test_tensor_vacuum_identity():
    cfg = parse_config({"environment": {"omega": 1e9, "B0": [0, 0, 1], "species": []}})
    K = tensor_report(cfg)["points"][0]["K"]
    assert np.array_equal(K, np.eye(3))


def test_tensor_matches_library():
    cfg = parse_config(BASE)
    rep = tensor_report(cfg, [[0.5, 0.5, 0.5]])
    ref = response_tensor(desk_environment(), np.array([[0.5, 0.5, 0.5]])).K[0]
    assert np.allclose(rep["points"][0]["K"], ref, rtol=1e-14, atol=0)
    assert rep["zeta"] > 0


def test_tensor_cli_json(tmp_path, capsys):
    d = _cfg(points=[[0.1, 0.2, 0.3], [0.9, 0.5, 0.5]])
    assert _run(tmp_path, "tensor", d, "--json") == EXIT_OK
    rep = json.loads(capsys.readouterr().out)
    assert len(rep["points"]) == 2 and rep["eta"] >= rep["zeta"] > 0
    assert (tmp_path / "out" / "tensor.json").exists()


# solve / dd-solve ---------------------------------------------------------------

def test_solve_zero_source(tmp_path):
    d = _cfg(source={"type": "none"})
    assert _run(tmp_path, "solve", d) == EXIT_OK
    vtk = (tmp_path / "out" / "solution.vtk").read_text()
    block = vtk.split("VECTORS E_re double\n")[1].split("VECTORS")[0].split()
    assert all(float(v) == 0.0 for v in block)


def test_solve_mms_error_matches_verification(tmp_path, capsys):
    from plasmafem.verification import make_mms_case, run_convergence
    assert _run(tmp_path, "solve", BASE) == EXIT_OK
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    ref = run_convergence(make_mms_case(desk_environment(), "curl-rich"), "mixed_aug",
                          levels=(2,)).rows[0].l2_error
    assert rep["l2_error"] == pytest.approx(ref, rel=1e-12)
    assert f"{ref:.6e}" in capsys.readouterr().out


def test_repeated_runs_bit_identical(tmp_path):
    for out in ("a", "b"):
        assert _run(tmp_path, "solve", BASE, out=out) == EXIT_OK
        assert _run(tmp_path, "dd-solve", BASE, "--threads", "2", out=out + "dd") == EXIT_OK
    for name in ("solution.vtk", "report.json"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    for name in ("solution.vtk", "dd_report.json", "gmres_history.csv", "multipliers.csv",
                 "subdomain_1.vtk"):
        assert (tmp_path / "add" / name).read_bytes() == (tmp_path / "bdd" / name).read_bytes()


def test_dd_single_subdomain_equals_solve(tmp_path):
    # a cut on the box boundary is rejected, so N_d = 1 uses a grid rule with no cuts
    d = _cfg()
    d["dd"] = {"partition": {"type": "grid", "cuts": [[], [], []]}}
    assert _run(tmp_path, "dd-solve", d, out="dd") == EXIT_OK
    assert _run(tmp_path, "solve", d, out="mono") == EXIT_OK
    dd = (tmp_path / "dd" / "solution.vtk").read_text().split("VECTORS E_re")[1]
    mono = (tmp_path / "mono" / "solution.vtk").read_text().split("VECTORS E_re")[1]
    assert dd == mono


def test_dd_two_way_reports_mono_difference(tmp_path, capsys):
    assert _run(tmp_path, "dd-solve", BASE, "--compare-mono", "--interpret") == EXIT_OK
    rep = json.loads((tmp_path / "out" / "dd_report.json").read_text())
    assert rep["dd_vs_mono"] <= 1e-8 and rep["subdomains"] == 2
    assert "DD vs monodomain relative difference" in capsys.readouterr().out
    hist = (tmp_path / "out" / "gmres_history.csv").read_text().splitlines()
    assert hist[0] == "iteration,residual" and len(hist) == rep["iterations"] + 2
    assert "multiplier" in rep and (tmp_path / "out" / "timing.json").exists()


def test_dd_bad_partition_is_config_error(tmp_path, capsys):
    d = _cfg()
    d["dd"]["partition"]["cuts"] = [1.5]
    assert _run(tmp_path, "dd-solve", d) == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["path"].startswith("dd.partition")


def test_dd_gmres_failure_exit_code(tmp_path, capsys):
    d = _cfg()
    d["dd"]["gmres"] = {"restart": 2, "max_iterations": 3}
    assert _run(tmp_path, "dd-solve", d) == EXIT_SOLVER
    assert json.loads(capsys.readouterr().err)["error"] == "ConvergenceError"
    assert (tmp_path / "out" / "gmres_history.csv").exists()
    assert (tmp_path / "out" / "error.json").exists()


# exit codes ---------------------------------------------------------------------

def test_config_exit_code(tmp_path, capsys):
    d = copy.deepcopy(BASE)
    d["environment"]["species"][0]["mass"] = -1
    assert _run(tmp_path, "solve", d) == EXIT_CONFIG
    err = json.loads(capsys.readouterr().err)
    assert err["path"] == "species[0].mass" and err["exit_code"] == EXIT_CONFIG
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["solve", "--config", str(bad)]) == EXIT_CONFIG


def test_io_exit_codes(tmp_path):
    assert main(["solve", "--config", str(tmp_path / "missing.json")]) == EXIT_IO
    assert _run(tmp_path, "solve", _cfg(mesh={"path": "nowhere.msh"})) == EXIT_IO
    (tmp_path / "broken.msh").write_text("$MeshFormat\n9.9 0 8\n")
    assert _run(tmp_path, "solve", _cfg(mesh={"path": "broken.msh"})) == EXIT_IO


def test_absorption_missing_exit_code(tmp_path, capsys):
    vac = _cfg(environment={"omega": DESK_OMEGA, "B0": [0, 0, 1], "species": []})
    assert _run(tmp_path, "solve", vac) == EXIT_PROPERTY
    assert json.loads(capsys.readouterr().err)["kind"] == "absorption-missing"
    vac["verify"] = {"suites": ["spectral"]}
    assert _run(tmp_path, "verify", vac) == EXIT_PROPERTY


def test_threads_env_validation(tmp_path, monkeypatch):
    monkeypatch.setenv("PLASMAFEM_THREADS", "many")
    assert _run(tmp_path, "tensor", BASE) == EXIT_CONFIG
    monkeypatch.setenv("PLASMAFEM_THREADS", "3")
    assert _run(tmp_path, "tensor", BASE) == EXIT_OK


# verify / mesh-info ---------------------------------------------------------------

def test_verify_spectral_pass(tmp_path):
    d = _cfg(verify={"suites": ["spectral"]})
    assert _run(tmp_path, "verify", d) == EXIT_OK
    assert json.loads((tmp_path / "out" / "verify.json").read_text())["failed"] == []


def test_verify_convergence_gradient_type(tmp_path):
    d = _cfg(verify={"suites": ["convergence"], "levels": [2, 4], "variant": "gradient-type"})
    assert _run(tmp_path, "verify", d) == EXIT_OK
    csv = (tmp_path / "out" / "convergence_mixed_aug_gradient-type.csv").read_text()
    assert len(csv.splitlines()) == 3


def test_verify_property_failure_names_suite(tmp_path, capsys):
    d = _cfg(verify={"suites": ["spectral", "convergence"], "levels": [1, 2],
                     "formulations": ["plain"], "min_order": 10.0})
    assert _run(tmp_path, "verify", d) == EXIT_PROPERTY
    assert json.loads(capsys.readouterr().err)["failed_suites"] == ["convergence"]


def test_mesh_info(tmp_path, capsys):
    from plasmafem.mesh import unit_cube_mesh, write_gmsh
    path = tmp_path / "cube.msh"
    path.write_text(write_gmsh(unit_cube_mesh(2)))
    assert main(["mesh-info", "--mesh", str(path), "--json"]) == EXIT_OK
    info = json.loads(capsys.readouterr().out)
    assert info["problems"] == [] and sum(info["node_classes"].values()) == 125
    assert main(["mesh-info", "--config", _write(tmp_path, BASE)]) == EXIT_OK
    assert main(["mesh-info"]) == EXIT_CONFIG
