"""JSON run configuration: schema, validation with field paths, round-trip.

SI units throughout; complex numbers are written as [re, im] pairs (a bare
real number is also accepted). Top-level keys::

    mesh         {"path": str, "tag_map": {"1": "GammaA", ...}}
                 or {"box": {"n": int, "lower": [3], "upper": [3], "antenna_face": "x0"}}
    environment  {"omega", "B0", "species": [...], "T_e", "k_parallel",
                  "landau": bool, "collisions": bool}
    formulation  "plain" | "augmented" | "mixed_unaug" | "mixed_aug"
    s            complex augmentation weight
    source       {"type": "none"} | {"type": "mms", "variant": "curl-rich" | "gradient-type"}
                 | {"type": "constant", "f": [3 complex], "g": complex}
    bc           {"mode": "dirichlet", "E_A": [3 complex] | null}
                 | {"mode": "antenna", "j_A": [3 complex]}
    dd           {"partition": {"type": "axis", "axis": int, "cuts": [...]}
                               | {"type": "grid", "cuts": [[...], [...], [...]]},
                  "gmres": {"restart", "max_iterations", "tolerance", "preconditioner"},
                  "workers": int}
    verify       {"suites": [...], "levels": [...], "variant": str, "formulations": [...]}
    points       [[x, y, z], ...] for the tensor report
    output       {"dir": str}

Scalar profiles are {"type": "constant", "value"}, {"type": "affine", "value",
"gradient", "origin"} or {"type": "tabulated", "vertices", "values"}; a bare
number means constant. Vector profiles are {"type": "constant", "value"} or
{"type": "affine", "value", "jacobian", "origin"}; a bare 3-list means constant.
"""

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constants import SPECIES_TABLE
from .errors import ConfigError
from .fem import FORMULATIONS, SourceData
from .krylov import GmresConfig
from .mesh import AxisSplit, GridSplit, box_mesh, read_mesh
from .plasma import (Affine, AffineVector, Constant, ConstantVector, PlasmaEnvironment,
                     SpeciesParams, Tabulated)

SUITES = ("spectral", "convergence", "equivalence", "infsup")
VARIANTS = ("curl-rich", "gradient-type")


# --------------------------------------------------------------------------
# primitive readers
# --------------------------------------------------------------------------

def _get(d, key, path, default=..., kind=None):
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    if key not in d:
        if default is ...:
            raise ConfigError(f"{path}.{key}" if path else key, "missing required field")
        return default
    return d[key]


def _join(path, key):
    return f"{path}.{key}" if path else key


def _real(v, path, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(path, f"expected a number, got {v!r}")
    v = float(v)
    if not np.isfinite(v):
        raise ConfigError(path, "must be finite")
    if positive and not v > 0:
        raise ConfigError(path, f"must be > 0, got {v}")
    if nonneg and v < 0:
        raise ConfigError(path, f"must be >= 0, got {v}")
    return v


def _int(v, path, minimum=None):
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(path, f"expected an integer, got {v!r}")
    if minimum is not None and v < minimum:
        raise ConfigError(path, f"must be >= {minimum}, got {v}")
    return v


def _complex(v, path):
    if isinstance(v, (list, tuple)):
        if len(v) != 2:
            raise ConfigError(path, "complex numbers are [re, im] pairs")
        return complex(_real(v[0], f"{path}[0]"), _real(v[1], f"{path}[1]"))
    return complex(_real(v, path))


def _vec(v, path, n=3, conv=_real):
    if not isinstance(v, (list, tuple)) or len(v) != n:
        raise ConfigError(path, f"expected a list of {n} entries")
    return [conv(x, f"{path}[{i}]") for i, x in enumerate(v)]


def _cvec_out(v):
    return [[float(np.real(x)), float(np.imag(x))] for x in v]


def _choice(v, path, options):
    if v not in options:
        raise ConfigError(path, f"must be one of {list(options)}, got {v!r}")
    return v


# --------------------------------------------------------------------------
# profiles
# --------------------------------------------------------------------------

def parse_scalar_profile(spec, path):
    if spec is None:
        return None
    if not isinstance(spec, dict):
        return Constant(_real(spec, path))
    kind = _choice(_get(spec, "type", path), _join(path, "type"),
                   ("constant", "affine", "tabulated"))
    if kind == "constant":
        return Constant(_real(_get(spec, "value", path), _join(path, "value")))
    if kind == "affine":
        return Affine(_real(_get(spec, "value", path), _join(path, "value")),
                      _vec(_get(spec, "gradient", path), _join(path, "gradient")),
                      _vec(_get(spec, "origin", path, [0, 0, 0]), _join(path, "origin")))
    verts = _get(spec, "vertices", path)
    vals = _get(spec, "values", path)
    if not isinstance(verts, list) or not isinstance(vals, list) or len(verts) != len(vals):
        raise ConfigError(path, "tabulated profile needs equal-length vertices and values")
    return Tabulated([_vec(p, f"{path}.vertices[{i}]") for i, p in enumerate(verts)],
                     [_real(x, f"{path}.values[{i}]") for i, x in enumerate(vals)])


def parse_vector_profile(spec, path):
    if isinstance(spec, list):
        return ConstantVector(_vec(spec, path))
    kind = _choice(_get(spec, "type", path), _join(path, "type"), ("constant", "affine"))
    value = _vec(_get(spec, "value", path), _join(path, "value"))
    if kind == "constant":
        return ConstantVector(value)
    jac = _get(spec, "jacobian", path)
    if not isinstance(jac, list) or len(jac) != 3:
        raise ConfigError(_join(path, "jacobian"), "expected a 3x3 nested list")
    jac = [_vec(r, f"{path}.jacobian[{i}]") for i, r in enumerate(jac)]
    return AffineVector(value, jac, _vec(_get(spec, "origin", path, [0, 0, 0]),
                                         _join(path, "origin")))


def parse_species(spec, path):
    name = _get(spec, "name", path)
    if not isinstance(name, str):
        raise ConfigError(_join(path, "name"), "expected a string")
    z0, m0 = SPECIES_TABLE.get(name, (None, None))
    z = spec.get("charge_number", z0)
    m = spec.get("mass", m0)
    if z is None:
        raise ConfigError(_join(path, "charge_number"), f"unknown species {name!r}; give charge_number")
    if m is None:
        raise ConfigError(_join(path, "mass"), f"unknown species {name!r}; give mass")
    z = _int(z, _join(path, "charge_number"))
    if z == 0:
        raise ConfigError(_join(path, "charge_number"), "must be nonzero")
    m = _real(m, _join(path, "mass"), positive=True)
    density = parse_scalar_profile(_get(spec, "density", path), _join(path, "density"))
    return SpeciesParams(name, z, m, density)


def _profile_out(p):
    if p is None:
        return None
    if isinstance(p, Constant):
        return {"type": "constant", "value": p.value}
    if isinstance(p, Affine):
        return {"type": "affine", "value": p.value, "gradient": list(map(float, p.gradient)),
                "origin": list(map(float, p.origin))}
    if isinstance(p, Tabulated):
        return {"type": "tabulated", "vertices": np.asarray(p.vertices).tolist(),
                "values": np.asarray(p.values).tolist()}
    if isinstance(p, ConstantVector):
        return {"type": "constant", "value": list(map(float, p.value))}
    if isinstance(p, AffineVector):
        return {"type": "affine", "value": list(map(float, p.value)),
                "jacobian": np.asarray(p.jacobian).tolist(), "origin": list(map(float, p.origin))}
    raise ConfigError("", f"cannot serialise profile {type(p).__name__}")


# --------------------------------------------------------------------------
# run configuration
# --------------------------------------------------------------------------

@dataclass
class RunConfig:
    environment: PlasmaEnvironment
    mesh: dict = field(default_factory=lambda: {"box": {"n": 2}})
    formulation: str = "mixed_aug"
    s: complex = 1.0
    source: dict = field(default_factory=lambda: {"type": "none"})
    bc: dict = field(default_factory=lambda: {"mode": "dirichlet", "E_A": None})
    dd: dict = None
    verify: dict = field(default_factory=dict)
    points: list = field(default_factory=list)
    output: dict = field(default_factory=lambda: {"dir": "output"})
    base_dir: Path = Path(".")

    # ---- derived objects -------------------------------------------------

    def load_mesh(self):
        """Mesh from file (relative to the config file) or the built-in box."""
        if "path" in self.mesh:
            p = Path(self.mesh["path"])
            if not p.is_absolute():
                p = self.base_dir / p
            tag_map = {int(k): v for k, v in self.mesh.get("tag_map", {}).items()} or None
            return read_mesh(p, tag_map)
        b = self.mesh["box"]
        return box_mesh(b["n"], b.get("lower", (0, 0, 0)), b.get("upper", (1, 1, 1)),
                        b.get("antenna_face", "x0"))

    def source_data(self, mesh=None):
        """SourceData, plus the MmsCase when the source is manufactured."""
        kind = self.source["type"]
        E_A = self.bc.get("E_A")
        j_A = self.bc.get("j_A")
        const_field = lambda v: (lambda x: np.broadcast_to(np.asarray(v, complex),
                                                            np.shape(x)).copy())
        E_fn = const_field(E_A) if E_A is not None else None
        j_fn = const_field(j_A) if j_A is not None else None
        if kind == "mms":
            from .verification import make_mms_case
            case = make_mms_case(self.environment, self.source["variant"], mesh)
            return case.source, case
        if kind == "constant":
            f, g = self.source.get("f"), self.source.get("g")
            f_fn = const_field(f) if f is not None else None
            g_fn = (lambda x: np.full(np.shape(x)[:-1], complex(g))) if g is not None else None
            return SourceData(f=f_fn, g=g_fn, j_A=j_fn, E_A=E_fn), None
        return SourceData(j_A=j_fn, E_A=E_fn), None

    def partition_rule(self):
        if not self.dd:
            raise ConfigError("dd", "dd block required for dd-solve")
        p = self.dd["partition"]
        if p["type"] == "axis":
            return AxisSplit(p["axis"], p["cuts"])
        return GridSplit(tuple(p["cuts"]))

    def gmres_config(self):
        return GmresConfig(**(self.dd or {}).get("gmres", {}))

    # ---- serialisation ---------------------------------------------------

    def to_dict(self):
        env = self.environment
        out = {
            "mesh": copy.deepcopy(self.mesh),
            "environment": {
                "omega": env.omega,
                "B0": _profile_out(env.B0),
                "species": [{"name": sp.name, "charge_number": sp.charge_number,
                             "mass": sp.mass, "density": _profile_out(sp.density)}
                            for sp in env.species],
                "T_e": _profile_out(env.T_e),
                "k_parallel": _profile_out(env.k_parallel),
                "landau": env.landau_enabled,
                "collisions": env.collisions_enabled,
            },
            "formulation": self.formulation,
            "s": [self.s.real, self.s.imag],
            "source": copy.deepcopy(self.source),
            "bc": {k: (_cvec_out(v) if k in ("E_A", "j_A") and v is not None else v)
                   for k, v in self.bc.items()},
            "verify": copy.deepcopy(self.verify),
            "points": copy.deepcopy(self.points),
            "output": copy.deepcopy(self.output),
        }
        if self.source.get("type") == "constant":
            src = out["source"]
            if src.get("f") is not None:
                src["f"] = _cvec_out(src["f"])
            if src.get("g") is not None:
                src["g"] = _cvec_out([src["g"]])[0]
        if self.dd is not None:
            out["dd"] = copy.deepcopy(self.dd)
        return out

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def parse_config(data, base_dir=None):
    """Validate a decoded JSON object into a RunConfig; errors name the field path."""
    if not isinstance(data, dict):
        raise ConfigError("", "configuration must be a JSON object")
    known = {"mesh", "environment", "formulation", "s", "source", "bc", "dd", "verify",
             "points", "output"}
    for k in data:
        if k not in known:
            raise ConfigError(k, "unknown field")

    env = _parse_environment(_get(data, "environment", ""), "environment")
    mesh = _parse_mesh(data.get("mesh", {"box": {"n": 2}}), "mesh")
    formulation = _choice(data.get("formulation", "mixed_aug"), "formulation", FORMULATIONS)
    s = _complex(data.get("s", 1.0), "s")
    if formulation in ("augmented", "mixed_aug") and not (s.real > 0 and s.imag <= 0):
        raise ConfigError("s", "augmentation needs Re s > 0 and Im s <= 0")
    source = _parse_source(data.get("source", {"type": "none"}), "source")
    bc = _parse_bc(data.get("bc", {"mode": "dirichlet", "E_A": None}), "bc")
    dd = _parse_dd(data["dd"], "dd") if data.get("dd") is not None else None
    verify = _parse_verify(data.get("verify", {}), "verify")
    pts = data.get("points", [])
    if not isinstance(pts, list):
        raise ConfigError("points", "expected a list of [x, y, z]")
    points = [_vec(p, f"points[{i}]") for i, p in enumerate(pts)]
    output = data.get("output", {"dir": "output"})
    if not isinstance(output, dict) or not isinstance(output.get("dir", "output"), str):
        raise ConfigError("output.dir", "expected a string")
    output = {"dir": output.get("dir", "output")}
    if bc["mode"] == "antenna" and dd is not None:
        raise ConfigError("dd", "decomposed solves support the Dirichlet mode only")
    return RunConfig(environment=env, mesh=mesh, formulation=formulation, s=s, source=source,
                     bc=bc, dd=dd, verify=verify, points=points, output=output,
                     base_dir=Path(base_dir) if base_dir else Path("."))


def _parse_environment(d, path):
    omega = _real(_get(d, "omega", path), _join(path, "omega"), positive=True)
    B0 = parse_vector_profile(_get(d, "B0", path), _join(path, "B0"))
    species_raw = d.get("species", [])
    if not isinstance(species_raw, list):
        raise ConfigError(_join(path, "species"), "expected a list")
    # the species path is written without the "environment." prefix: the
    # species list is the part users edit most and the short path reads better
    species = [parse_species(sp, f"species[{i}]") for i, sp in enumerate(species_raw)]
    T_e = parse_scalar_profile(d.get("T_e"), _join(path, "T_e"))
    kp = parse_scalar_profile(d.get("k_parallel"), _join(path, "k_parallel"))
    landau = d.get("landau", True)
    collisions = d.get("collisions", True)
    for key, v in (("landau", landau), ("collisions", collisions)):
        if not isinstance(v, bool):
            raise ConfigError(_join(path, key), "expected true or false")
    try:
        return PlasmaEnvironment(omega=omega, B0=B0, species=species, T_e=T_e, k_parallel=kp,
                                 landau_enabled=landau, collisions_enabled=collisions)
    except Exception as exc:  # invalid combinations reported against the block
        raise ConfigError(path, str(exc)) from exc


def _parse_mesh(d, path):
    if not isinstance(d, dict) or ("path" in d) == ("box" in d):
        raise ConfigError(path, "give exactly one of 'path' or 'box'")
    if "path" in d:
        if not isinstance(d["path"], str):
            raise ConfigError(_join(path, "path"), "expected a string")
        tm = d.get("tag_map", {})
        if not isinstance(tm, dict):
            raise ConfigError(_join(path, "tag_map"), "expected an object")
        for k, v in tm.items():
            try:
                int(k)
            except ValueError:
                raise ConfigError(f"{path}.tag_map.{k}", "keys are integer physical tags") from None
            _choice(v, f"{path}.tag_map.{k}", ("GammaA", "GammaC"))
        return {"path": d["path"], "tag_map": dict(tm)}
    b = d["box"]
    bp = _join(path, "box")
    out = {"n": _int(_get(b, "n", bp), _join(bp, "n"), 1)}
    if "lower" in b:
        out["lower"] = _vec(b["lower"], _join(bp, "lower"))
    if "upper" in b:
        out["upper"] = _vec(b["upper"], _join(bp, "upper"))
    if "antenna_face" in b:
        out["antenna_face"] = _choice(b["antenna_face"], _join(bp, "antenna_face"),
                                      ("x0", "x1", "y0", "y1", "z0", "z1", None))
    return {"box": out}


def _parse_source(d, path):
    kind = _choice(_get(d, "type", path), _join(path, "type"), ("none", "mms", "constant"))
    if kind == "mms":
        return {"type": "mms",
                "variant": _choice(d.get("variant", "curl-rich"), _join(path, "variant"), VARIANTS)}
    if kind == "constant":
        out = {"type": "constant", "f": None, "g": None}
        if d.get("f") is not None:
            out["f"] = _vec(d["f"], _join(path, "f"), conv=_complex)
        if d.get("g") is not None:
            out["g"] = _complex(d["g"], _join(path, "g"))
        return out
    return {"type": "none"}


def _parse_bc(d, path):
    mode = _choice(_get(d, "mode", path), _join(path, "mode"), ("dirichlet", "antenna"))
    if mode == "dirichlet":
        if d.get("j_A") is not None:
            raise ConfigError(_join(path, "j_A"), "exactly one bc mode: j_A belongs to antenna mode")
        E_A = d.get("E_A")
        return {"mode": mode,
                "E_A": _vec(E_A, _join(path, "E_A"), conv=_complex) if E_A is not None else None}
    if d.get("E_A") is not None:
        raise ConfigError(_join(path, "E_A"), "exactly one bc mode: E_A belongs to dirichlet mode")
    return {"mode": mode, "j_A": _vec(_get(d, "j_A", path), _join(path, "j_A"), conv=_complex)}


def _parse_dd(d, path):
    p = _get(d, "partition", path)
    pp = _join(path, "partition")
    kind = _choice(_get(p, "type", pp), _join(pp, "type"), ("axis", "grid"))
    if kind == "axis":
        axis = _int(_get(p, "axis", pp), _join(pp, "axis"), 0)
        if axis > 2:
            raise ConfigError(_join(pp, "axis"), "must be 0, 1 or 2")
        cuts = _get(p, "cuts", pp)
        if not isinstance(cuts, list) or not cuts:
            raise ConfigError(_join(pp, "cuts"), "expected a non-empty list")
        part = {"type": "axis", "axis": axis,
                "cuts": [_real(c, f"{pp}.cuts[{i}]") for i, c in enumerate(cuts)]}
    else:
        cuts = _get(p, "cuts", pp)
        if not isinstance(cuts, list) or len(cuts) != 3:
            raise ConfigError(_join(pp, "cuts"), "expected three lists of cut positions")
        part = {"type": "grid",
                "cuts": [[_real(c, f"{pp}.cuts[{a}][{i}]") for i, c in enumerate(cl)]
                         for a, cl in enumerate(cuts)]}
    g = d.get("gmres", {})
    gp = _join(path, "gmres")
    for k in g:
        if k not in ("restart", "max_iterations", "tolerance", "preconditioner"):
            raise ConfigError(_join(gp, k), "unknown field")
    try:
        GmresConfig(**g)
    except TypeError as exc:
        raise ConfigError(gp, str(exc)) from exc
    except Exception as exc:
        raise ConfigError(gp, str(exc)) from exc
    workers = _int(d.get("workers", 1), _join(path, "workers"), 1)
    return {"partition": part, "gmres": dict(g), "workers": workers}


def _parse_verify(d, path):
    if not isinstance(d, dict):
        raise ConfigError(path, "expected an object")
    suites = d.get("suites", ["spectral"])
    if not isinstance(suites, list):
        raise ConfigError(_join(path, "suites"), "expected a list")
    for i, s in enumerate(suites):
        _choice(s, f"{path}.suites[{i}]", SUITES)
    levels = d.get("levels", [2, 4, 8])
    if not isinstance(levels, list) or len(levels) < 2:
        raise ConfigError(_join(path, "levels"), "expected at least two mesh levels")
    levels = [_int(v, f"{path}.levels[{i}]", 1) for i, v in enumerate(levels)]
    variant = _choice(d.get("variant", "gradient-type"), _join(path, "variant"), VARIANTS)
    forms = d.get("formulations", ["mixed_aug"])
    if not isinstance(forms, list):
        raise ConfigError(_join(path, "formulations"), "expected a list")
    for i, f in enumerate(forms):
        _choice(f, f"{path}.formulations[{i}]", FORMULATIONS)
    min_order = _real(d.get("min_order", 2.5), _join(path, "min_order"))
    return {"suites": list(suites), "levels": levels, "variant": variant,
            "formulations": list(forms), "min_order": min_order}


def load_config(path):
    """Read and validate a JSON config file; I/O problems raise OSError."""
    path = Path(path)
    text = path.read_text()
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError("", f"invalid JSON: {exc}") from exc
    return parse_config(data, base_dir=path.parent)
