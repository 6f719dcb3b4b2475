import json
from pathlib import Path

import numpy as np
import pytest

from plasmafem.mesh import unit_cube_mesh
from plasmafem.plasma import Affine, ConstantVector, PlasmaEnvironment, TensorMedium, make_species

ORACLES = Path(__file__).parent / "oracles"

DESK_OMEGA = 2 * np.pi * 1e8


def desk_environment(**kw):
    """Deuterium plasma with a density ramp along x, B mostly along z."""
    dens = Affine(5e13, [2.5e13, 0.0, 0.0])
    args = dict(omega=DESK_OMEGA, B0=ConstantVector([0.0, 0.0045, 0.015]),
                species=[make_species("e", dens), make_species("D+", dens)],
                T_e=1e4, k_parallel=644.0)
    args.update(kw)
    return PlasmaEnvironment(**args)


@pytest.fixture(scope="session")
def desk_env():
    return desk_environment()


@pytest.fixture(scope="session")
def vacuum():
    return TensorMedium(np.eye(3), DESK_OMEGA)


@pytest.fixture(scope="session")
def absorbing_medium():
    """Constant normal tensor with spectrum (1 + 0.5i, 0.8 + 0.3i, 0.6 + 0.4i)."""
    Q, _ = np.linalg.qr(np.random.default_rng(7).standard_normal((3, 3)))
    K = Q @ np.diag([1 + 0.5j, 0.8 + 0.3j, 0.6 + 0.4j]) @ Q.T
    return TensorMedium(K, DESK_OMEGA)


@pytest.fixture(scope="session")
def cube2():
    return unit_cube_mesh(2)


@pytest.fixture(scope="session")
def cube4():
    return unit_cube_mesh(4)


@pytest.fixture(scope="session")
def plasma_oracles():
    return json.loads((ORACLES / "plasma_oracles.json").read_text())
