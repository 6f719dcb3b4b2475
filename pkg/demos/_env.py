"""Shared demo environment: deuterium plasma, density ramp along x."""

import numpy as np

from plasmafem.plasma import Affine, ConstantVector, PlasmaEnvironment, make_species

OMEGA = 2 * np.pi * 1e8


def desk_environment():
    dens = Affine(5e13, [2.5e13, 0.0, 0.0])
    return PlasmaEnvironment(omega=OMEGA, B0=ConstantVector([0.0, 0.0045, 0.015]),
                             species=[make_species("e", dens), make_species("D+", dens)],
                             T_e=1e4, k_parallel=644.0)
