"""Finite element solver for time-harmonic waves in magnetised, absorbing cold plasmas."""

from .constants import CODATA2018, SPECIES_TABLE, PhysicalConstants
from .errors import (AbsorptionMissingError, ConfigError, ConvergenceError, DegenerateFieldError,
                     InvalidParameterError, MeshParseError, MeshStructureError, NotAPlasmaError,
                     PlasmaFemError, SingularResonanceError, SizeGuardError, SolverError,
                     UnsupportedGeometryError)
from .plasma import (Affine, AffineVector, Constant, ConstantVector, PlasmaEnvironment,
                     SpeciesParams, Tabulated, TensorMedium, coercivity_bounds,
                     collision_frequency, cyclotron_frequency, landau_coefficient,
                     make_species, plasma_frequency, response_tensor, stix_coefficients,
                     tensor_eigenvalues)
from .mesh import (AxisSplit, GridSplit, Mesh, box_mesh, build_partition, check_mesh,
                   parse_gmsh, read_mesh, unit_cube_mesh, validate_mesh)
from .fem import FeSpace, SourceData, assemble_system, constrain, dirichlet_plan
from .solvers import SolutionField, solve, solve_K_laplacian, solve_problem, helmholtz_decompose
from .krylov import GmresConfig, gmres
from .dd import build_decomposed, interpret_multiplier, schur_apply, solve_decomposed
from .verification import (check_discrete_infsup, compare_formulations, make_mms_case,
                           run_convergence, spectral_report)
from .config import RunConfig, load_config, parse_config

__version__ = "0.1.0"
