"""Discrete inf-sup constants of the two coupling forms.

The b-form (augmented coupling, X-norm) stays bounded below under
refinement. The beta-form, measured in H(curl) x H^1 with continuous P2/P1
elements, decays like h: the continuous inf-sup condition is not inherited
by this element pair.
"""

from plasmafem.fem import FeSpace
from plasmafem.mesh import unit_cube_mesh
from plasmafem.verification import check_discrete_infsup, infsup_proof_bound

from _env import desk_environment

env = desk_environment()
print(f"{'n':>3} {'b-form':>10} {'beta-form':>10}")
for n in (2, 4, 8):
    space = FeSpace(unit_cube_mesh(n))
    print(f"{n:3d} {check_discrete_infsup(space, env, 'b'):10.4f} "
          f"{check_discrete_infsup(space, env, 'beta'):10.4f}")

# lower bound from the grad(phi) construction, with phi solving the K-Laplacian
space = FeSpace(unit_cube_mesh(2))
value, q = check_discrete_infsup(space, env, "b", return_vector=True)
print(f"\nn=2: dense value {value:.4f}, constructive bound {infsup_proof_bound(space, env, q):.4f}")
