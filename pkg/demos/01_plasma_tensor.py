"""Cold-plasma response tensor along the density ramp.

Prints the Stix coefficients, the eigenvalues of K and the coercivity
constants (zeta, eta) sampled over the unit cube.
"""

import numpy as np

from plasmafem.plasma import coercivity_bounds, response_tensor, tensor_eigenvalues

from _env import desk_environment

env = desk_environment()
x = np.column_stack([np.linspace(0, 1, 5), np.full(5, 0.5), np.full(5, 0.5)])
rt = response_tensor(env, x)
lam = np.stack(tensor_eigenvalues(rt), axis=-1)
print(f"{'x':>5} {'S':>24} {'D':>24} {'P':>24}")
for k in range(len(x)):
    c = rt.coeffs
    print(f"{x[k, 0]:5.2f} {complex(c.S[k]):>24.6g} {complex(c.D[k]):>24.6g} "
          f"{complex(c.P[k]):>24.6g}")
print("\nImaginary parts of the eigenvalues (all must be > 0):")
print(np.array2string(lam.imag, precision=3))

# K is normal, so the numerical range is the convex hull of its spectrum
K = rt.K[2]
print("normality defect:", np.abs(K @ K.conj().T - K.conj().T @ K).max())

cb = coercivity_bounds(env, np.random.default_rng(0).random((5000, 3)))
print(f"zeta = {cb.zeta:.3e} at x = {np.round(cb.argmin_location, 3)}, eta = {cb.eta:.3f}")
