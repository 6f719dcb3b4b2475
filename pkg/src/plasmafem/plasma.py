"""Cold-plasma response tensor with collisional and electron Landau absorption.

All evaluation routines are vectorised: a point argument ``x`` may be a single
3-vector or any array of shape ``(..., 3)``; results carry the leading shape.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import LinearNDInterpolator, NearestNDInterpolator

from .constants import CODATA2018, SPECIES_TABLE, PhysicalConstants
from .errors import (AbsorptionMissingError, DegenerateFieldError,
                     InvalidParameterError, NotAPlasmaError,
                     SingularResonanceError)


class PlasmaParameterWarning(UserWarning):
    """Emitted when the plasma parameter Lambda is only marginally above 1."""


# --------------------------------------------------------------------------
# Profiles
# --------------------------------------------------------------------------

class Constant:
    def __init__(self, value):
        self.value = float(value)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.full(x.shape[:-1], self.value)

    def __repr__(self):
        return f"Constant({self.value!r})"


class Affine:
    """value + gradient . (x - origin)"""

    def __init__(self, value, gradient, origin=(0.0, 0.0, 0.0)):
        self.value = float(value)
        self.gradient = np.asarray(gradient, dtype=float)
        self.origin = np.asarray(origin, dtype=float)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.value + (x - self.origin) @ self.gradient


class Tabulated:
    """Piecewise-linear interpolation of nodal values given at mesh vertices.

    Points outside the convex hull of the vertices take the nearest value.
    """

    def __init__(self, vertices, values):
        self.vertices = np.asarray(vertices, dtype=float)
        self.values = np.asarray(values, dtype=float)
        self._lin = LinearNDInterpolator(self.vertices, self.values)
        self._near = NearestNDInterpolator(self.vertices, self.values)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, 3)
        out = self._lin(flat)
        bad = np.isnan(out)
        if bad.any():
            out[bad] = self._near(flat[bad])
        return out.reshape(x.shape[:-1])


class ConstantVector:
    def __init__(self, value):
        self.value = np.asarray(value, dtype=float)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.broadcast_to(self.value, x.shape).copy()


class AffineVector:
    """value + jacobian @ (x - origin)"""

    def __init__(self, value, jacobian, origin=(0.0, 0.0, 0.0)):
        self.value = np.asarray(value, dtype=float)
        self.jacobian = np.asarray(jacobian, dtype=float)
        self.origin = np.asarray(origin, dtype=float)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.value + (x - self.origin) @ self.jacobian.T


def as_scalar_field(obj):
    if obj is None:
        return None
    if callable(obj):
        return obj
    return Constant(obj)


def as_vector_field(obj):
    if callable(obj):
        return obj
    return ConstantVector(obj)


# --------------------------------------------------------------------------
# Physical inputs
# --------------------------------------------------------------------------

@dataclass
class SpeciesParams:
    name: str
    charge_number: int
    mass: float
    density: object  # scalar field, m^-3

    def __post_init__(self):
        if not self.mass > 0:
            raise InvalidParameterError(f"species {self.name!r}: mass must be > 0")
        if self.charge_number == 0 or int(self.charge_number) != self.charge_number:
            raise InvalidParameterError(
                f"species {self.name!r}: charge_number must be a nonzero integer")
        self.charge_number = int(self.charge_number)
        self.density = as_scalar_field(self.density)

    @property
    def sign(self):
        return 1 if self.charge_number > 0 else -1


def make_species(name, density, charge_number=None, mass=None):
    """Build a species, resolving charge and mass from the built-in table."""
    if name in SPECIES_TABLE:
        z, m = SPECIES_TABLE[name]
        charge_number = z if charge_number is None else charge_number
        mass = m if mass is None else mass
    if charge_number is None or mass is None:
        raise InvalidParameterError(
            f"species {name!r} is not in the built-in table; give charge_number and mass")
    return SpeciesParams(name, charge_number, mass, density)


@dataclass
class PlasmaEnvironment:
    """Physics input: wave frequency, static field, species and profiles.

    ``landau_enabled=False`` together with ``collisions_enabled=False`` is the
    lossless diagnostic mode, accepted for tensor inspection only.
    """

    omega: float
    B0: object
    species: list = field(default_factory=list)
    T_e: object = None
    k_parallel: object = None
    landau_enabled: bool = True
    collisions_enabled: bool = True
    constants: PhysicalConstants = CODATA2018

    def __post_init__(self):
        if not self.omega > 0:
            raise InvalidParameterError("omega must be > 0")
        self.B0 = as_vector_field(self.B0)
        self.T_e = as_scalar_field(self.T_e)
        self.k_parallel = as_scalar_field(self.k_parallel)
        needs_te = self.electron is not None and (self.landau_enabled or self.collisions_enabled)
        if needs_te and self.T_e is None:
            raise InvalidParameterError("T_e is required when absorption is enabled")
        if self.landau_enabled and self.electron is not None and self.k_parallel is None:
            raise InvalidParameterError("k_parallel is required when landau_enabled")

    @property
    def electron(self):
        for sp in self.species:
            if sp.charge_number == -1 and np.isclose(sp.mass, self.constants.m_e, rtol=1e-6):
                return sp
        return None

    def tensor(self, x):
        return response_tensor(self, x).K

    def adjoint(self):
        return TensorMedium(lambda x: np.conj(np.swapaxes(self.tensor(x), -1, -2)),
                            self.omega, self.constants)


class TensorMedium:
    """A medium given directly by a tensor field K(x).

    Used for diagnostics (e.g. vacuum K = I) and for the K* variants.
    """

    def __init__(self, tensor, omega, constants=CODATA2018):
        if callable(tensor):
            self._tensor = tensor
        else:
            K = np.asarray(tensor, dtype=complex)
            self._tensor = lambda x: np.broadcast_to(
                K, np.asarray(x).shape[:-1] + (3, 3)).copy()
        self.omega = float(omega)
        self.constants = constants

    def tensor(self, x):
        return np.asarray(self._tensor(np.asarray(x, dtype=float)), dtype=complex)

    def adjoint(self):
        return TensorMedium(lambda x: np.conj(np.swapaxes(self.tensor(x), -1, -2)),
                            self.omega, self.constants)


def tensor_gradient(medium, x, h=1e-4):
    """Spatial derivatives dK/dx_k, shape (..., 3, 3, 3) indexed [..., k, i, j].

    Fourth-order central differences; the step is in metres.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty(x.shape[:-1] + (3, 3, 3), dtype=complex)
    for k in range(3):
        e = np.zeros(3)
        e[k] = h
        out[..., k, :, :] = (-medium.tensor(x + 2 * e) + 8 * medium.tensor(x + e)
                             - 8 * medium.tensor(x - e) + medium.tensor(x - 2 * e)) / (12 * h)
    return out


# --------------------------------------------------------------------------
# Frequencies and absorption coefficients
# --------------------------------------------------------------------------

def plasma_frequency(n, q, m, const=CODATA2018):
    """sqrt(n q^2 / (eps0 m)) in rad/s."""
    if np.any(np.asarray(m) <= 0):
        raise InvalidParameterError("mass must be > 0")
    if np.any(np.asarray(n) < 0):
        raise InvalidParameterError("density must be >= 0")
    return np.sqrt(n * q**2 / (const.eps0 * m))


def cyclotron_frequency(q, m, Bmag):
    """|q| |B| / m in rad/s."""
    if np.any(np.asarray(m) <= 0):
        raise InvalidParameterError("mass must be > 0")
    if np.any(np.asarray(Bmag) < 0):
        raise InvalidParameterError("|B| must be >= 0")
    return np.abs(q) * Bmag / m


def plasma_parameter(n_e, T_e, Z, const=CODATA2018):
    """Lambda = (12 pi / Z) n_e (eps0 k_B T_e / (n_e q_e^2))^{3/2}."""
    debye_sq = const.eps0 * const.k_B * T_e / (n_e * const.q_e**2)
    return 12.0 * np.pi / Z * n_e * debye_sq**1.5


def collision_frequency(n_e, T_e, Z=1.0, const=CODATA2018):
    """Electron-ion collision frequency sqrt(2/pi) w_pe ln(Lambda) / Lambda.

    Raises NotAPlasmaError when Lambda <= 1 and warns when Lambda < 10.
    """
    n_e = np.asarray(n_e, dtype=float)
    T_e = np.asarray(T_e, dtype=float)
    if np.any(n_e <= 0) or np.any(T_e <= 0):
        raise InvalidParameterError("n_e and T_e must be > 0")
    if np.any(np.asarray(Z) < 1):
        raise InvalidParameterError("Z must be >= 1")
    lam = plasma_parameter(n_e, T_e, Z, const)
    if np.any(lam <= 1):
        raise NotAPlasmaError(
            f"plasma parameter Lambda = {np.min(lam):.3g} <= 1: not a plasma")
    if np.any(lam < 10):
        warnings.warn(f"plasma parameter Lambda = {np.min(lam):.3g} is < 10; "
                      "the collision model is marginal", PlasmaParameterWarning, stacklevel=2)
    w_pe = plasma_frequency(n_e, const.q_e, const.m_e, const)
    return np.sqrt(2.0 / np.pi) * w_pe * np.log(lam) / lam


def landau_coefficient(n_e, T_e, k_par, omega, const=CODATA2018):
    """Electron Landau conductivity gamma_e (>= 0 for either sign of k_par)."""
    k_par = np.asarray(k_par, dtype=float)
    T_e = np.asarray(T_e, dtype=float)
    if np.any(k_par == 0):
        raise InvalidParameterError("k_parallel must be nonzero")
    if np.any(T_e <= 0):
        raise InvalidParameterError("T_e must be > 0")
    if not np.all(np.asarray(omega) > 0):
        raise InvalidParameterError("omega must be > 0")
    w_pe2 = n_e * const.q_e**2 / (const.eps0 * const.m_e)
    kt = const.k_B * T_e
    k_abs = np.abs(k_par)
    return (const.eps0 * omega * np.sqrt(np.pi / 2) * w_pe2 * omega / k_abs**3
            * (const.m_e / kt)**1.5 * np.exp(-omega**2 * const.m_e / (2 * k_abs**2 * kt)))


# --------------------------------------------------------------------------
# Stix coefficients and the response tensor
# --------------------------------------------------------------------------

@dataclass
class StixCoefficients:
    S: np.ndarray
    D: np.ndarray
    P: np.ndarray
    gamma_e: np.ndarray
    nu_c: np.ndarray
    alpha: np.ndarray
    lnLambda_arg: np.ndarray
    beta_c: np.ndarray
    gamma_c: np.ndarray
    delta_c: np.ndarray


@dataclass
class ResponseTensor:
    K: np.ndarray
    b: np.ndarray
    coeffs: StixCoefficients
    position: np.ndarray
    omega: float
    eps0: float


def _effective_z(env, x):
    num = 0.0
    den = 0.0
    for sp in env.species:
        if sp.charge_number > 0:
            n = sp.density(x)
            num = num + n * sp.charge_number**2
            den = den + n * sp.charge_number
    if np.all(np.asarray(den) == 0):
        return np.ones(np.asarray(x).shape[:-1])
    return num / den


def stix_coefficients(env, x):
    x = np.asarray(x, dtype=float)
    shape = x.shape[:-1]
    const = env.constants
    w = env.omega
    Bmag = np.linalg.norm(env.B0(x), axis=-1)

    elec = env.electron
    lam = np.full(shape, np.inf)
    if env.collisions_enabled and elec is not None:
        n_e = elec.density(x)
        T_e = env.T_e(x)
        Z = _effective_z(env, x)
        lam = plasma_parameter(n_e, T_e, Z, const) * np.ones(shape)
        nu = collision_frequency(n_e, T_e, Z, const) * np.ones(shape)
    else:
        nu = np.zeros(shape)
    alpha = w + 1j * nu

    beta_c = np.zeros(shape, dtype=complex)
    gsum = np.zeros(shape, dtype=complex)
    dsum = np.zeros(shape, dtype=complex)
    for sp in env.species:
        q = sp.charge_number * const.q_e
        wp2 = sp.density(x) * q**2 / (const.eps0 * sp.mass)
        if np.any(wp2 < 0):
            raise InvalidParameterError(f"species {sp.name!r}: negative density")
        wc = cyclotron_frequency(q, sp.mass, Bmag)
        den = alpha**2 - wc**2
        if np.any(np.abs(den) <= 1e-14 * w**2):
            raise SingularResonanceError(
                f"species {sp.name!r}: alpha^2 = omega_c^2 (cyclotron resonance without collisions)")
        beta_c = beta_c + wp2 / (w * alpha)
        gsum = gsum + wp2 / den
        dsum = dsum + sp.sign * wc * wp2 / den
    gamma_c = alpha / w * gsum
    delta_c = dsum / w

    if env.landau_enabled and elec is not None:
        gamma_e = landau_coefficient(elec.density(x), env.T_e(x), env.k_parallel(x), w, const)
        gamma_e = gamma_e * np.ones(shape)
    else:
        gamma_e = np.zeros(shape)

    return StixCoefficients(S=1 - gamma_c, D=delta_c, P=1 - beta_c, gamma_e=gamma_e,
                            nu_c=nu, alpha=alpha, lnLambda_arg=lam, beta_c=beta_c,
                            gamma_c=gamma_c, delta_c=delta_c)


def cross_matrix(b):
    """Matrix [b]_x with [b]_x v = b x v."""
    b = np.asarray(b)
    z = np.zeros(b.shape[:-1])
    return np.stack([np.stack([z, -b[..., 2], b[..., 1]], -1),
                     np.stack([b[..., 2], z, -b[..., 0]], -1),
                     np.stack([-b[..., 1], b[..., 0], z], -1)], -2)


def response_tensor(env, x):
    """Lab-frame K = S (I - b b^T) + (P + i gamma_e/(eps0 w)) b b^T + i D [b]_x."""
    x = np.asarray(x, dtype=float)
    B = env.B0(x)
    Bmag = np.linalg.norm(B, axis=-1)
    if np.any(Bmag == 0):
        raise DegenerateFieldError("|B0| = 0: the Stix frame is undefined")
    b = B / Bmag[..., None]
    c = stix_coefficients(env, x)
    bb = b[..., :, None] * b[..., None, :]
    par = c.P + 1j * c.gamma_e / (env.constants.eps0 * env.omega)
    eye = np.eye(3)
    K = (c.S[..., None, None] * (eye - bb) + par[..., None, None] * bb
         + 1j * c.D[..., None, None] * cross_matrix(b))
    return ResponseTensor(K=K, b=b, coeffs=c, position=x, omega=env.omega,
                          eps0=env.constants.eps0)


def stix_frame_tensor(S, D, P, gamma_e=0.0, omega=1.0, eps0=CODATA2018.eps0):
    """The 3x3 tensor in the Stix frame (b = e3)."""
    S, D, P = np.broadcast_arrays(*(np.asarray(v, dtype=complex) for v in (S, D, P)))
    par = P + 1j * np.asarray(gamma_e) / (eps0 * omega)
    K = np.zeros(S.shape + (3, 3), dtype=complex)
    K[..., 0, 0] = S
    K[..., 1, 1] = S
    K[..., 0, 1] = -1j * D
    K[..., 1, 0] = 1j * D
    K[..., 2, 2] = par
    return K


def tensor_eigenvalues(rt):
    """Closed-form eigenvalues (S+D, S-D, P + i gamma_e/(eps0 w))."""
    c = rt.coeffs
    return (c.S + c.D, c.S - c.D, c.P + 1j * c.gamma_e / (rt.eps0 * rt.omega))


def imaginary_parts(env, x):
    """Im(lambda_i) from the explicit sum-of-squares expressions.

    Independent of :func:`stix_coefficients`; used as a cross-check.
    """
    x = np.asarray(x, dtype=float)
    c = stix_coefficients(env, x)
    nu = c.nu_c
    w = env.omega
    const = env.constants
    Bmag = np.linalg.norm(env.B0(x), axis=-1)
    im1 = np.zeros(nu.shape)
    im2 = np.zeros(nu.shape)
    wp2_sum = np.zeros(nu.shape)
    for sp in env.species:
        q = sp.charge_number * const.q_e
        wp2 = sp.density(x) * q**2 / (const.eps0 * sp.mass)
        wc = np.abs(q) * Bmag / sp.mass
        den = (wc**2 - w**2 + nu**2)**2 + 4 * w**2 * nu**2
        im1 = im1 + wp2 / den * ((w - sp.sign * wc)**2 + nu**2)
        im2 = im2 + wp2 / den * ((w + sp.sign * wc)**2 + nu**2)
        wp2_sum = wp2_sum + wp2
    im1 = nu / w * im1
    im2 = nu / w * im2
    im3 = nu / (w * (w**2 + nu**2)) * wp2_sum + c.gamma_e / (const.eps0 * w)
    return im1, im2, im3


# --------------------------------------------------------------------------
# Coercivity constants
# --------------------------------------------------------------------------

@dataclass
class CoercivityBounds:
    zeta: float
    eta: float
    argmin_location: np.ndarray


def numerical_range_bounds(K):
    """Pointwise (min Im z*Kz, max |z*Kz| bound) over unit z for arbitrary 3x3 K.

    The lower value is the smallest eigenvalue of (K - K*)/(2i); the upper is the
    spectral norm. For normal K they reduce to min Im(lambda) and max |lambda|.
    """
    K = np.asarray(K, dtype=complex)
    H = (K - np.conj(np.swapaxes(K, -1, -2))) / 2j
    lo = np.linalg.eigvalsh(H)[..., 0]
    hi = np.linalg.norm(K, ord=2, axis=(-2, -1))
    return lo, hi


def coercivity_bounds(env, samples):
    """Sampled zeta = min Im(lambda_i), eta = max |lambda_i|.

    Raises AbsorptionMissingError if zeta <= 0.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    if samples.size == 0:
        raise InvalidParameterError("sample set is empty")
    rt = response_tensor(env, samples)
    lam = np.stack(tensor_eigenvalues(rt), axis=-1)
    imin = lam.imag.min(axis=-1)
    k = int(np.argmin(imin))
    zeta = float(imin[k])
    eta = float(np.abs(lam).max())
    if zeta <= 0:
        raise AbsorptionMissingError(zeta)
    return CoercivityBounds(zeta=zeta, eta=eta, argmin_location=samples[k].copy())
