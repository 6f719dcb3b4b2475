"""Physical constants (CODATA 2018, SI) and the built-in species table."""

from dataclasses import dataclass


@dataclass(frozen=True)
class PhysicalConstants:
    eps0: float = 8.8541878128e-12     # F/m
    mu0: float = 1.25663706212e-6      # H/m
    c: float = 299792458.0             # m/s
    m_e: float = 9.1093837015e-31      # kg
    q_e: float = 1.602176634e-19       # C
    k_B: float = 1.380649e-23          # J/K
    m_p: float = 1.67262192369e-27     # kg
    m_d: float = 3.3435837724e-27      # kg
    m_t: float = 5.0073567446e-27      # kg
    m_alpha: float = 6.6446573357e-27  # kg


CODATA2018 = PhysicalConstants()

# name -> (charge number, mass in kg)
SPECIES_TABLE = {
    "e": (-1, CODATA2018.m_e),
    "H+": (1, CODATA2018.m_p),
    "D+": (1, CODATA2018.m_d),
    "T+": (1, CODATA2018.m_t),
    "He2+": (2, CODATA2018.m_alpha),
}
