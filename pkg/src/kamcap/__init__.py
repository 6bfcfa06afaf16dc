"""Rigorous a posteriori KAM validation of invariant tori of exact symplectic maps.

Modules: ``interval`` (ball arithmetic helpers), ``fourier`` (FFT with
enclosures, analytic norms, DFT error constants), ``diophantine`` (Diophantine
constants, Russmann bounds), ``models`` (maps and their global bounds),
``solver`` (parameterization-method Newton), ``validator`` (the constant
ledger and the verdict), ``tuner`` (parameter search) and ``cli``.
"""

from .diophantine import DiophantineCert, certify, cubic_golden, omega_quadratic, omega_sqrt_frac, russmann_cR
from .errors import KamError
from .interval import DEFAULT_PREC, working_precision
from .models import make_model
from .solver import Parameterization, read_torus, solve_torus, write_torus
from .tuner import tune
from .validator import KamParams, ValidationReport, validate

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_PREC", "DiophantineCert", "KamError", "KamParams", "Parameterization", "ValidationReport",
    "certify", "cubic_golden", "make_model", "omega_quadratic", "omega_sqrt_frac", "read_torus",
    "russmann_cR", "solve_torus", "tune", "validate", "working_precision", "write_torus",
]
