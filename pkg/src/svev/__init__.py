"""svev: cross-correlations between singular values and eigenvalues of
bi-unitarily invariant complex random matrix ensembles.

Analytic side: polynomial/Pólya ensemble kernels and the closed or
integral-form correlation densities between squared eigenradii and squared
singular values, instantiated for the Laguerre and Jacobi families.
Stochastic side: matrix samplers and histogram estimators that verify every
formula against Monte-Carlo draws, plus deterministic per-draw audits.
"""

__version__ = "0.1.0"

from .ensembles import EnsembleModel, Jacobi, KernelEval, Laguerre
from .correlations import (
    CovContext,
    DensityTable,
    conditional_density,
    conditional_mass,
    cov_1k,
    cov_closed,
    cov_integral,
    f_1k,
    kink_probe,
    make_context,
    rho_ev_polya,
    rho_ev_polynomial,
    rho_sv,
)
from .quad import QuadratureSpec, integrate, integrate_semi_infinite

__all__ = [
    "EnsembleModel",
    "Jacobi",
    "KernelEval",
    "Laguerre",
    "CovContext",
    "DensityTable",
    "QuadratureSpec",
    "conditional_density",
    "conditional_mass",
    "cov_1k",
    "cov_closed",
    "cov_integral",
    "f_1k",
    "integrate",
    "integrate_semi_infinite",
    "kink_probe",
    "make_context",
    "rho_ev_polya",
    "rho_ev_polynomial",
    "rho_sv",
]
