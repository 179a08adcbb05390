"""Orthogonal-series (projection) estimation of mixing densities.

Modules:
    legendre      normalized Legendre polynomials on an interval
    families      mixture families (kernels, g_k, phi_k, the isometry T)
    densities     mixing densities with sup bounds
    estimator     coefficient estimates, projections, choice of m
    simulation    Monte Carlo experiments
    smoothness    weighted moduli of smoothness
    cli           the ``mixseries`` command
"""

from .densities import MixingDensity, beta_shaped, cosine_bump, uniform
from .errors import *  # noqa: F401,F403
from .estimator import (
    ProjectionEstimate,
    SelectionRule,
    estimate_coefficients,
    evaluate,
    in_basis_density,
    postprocess_density,
    project_exact,
    psi_values,
    select_m,
)
from .families import (
    BetaScale,
    ExponentialIndicator,
    ExponentialMoment,
    GammaShape,
    GenericScale,
    MixtureFamily,
    UnitScaleDensity,
    make_family,
)
from .legendre import Interval, LegendreBasis, build_basis, coefficient_growth_report, eval_poly
from .simulation import ExperimentConfig, ExperimentReport, run_experiment, sample_mixture
from .smoothness import ModulusQuery, certify_class, symmetric_difference, weighted_modulus

__version__ = "0.1.0"
