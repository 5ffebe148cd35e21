"""Radial solutions, degeneracies and nonradial bifurcation branches of
-Δu = u^p + λu on an annulus in R^N."""

__version__ = "0.1.0"

from .config import ProblemConfig
from .errors import (
    AnnbifError,
    ConfigError,
    CorrectorFailure,
    DomainError,
    EigenSolveFailure,
    GridMismatch,
    LinearSolveFailure,
    NoPositiveSolution,
    NonConvergence,
    PositivityLoss,
    SolverError,
)
from .radial import RadialProfile, refine_profile, solve_radial
from .spectral import (
    DegeneracyPoint,
    alpha1,
    find_degeneracies,
    harmonic_multiplicity,
    morse_index,
    mu,
    parity_report,
    scan_alpha1,
)
from .harmonics import HarmonicPoly, build_harmonic, eval_harmonic
from .pde2d import Field2D, Operator2D, apply_T, radial_embed, residual_S
from .cones import ConeReport, is_in_K1, is_in_K2, is_in_Kn, tangent_membership
from .continuation import Branch, BranchPoint, StepControls, continue_branch, initial_tangent

__all__ = [n for n in dir() if not n.startswith("_")]
