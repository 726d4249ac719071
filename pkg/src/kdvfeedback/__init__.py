"""Rapid boundary stabilization of the KdV equation by an integral transform.

The package builds the spectral basis of ``A = -d^3/dx^3 - d/dx`` with
``phi(0) = phi(L) = 0`` and ``phi'(0) = phi'(L)``, synthesizes the transform
kernel ``k(x, y)`` and the Neumann feedback gain ``g(y) = k_x(L, y)``, and
simulates the controlled equation.

Modules
-------
spectral
    Critical lengths, eigenvalue roots, eigenmodes and the basis.
kernel
    Coupling system, perturbed modes, kernel assembly and weak-form checks.
transform
    Quadrature realization of ``K`` and of ``I - K``.
sim
    Implicit finite-difference time stepping and decay diagnostics.
cli
    Command-line front end (``kdvfeedback``).
"""

from . import _backend
from .errors import (
    ChecksumMismatch,
    CriticalLength,
    DegenerateWindow,
    GridMismatch,
    IntegrityError,
    KdVFeedbackError,
    MathError,
    NonconformingInitialData,
    PicardDiverged,
    UsageError,
)
from .kernel import (
    GainCoefficients,
    KernelField,
    assemble_kernel,
    coupling_matrix,
    feedback_gain,
    solve_gain_coefficients,
    synthesize,
    transposition_residual,
)
from .sim import (
    SimConfig,
    SimState,
    SimulationTrace,
    fit_decay_rate,
    simulate_closed_loop,
    simulate_linear_closed_loop,
    simulate_open_loop,
)
from .spectral import (
    EigenMode,
    Grid,
    SpectralBasis,
    build_basis,
    critical_lengths,
    is_noncritical,
    locate_taus,
    mu_of_tau,
)
from .transform import TransformOperator, forward_transform, inverse_transform

__version__ = "0.1.0"

BACKEND = _backend.name()

__all__ = [
    "BACKEND",
    "ChecksumMismatch",
    "CriticalLength",
    "DegenerateWindow",
    "EigenMode",
    "GainCoefficients",
    "Grid",
    "GridMismatch",
    "IntegrityError",
    "KdVFeedbackError",
    "KernelField",
    "MathError",
    "NonconformingInitialData",
    "PicardDiverged",
    "SimConfig",
    "SimState",
    "SimulationTrace",
    "SpectralBasis",
    "TransformOperator",
    "UsageError",
    "assemble_kernel",
    "build_basis",
    "coupling_matrix",
    "critical_lengths",
    "feedback_gain",
    "fit_decay_rate",
    "forward_transform",
    "inverse_transform",
    "is_noncritical",
    "locate_taus",
    "mu_of_tau",
    "simulate_closed_loop",
    "simulate_linear_closed_loop",
    "simulate_open_loop",
    "solve_gain_coefficients",
    "synthesize",
    "transposition_residual",
]
