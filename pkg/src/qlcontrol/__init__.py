"""Optimal control of steady quasilinear PDEs.

Three state regimes (variational inner energy, strictly monotone flux,
quasilinear with a gradient nonlinearity off the divergence), the classical
outer control problem, and the Young-measure relaxation of the quasilinear
regime with its sub-relaxation gap certificate.
"""

from .grid import (
    Mesh,
    ScalarField,
    VectorField,
    build_mesh,
    divergence_weak,
    gradient,
    h1_seminorm,
    helmholtz_solve,
    inner,
    l2_norm,
)
from .coefficients import CoefficientSet, HypothesisReport, make_perturbed_linear
from .control_opt import ControlProblem, OptimizeOptions, evaluate_cost, optimize_control
from .relaxed_opt import RelaxedInit, RelaxedProblem, certify_gap, optimize_relaxed
from .reports import NonConvergenceError, RelaxationReport, SolveReport
from .state_monotone import MonotoneStateProblem, solve_monotone
from .state_quasilinear import (
    QuasilinearStateProblem,
    solve_quasilinear,
    uniqueness_threshold,
)
from .state_variational import VariationalStateProblem, inner_energy, solve_state
from .young_measure import YoungMeasureField, dirac_field, moment, realize_sequence

__version__ = "0.1.0"

__all__ = [
    "Mesh",
    "ScalarField",
    "VectorField",
    "build_mesh",
    "gradient",
    "divergence_weak",
    "helmholtz_solve",
    "inner",
    "l2_norm",
    "h1_seminorm",
    "CoefficientSet",
    "HypothesisReport",
    "make_perturbed_linear",
    "VariationalStateProblem",
    "inner_energy",
    "solve_state",
    "MonotoneStateProblem",
    "solve_monotone",
    "QuasilinearStateProblem",
    "solve_quasilinear",
    "uniqueness_threshold",
    "YoungMeasureField",
    "dirac_field",
    "moment",
    "realize_sequence",
    "ControlProblem",
    "OptimizeOptions",
    "evaluate_cost",
    "optimize_control",
    "RelaxedProblem",
    "RelaxedInit",
    "certify_gap",
    "optimize_relaxed",
    "SolveReport",
    "RelaxationReport",
    "NonConvergenceError",
]
