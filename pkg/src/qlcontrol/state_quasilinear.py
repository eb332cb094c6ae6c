"""Quasilinear state equation -lap y + a(grad y) + b y = f(u) by Picard
iteration.

Each Picard step freezes the gradient nonlinearity and solves one Helmholtz
problem; the completed-squares estimate behind the uniqueness statement
(threshold b > L^2/4 for Lipschitz constant L of a) also certifies the
contraction of this map on the discrete problem, with margin growing in b.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import grid
from .coefficients import CoefficientSet, HypothesisReport
from .grid import Mesh, ScalarField
from .reports import NonConvergenceError, SolveReport

__all__ = [
    "QuasilinearStateProblem",
    "uniqueness_threshold",
    "solve_quasilinear",
    "verify_uniqueness",
    "apriori_gradient_bound",
]


def uniqueness_threshold(L: float) -> float:
    """Zero-order coefficient above which the Lipschitz nonlinearity cannot
    produce two solutions: L^2 / 4."""
    if L < 0.0:
        raise ValueError(f"L must be nonnegative, got {L}")
    return L * L / 4.0


def poincare_constant(mesh: Mesh) -> float:
    """Sharp Poincare constant of the unit interval (1/pi) or square
    (1/(sqrt(2) pi))."""
    return 1.0 / np.pi if mesh.dimension == 1 else 1.0 / (np.sqrt(2.0) * np.pi)


@dataclass(frozen=True)
class QuasilinearStateProblem:
    """Quasilinear problem -lap y + a(grad y) + b y = f(u), zero Dirichlet.

    ``unique`` is derived from the declared Lipschitz constant: b must exceed
    L^2/4 strictly (linear problems, L = 0, are unique for every b >= 0).
    Omitting b picks ``max(1, 2 L^2/4)``, a comfortable margin above the
    threshold.
    """

    mesh: Mesh
    cs: CoefficientSet
    b: Optional[float] = None
    unique: bool = field(init=False)
    f_sampled_bound: float = field(init=False)

    def __post_init__(self):
        if self.cs.f is None:
            raise ValueError("quasilinear problem needs the source map f")
        if self.b is None:
            object.__setattr__(
                self, "b", max(1.0, 2.0 * uniqueness_threshold(self.cs.L))
            )
        if self.b < 0.0 or not np.isfinite(self.b):
            raise ValueError(f"b must be a finite nonnegative real, got {self.b}")
        L = self.cs.L
        thr = uniqueness_threshold(L)
        if L > 0.0 and not self.b > thr:
            raise ValueError(
                f"b={self.b} does not exceed the uniqueness threshold "
                f"L^2/4 = {thr} (L = {L})"
            )
        if L > 0.0 and self.b <= 1.1 * thr:
            warnings.warn(
                f"b={self.b} is within 10% of the uniqueness threshold {thr}; "
                "Picard contraction may be slow",
                stacklevel=2,
            )
        object.__setattr__(self, "unique", L == 0.0 or self.b > thr)

        if self.cs.a is not None:
            # |a(y)| <= C|y| on samples (C defaults to the Lipschitz constant)
            growth_c = self.cs.C if self.cs.C is not None else max(L, 1e-12)
            rng = np.random.default_rng(2024)
            Y = rng.uniform(-10.0, 10.0, size=(2000, self.mesh.dimension))
            aY = np.asarray(self.cs.a(Y), dtype=float)
            norms = np.linalg.norm(Y, axis=1)
            worst = float(np.max(np.abs(aY) - growth_c * norms))
            if worst > 1e-10:
                raise ValueError(
                    f"|a(y)| <= C|y| fails on samples by {worst} (C = {growth_c})"
                )
        rng = np.random.default_rng(2025)
        us = rng.uniform(-1e3, 1e3, size=2000)
        fs = np.asarray(self.cs.f(us), dtype=float)
        if not np.all(np.isfinite(fs)):
            raise ValueError("f is not finite on the sampled control range")
        object.__setattr__(self, "f_sampled_bound", float(np.max(np.abs(fs))))

    @property
    def growth_constant(self) -> float:
        """Constant C with |a(y)| <= C|y| (defaults to the Lipschitz L)."""
        if self.cs.a is None:
            return 0.0
        return self.cs.C if self.cs.C is not None else self.cs.L


def _a_node_values(p: QuasilinearStateProblem, y: np.ndarray) -> np.ndarray:
    if p.cs.a is None:
        return np.zeros(p.mesh.n_nodes)
    acell = np.asarray(p.cs.a(grid.gradient_values(p.mesh, y)), dtype=float)
    return grid.cell_to_node_values(p.mesh, acell)


def strong_residual(p: QuasilinearStateProblem, y: np.ndarray, fvals: np.ndarray) -> float:
    """L2 norm of -lap_h y + a(grad y) + b y - f on the interior nodes."""
    mesh = p.mesh
    res = -grid.laplacian_values(mesh, y) + _a_node_values(p, y) + p.b * y - fvals
    res[mesh.boundary_mask] = 0.0
    return grid.l2_norm(ScalarField(mesh, res))


def solve_quasilinear(
    p: QuasilinearStateProblem,
    u: ScalarField,
    tol: float = 1e-9,
    max_iterations: int = 10_000,
    y0: Optional[ScalarField] = None,
):
    """Picard iteration y_{k+1} = (-lap + b)^{-1}(f(u) - a(grad y_k)).

    Starts from zero unless ``y0`` is given, stops when the H1 norm of the
    increment drops below ``tol`` and reports the final strong residual and
    the measured contraction ratio.
    """
    mesh = p.mesh
    fvals = np.asarray(p.cs.f(u.values), dtype=float)
    y = np.zeros(mesh.n_nodes) if y0 is None else np.array(y0.values)
    y[mesh.boundary_mask] = 0.0

    prev_incr = None
    worst_ratio = 0.0
    last_incr = np.inf
    for k in range(1, max_iterations + 1):
        rhs = fvals - _a_node_values(p, y)
        ynew = grid.helmholtz_solve_values(mesh, p.b, rhs)
        incr = grid.h1_norm(ScalarField(mesh, ynew - y))
        if prev_incr is not None and prev_incr > 0.0:
            worst_ratio = max(worst_ratio, incr / prev_incr)
        prev_incr = incr
        y = ynew
        last_incr = incr
        if incr <= tol:
            report = SolveReport(
                method="picard",
                iterations=k,
                residual=strong_residual(p, y, fvals),
                converged=True,
                contraction_ratio=worst_ratio if k > 2 else None,
                extras={"final_increment": incr},
            )
            return ScalarField(mesh, y), report

    report = SolveReport(
        method="picard",
        iterations=max_iterations,
        residual=strong_residual(p, y, fvals),
        converged=False,
        contraction_ratio=worst_ratio,
        extras={"final_increment": float(last_incr)},
    )
    raise NonConvergenceError(
        f"Picard iteration did not contract to {tol} within {max_iterations} "
        f"steps (measured ratio {worst_ratio:.4f}); b may barely exceed the "
        "uniqueness threshold",
        report,
    )


def verify_uniqueness(
    p: QuasilinearStateProblem,
    u: ScalarField,
    trials: int = 5,
    seed: int = 0,
    tol: float = 1e-6,
) -> HypothesisReport:
    """Solve from random initial iterates and compare all results pairwise."""
    if not p.unique:
        raise ValueError(
            "uniqueness is only guaranteed for b > L^2/4; refusing to verify"
        )
    rng = np.random.default_rng(seed)
    solutions = []
    for _ in range(trials):
        y0v = rng.standard_normal(p.mesh.n_nodes)
        y0v[p.mesh.boundary_mask] = 0.0
        y, _ = solve_quasilinear(p, u, y0=ScalarField(p.mesh, y0v))
        solutions.append(y.values)
    worst = 0.0
    for i in range(trials):
        for j in range(i + 1, trials):
            worst = max(worst, float(np.max(np.abs(solutions[i] - solutions[j]))))
    return HypothesisReport(
        hypothesis="uniqueness",
        samples=trials,
        worst_margin=tol - worst,
        tolerance=0.0,
    )


def apriori_gradient_bound(p: QuasilinearStateProblem, u: ScalarField):
    """Explicit bound on ||grad y|| from the completed-squares estimate.

    ``(1 - C^2/(4b)) ||grad y||^2 <= ||f(u)|| ||y||`` combined with the
    Poincare inequality gives ``||grad y|| <= C_P ||f(u)|| / (1 - C^2/(4b))``.
    Returns the bound and whether the solved state satisfies it.
    """
    C = p.growth_constant
    if p.b <= 0.0 and C > 0.0:
        raise ValueError("bound needs b > 0 when a is present")
    factor = 1.0 - C * C / (4.0 * p.b) if p.b > 0.0 else 1.0
    if factor <= 0.0:
        raise ValueError(
            f"hypothesis 1 - C^2/(4b) > 0 fails: C={C}, b={p.b}"
        )
    fvals = np.asarray(p.cs.f(u.values), dtype=float)
    fnorm = grid.l2_norm(ScalarField(p.mesh, fvals))
    bound = poincare_constant(p.mesh) * fnorm / factor
    y, _ = solve_quasilinear(p, u)
    holds = grid.h1_seminorm(y) <= bound + 1e-12
    return bound, holds
