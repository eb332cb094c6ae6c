"""Outer control problem: minimize F(y_u) plus a Tychonov regularizer.

The cost gradient is estimated by forward finite differences over nodal
control perturbations (the work never assumes an adjoint equation), descent
is plain projected gradient with Armijo backtracking, and every state solve
inside one gradient evaluation is warm-started from the unperturbed state.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import grid
from .coefficients import CoefficientSet
from .grid import Mesh, ScalarField
from .reports import NonConvergenceError, SolveReport
from .state_monotone import solve_monotone
from .state_quasilinear import solve_quasilinear
from .state_variational import solve_state
from .young_measure import YoungMeasureField, realize_sequence

__all__ = [
    "ControlProblem",
    "OptimizeOptions",
    "evaluate_cost",
    "optimize_control",
    "minimizing_sequence_demo",
    "solve_state_for",
]

_STATE_TOL_DEFAULTS = {"variational": 1e-8, "monotone": 1e-9, "quasilinear": 1e-11}


@dataclass(frozen=True)
class ControlProblem:
    """Outer problem data: regime, state problem, cost integrand, regularizer.

    ``cs`` carries the cost integrand F and the control-to-source map f.  For
    the variational regime, ``source_from_control`` selects whether f(u)
    replaces the state problem's fixed source (the control then also enters
    the inner energy through W's second slot).
    """

    mesh: Mesh
    regime: str
    state: object
    cs: CoefficientSet
    M: float
    regularizer: str = "gradient"
    source_from_control: bool = True
    rebuild: Optional[Callable[[Mesh], "ControlProblem"]] = field(
        default=None, compare=False
    )
    demo_measure: Optional[YoungMeasureField] = field(default=None, compare=False)
    tracking_target: Optional[np.ndarray] = field(default=None, compare=False)
    reference_controls: tuple = field(default=(), compare=False)

    def __post_init__(self):
        if self.regime not in ("variational", "monotone", "quasilinear"):
            raise ValueError(f"unknown regime {self.regime!r}")
        if self.regularizer not in ("gradient", "l2"):
            raise ValueError(f"unknown regularizer {self.regularizer!r}")
        if not self.M > 0.0:
            raise ValueError(f"M must be positive, got {self.M}")
        if self.cs.F is None:
            raise ValueError("control problem needs the cost integrand F")

    def with_mesh(self, mesh: Mesh) -> "ControlProblem":
        if self.rebuild is None:
            raise ValueError("this problem carries no mesh rebuilder")
        return self.rebuild(mesh)

    @property
    def regularizer_weight(self) -> float:
        return self.M

    def tracking_target_values(self) -> np.ndarray:
        if self.tracking_target is None:
            raise ValueError("no tracking target stored on this problem")
        return np.asarray(self.tracking_target, dtype=float)


def solve_state_for(
    cp: ControlProblem,
    u: ScalarField,
    warm: Optional[ScalarField] = None,
    state_tol: Optional[float] = None,
):
    """State solve of the problem's regime for control u."""
    tol = state_tol if state_tol is not None else _STATE_TOL_DEFAULTS[cp.regime]
    if cp.regime == "variational":
        p = cp.state
        if cp.source_from_control:
            if cp.cs.f is None:
                raise ValueError("source_from_control needs the map f")
            p = p.with_source(
                ScalarField(cp.mesh, np.asarray(cp.cs.f(u.values), dtype=float))
            )
        return solve_state(p, u, tol=tol, y0=warm)
    if cp.regime == "monotone":
        return solve_monotone(cp.state, u, tol=tol, y0=warm)
    return solve_quasilinear(cp.state, u, tol=tol, y0=warm)


def regularizer_value(cp: ControlProblem, u: ScalarField) -> float:
    if cp.regularizer == "gradient":
        g = grid.gradient(u)
        return 0.5 * cp.M * grid.inner(g, g)
    return 0.5 * cp.M * grid.inner(u, u)


def evaluate_cost(
    cp: ControlProblem,
    u: ScalarField,
    warm: Optional[ScalarField] = None,
    state_tol: Optional[float] = None,
    return_state: bool = False,
):
    """Quadrature of F(y_u) plus the Tychonov term; propagates state-solver
    non-convergence."""
    y, _ = solve_state_for(cp, u, warm=warm, state_tol=state_tol)
    cost = grid.integrate_nodal(cp.mesh, np.asarray(cp.cs.F(y.values), dtype=float))
    cost += regularizer_value(cp, u)
    if return_state:
        return cost, y
    return cost


@dataclass(frozen=True)
class OptimizeOptions:
    """Knobs of the outer descent; defaults follow the desk-scale caps."""

    max_iterations: int = 500
    linesearch_max: int = 30
    gradient_tol: float = 1e-6
    fd_step: float = 1e-5
    initial_step: float = 1.0
    state_tol: Optional[float] = None


def _fd_cost_gradient(
    cp: ControlProblem,
    u: np.ndarray,
    base_cost: float,
    base_state: ScalarField,
    opts: OptimizeOptions,
) -> np.ndarray:
    """Forward-difference L2 cost gradient over nodal perturbations."""
    mesh = cp.mesh
    delta = opts.fd_step * (1.0 + float(np.max(np.abs(u))))
    scale = mesh.cell_volume * mesh.node_weights()
    g = np.empty(mesh.n_nodes)
    for k in range(mesh.n_nodes):
        up = u.copy()
        up[k] += delta
        ck = evaluate_cost(
            cp, ScalarField(mesh, up), warm=base_state, state_tol=opts.state_tol
        )
        g[k] = (ck - base_cost) / delta
    return g / scale


def optimize_control(
    cp: ControlProblem,
    u0: ScalarField,
    opts: Optional[OptimizeOptions] = None,
):
    """Projected-gradient descent on the control cost.

    Deterministic given u0 and options.  Accepted iterates have
    non-increasing cost; stops at the gradient tolerance, on line-search
    exhaustion, or at the iteration cap (returning the best iterate with the
    converged flag cleared).
    """
    if opts is None:
        opts = OptimizeOptions()
    mesh = cp.mesh
    t0 = time.perf_counter()
    u = np.array(u0.values, dtype=float)
    cost, state = evaluate_cost(
        cp, ScalarField(mesh, u), state_tol=opts.state_tol, return_state=True
    )
    trace = [cost]
    step = opts.initial_step
    stationarity = np.inf
    stopped = "cap"
    iterations = 0

    for it in range(1, opts.max_iterations + 1):
        iterations = it
        g = _fd_cost_gradient(cp, u, cost, state, opts)
        gnorm2 = float(mesh.cell_volume * np.sum(mesh.node_weights() * g * g))
        stationarity = float(np.sqrt(gnorm2))
        if stationarity <= opts.gradient_tol:
            stopped = "gradient"
            break

        accepted = False
        alpha = step
        for _ in range(opts.linesearch_max):
            utrial = u - alpha * g
            try:
                ctrial, strial = evaluate_cost(
                    cp,
                    ScalarField(mesh, utrial),
                    warm=state,
                    state_tol=opts.state_tol,
                    return_state=True,
                )
            except NonConvergenceError:
                alpha *= 0.5  # shrink and retry on state-solver failure
                continue
            if ctrial <= cost - 1e-4 * alpha * gnorm2:
                u, cost, state = utrial, ctrial, strial
                trace.append(cost)
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            stopped = "linesearch"
            break
        step = min(alpha * 2.0, 1e3)

    report = SolveReport(
        method="fd-projected-gradient",
        iterations=iterations,
        residual=stationarity,
        converged=stopped == "gradient",
        cost=cost,
        stationarity=stationarity,
        cost_trace=trace,
        wall_time=time.perf_counter() - t0,
        extras={"stopped": stopped},
    )
    return ScalarField(mesh, u), report


def central_fd_gradient(
    cp: ControlProblem, u: ScalarField, opts: Optional[OptimizeOptions] = None
) -> np.ndarray:
    """Central-difference L2 cost gradient (self-consistency reference)."""
    if opts is None:
        opts = OptimizeOptions()
    mesh = cp.mesh
    uv = u.values
    delta = opts.fd_step * (1.0 + float(np.max(np.abs(uv))))
    scale = mesh.cell_volume * mesh.node_weights()
    _, base_state = evaluate_cost(
        cp, u, state_tol=opts.state_tol, return_state=True
    )
    g = np.empty(mesh.n_nodes)
    for k in range(mesh.n_nodes):
        up = uv.copy()
        um = uv.copy()
        up[k] += delta
        um[k] -= delta
        cp_cost = evaluate_cost(
            cp, ScalarField(mesh, up), warm=base_state, state_tol=opts.state_tol
        )
        cm_cost = evaluate_cost(
            cp, ScalarField(mesh, um), warm=base_state, state_tol=opts.state_tol
        )
        g[k] = (cp_cost - cm_cost) / (2.0 * delta)
    return g / scale


def forward_fd_gradient(
    cp: ControlProblem, u: ScalarField, opts: Optional[OptimizeOptions] = None
) -> np.ndarray:
    """Forward-difference L2 cost gradient at u (the optimizer's estimate)."""
    if opts is None:
        opts = OptimizeOptions()
    cost, state = evaluate_cost(
        cp, u, state_tol=opts.state_tol, return_state=True
    )
    return _fd_cost_gradient(cp, np.array(u.values), cost, state, opts)


def minimizing_sequence_demo(
    cp: ControlProblem,
    j_list,
    measure: Optional[YoungMeasureField] = None,
) -> np.ndarray:
    """Costs of the realized oscillating controls u_j for each j.

    Realizes the prescribed two-atom control-gradient measure at each
    oscillation count and evaluates the classical cost on the realization
    mesh (rebuilding the problem there); the trace is non-increasing in j up
    to O(1/j) wiggle.
    """
    ymf = measure if measure is not None else cp.demo_measure
    if ymf is None:
        raise ValueError("no oscillation measure prescribed for this problem")
    costs = []
    for j in j_list:
        u_j = realize_sequence(ymf, int(j))
        cp_j = cp if u_j.mesh == cp.mesh else cp.with_mesh(u_j.mesh)
        costs.append(evaluate_cost(cp_j, u_j))
    return np.asarray(costs)
