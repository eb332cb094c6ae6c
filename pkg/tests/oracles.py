"""Independent verifiers for the solver modules.

These implementations live outside the installed package and assemble their
own discrete operators from the definitions (nodal states, cell-centered
average gradients, trapezoid/midpoint quadrature); they never call the
package's solver routines, so agreement is evidence rather than tautology.
The only package symbols used are the plain data types and, for
``enumerate_controls_oracle``, the public cost evaluation it is meant to
check optimizers against.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class OracleResult:
    instance: str
    value: float
    tolerance: float
    passed: bool


class OracleInconclusive(RuntimeError):
    """Newton did not converge; the caller should skip, not fail."""


# -- independent discrete operators (1D and 2D, rebuilt from scratch) ----------


def _own_gradient(dim: int, n: int, y: np.ndarray) -> np.ndarray:
    h = 1.0 / n
    if dim == 1:
        return ((y[1:] - y[:-1]) / h)[:, None]
    m = n + 1
    y2 = y.reshape(m, m)
    gx = (y2[1:, :-1] - y2[:-1, :-1] + y2[1:, 1:] - y2[:-1, 1:]) / (2 * h)
    gy = (y2[:-1, 1:] - y2[:-1, :-1] + y2[1:, 1:] - y2[1:, :-1]) / (2 * h)
    return np.column_stack([gx.ravel(), gy.ravel()])


def _own_div_weak(dim: int, n: int, q: np.ndarray) -> np.ndarray:
    h = 1.0 / n
    if dim == 1:
        out = np.zeros(n + 1)
        out[1:-1] = (q[1:, 0] - q[:-1, 0]) / h
        return out
    qx = q[:, 0].reshape(n, n)
    qy = q[:, 1].reshape(n, n)
    out = np.zeros((n + 1, n + 1))
    out[1:-1, 1:-1] = (
        qx[1:, :-1] + qx[1:, 1:] - qx[:-1, :-1] - qx[:-1, 1:]
        + qy[:-1, 1:] + qy[1:, 1:] - qy[:-1, :-1] - qy[1:, :-1]
    ) / (2 * h)
    return out.ravel()


def _own_cell_to_node(dim: int, n: int, c: np.ndarray) -> np.ndarray:
    if dim == 1:
        out = np.empty(n + 1)
        out[1:-1] = 0.5 * (c[:-1] + c[1:])
        out[0], out[-1] = c[0], c[-1]
        return out
    c2 = c.reshape(n, n)
    acc = np.zeros((n + 1, n + 1))
    cnt = np.zeros((n + 1, n + 1))
    for di in (0, 1):
        for dj in (0, 1):
            acc[di : n + di, dj : n + dj] += c2
            cnt[di : n + di, dj : n + dj] += 1.0
    return (acc / cnt).ravel()


def _boundary_mask(dim: int, n: int) -> np.ndarray:
    m = n + 1
    if dim == 1:
        mask = np.zeros(m, dtype=bool)
        mask[0] = mask[-1] = True
        return mask
    mask = np.zeros((m, m), dtype=bool)
    mask[0, :] = mask[-1, :] = mask[:, 0] = mask[:, -1] = True
    return mask.ravel()


def _newton(residual, y0: np.ndarray, tol: float = 1e-10, max_steps: int = 50):
    """Dense Newton with finite-difference Jacobian on the interior dofs."""
    y = y0.copy()
    for _ in range(max_steps):
        r = residual(y)
        if np.max(np.abs(r)) <= tol:
            return y
        m = y.size
        J = np.empty((m, m))
        for j in range(m):
            step = 1e-7 * (1.0 + abs(y[j]))
            yp = y.copy()
            yp[j] += step
            J[:, j] = (residual(yp) - r) / step
        try:
            delta = np.linalg.solve(J, r)
        except np.linalg.LinAlgError as exc:
            raise OracleInconclusive(f"singular Jacobian: {exc}") from exc
        y = y - delta
        if not np.all(np.isfinite(y)):
            raise OracleInconclusive("Newton iterate diverged")
    r = residual(y)
    if np.max(np.abs(r)) <= tol:
        return y
    raise OracleInconclusive(f"Newton stalled at residual {np.max(np.abs(r)):.3e}")


def newton_state_oracle(problem, u, warm_start=None) -> np.ndarray:
    """Solve the discrete state system by Newton on a directly assembled
    residual; dispatches on the problem type by attribute shape.

    Quasilinear problems solve ``-lap_h y + avg(a(grad y)) + b y = f(u)``;
    monotone problems solve ``-div_w(A(grad y)) = f(u)``.
    """
    mesh = problem.mesh
    dim, n = mesh.dimension, mesh.cells_per_axis
    mask = _boundary_mask(dim, n)
    interior = np.flatnonzero(~mask)
    fvals = np.asarray(problem.cs.f(u.values), dtype=float)

    if hasattr(problem, "b"):  # quasilinear
        b = problem.b
        a_fn = problem.cs.a

        def residual(yint):
            y = np.zeros((n + 1) ** dim)
            y[interior] = yint
            lap = _own_div_weak(dim, n, _own_gradient(dim, n, y))
            if a_fn is not None:
                an = _own_cell_to_node(
                    dim, n, np.asarray(a_fn(_own_gradient(dim, n, y)), dtype=float)
                )
            else:
                an = np.zeros_like(y)
            full = -lap + an + b * y - fvals
            return full[interior]

    else:  # monotone flux problem
        A_fn = problem.cs.A

        def residual(yint):
            y = np.zeros((n + 1) ** dim)
            y[interior] = yint
            div = _own_div_weak(dim, n, A_fn(_own_gradient(dim, n, y)))
            full = -div - fvals
            return full[interior]

    y0 = np.zeros(interior.size)
    if warm_start is not None:
        y0 = np.asarray(warm_start.values)[interior].copy()
    yint = _newton(residual, y0)
    out = np.zeros((n + 1) ** dim)
    out[interior] = yint
    return out


def coordinate_descent_energy_oracle(
    mesh, W, source_values, u_values, tol: float = 1e-10, sweeps: int = 20_000
) -> np.ndarray:
    """1D cyclic coordinate descent on the discrete inner energy.

    Assembles the energy from scratch: midpoint quadrature of W over cells
    (with node-averaged control) plus trapezoid quadrature of source*y.
    Moving one interior node only touches its two adjacent cells, so each
    scalar minimization works with that local energy.
    """
    assert mesh.dimension == 1
    n = mesh.cells_per_axis
    h = 1.0 / n
    ucell = 0.5 * (u_values[:-1] + u_values[1:])
    y = np.zeros(n + 1)

    def local_energy(ks, vals):
        gl = (vals - y[ks - 1]) / h
        gr = (y[ks + 1] - vals) / h
        wl = np.asarray(W(gl[:, None], ucell[ks - 1]), dtype=float)
        wr = np.asarray(W(gr[:, None], ucell[ks]), dtype=float)
        return h * (wl + wr) + h * source_values[ks] * vals

    # odd and even interior nodes decouple given the other color, so each
    # color is minimized as a batch of independent scalar problems
    colors = [np.arange(1, n, 2), np.arange(2, n, 2)]
    for _ in range(sweeps):
        moved = 0.0
        for ks in colors:
            if ks.size == 0:
                continue
            vals = y[ks].copy()
            for _ in range(3):
                step = 1e-7 * (1.0 + np.abs(vals))
                ep = local_energy(ks, vals + step)
                e0 = local_energy(ks, vals)
                em = local_energy(ks, vals - step)
                d1 = (ep - em) / (2.0 * step)
                d2 = (ep - 2.0 * e0 + em) / (step * step)
                delta = np.where(
                    d2 > 0.0, -d1 / np.where(d2 > 0.0, d2, 1.0), -np.sign(d1) * step
                )
                for _ in range(50):
                    bad = local_energy(ks, vals + delta) > e0
                    if not np.any(bad):
                        break
                    delta = np.where(bad, 0.5 * delta, delta)
                vals = vals + delta
                moved = max(moved, float(np.max(np.abs(delta))))
            y[ks] = vals
        if moved <= tol:
            break
    return y


def quadratic_program_oracle(cp):
    """Exact solve of the all-quadratic control instance.

    Valid only for the variational regime with identity-gradient W, linear
    control-to-source map and (possibly capped but inactive) quadratic
    tracking cost; assembles the reduced normal equations with its own
    operators and solves by least squares.

    Returns (u_values, cost).
    """
    mesh = cp.mesh
    dim, n = mesh.dimension, mesh.cells_per_axis
    if not cp.regime == "variational":
        raise ValueError("oracle covers the variational quadratic instance")
    mask = _boundary_mask(dim, n)
    interior = np.flatnonzero(~mask)
    n_nodes = (n + 1) ** dim
    h = 1.0 / n

    # interior Laplacian assembled column by column through own operators
    m = interior.size
    L = np.empty((m, m))
    for j, nj in enumerate(interior):
        e = np.zeros(n_nodes)
        e[nj] = 1.0
        L[:, j] = -_own_div_weak(dim, n, _own_gradient(dim, n, e))[interior]
    Linv = np.linalg.inv(L)

    # state map: -lap y = -f(u) = -u  =>  y_int = -Linv u_int
    # cost: sum_k h w_k (y_k - t_k)^2 + M/2 sum_c h |grad u|^2
    wts = np.ones(n + 1)
    wts[0] = wts[-1] = 0.5
    if dim == 2:
        wts = np.outer(wts, wts).ravel()
    target = cp.tracking_target_values()
    Mw = cp.regularizer_weight

    # quadratic form in all nodal u values
    S = np.zeros((n_nodes, n_nodes))
    S[np.ix_(interior, interior)] = -Linv
    # E(u) = (S u - t)^T D (S u - t) + (M/2) u^T R u  with D = h^dim diag(w)
    D = (h**dim) * np.diag(wts)
    # gradient-regularizer matrix R: u^T R u = h^dim sum_cells |grad u|^2
    n_cells = n**dim
    Gmat = np.zeros((n_cells * dim, n_nodes))
    for j in range(n_nodes):
        e = np.zeros(n_nodes)
        e[j] = 1.0
        Gmat[:, j] = _own_gradient(dim, n, e).T.ravel()
    R = (h**dim) * (Gmat.T @ Gmat)

    H = 2.0 * S.T @ D @ S + Mw * R
    rhs = 2.0 * S.T @ D @ target
    uopt, *_ = np.linalg.lstsq(H, rhs, rcond=None)
    yv = S @ uopt
    cost = float((yv - target) @ D @ (yv - target) + 0.5 * Mw * uopt @ R @ uopt)
    return uopt, cost


def enumerate_controls_oracle(cp, value_set, max_combos: int = 3**7):
    """Exhaustive minimum of the public cost over lattice-valued controls."""
    from qlcontrol.control_opt import evaluate_cost
    from qlcontrol.grid import ScalarField

    n_nodes = cp.mesh.n_nodes
    total = len(value_set) ** n_nodes
    if total > max_combos:
        raise ValueError(f"lattice too large: {total} > {max_combos}")
    best = np.inf
    best_u = None
    for combo in itertools.product(value_set, repeat=n_nodes):
        u = ScalarField(cp.mesh, np.array(combo, dtype=float))
        cost = evaluate_cost(cp, u)
        if cost < best:
            best = cost
            best_u = u
    return best_u, float(best)
