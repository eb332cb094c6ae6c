"""Variational state solves: energies, minimizers, minimality checks."""

import numpy as np
import pytest

from qlcontrol import coefficients as co
from qlcontrol import grid
from qlcontrol.grid import ScalarField
from qlcontrol.state_variational import (
    VariationalStateProblem,
    inner_energy,
    solve_state,
    verify_minimality,
)

from oracles import coordinate_descent_energy_oracle


def quadratic_problem(n=32, source=1.0, form="general", w_name=None):
    mesh = grid.build_mesh(1, n)
    parts = co.w_quadratic()
    if w_name is not None:
        parts.update(co.w_coupling(w_name))
    cs = co.CoefficientSet(**parts)
    src = ScalarField(mesh, np.full(mesh.n_nodes, source))
    return VariationalStateProblem(mesh, cs, src, form)


class TestInnerEnergy:
    def test_zero_state_zero_source(self):
        p = quadratic_problem(source=0.0)
        u = ScalarField(p.mesh, np.zeros(p.mesh.n_nodes))
        y = ScalarField(p.mesh, np.zeros(p.mesh.n_nodes))
        assert inner_energy(p, y, u) == 0.0

    def test_non_h10_state_rejected(self):
        p = quadratic_problem()
        u = ScalarField(p.mesh, np.zeros(p.mesh.n_nodes))
        bad = ScalarField(p.mesh, np.ones(p.mesh.n_nodes))
        with pytest.raises(ValueError):
            inner_energy(p, bad, u)

    def test_parabola_energy_value(self):
        # W = |y'|^2/2, source = 1, y = x(1-x)/2: exact integral value is
        # 1/24 + 1/12 = 1/8 (computed from the closed-form polynomial
        # integrals); midpoint/trapezoid quadrature converges at O(h^2)
        p = quadratic_problem(n=128)
        x = p.mesh.node_coords()[:, 0]
        y = ScalarField(p.mesh, x * (1 - x) / 2)
        u = ScalarField(p.mesh, np.zeros(p.mesh.n_nodes))
        val = inner_energy(p, y, u)
        assert abs(val - 0.125) <= 1e-4

    def test_affine_form_with_zero_u_matches_general(self):
        rng = np.random.default_rng(2)
        pg = quadratic_problem(form="general")
        pa = quadratic_problem(form="affine-in-u", w_name="tanh")
        yv = rng.standard_normal(pg.mesh.n_nodes)
        yv[pg.mesh.boundary_mask] = 0.0
        y = ScalarField(pg.mesh, yv)
        u0 = ScalarField(pg.mesh, np.zeros(pg.mesh.n_nodes))
        assert abs(inner_energy(pg, y, u0) - inner_energy(pa, y, u0)) <= 1e-12


class TestSolveState:
    def test_quadratic_matches_helmholtz(self):
        p = quadratic_problem()
        u = ScalarField(p.mesh, np.sin(np.pi * p.mesh.node_coords()[:, 0]))
        y, rep = solve_state(p, u)
        ref = grid.helmholtz_solve(0.0, ScalarField(p.mesh, -p.source.values))
        assert rep.converged
        assert np.max(np.abs(y.values - ref.values)) <= 1e-8

    def test_zero_source_affine_zero_coupling(self):
        p = quadratic_problem(source=0.0, form="affine-in-u", w_name="zero")
        u = ScalarField(p.mesh, np.ones(p.mesh.n_nodes))
        y, _ = solve_state(p, u)
        assert np.max(np.abs(y.values)) <= 1e-10

    def test_affine_identity_coupling_closed_form(self):
        # w(y) = y makes the coupling linear: -lap y + u + f = 0
        p = quadratic_problem(source=1.0, form="affine-in-u", w_name="identity")
        x = p.mesh.node_coords()[:, 0]
        u = ScalarField(p.mesh, 0.5 * np.sin(np.pi * x))
        y, rep = solve_state(p, u)
        ref = grid.helmholtz_solve(
            0.0, ScalarField(p.mesh, -(u.values + p.source.values))
        )
        assert rep.converged
        assert np.max(np.abs(y.values - ref.values)) <= 1e-7

    def test_clamped_quartic_vs_coordinate_descent_oracle(self):
        mesh = grid.build_mesh(1, 32)
        cs = co.CoefficientSet(**co.w_quartic_clamped())
        src = ScalarField(mesh, np.ones(mesh.n_nodes))
        p = VariationalStateProblem(mesh, cs, src)
        u = ScalarField(mesh, np.zeros(mesh.n_nodes))
        y, rep = solve_state(p, u)
        assert rep.converged
        oracle = coordinate_descent_energy_oracle(mesh, cs.W, src.values, u.values)
        assert np.max(np.abs(y.values - oracle)) <= 1e-6

    def test_energy_trace_monotone(self):
        mesh = grid.build_mesh(1, 16)
        cs = co.CoefficientSet(**co.w_quartic_clamped())
        p = VariationalStateProblem(mesh, cs, ScalarField(mesh, np.ones(mesh.n_nodes)))
        _, rep = solve_state(p, ScalarField(mesh, np.zeros(mesh.n_nodes)))
        trace = np.array(rep.cost_trace)
        assert np.all(np.diff(trace) <= 1e-15)

    def test_random_initializations_agree(self):
        mesh = grid.build_mesh(1, 16)
        cs = co.CoefficientSet(**co.w_quartic_clamped())
        p = VariationalStateProblem(mesh, cs, ScalarField(mesh, np.ones(mesh.n_nodes)))
        u = ScalarField(mesh, np.zeros(mesh.n_nodes))
        rng = np.random.default_rng(4)
        sols = []
        for _ in range(2):
            y0 = rng.standard_normal(mesh.n_nodes)
            y0[mesh.boundary_mask] = 0.0
            y, _ = solve_state(p, u, y0=ScalarField(mesh, y0))
            sols.append(y.values)
        assert np.max(np.abs(sols[0] - sols[1])) <= 1e-6

    def test_continuity_in_u(self):
        # W couples u and the gradient, so the state moves with the control;
        # the response must vanish monotonically with the perturbation scale
        mesh = grid.build_mesh(1, 32)
        cs = co.CoefficientSet(**co.w_u_scaled_quadratic(0.25))
        p = VariationalStateProblem(mesh, cs, ScalarField(mesh, np.ones(mesh.n_nodes)))
        rng = np.random.default_rng(6)
        u0 = ScalarField(mesh, np.zeros(mesh.n_nodes))
        y0, _ = solve_state(p, u0)
        direction = rng.standard_normal(mesh.n_nodes)
        drifts = []
        for scale in (1e-1, 1e-2, 1e-3):
            u = ScalarField(mesh, scale * direction)
            y, _ = solve_state(p, u)
            drifts.append(grid.l2_norm(ScalarField(mesh, y.values - y0.values)))
        assert drifts[0] > drifts[1] > drifts[2]
        assert drifts[2] <= 1e-3


class TestVerifyMinimality:
    def test_quadratic_passes_100_trials(self):
        p = quadratic_problem()
        u = ScalarField(p.mesh, np.zeros(p.mesh.n_nodes))
        y, _ = solve_state(p, u)
        rep = verify_minimality(p, y, u, trials=100)
        assert rep.passed

    def test_constructed_violation_fails(self):
        p = quadratic_problem()
        u = ScalarField(p.mesh, np.zeros(p.mesh.n_nodes))
        y, _ = solve_state(p, u)
        bad = np.array(y.values)
        bad[p.mesh.n_nodes // 2] += 0.1
        rep = verify_minimality(p, ScalarField(p.mesh, bad), u, trials=50)
        assert not rep.passed

    def test_clamped_quartic_passes(self):
        mesh = grid.build_mesh(1, 16)
        cs = co.CoefficientSet(**co.w_quartic_clamped())
        p = VariationalStateProblem(mesh, cs, ScalarField(mesh, np.ones(mesh.n_nodes)))
        u = ScalarField(mesh, np.zeros(mesh.n_nodes))
        y, _ = solve_state(p, u)
        assert verify_minimality(p, y, u, trials=60).passed


class TestValidation:
    def test_nonconvex_w_rejected(self):
        def W(Y, u):
            return 0.5 * np.sum(Y * Y, axis=1) - 2.0 * np.cos(Y[:, 0])

        mesh = grid.build_mesh(1, 8)
        cs = co.CoefficientSet(W=W, c=0.1, C=5.0)
        with pytest.raises(ValueError):
            VariationalStateProblem(mesh, cs, ScalarField(mesh, np.zeros(mesh.n_nodes)))
