from __future__ import annotations

import math
import types

import numpy as np
import pytest
from scipy import special

from thicksmooth import cli, geometry, operators, quadrature
from thicksmooth.errors import (DegreeBelowFloor, GridMismatch, InvariantViolation,
                                QuadratureDominates, ValidationError)
from thicksmooth.kernels import ScaledKernel
from thicksmooth.operators import (EvaluationGrid, FieldPiece, PiecewiseField, SmoothingContext,
                                   bistochastic_smooth, degree, evaluate_grid, lp_error, lp_norm,
                                   markov_smooth, q_function)


def ctx_for(domain, eps, max_area, method="structured", **kw):
    rule = quadrature.rule_for_region(domain, max_area, method=method)
    return SmoothingContext(domain, rule, ScaledKernel.gaussian(eps), **kw)


@pytest.fixture(scope="module")
def fine_ctx():
    return ctx_for(geometry.unit_square(), 0.01, 2e-5)


class TestContext:
    def test_floor_range(self, unit_square, square_rule):
        for floor in (0.0, 1.0, -0.1):
            with pytest.raises(ValidationError):
                SmoothingContext(unit_square, square_rule, ScaledKernel.gaussian(0.1), floor)

    def test_nodes_inside(self, unit_square):
        rule = quadrature.rule_for_region(geometry.rectangle(0, 2, 0, 1), 0.01)
        with pytest.raises(ValidationError):
            SmoothingContext(unit_square, rule, ScaledKernel.gaussian(0.1))

    def test_planar_kernel(self, unit_square, square_rule):
        with pytest.raises(ValidationError):
            SmoothingContext(unit_square, square_rule, ScaledKernel.gaussian(0.1, n=1))


class TestDegree:
    def test_large_square_centre(self):
        ctx = ctx_for(geometry.rectangle(0, 140e3, 0, 140e3), 1700.0, 5e5)
        assert degree(ctx, (70e3, 70e3)) == pytest.approx(1.0, abs=1e-3)

    def test_edge_and_corner(self):
        ctx = ctx_for(geometry.unit_square(), 0.005, 2.5e-6)
        assert degree(ctx, (0.5, 0.0)) == pytest.approx(0.5, abs=1e-2)
        assert degree(ctx, (0.0, 0.0)) == pytest.approx(0.25, abs=1e-2)
        assert degree(ctx, (1.0, 0.5)) == pytest.approx(0.5, abs=1e-2)

    def test_below_floor(self):
        sliver = geometry.rectangle(0, 1, 0, 0.01)
        ctx = ctx_for(sliver, 0.5, 1e-4)
        with pytest.raises(DegreeBelowFloor) as exc:
            degree(ctx, (0.5, 0.005))
        assert exc.value.count == 1
        np.testing.assert_allclose(exc.value.locations, [[0.5, 0.005]])


class TestMarkov:
    def test_constant_exact(self, square_ctx, rng):
        f = PiecewiseField.constant(square_ctx.domain.outer, square_ctx.domain_rule)
        vals = markov_smooth(square_ctx, f, rng.random((200, 2)))
        np.testing.assert_allclose(vals, 1.0, atol=1e-12, rtol=0)

    def test_linear_centre(self, fine_ctx, unit_square):
        f = PiecewiseField.from_function([unit_square.outer], [fine_ctx.domain_rule],
                                         lambda p: p[:, 0])
        # oracle: normalized convolution evaluated on a 100x finer rule
        ref_rule = quadrature.rule_for_region(unit_square, 2e-7, method="structured")
        k = ScaledKernel.gaussian(0.01)
        w = ref_rule.weights * k(np.array([0.5, 0.5]), ref_rule.nodes)
        oracle = float(w @ ref_rule.nodes[:, 0] / w.sum())
        val = float(markov_smooth(fine_ctx, f, (0.5, 0.5))[0])
        assert val == pytest.approx(0.5, abs=1e-4)
        assert val == pytest.approx(oracle, abs=1e-4)

    def test_overlap_sums(self):
        domain = geometry.rectangle(0, 1.5, 0, 1)
        ctx = ctx_for(domain, 0.05, 2e-4)
        a = geometry.rectangle(0, 1, 0, 1)
        b = geometry.rectangle(0.5, 1.5, 0, 1)
        ra = quadrature.rule_for_region(a, 2e-4, method="structured")
        rb = quadrature.rule_for_region(b, 2e-4, method="structured")
        f = PiecewiseField.constant(a.outer, ra) + PiecewiseField.constant(b.outer, rb)
        x = (0.75, 0.5)
        val = float(markov_smooth(ctx, f, x)[0])
        # oracle: each unit square contributes its Gaussian mass over the square
        fine = quadrature.rule_for_region(domain, 2e-6, method="structured")
        k = ScaledKernel.gaussian(0.05)
        kw = fine.weights * k(np.array(x), fine.nodes)
        inside = ((fine.nodes[:, 0] < 1).astype(float) + (fine.nodes[:, 0] > 0.5))
        assert val == pytest.approx(2.0, abs=1e-3)
        assert val == pytest.approx(float(kw @ inside / kw.sum()), abs=1e-3)

    def test_vector_componentwise(self, square_ctx, rng):
        rule = square_ctx.domain_rule
        a = rng.random(len(rule))
        b = rng.random(len(rule))
        f = PiecewiseField((FieldPiece(square_ctx.domain.outer, rule, np.column_stack([a, b])),), 2)
        fa = PiecewiseField((FieldPiece(square_ctx.domain.outer, rule, a),), 1)
        fb = PiecewiseField((FieldPiece(square_ctx.domain.outer, rule, b),), 1)
        x = rng.random((20, 2))
        both = markov_smooth(square_ctx, f, x)
        np.testing.assert_allclose(both[:, 0], markov_smooth(square_ctx, fa, x)[:, 0], rtol=1e-13)
        np.testing.assert_allclose(both[:, 1], markov_smooth(square_ctx, fb, x)[:, 0], rtol=1e-13)


class TestQ:
    def test_interior(self, fine_ctx):
        assert q_function(fine_ctx, (0.5, 0.5)) == pytest.approx(1.0, abs=1e-3)

    def test_edge_bounds(self, fine_ctx):
        assert 0.5 <= q_function(fine_ctx, (0.5, 0.0)) <= 2.0

    def test_huge_square(self):
        # every node within 8 eps of x is itself 16 eps from the boundary
        ctx = ctx_for(geometry.rectangle(-20, 20, -20, 20), 1.0, 0.05)
        assert q_function(ctx, (1.0, -2.0)) == pytest.approx(1.0, abs=1e-6)


class TestBistochastic:
    def test_constant(self, square_ctx, rng):
        f = PiecewiseField.constant(square_ctx.domain.outer, square_ctx.domain_rule)
        np.testing.assert_allclose(bistochastic_smooth(square_ctx, f, rng.random((50, 2))),
                                   1.0, atol=1e-6)

    def test_mass(self, square_ctx):
        sub = geometry.rectangle(0.25, 0.75, 0.25, 0.75)
        rule = quadrature.rule_for_region(sub, 1e-3, method="structured")
        f = PiecewiseField.constant(sub.outer, rule)
        assert operators.bistochastic_mass_residual(square_ctx, f) <= 1e-3

    def test_discrete_matrix_symmetric_bistochastic(self, unit_square):
        nodes = np.array([[0.3, 0.4], [0.6, 0.7]])
        w = np.array([0.45, 0.55])
        rule = quadrature.QuadratureRule(nodes, w, {"kind": "manual"}, 1.0)
        eps = 0.4
        ctx = SmoothingContext(unit_square, rule, ScaledKernel.gaussian(eps))
        # discrete operator applied to unit node masses, read back at the nodes
        M = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = 1.0
            fld = PiecewiseField((FieldPiece(unit_square.outer, rule, e),), 1)
            M[:, j] = bistochastic_smooth(ctx, fld, nodes)[:, 0]
        # brute-force assembly of the symmetric kernel p~(y_i, y_j)
        r2 = ((nodes[:, None] - nodes[None]) ** 2).sum(-1)
        K = np.exp(-r2 / (2 * eps**2)) / (2 * math.pi * eps**2)
        d = K @ w
        q = K @ (w / d)
        P = (K / d[:, None]) @ np.diag(w / q) @ (K / d[None, :])
        np.testing.assert_allclose(M, P * w[None, :], rtol=1e-12)
        np.testing.assert_allclose(P, P.T, rtol=1e-12)
        np.testing.assert_allclose(P @ w, 1.0, rtol=1e-12)
        np.testing.assert_allclose(w @ P, 1.0, rtol=1e-12)


class TestGrid:
    def test_constant_grid(self, square_ctx):
        grid = EvaluationGrid.covering(square_ctx.domain, 10)
        f = PiecewiseField.constant(square_ctx.domain.outer, square_ctx.domain_rule)
        res = evaluate_grid(square_ctx, f, grid)
        np.testing.assert_allclose(res.values[grid.mask], 1.0, atol=1e-9)
        assert res.values.shape == (10, 10, 1)
        assert res.min_degree > 0.25

    def test_outside_is_nan(self):
        domain = geometry.PolygonalDomain.from_polygon([(0, 0), (1, 0), (1, 1)])
        ctx = ctx_for(domain, 0.1, 1e-3, method="ruppert")
        grid = EvaluationGrid.covering(domain, 12)
        f = PiecewiseField.constant(domain.outer, ctx.domain_rule)
        res = evaluate_grid(ctx, f, grid, operators.BISTOCHASTIC)
        assert np.all(np.isnan(res.values[~grid.mask]))
        assert np.all(np.isfinite(res.values[grid.mask]))
        assert np.all(geometry.contains(domain, grid.inside_points))

    def test_far_field_decay(self):
        domain = geometry.rectangle(0, 10, 0, 10)
        ctx = ctx_for(domain, 0.5, 0.01)
        floe = geometry.rectangle(1, 2, 1, 2)
        rule = quadrature.rule_for_region(floe, 0.01)
        f = PiecewiseField.constant(floe.outer, rule, [3.0, -1.0])
        pts = np.array([[1.5, 1.5], [3.0, 1.5], [4.0, 1.5], [6.0, 1.5]])
        speed = np.linalg.norm(markov_smooth(ctx, f, pts), axis=1)
        assert np.all(np.diff(speed) < 0)
        assert speed[-1] < 1e-6

    def test_full_scale_resolution(self):
        grid = EvaluationGrid(0, 140e3, 0, 140e3, 800, 800, np.ones((800, 800), bool))
        assert grid.dx == pytest.approx(175.0)
        assert grid.dy == pytest.approx(175.0)

    def test_resolution_validated(self, unit_square):
        with pytest.raises(ValidationError):
            EvaluationGrid.covering(unit_square, 1)

    def test_below_floor_aggregated(self):
        domain = geometry.PolygonalDomain.from_polygon([(0, 0), (1, 0), (1, 0.05)])
        ctx = ctx_for(domain, 0.2, 1e-4, method="ruppert", degree_floor=0.2)
        grid = EvaluationGrid.covering(domain, 20)
        f = PiecewiseField.constant(domain.outer, ctx.domain_rule)
        with pytest.raises(DegreeBelowFloor) as exc:
            evaluate_grid(ctx, f, grid)
        assert exc.value.count > 1
        assert exc.value.locations.shape == (exc.value.count, 2)
        res = evaluate_grid(ctx, f, grid, raise_below_floor=False)
        assert res.min_degree < 0.2


class TestNorms:
    def grids(self):
        mask = np.ones((4, 5), bool)
        mask[0, 0] = False
        a = np.where(mask[..., None], 1.0, np.nan) * np.ones((4, 5, 1))
        return a, mask

    def test_identical(self):
        a, _ = self.grids()
        for p in (1, 2, math.inf):
            assert lp_error(a, a, p, 0.05) == 0.0

    def test_constant_difference(self):
        mask = np.ones((10, 10), bool)
        a = np.zeros((10, 10, 1))
        for p in (1, 2, math.inf):
            assert lp_error(a + 0.3, a, p, 0.01) == pytest.approx(0.3)

    def test_cauchy_schwarz(self, rng):
        a = rng.normal(size=(8, 9, 2))
        b = rng.normal(size=(8, 9, 2))
        area = 72 * 0.02
        assert lp_error(a, b, 1, 0.02) <= math.sqrt(area) * lp_error(a, b, 2, 0.02) + 1e-12

    def test_mismatch(self):
        a, _ = self.grids()
        with pytest.raises(GridMismatch):
            lp_error(a, np.ones((4, 6, 1)), 1, 1.0)
        b = a.copy()
        b[1, 1] = np.nan
        with pytest.raises(GridMismatch):
            lp_error(a, b, 1, 1.0)

    def test_infinite_values_count(self):
        v = np.array([[1.0, np.inf], [np.nan, 2.0]])
        assert lp_norm(v, 1, 1.0) == math.inf


def step_args(**kw):
    base = dict(max_area=None, quadrature="tri", method="auto", min_angle=None, seed=0,
                kernel="gaussian", degree_floor=0.05, threads=1, mc_n=None)
    base.update(kw)
    return types.SimpleNamespace(**base)


def one_d_step_oracle(x, eps):
    """Markov-normalized 1-D Gaussian convolution of 1{s < 1/2} on [0, 1]."""
    cdf = lambda t: special.ndtr(t / eps)
    return (cdf(0.5 - x) - cdf(-x)) / (cdf(1 - x) - cdf(-x))


class TestConvergence:
    def test_step_oracle(self, unit_square):
        eps = [0.1, 0.05]
        ctxs, flds, exact = cli.step_problem(unit_square, eps, 1.0, step_args())
        grid = EvaluationGrid.over(unit_square, 0, 1, 0, 1, 200, 4)
        table = operators.convergence_study(ctxs, flds, exact, grid, 1)
        assert table.l1[1] <= 0.75 * table.l1[0]
        # the 2-D problem separates, so the smoothed field is the 1-D one
        for ctx, f in zip(ctxs, flds):
            res = evaluate_grid(ctx, f, grid)
            oracle = one_d_step_oracle(grid.points[:, 0], ctx.epsilon).reshape(grid.ny, grid.nx)
            np.testing.assert_allclose(res.values[..., 0], oracle, atol=5e-3)
        assert table.slopes["l1"] == pytest.approx(1.0, abs=0.3)

    def test_constant(self, unit_square):
        ctxs, flds, exact = cli.constant_problem(unit_square, [0.1, 0.05], 1.0, step_args())
        grid = EvaluationGrid.covering(unit_square, 20)
        table = operators.convergence_study(ctxs, flds, exact, grid, 1)
        assert max(table.l1 + table.l2 + table.linf) < 1e-9

    def test_quadrature_dominates(self, unit_square):
        ctxs, flds, exact = cli.step_problem(unit_square, [0.1, 0.05], 6.0, step_args())
        grid = EvaluationGrid.over(unit_square, 0, 1, 0, 1, 100, 4)
        with pytest.raises(QuadratureDominates):
            operators.convergence_study(ctxs, flds, exact, grid, 1)

    def test_requires_decreasing(self, unit_square):
        ctxs, flds, exact = cli.constant_problem(unit_square, [0.05, 0.1], 1.0, step_args())
        grid = EvaluationGrid.covering(unit_square, 10)
        with pytest.raises(ValidationError):
            operators.convergence_study(ctxs, flds, exact, grid)

    def test_non_monotone_detected(self, unit_square):
        # against the eps=0.1 smoothed step the error grows as eps shrinks
        ctxs, flds, _ = cli.step_problem(unit_square, [0.1, 0.05], 1.0, step_args())
        grid = EvaluationGrid.over(unit_square, 0, 1, 0, 1, 100, 4)
        target = lambda p: one_d_step_oracle(p[:, 0], 0.1)
        with pytest.raises(InvariantViolation):
            operators.convergence_study(ctxs, flds, target, grid, 1, check_quadrature=False)

    def test_lipschitz_interior(self, unit_square):
        # |x1 - 1/2| has Lipschitz constant 1; at the kink P f = eps * sqrt(2/pi)
        grid = EvaluationGrid.over(unit_square, 0.3, 0.7, 0.3, 0.7, 41, 5)
        errs = []
        for eps in (0.04, 0.02, 0.01):
            ctx = ctx_for(unit_square, eps, (eps / 2) ** 2 / 4)
            f = PiecewiseField.from_function([unit_square.outer], [ctx.domain_rule],
                                             lambda p: np.abs(p[:, 0] - 0.5))
            res = evaluate_grid(ctx, f, grid)
            err = np.abs(res.values[..., 0] - np.abs(grid.points[:, 0] - 0.5).reshape(5, 41))
            errs.append(err.max())
            assert err.max() == pytest.approx(eps * math.sqrt(2 / math.pi), rel=0.02)
        assert operators.loglog_slope([0.04, 0.02, 0.01], errs) == pytest.approx(1.0, abs=0.05)
