"""Numerical kernels: sparse SPD solve, dense simplex, smooth descent."""

import numpy as np
import pytest
import scipy.sparse as sp

from flowrec.errors import (
    BadParameter,
    Infeasible,
    NoConvergence,
    NotPositiveDefinite,
    Unbounded,
)
from flowrec.numerics import (
    LpProblem,
    SparseSpd,
    minimize_smooth_convex,
    solve_lp,
    solve_spd,
    solve_spd_with_info,
)


def spd_from(matrix):
    return SparseSpd(sp.csr_matrix(np.asarray(matrix, dtype=float)))


class TestSolveSpd:
    def test_identity_returns_rhs(self):
        rhs = np.array([3.0, -1.0, 2.0])
        x = solve_spd(spd_from(np.eye(3)), rhs)
        assert np.allclose(x, rhs, atol=1e-12)

    def test_diagonal_divides(self):
        d = np.array([2.0, 5.0, 0.5])
        x = solve_spd(spd_from(np.diag(d)), np.array([4.0, 10.0, 1.0]))
        assert np.allclose(x, [2.0, 2.0, 2.0], atol=1e-12)

    def test_matches_dense_elimination_on_random_spd(self):
        # Route one: conjugate gradient.  Route two: dense LU elimination.
        rng = np.random.default_rng(11)
        for trial in range(10):
            a = rng.normal(size=(8, 8))
            m = a @ a.T + np.eye(8)
            rhs = rng.normal(size=8)
            x_cg, info = solve_spd_with_info(spd_from(m), rhs, tol=1e-12)
            x_dense = np.linalg.solve(m, rhs)
            assert np.allclose(x_cg, x_dense, atol=1e-8)
            assert np.linalg.norm(m @ x_cg - rhs) <= 1e-10 * np.linalg.norm(rhs)
            assert info.iterations >= 1

    def test_rejects_asymmetric(self):
        with pytest.raises(NotPositiveDefinite):
            spd_from([[1.0, 2.0], [0.0, 1.0]])

    def test_rejects_indefinite(self):
        with pytest.raises(NotPositiveDefinite):
            solve_spd(spd_from(np.diag([1.0, -1.0])), np.ones(2))

    def test_iteration_budget_enforced(self):
        rng = np.random.default_rng(0)
        a = rng.normal(size=(30, 30))
        m = a @ a.T + np.eye(30)
        with pytest.raises(NoConvergence):
            solve_spd(spd_from(m), rng.normal(size=30), tol=1e-14, max_iter=1)


class TestSolveLp:
    def test_single_lower_bounded_variable(self):
        lp = LpProblem(
            c=np.array([1.0]),
            a=np.array([[1.0]]),
            relations=(">=",),
            b=np.array([3.0]),
            lower_bounds=np.array([0.0]),
        )
        sol = solve_lp(lp)
        assert sol.x[0] == pytest.approx(3.0, abs=1e-9)
        assert sol.objective == pytest.approx(3.0, abs=1e-9)
        assert sol.duality_gap <= 1e-7

    def test_absolute_value_gadget(self):
        # min s subject to s >= 5 - y and s >= y - 5 with y free.
        lp = LpProblem(
            c=np.array([0.0, 1.0]),
            a=np.array([[1.0, 1.0], [-1.0, 1.0]]),
            relations=(">=", ">="),
            b=np.array([5.0, -5.0]),
            lower_bounds=np.array([-np.inf, 0.0]),
        )
        sol = solve_lp(lp)
        assert sol.x[0] == pytest.approx(5.0, abs=1e-9)
        assert sol.x[1] == pytest.approx(0.0, abs=1e-9)
        assert sol.duality_gap <= 1e-7

    def test_equality_rows(self):
        lp = LpProblem(
            c=np.array([1.0, 1.0]),
            a=np.array([[1.0, 1.0], [1.0, -1.0]]),
            relations=("=", "="),
            b=np.array([4.0, 0.0]),
            lower_bounds=np.array([0.0, 0.0]),
        )
        sol = solve_lp(lp)
        assert np.allclose(sol.x, [2.0, 2.0], atol=1e-9)

    def test_redundant_rows_are_tolerated(self):
        lp = LpProblem(
            c=np.array([1.0, 1.0]),
            a=np.array([[1.0, 1.0], [1.0, 1.0], [2.0, 2.0]]),
            relations=("=", "=", "="),
            b=np.array([4.0, 4.0, 8.0]),
            lower_bounds=np.array([0.0, 0.0]),
        )
        sol = solve_lp(lp)
        assert sol.objective == pytest.approx(4.0, abs=1e-9)
        assert sol.duality_gap <= 1e-7

    def test_unbounded(self):
        lp = LpProblem(
            c=np.array([-1.0]),
            a=np.array([[1.0]]),
            relations=(">=",),
            b=np.array([0.0]),
            lower_bounds=np.array([0.0]),
        )
        with pytest.raises(Unbounded):
            solve_lp(lp)

    def test_infeasible(self):
        lp = LpProblem(
            c=np.array([1.0]),
            a=np.array([[1.0], [1.0]]),
            relations=("<=", ">="),
            b=np.array([-1.0, 1.0]),
            lower_bounds=np.array([-np.inf]),
        )
        with pytest.raises(Infeasible):
            solve_lp(lp)

    def test_cycling_prone_degenerate_problem(self):
        # Degenerate instance known to cycle under naive pivoting; the
        # first-index rule must terminate at objective -1/20.
        lp = LpProblem(
            c=np.array([-0.75, 150.0, -0.02, 6.0]),
            a=np.array(
                [
                    [0.25, -60.0, -0.04, 9.0],
                    [0.5, -90.0, -0.02, 3.0],
                    [0.0, 0.0, 1.0, 0.0],
                ]
            ),
            relations=("<=", "<=", "<="),
            b=np.array([0.0, 0.0, 1.0]),
            lower_bounds=np.zeros(4),
        )
        sol = solve_lp(lp)
        assert sol.objective == pytest.approx(-0.05, abs=1e-9)
        assert sol.duality_gap <= 1e-7
        assert sol.dual_infeasibility <= 1e-7

    def test_two_path_deviation_minimisation_matches_breakpoint_oracle(self):
        # Choose bottom values (b1, b2) minimising the total absolute gap to
        # target component values.  Component i carries coefficients s[i] and
        # target yhat[i].  Route one: the simplex on the slack formulation.
        # Route two: an optimum of a piecewise-linear function lies where two
        # component hyperplanes intersect, so enumerate all candidate pairs.
        s = np.array(
            [
                [1, 1], [1, 0], [0, 1], [1, 1],
                [1, 0], [1, 0], [0, 1], [0, 1],
                [1, 0], [0, 1],
            ],
            dtype=float,
        )
        yhat = np.array([10.0, 2.0, 6.0, 7.0, 3.0, 1.0, 5.0, 6.0, 2.0, 4.0])
        n = len(yhat)

        rows, rels, rhs = [], [], []
        for i in range(n):
            row = np.zeros(2 + n)
            row[:2] = -s[i]
            row[2 + i] = 1.0
            rows.append(row), rels.append(">="), rhs.append(-yhat[i])
            row = np.zeros(2 + n)
            row[:2] = s[i]
            row[2 + i] = 1.0
            rows.append(row), rels.append(">="), rhs.append(yhat[i])
        lp = LpProblem(
            c=np.concatenate([np.zeros(2), np.ones(n)]),
            a=np.vstack(rows),
            relations=tuple(rels),
            b=np.array(rhs),
            lower_bounds=np.concatenate([np.full(2, -np.inf), np.zeros(n)]),
        )
        sol = solve_lp(lp)

        def objective(point):
            return np.abs(s @ point - yhat).sum()

        candidates = []
        for i in range(n):
            for j in range(i + 1, n):
                m = np.array([s[i], s[j]])
                if abs(np.linalg.det(m)) > 1e-12:
                    candidates.append(np.linalg.solve(m, [yhat[i], yhat[j]]))
        oracle = min(objective(p) for p in candidates)
        assert oracle == pytest.approx(8.0)
        assert sol.objective == pytest.approx(oracle, abs=1e-9)
        assert sol.duality_gap <= 1e-7

    def test_rejects_empty_problem(self):
        with pytest.raises(BadParameter):
            LpProblem(
                c=np.array([1.0]),
                a=np.zeros((0, 1)),
                relations=(),
                b=np.zeros(0),
                lower_bounds=np.array([0.0]),
            )


class TestMinimizeSmoothConvex:
    def test_quadratic_reaches_center(self):
        c = np.array([2.0, -3.0, 0.5])

        def fun(x):
            d = x - c
            return float(d @ d), 2.0 * d

        res = minimize_smooth_convex(fun, np.zeros(3), tol=1e-10)
        assert np.allclose(res.x, c, atol=1e-8)
        assert res.gradient_norm <= 1e-10 * (1 + abs(res.value))

    def test_two_target_corner_loss_flat_valley(self):
        # Pull toward 0 and 10 with corner parameter 1: the objective is
        # flat between the corners with value 9, so any stationary point in
        # [1, 9] is optimal; the symmetric start must not move.
        def huber(u):
            u = abs(u)
            return 0.5 * u * u if u <= 1 else u - 0.5

        def slope(v):
            return np.clip(v, -1.0, 1.0)

        def fun(x):
            v = float(x[0])
            return huber(v) + huber(v - 10.0), np.array([slope(v) + slope(v - 10.0)])

        res = minimize_smooth_convex(fun, np.array([5.0]), tol=1e-10)
        assert res.x[0] == pytest.approx(5.0, abs=0)
        res = minimize_smooth_convex(fun, np.array([0.0]), tol=1e-10)
        assert res.value == pytest.approx(9.0, abs=1e-9)
        assert 1.0 - 1e-6 <= res.x[0] <= 9.0 + 1e-6

    def test_quartic_matches_closed_form(self):
        # First-order steps crawl on the flat quartic basin, so the gradient
        # target is kept moderate.
        def fun(x):
            return float((x[0] - 3) ** 4 + (x[1] + 1) ** 2), np.array(
                [4 * (x[0] - 3) ** 3, 2 * (x[1] + 1)]
            )

        res = minimize_smooth_convex(fun, np.zeros(2), tol=1e-6, max_iter=50_000)
        assert res.x[1] == pytest.approx(-1.0, abs=1e-5)
        assert abs(res.x[0] - 3.0) < 1e-1
        assert res.gradient_norm <= 1e-5 * (1 + res.value)

    def test_projection_clamps_to_box(self):
        c = np.array([2.0, -3.0])

        def fun(x):
            d = x - c
            return float(d @ d), 2.0 * d

        res = minimize_smooth_convex(
            fun, np.zeros(2), tol=1e-10, project=lambda x: np.clip(x, 0.0, 1.0)
        )
        assert np.allclose(res.x, [1.0, 0.0], atol=1e-9)

    def test_budget_exhaustion_raises(self):
        # A quadratic is solved in one exact step, so use the slow quartic.
        def fun(x):
            d = x - 5.0
            return float((d**4).sum()), 4.0 * d**3

        with pytest.raises(NoConvergence):
            minimize_smooth_convex(fun, np.zeros(1), tol=1e-12, max_iter=3)
