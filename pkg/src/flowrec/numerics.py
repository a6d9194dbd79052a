"""Numerical kernels shared by the reconcilers.

Three routines live here and nothing else in the package does heavy
numerics itself:

* :func:`solve_spd`, a conjugate-gradient solve for sparse symmetric
  positive definite systems.  The normal-equation systems built from the
  aggregation structure have all eigenvalues at or above 1 (the identity
  block guarantees it), so plain CG needs no preconditioning.
* :func:`solve_lp`, a dense two-phase primal simplex with Bland's
  anti-cycling rule.  It reports the strong-duality gap computed from the
  final basis so callers can certify optimality.
* :func:`minimize_smooth_convex`, gradient descent with Armijo
  backtracking, optionally projected.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .errors import (
    BadParameter,
    CyclingDetected,
    DimensionMismatch,
    Infeasible,
    NoConvergence,
    NotPositiveDefinite,
    SolveFailure,
    Unbounded,
)

# Curvature and pivot tolerances used across the kernels.
_SYM_RTOL = 1e-12
_PIVOT_EPS = 1e-11
_REDUCED_COST_EPS = 1e-10
_ARMIJO_C = 1e-4
_BACKTRACK_SHRINK = 0.5


class SparseSpd:
    """A sparse matrix asserted symmetric and expected positive definite.

    Symmetry is checked on construction (1e-12 relative).  Positive
    definiteness is not factorised up front; the CG solve raises
    :class:`NotPositiveDefinite` the moment it meets a direction of
    nonpositive curvature.
    """

    def __init__(self, matrix):
        m = matrix.tocsr() if sp.issparse(matrix) else sp.csr_matrix(np.asarray(matrix, dtype=float))
        if m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"matrix must be square, got shape {m.shape}")
        scale = float(np.abs(m.data).max()) if m.nnz else 0.0
        skew = m - m.T
        asym = float(np.abs(skew.data).max()) if skew.nnz else 0.0
        if asym > _SYM_RTOL * max(1.0, scale):
            raise NotPositiveDefinite(
                f"matrix is not symmetric: max |M - M^T| = {asym:.3e} at scale {scale:.3e}"
            )
        self.matrix = m

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def nnz(self) -> int:
        return self.matrix.nnz

    def matvec(self, x: np.ndarray) -> np.ndarray:
        return self.matrix @ x


@dataclass
class SpdSolveInfo:
    iterations: int
    residual_norm: float
    aux_bytes: int


def solve_spd(matrix, rhs, tol: float = 1e-10, max_iter: int | None = None) -> np.ndarray:
    """Solve M x = rhs for sparse SPD M to a relative residual tolerance.

    Args:
        matrix: :class:`SparseSpd` or anything convertible to one.
        rhs: right-hand side vector.
        tol: accept x once ||M x - rhs|| <= tol * ||rhs||.  The final
            residual is recomputed explicitly, not trusted from the
            recurrence.
        max_iter: iteration budget, default 10 * dimension.

    Raises:
        NotPositiveDefinite: nonpositive curvature encountered.
        NoConvergence: budget exhausted before the tolerance was met.
    """
    x, _ = solve_spd_with_info(matrix, rhs, tol=tol, max_iter=max_iter)
    return x


def solve_spd_with_info(
    matrix, rhs, tol: float = 1e-10, max_iter: int | None = None
) -> tuple[np.ndarray, SpdSolveInfo]:
    """Same as :func:`solve_spd` but also returns iteration statistics."""
    m = matrix if isinstance(matrix, SparseSpd) else SparseSpd(matrix)
    b = np.asarray(rhs, dtype=float)
    if b.shape != (m.dim,):
        raise DimensionMismatch(f"rhs shape {b.shape} does not match dimension {m.dim}")
    if max_iter is None:
        max_iter = max(1, 10 * m.dim)
    aux_bytes = 4 * 8 * m.dim

    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros_like(b), SpdSolveInfo(0, 0.0, aux_bytes)
    target = tol * b_norm

    x = np.zeros_like(b)
    r = b.copy()
    p = r.copy()
    rs = float(r @ r)
    iterations = 0
    verifications = 2  # recurrence drift guard: re-derive the residual at most twice

    while True:
        if np.sqrt(rs) <= target:
            true_r = b - m.matvec(x)
            true_norm = float(np.linalg.norm(true_r))
            if true_norm <= target:
                return x, SpdSolveInfo(iterations, true_norm, aux_bytes)
            if verifications == 0:
                raise NoConvergence(
                    f"conjugate gradient stalled at residual {true_norm:.3e} "
                    f"(target {target:.3e}) after {iterations} iterations"
                )
            verifications -= 1
            r = true_r
            p = r.copy()
            rs = float(r @ r)
        if iterations >= max_iter:
            raise NoConvergence(
                f"conjugate gradient exceeded {max_iter} iterations "
                f"(residual {np.sqrt(rs):.3e}, target {target:.3e})"
            )
        ap = m.matvec(p)
        p_ap = float(p @ ap)
        if p_ap <= 0.0:
            raise NotPositiveDefinite(
                f"direction of nonpositive curvature (p^T M p = {p_ap:.3e})"
            )
        alpha = rs / p_ap
        x += alpha * p
        r -= alpha * ap
        rs_new = float(r @ r)
        p = r + (rs_new / rs) * p
        rs = rs_new
        iterations += 1


# --- linear programming -------------------------------------------------------


@dataclass
class LpProblem:
    """min c @ x subject to a_ub-style rows and per-variable lower bounds.

    Args:
        c: objective coefficients, length nv.
        a: constraint matrix, shape (nr, nv).
        relations: one of "<=", "=", ">=" per row.
        b: right-hand sides, length nr.
        lower_bounds: per-variable lower bound; -inf marks a free variable.
            Defaults to zero for every variable.  Upper bounds are expressed
            as explicit rows.
    """

    c: np.ndarray
    a: np.ndarray
    relations: tuple[str, ...]
    b: np.ndarray
    lower_bounds: np.ndarray | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        self.a = np.atleast_2d(np.asarray(self.a, dtype=float))
        self.b = np.asarray(self.b, dtype=float)
        self.relations = tuple(self.relations)
        nr, nv = self.a.shape
        if self.c.shape != (nv,) or self.b.shape != (nr,) or len(self.relations) != nr:
            raise DimensionMismatch(
                f"inconsistent LP shapes: a {self.a.shape}, c {self.c.shape}, "
                f"b {self.b.shape}, {len(self.relations)} relations"
            )
        if nr == 0:
            raise BadParameter("LP needs at least one constraint row")
        for rel in self.relations:
            if rel not in ("<=", "=", ">="):
                raise BadParameter(f"relation {rel!r} not one of <=, =, >=")
        if self.lower_bounds is None:
            self.lower_bounds = np.zeros(nv)
        else:
            self.lower_bounds = np.asarray(self.lower_bounds, dtype=float)
            if self.lower_bounds.shape != (nv,):
                raise DimensionMismatch("lower_bounds length does not match variables")
            if np.any(np.isnan(self.lower_bounds)) or np.any(self.lower_bounds == np.inf):
                raise BadParameter("lower bounds must be finite or -inf")


@dataclass
class LpSolution:
    """Optimal point plus the optimality certificate from the final basis."""

    x: np.ndarray
    objective: float
    duality_gap: float
    dual_infeasibility: float
    iterations: int
    aux_bytes: int


def _pivot(tab: np.ndarray, rc: np.ndarray, basis: np.ndarray, row: int, col: int) -> None:
    tab[row] /= tab[row, col]
    factors = tab[:, col].copy()
    factors[row] = 0.0
    tab -= np.outer(factors, tab[row])
    rc -= rc[col] * tab[row, :-1]
    basis[row] = col


def _bland_step(
    tab: np.ndarray, rc: np.ndarray, basis: np.ndarray, limit: int, pivots: int
) -> tuple[int, bool]:
    """One simplex pivot under Bland's rule.  Returns (pivots, done)."""
    candidates = np.flatnonzero(rc < -_REDUCED_COST_EPS)
    if candidates.size == 0:
        return pivots, True
    col = int(candidates[0])
    column = tab[:, col]
    eligible = np.flatnonzero(column > _PIVOT_EPS)
    if eligible.size == 0:
        raise Unbounded("objective is unbounded below along a simplex ray")
    ratios = tab[eligible, -1] / column[eligible]
    best = ratios.min()
    ties = eligible[ratios <= best + _PIVOT_EPS * (1.0 + abs(best))]
    row = int(ties[np.argmin(basis[ties])])
    if pivots >= limit:
        raise CyclingDetected(f"simplex exceeded {limit} pivots")
    _pivot(tab, rc, basis, row, col)
    return pivots + 1, False


def solve_lp(problem: LpProblem, max_pivots: int = 100_000) -> LpSolution:
    """Dense two-phase primal simplex with Bland's anti-cycling rule.

    Free variables are split into positive parts, shifted variables are
    translated to zero lower bound, and every inequality gets a slack or
    surplus column, which yields the standard equality form the tableau
    iterates on.  After termination the dual vector is recovered from the
    final basis and the strong-duality gap |c@x - y@b| is reported; a gap
    above ~1e-7 means the answer should not be trusted.

    Raises:
        Infeasible, Unbounded, CyclingDetected, SolveFailure.
    """
    c_user = problem.c
    a_user = problem.a
    nr, nv = a_user.shape

    # Variable transforms: shift finite lower bounds to zero, split free vars.
    lb = problem.lower_bounds
    shift = np.where(np.isfinite(lb), lb, 0.0)
    b_work = problem.b - a_user @ shift
    offset = float(c_user @ shift)

    columns: list[np.ndarray] = []
    costs: list[float] = []
    var_map: list[tuple] = []  # ("plain", col) or ("split", col_pos, col_neg)
    for j in range(nv):
        if np.isneginf(lb[j]):
            var_map.append(("split", len(columns), len(columns) + 1))
            columns.append(a_user[:, j])
            costs.append(float(c_user[j]))
            columns.append(-a_user[:, j])
            costs.append(-float(c_user[j]))
        else:
            var_map.append(("plain", len(columns)))
            columns.append(a_user[:, j])
            costs.append(float(c_user[j]))

    # Row normalisation: make every right-hand side nonnegative.
    rows = np.column_stack(columns) if columns else np.zeros((nr, 0))
    relations = list(problem.relations)
    for i in range(nr):
        if b_work[i] < 0:
            rows[i] = -rows[i]
            b_work[i] = -b_work[i]
            relations[i] = {"<=": ">=", ">=": "<=", "=": "="}[relations[i]]

    # Slack and surplus columns.
    slack_cols = []
    slack_costs = []
    basis_seed: list[int] = []
    needs_artificial: list[int] = []
    n_struct = rows.shape[1]
    for i, rel in enumerate(relations):
        if rel == "<=":
            col = np.zeros(nr)
            col[i] = 1.0
            basis_seed.append(n_struct + len(slack_cols))
            slack_cols.append(col)
            slack_costs.append(0.0)
        elif rel == ">=":
            col = np.zeros(nr)
            col[i] = -1.0
            slack_cols.append(col)
            slack_costs.append(0.0)
            needs_artificial.append(i)
            basis_seed.append(-1)
        else:
            needs_artificial.append(i)
            basis_seed.append(-1)

    a_std = np.column_stack([rows] + slack_cols) if slack_cols else rows
    c_std = np.array(costs + slack_costs)
    n_real = a_std.shape[1]

    art_cols = []
    for i in needs_artificial:
        col = np.zeros(nr)
        col[i] = 1.0
        basis_seed[i] = n_real + len(art_cols)
        art_cols.append(col)
    n_art = len(art_cols)
    a_full = np.column_stack([a_std] + art_cols) if art_cols else a_std

    tab = np.column_stack([a_full, b_work])
    basis = np.array(basis_seed, dtype=int)
    row_indices = np.arange(nr)
    pivots = 0

    if n_art:
        c_phase1 = np.concatenate([np.zeros(n_real), np.ones(n_art)])
        rc = c_phase1 - c_phase1[basis] @ tab[:, :-1]
        while True:
            pivots, done = _bland_step(tab, rc, basis, max_pivots, pivots)
            if done:
                break
        phase1_obj = float(c_phase1[basis] @ tab[:, -1])
        if phase1_obj > 1e-9:
            raise Infeasible(f"phase-1 objective {phase1_obj:.3e} > 0, no feasible point")
        # Drive leftover artificials out of the basis, dropping redundant rows.
        keep = np.ones(len(basis), dtype=bool)
        for i in range(len(basis)):
            if basis[i] >= n_real:
                nonzero = np.flatnonzero(np.abs(tab[i, :n_real]) > _PIVOT_EPS)
                if nonzero.size:
                    _pivot(tab, rc, basis, i, int(nonzero[0]))
                else:
                    keep[i] = False
        if not keep.all():
            tab = tab[keep]
            basis = basis[keep]
            row_indices = row_indices[keep]
        tab = np.column_stack([tab[:, :n_real], tab[:, -1]])

    rc = c_std - c_std[basis] @ tab[:, :-1]
    while True:
        pivots, done = _bland_step(tab, rc, basis, max_pivots, pivots)
        if done:
            break

    x_std = np.zeros(n_real)
    x_std[basis] = np.maximum(tab[:, -1], 0.0)

    x_user = np.empty(nv)
    for j, entry in enumerate(var_map):
        if entry[0] == "plain":
            x_user[j] = x_std[entry[1]] + shift[j]
        else:
            x_user[j] = x_std[entry[1]] - x_std[entry[2]]

    # Certificate: dual vector from the final basis of the equality form.
    try:
        y = np.linalg.solve(a_std[row_indices][:, basis].T, c_std[basis])
    except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded by simplex invariants
        raise SolveFailure(f"could not recover duals from final basis: {exc}") from exc
    b_kept = b_work[row_indices]
    primal_obj_std = float(c_std @ x_std)
    dual_obj = float(y @ b_kept)
    gap = abs(primal_obj_std - dual_obj)
    dual_infeas = float(max(0.0, np.max(a_std[row_indices].T @ y - c_std, initial=0.0)))

    objective = float(c_user @ x_user)
    aux_bytes = tab.nbytes + rc.nbytes
    return LpSolution(
        x=x_user,
        objective=objective,
        duality_gap=gap,
        dual_infeasibility=dual_infeas,
        iterations=pivots,
        aux_bytes=aux_bytes,
    )


# --- smooth minimisation ------------------------------------------------------


@dataclass
class MinimizeResult:
    x: np.ndarray
    value: float
    gradient_norm: float
    iterations: int
    converged: bool


def minimize_smooth_convex(
    fun,
    x0: np.ndarray,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    project=None,
) -> MinimizeResult:
    """Gradient descent with Armijo backtracking, optionally projected.

    The trial step each iteration starts from a spectral (Barzilai-Borwein)
    estimate when curvature information from the previous step is available,
    which avoids the zigzagging of a fixed step on ill-conditioned problems;
    backtracking then enforces sufficient decrease.

    Args:
        fun: callable x -> (value, gradient).
        x0: starting point.
        tol: stop once the stationarity norm is <= tol * (1 + |value|).
            Unconstrained, that norm is ||gradient||; with a projection it
            is the norm of the unit-step gradient mapping.
        max_iter: outer iteration budget.
        project: optional callable mapping a point onto the feasible set.

    Raises:
        NoConvergence: budget exhausted with the criterion unmet.
    """
    x = np.asarray(x0, dtype=float).copy()
    if project is not None:
        x = project(x)
    f, g = fun(x)
    step = 1.0
    x_prev = None
    g_prev = None

    for it in range(max_iter):
        if project is None:
            crit = float(np.linalg.norm(g))
        else:
            crit = float(np.linalg.norm(x - project(x - g)))
        if crit <= tol * (1.0 + abs(f)):
            return MinimizeResult(x, float(f), crit, it, True)

        if x_prev is not None:
            s = x - x_prev
            dg = g - g_prev
            sy = float(s @ dg)
            if sy > 1e-300:
                step = min(max(float(s @ s) / sy, 1e-12), 1e12)
            else:
                step = min(1.0, 2.0 * step)
        else:
            step = min(1.0, 2.0 * step)
        accepted = False
        for _ in range(60):
            x_trial = x - step * g
            if project is not None:
                x_trial = project(x_trial)
            descent = float(g @ (x_trial - x))
            if descent >= 0.0:
                break
            f_trial, g_trial = fun(x_trial)
            if f_trial <= f + _ARMIJO_C * descent + 1e-15 * (1.0 + abs(f)):
                x_prev, g_prev = x, g
                x, f, g = x_trial, f_trial, g_trial
                accepted = True
                break
            step *= _BACKTRACK_SHRINK
        if not accepted:
            # No acceptable step: treat as stationary if the criterion is
            # close, otherwise report failure honestly.
            if crit <= 10.0 * tol * (1.0 + abs(f)):
                return MinimizeResult(x, float(f), crit, it, True)
            raise NoConvergence(
                f"line search failed at iteration {it} with criterion {crit:.3e}"
            )

    if project is None:
        crit = float(np.linalg.norm(g))
    else:
        crit = float(np.linalg.norm(x - project(x - g)))
    if crit <= tol * (1.0 + abs(f)):
        return MinimizeResult(x, float(f), crit, max_iter, True)
    raise NoConvergence(
        f"gradient descent used all {max_iter} iterations, criterion {crit:.3e} "
        f"above target {tol * (1.0 + abs(f)):.3e}"
    )
