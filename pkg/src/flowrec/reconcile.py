"""Exact reconciliation of component forecasts onto the coherent subspace.

Every solver here returns a vector of the form ``S b`` for some vector of
path values ``b``, which makes the output coherent by construction.  What
differs is the objective:

* :func:`reconcile_l2` minimises the sum of squared adjustments via the
  normal equations over path values, solved with sparse conjugate
  gradient.
* :func:`reconcile_weighted` is the closed-form solution of the generic
  weighted projection under explicit linear constraints, computed densely.
* :func:`reconcile_l1` minimises the (weighted) sum of absolute
  adjustments as a linear program with one slack per component.
* :func:`reconcile_general` handles smooth symmetric losses such as the
  Huber loss by gradient descent.

A root-mean-square objective shares its minimiser with the mean-square
one, so no separate solver exists for it.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    BadParameter,
    DimensionMismatch,
    NonSmoothLoss,
    NotSpd,
    RankDeficient,
)
from .network import FlowAggregationMatrix
from .numerics import (
    LpProblem,
    SparseSpd,
    minimize_smooth_convex,
    solve_lp,
    solve_spd_with_info,
)
from .series import CoherenceReport, ForecastVector, check_coherence, _as_component_vector

LOSS_KINDS = ("l2", "l1", "huber", "custom")


@dataclass(frozen=True)
class LossSpec:
    """Which penalty to apply to per-component adjustments.

    Args:
        kind: one of ``l2``, ``l1``, ``huber``, ``custom``.
        weights: optional nonnegative per-component weights (default all 1).
        delta: Huber corner parameter, required for ``huber``.
        f: for ``custom``, vectorised penalty on nonnegative residual
            magnitudes with f(0) = 0.
        f_prime: derivative of ``f``; must satisfy f'(0) = 0, otherwise the
            loss is not differentiable as a function of the signed residual
            and only the LP route can handle it.
    """

    kind: str
    weights: np.ndarray | None = None
    delta: float | None = None
    f: object = None
    f_prime: object = None

    def __post_init__(self):
        if self.kind not in LOSS_KINDS:
            raise BadParameter(f"loss kind {self.kind!r} not in {LOSS_KINDS}")
        if self.kind == "huber":
            if self.delta is None or not self.delta > 0:
                raise BadParameter(f"huber needs delta > 0, got {self.delta!r}")
        if self.kind == "custom" and (self.f is None or self.f_prime is None):
            raise BadParameter("custom loss needs both f and f_prime")

    def resolved_weights(self, n: int) -> np.ndarray:
        if self.weights is None:
            return np.ones(n)
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (n,):
            raise DimensionMismatch(f"weights shape {w.shape}, expected ({n},)")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise BadParameter("weights must be finite and nonnegative")
        return w


@dataclass
class BoxConstraints:
    """Per-component bounds on the reconciled vector; +-inf disables a side."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape or self.lower.ndim != 1:
            raise DimensionMismatch("box bounds must be two equal-length vectors")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise BadParameter("box bounds must not contain NaN")
        if np.any(self.lower > self.upper):
            raise BadParameter("box has lower > upper for some component")

    @classmethod
    def unbounded(cls, n: int) -> "BoxConstraints":
        return cls(np.full(n, -np.inf), np.full(n, np.inf))


@dataclass
class SolverStats:
    """How the answer was produced: counts, timing, and certificates."""

    method: str
    iterations: int
    wall_time_s: float
    aux_bytes: int
    duality_gap: float | None = None
    gradient_norm: float | None = None


@dataclass
class ReconciliationResult:
    """A coherent vector, the path values generating it, and provenance."""

    y_tilde: ForecastVector
    b_tilde: np.ndarray
    loss_value: float
    coherence: CoherenceReport
    stats: SolverStats


def huber_value(u: np.ndarray, delta: float) -> np.ndarray:
    """Quadratic inside the corner, linear outside, C1 at the seam."""
    u = np.asarray(u, dtype=float)
    return np.where(u <= delta, 0.5 * u * u, delta * u - 0.5 * delta * delta)


def huber_slope(u: np.ndarray, delta: float) -> np.ndarray:
    return np.minimum(np.asarray(u, dtype=float), delta)


def evaluate_loss(loss: LossSpec, yhat, y) -> float:
    """Weighted objective value sum_i w_i f(|y_i - yhat_i|)."""
    a = np.asarray(getattr(yhat, "data", yhat), dtype=float)
    b = np.asarray(getattr(y, "data", y), dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"vector shapes differ: {a.shape} vs {b.shape}")
    r = np.abs(b - a)
    w = loss.resolved_weights(a.shape[0])
    if loss.kind == "l2":
        return float(w @ (r * r))
    if loss.kind == "l1":
        return float(w @ r)
    if loss.kind == "huber":
        return float(w @ huber_value(r, loss.delta))
    return float(w @ np.asarray(loss.f(r), dtype=float))


def _package(
    yhat: np.ndarray,
    b: np.ndarray,
    agg: FlowAggregationMatrix,
    loss: LossSpec,
    stats: SolverStats,
    like=None,
) -> ReconciliationResult:
    y = agg.matrix @ b
    return ReconciliationResult(
        y_tilde=ForecastVector(
            y,
            horizon=getattr(like, "horizon", 1),
            origin=getattr(like, "origin", None),
        ),
        b_tilde=b,
        loss_value=evaluate_loss(loss, yhat, y),
        coherence=check_coherence(y, agg),
        stats=stats,
    )


def _weighted_normal_solve(
    yhat: np.ndarray, agg: FlowAggregationMatrix, w: np.ndarray, tol: float
):
    s = agg.matrix
    sw = s.T.multiply(w)  # S^T D
    gram = SparseSpd((sw @ s).tocsr())
    rhs = sw @ yhat
    return solve_spd_with_info(gram, rhs, tol=tol), gram.nnz


def reconcile_l2(yhat, agg: FlowAggregationMatrix, tol: float = 1e-12) -> ReconciliationResult:
    """Least-squares reconciliation: the orthogonal projection onto the
    coherent subspace, computed over path values.

    The normal-equation matrix is the path Gram matrix plus identity, so it
    is positive definite with eigenvalues >= 1 and conjugate gradient
    converges unconditionally.

    Args:
        yhat: base forecasts, one per component.
        agg: aggregation operator of the network.
        tol: relative residual tolerance for the inner solve.
    """
    t0 = time.perf_counter()
    y = _as_component_vector(yhat, agg.n)
    loss = LossSpec("l2")
    (b, info), gram_nnz = _weighted_normal_solve(y, agg, np.ones(agg.n), tol)
    wall = time.perf_counter() - t0
    stats = SolverStats(
        method="l2",
        iterations=info.iterations,
        wall_time_s=wall,
        aux_bytes=info.aux_bytes + 16 * gram_nnz,
        gradient_norm=2.0 * info.residual_norm,
    )
    return _package(y, b, agg, loss, stats, like=yhat)


def coherence_constraints(agg: FlowAggregationMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Dense (A, c) with A y = c holding exactly for coherent vectors.

    A stacks an identity over the node and edge blocks against the negated
    aggregation columns of the path block, so A has full row rank no matter
    the network.
    """
    imap = agg.index_map
    k = imap.n_nodes + imap.n_edges
    a = np.zeros((k, imap.n))
    a[:, :k] = np.eye(k)
    a[: imap.n_nodes, imap.path_slice] = -agg.vp.toarray()
    a[imap.n_nodes :, imap.path_slice] = -agg.ep.toarray()
    return a, np.zeros(k)


def reconcile_weighted(yhat, a: np.ndarray, c: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Closed-form minimiser of (y - yhat)' W (y - yhat) subject to A y = c.

    Everything here is dense on purpose: this is the textbook
    constrained-projection formula, used both as an independent reference
    for the sparse solvers and as the deliberately unstructured comparison
    arm in benchmarks.  Scaling W by any positive scalar leaves the result
    unchanged.

    Args:
        yhat: base forecasts.
        a: constraint matrix with full row rank, shape (k, n).
        c: constraint targets, length k.
        w: symmetric positive definite weight matrix, shape (n, n), or a
            length-n vector of diagonal weights.

    Raises:
        NotSpd: w is not symmetric positive definite.
        RankDeficient: the constraint rows are linearly dependent.
    """
    y = np.asarray(getattr(yhat, "data", yhat), dtype=float)
    a = np.atleast_2d(np.asarray(a, dtype=float))
    c = np.atleast_1d(np.asarray(c, dtype=float))
    w = np.asarray(w, dtype=float)
    if w.ndim == 1:
        w = np.diag(w)
    n = y.shape[0]
    if a.shape[1] != n or c.shape[0] != a.shape[0] or w.shape != (n, n):
        raise DimensionMismatch(
            f"shapes do not line up: yhat {y.shape}, a {a.shape}, c {c.shape}, w {w.shape}"
        )
    scale = float(np.abs(w).max())
    if scale <= 0 or np.abs(w - w.T).max() > 1e-12 * max(1.0, scale):
        raise NotSpd("weight matrix is not symmetric")
    try:
        w_chol = scipy.linalg.cho_factor(w, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise NotSpd(f"weight matrix is not positive definite: {exc}") from exc
    # X = W^{-1} A^T, then the multiplier system (A W^{-1} A^T) l = A yhat - c.
    x = scipy.linalg.cho_solve(w_chol, a.T, check_finite=False)
    m = a @ x
    try:
        m_chol = scipy.linalg.cho_factor(m, check_finite=False)
    except scipy.linalg.LinAlgError as exc:
        raise RankDeficient(f"constraint matrix is rank deficient: {exc}") from exc
    lam = scipy.linalg.cho_solve(m_chol, a @ y - c, check_finite=False)
    out = y - x @ lam
    # A numerically singular system can slip through the factorization; the
    # solve is only trusted if the constraints actually hold afterwards.
    residual = float(np.max(np.abs(a @ out - c)))
    if residual > 1e-6 * (1.0 + float(np.max(np.abs(c))) + float(np.max(np.abs(a @ y)))):
        raise RankDeficient(
            "constraint rows are linearly dependent or inconsistent "
            f"(post-solve residual {residual:.3e})"
        )
    return out


def reconcile_l1(
    yhat,
    agg: FlowAggregationMatrix,
    box: BoxConstraints | None = None,
    weights: np.ndarray | None = None,
) -> ReconciliationResult:
    """Least-absolute-deviation reconciliation as a linear program.

    One slack variable per component bounds the adjustment magnitude from
    above on both sides; minimising the weighted slack sum makes each slack
    tight at optimality.  Optional box constraints become extra rows on the
    aggregated values.  The strong-duality gap from the final simplex basis
    is carried in ``stats.duality_gap``.
    """
    t0 = time.perf_counter()
    y = _as_component_vector(yhat, agg.n)
    n = agg.n
    np_ = agg.n_paths
    loss = LossSpec("l1", weights=weights)
    w = loss.resolved_weights(n)
    if box is not None and box.lower.shape != (n,):
        raise DimensionMismatch(f"box bounds must have length {n}")

    s_dense = agg.matrix.toarray()
    rows: list[np.ndarray] = []
    rels: list[str] = []
    rhs: list[float] = []
    # s_i - (S b)_i >= -yhat_i  and  s_i + (S b)_i >= yhat_i
    for i in range(n):
        row = np.zeros(np_ + n)
        row[:np_] = -s_dense[i]
        row[np_ + i] = 1.0
        rows.append(row)
        rels.append(">=")
        rhs.append(-y[i])
        row = np.zeros(np_ + n)
        row[:np_] = s_dense[i]
        row[np_ + i] = 1.0
        rows.append(row)
        rels.append(">=")
        rhs.append(y[i])
    if box is not None:
        for i in range(n):
            if np.isfinite(box.upper[i]):
                row = np.zeros(np_ + n)
                row[:np_] = s_dense[i]
                rows.append(row)
                rels.append("<=")
                rhs.append(float(box.upper[i]))
            if np.isfinite(box.lower[i]):
                row = np.zeros(np_ + n)
                row[:np_] = s_dense[i]
                rows.append(row)
                rels.append(">=")
                rhs.append(float(box.lower[i]))

    cost = np.concatenate([np.zeros(np_), w])
    lower = np.concatenate([np.full(np_, -np.inf), np.zeros(n)])
    lp = LpProblem(cost, np.vstack(rows), tuple(rels), np.array(rhs), lower)
    sol = solve_lp(lp)
    b = sol.x[:np_]
    wall = time.perf_counter() - t0
    stats = SolverStats(
        method="l1",
        iterations=sol.iterations,
        wall_time_s=wall,
        aux_bytes=sol.aux_bytes,
        duality_gap=sol.duality_gap,
    )
    return _package(y, b, agg, loss, stats, like=yhat)


def _smooth_slope(loss: LossSpec):
    if loss.kind == "l2":
        return (lambda u: u * u), (lambda u: 2.0 * u)
    if loss.kind == "huber":
        d = float(loss.delta)
        return (lambda u: huber_value(u, d)), (lambda u: huber_slope(u, d))
    return loss.f, loss.f_prime


def reconcile_general(
    yhat,
    agg: FlowAggregationMatrix,
    loss: LossSpec,
    box: BoxConstraints | None = None,
    tol: float = 1e-8,
    max_iter: int = 10_000,
    start: np.ndarray | None = None,
) -> ReconciliationResult:
    """Reconcile under any smooth symmetric loss on the adjustments.

    The objective sum_i w_i f(|(S b)_i - yhat_i|) is differentiable in b
    exactly when f'(0) = 0; the absolute loss fails that and is rejected
    with :class:`NonSmoothLoss` (use :func:`reconcile_l1`).  Plain l2 is
    routed through the normal equations; everything else runs gradient
    descent with Armijo backtracking, warm-started at the base path values.

    Box constraints are honoured by projection, which is exact only where
    bounds touch path components (those coordinates are the optimisation
    variables themselves); finite bounds on node or edge components are
    rejected here and belong to the LP route.
    """
    t0 = time.perf_counter()
    y = _as_component_vector(yhat, agg.n)
    n = agg.n
    w = loss.resolved_weights(n)

    if loss.kind == "l1":
        raise NonSmoothLoss(
            "the absolute loss is not differentiable at zero adjustment; "
            "use reconcile_l1"
        )
    if loss.kind == "custom":
        slope0 = float(np.asarray(loss.f_prime(np.zeros(1)))[0])
        if abs(slope0) > 1e-12:
            raise NonSmoothLoss(
                f"custom loss has f'(0) = {slope0:.3e}; a nonzero slope at zero "
                "makes the objective nonsmooth, use reconcile_l1"
            )

    project = None
    if box is not None:
        if box.lower.shape != (n,):
            raise DimensionMismatch(f"box bounds must have length {n}")
        imap = agg.index_map
        off_path = slice(0, imap.n_nodes + imap.n_edges)
        if np.any(np.isfinite(box.lower[off_path])) or np.any(
            np.isfinite(box.upper[off_path])
        ):
            raise BadParameter(
                "smooth-loss reconciliation supports box bounds on path "
                "components only; bounds on aggregated components need reconcile_l1"
            )
        lo = box.lower[imap.path_slice]
        hi = box.upper[imap.path_slice]
        project = lambda b: np.clip(b, lo, hi)

    if loss.kind == "l2" and box is None:
        (b, info), gram_nnz = _weighted_normal_solve(y, agg, w, tol=min(tol, 1e-10))
        wall = time.perf_counter() - t0
        stats = SolverStats(
            method="general:l2",
            iterations=info.iterations,
            wall_time_s=wall,
            aux_bytes=info.aux_bytes + 16 * gram_nnz,
            gradient_norm=2.0 * info.residual_norm,
        )
        return _package(y, b, agg, loss, stats, like=yhat)

    f, f_prime = _smooth_slope(loss)
    s = agg.matrix
    st = s.T.tocsr()

    def objective(b: np.ndarray) -> tuple[float, np.ndarray]:
        r = s @ b - y
        mag = np.abs(r)
        value = float(w @ np.asarray(f(mag), dtype=float))
        grad = st @ (w * np.asarray(f_prime(mag), dtype=float) * np.sign(r))
        return value, grad

    b0 = np.asarray(start, dtype=float) if start is not None else y[agg.index_map.path_slice].copy()
    if b0.shape != (agg.n_paths,):
        raise DimensionMismatch(f"start must hold {agg.n_paths} path values")
    res = minimize_smooth_convex(objective, b0, tol=tol, max_iter=max_iter, project=project)
    wall = time.perf_counter() - t0
    stats = SolverStats(
        method=f"general:{loss.kind}",
        iterations=res.iterations,
        wall_time_s=wall,
        aux_bytes=8 * 4 * agg.n_paths + 8 * 2 * n,
        gradient_norm=res.gradient_norm,
    )
    return _package(y, res.x, agg, loss, stats, like=yhat)
