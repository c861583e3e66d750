"""Primal-dual interior-point method with an l1-merit backtracking line search.

Problem form handled::

    min f(x)   s.t.   c_l <= c(x) <= c_u,   x_l <= x <= x_u

Inequality rows get a slack ``s`` with ``c(x) - s = 0`` and ``c_l <= s <= c_u``;
variables with ``x_l == x_u`` are removed. The remaining primal vector
``w = (x_free, s)`` is kept strictly inside its bounds and each Newton step
solves the regularized primal-dual system::

    [ H + Sigma + delta_w I    J^T        ] [ dw     ]   [ -grad barrier Lagrangian ]
    [ J                       -delta_c I  ] [ dlam   ] = [ -g(w)                    ]

with ``Sigma = z_l/(w - l) + z_u/(u - w)``. ``delta_w`` grows until the
factorization shows ``n_primal`` positive and ``n_dual`` negative eigenvalues.
"""
from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import maximum_bipartite_matching

from ..nlp import NLPProblem, Point
from .ldl import BK_ALPHA, Inertia, LDLFactor, amd_order

__all__ = [
    "Status", "SolverOptions", "IterationRecord", "SolveResult", "KKTSystem",
    "LineSearchResult", "assemble_kkt", "factorize_with_inertia", "fraction_to_boundary",
    "update_barrier", "line_search", "solve",
]


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITER = "MaxIter"
    TIME_LIMIT = "TimeLimit"
    INFEASIBLE = "Infeasible"
    DEGENERATE = "Degenerate"
    LINE_SEARCH_FAILURE = "LineSearchFailure"


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-6
    max_iter: int = 3000
    mu_init: float = 0.1
    kappa_mu: float = 0.2
    theta_mu: float = 1.5
    tau: float = 0.995
    kappa_eps: float = 10.0
    bound_push: float = 1e-2
    delta_dual: float = 1e-8
    delta_floor: float = 1e-8
    delta_growth: float = 10.0
    max_escalations: int = 10
    pivot_tol: float = 1e-8
    solve_accuracy: float = 1e-10
    max_backtracks: int = 30
    armijo: float = 1e-4
    kappa_sigma: float = 1e10
    time_limit: float | None = None
    allow_degenerate: bool = False

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if not 0 < self.tau < 1:
            raise ValueError("tau must lie in (0, 1)")
        if not 0 < self.kappa_mu < 1:
            raise ValueError("kappa_mu must lie in (0, 1)")
        if not self.theta_mu > 1:
            raise ValueError("theta_mu must exceed 1")
        if not 0 < self.pivot_tol <= BK_ALPHA:
            raise ValueError("pivot_tol must lie in (0, BK_ALPHA]")
        if self.mu_init <= 0 or self.max_iter < 0:
            raise ValueError("mu_init must be positive and max_iter non-negative")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    mu: float
    objective: float
    stationarity: float
    feasibility: float
    complementarity: float
    alpha_primal: float
    alpha_dual: float
    delta_primal: float
    backtracks: int


@dataclass
class SolveResult:
    status: Status
    objective: float
    iterations: int
    wall_time: float
    stationarity: float
    feasibility: float
    complementarity: float
    x: np.ndarray
    multipliers: np.ndarray
    z_lower: np.ndarray
    z_upper: np.ndarray
    log: list[IterationRecord] = field(default_factory=list)

    @property
    def kkt_error(self) -> float:
        return max(self.stationarity, self.feasibility, self.complementarity)

    @property
    def point(self) -> Point:
        return Point(self.x, self.multipliers, self.z_lower, self.z_upper)


@dataclass
class KKTSystem:
    """Full symmetric CSR matrix ``[H + Sigma, J^T; J, -delta_c I]`` and its right-hand side.

    ``matrix`` excludes the primal regularization, which
    :func:`factorize_with_inertia` adds on the first ``n_primal`` diagonal entries.
    """
    matrix: sp.csr_matrix
    rhs: np.ndarray
    n_primal: int
    n_dual: int
    perm: np.ndarray | None = None
    diag_slots: np.ndarray | None = None
    partner: np.ndarray | None = None

    @property
    def dimension(self) -> int:
        return self.n_primal + self.n_dual


@dataclass(frozen=True)
class LineSearchResult:
    alpha: float
    backtracks: int
    accepted: bool


# ---------------------------------------------------------------------------
# elementary rules

def fraction_to_boundary(x, dx, lower=None, upper=None, tau: float = 0.995) -> float:
    """Largest ``alpha <= 1`` keeping ``x + alpha*dx`` a ``(1 - tau)`` fraction inside its bounds.

    ``lower`` defaults to zero and ``upper`` to ``+inf`` (the dual-variable case).
    """
    x = np.asarray(x, float)
    dx = np.asarray(dx, float)
    lower = np.zeros_like(x) if lower is None else np.broadcast_to(np.asarray(lower, float), x.shape)
    upper = np.full_like(x, np.inf) if upper is None else np.broadcast_to(np.asarray(upper, float), x.shape)
    alpha = 1.0
    down = (dx < 0) & np.isfinite(lower)
    up = (dx > 0) & np.isfinite(upper)
    # Tiny steps give huge ratios that may overflow to inf; min() discards them.
    with np.errstate(over="ignore"):
        if np.any(down):
            alpha = min(alpha, float(np.min(-tau * (x[down] - lower[down]) / dx[down])))
        if np.any(up):
            alpha = min(alpha, float(np.min(tau * (upper[up] - x[up]) / dx[up])))
    return alpha


def update_barrier(mu: float, tol: float, kappa_mu: float = 0.2, theta_mu: float = 1.5) -> float:
    """Monotone barrier decrease floored at ``tol/10``."""
    return max(tol / 10.0, min(kappa_mu * mu, mu ** theta_mu))


def line_search(merit, phi0: float, slope: float, alpha_max: float,
                armijo: float = 1e-4, max_backtracks: int = 30) -> LineSearchResult:
    """Backtrack ``alpha = alpha_max * 2**-k`` until Armijo decrease of ``merit``.

    ``merit(alpha)`` evaluates the merit function along the search direction
    and ``slope`` is its directional derivative at ``alpha = 0``. A small
    allowance proportional to ``|phi0|`` absorbs rounding noise once the
    predicted decrease is below machine precision.
    """
    noise = 10.0 * np.finfo(float).eps * max(1.0, abs(phi0))
    alpha = alpha_max
    for k in range(max_backtracks + 1):
        phi = merit(alpha)
        if np.isfinite(phi) and phi <= phi0 + armijo * alpha * min(slope, 0.0) + noise:
            return LineSearchResult(alpha, k, True)
        alpha *= 0.5
    return LineSearchResult(0.0, max_backtracks, False)


def factorize_with_inertia(kkt: KKTSystem, delta_primal: float = 0.0, delta_dual: float = 0.0,
                           zero_tol: float | None = None,
                           pivot_tol: float = BK_ALPHA,
                           stop_on_wrong_inertia: bool = False) -> tuple[LDLFactor, Inertia]:
    """Factor ``kkt.matrix`` with ``delta_primal`` added to the primal diagonal.

    ``delta_dual`` is subtracted from the dual diagonal on top of whatever
    ``kkt.matrix`` already holds. The caller inspects the inertia and retries
    with a larger ``delta_primal`` when it is not ``(n_primal, n_dual, 0)``.
    Pivots below ``zero_tol`` in magnitude count as zero eigenvalues;
    ``pivot_tol`` is the diagonal-acceptance threshold of the pivot search
    and also the coupling below which a matched 2x2 partner is rejected.
    With ``stop_on_wrong_inertia`` the factorization is abandoned once the
    inertia can no longer be ``(n_primal, n_dual, 0)``.
    """
    mat = kkt.matrix
    if delta_primal or delta_dual:
        shift = np.concatenate([np.full(kkt.n_primal, float(delta_primal)),
                                np.full(kkt.n_dual, -float(delta_dual))])
        if kkt.diag_slots is not None:
            mat = mat.copy()
            mat.data[kkt.diag_slots] += shift
        else:
            mat = (mat + sp.diags(shift)).tocsr()
    expected = (kkt.n_primal, kkt.n_dual, 0) if stop_on_wrong_inertia else None
    factor = LDLFactor(mat, kkt.perm, alpha=pivot_tol, zero_tol=zero_tol,
                       partner=kkt.partner, partner_threshold=pivot_tol,
                       expected_inertia=expected)
    return factor, factor.inertia


# ---------------------------------------------------------------------------
# reduced problem with slacks

class _Workspace:
    """Slack-augmented, fixed-variable-free view of an :class:`NLPProblem`."""

    def __init__(self, problem: NLPProblem, delta_dual: float):
        problem.finalize()
        self.problem = problem
        xl, xu = problem.x_lower, problem.x_upper
        cl, cu = problem.c_lower, problem.c_upper
        self.n, self.m = problem.n, problem.m
        self.fixed = xl == xu
        self.free = np.flatnonzero(~self.fixed)
        self.x_template = np.where(self.fixed, xl, 0.0)
        eq = cl == cu
        self.ineq = np.flatnonzero(~eq)
        self.target = np.where(eq, cl, 0.0)
        nf, mi = len(self.free), len(self.ineq)
        self.nf, self.nw = nf, nf + mi
        self.wl = np.concatenate([xl[self.free], cl[self.ineq]])
        self.wu = np.concatenate([xu[self.free], cu[self.ineq]])
        self.has_l = np.isfinite(self.wl)
        self.has_u = np.isfinite(self.wu)
        self.delta_dual = delta_dual

        colmap = np.full(self.n, -1, dtype=np.int64)
        colmap[self.free] = np.arange(nf)
        self.colmap = colmap

        jr, jc = problem.jacobian_structure()
        self.j_keep = np.flatnonzero(colmap[jc] >= 0)
        j_rows = jr[self.j_keep]
        j_cols = colmap[jc[self.j_keep]]
        hr, hc = problem.hessian_structure()
        hkeep = (colmap[hr] >= 0) & (colmap[hc] >= 0)
        self.h_keep = np.flatnonzero(hkeep)
        h_rows, h_cols = colmap[hr[hkeep]], colmap[hc[hkeep]]
        self.h_off = h_rows != h_cols

        N = self.nw + self.m
        diag_w = np.arange(self.nw)
        diag_c = self.nw + np.arange(self.m)
        slack_rows = self.nw + self.ineq
        slack_cols = nf + np.arange(mi)
        rows = np.concatenate([h_rows, h_cols[self.h_off], diag_w, self.nw + j_rows, j_cols,
                               slack_rows, slack_cols, diag_c])
        cols = np.concatenate([h_cols, h_rows[self.h_off], diag_w, j_cols, self.nw + j_rows,
                               slack_cols, slack_rows, diag_c])
        keys = rows * N + cols
        uniq, self.kkt_map = np.unique(keys, return_inverse=True)
        self.kkt_nnz = len(uniq)
        r_u, c_u = uniq // N, uniq % N
        self.kkt_indices = c_u
        self.kkt_indptr = np.searchsorted(r_u, np.arange(N + 1)).astype(np.int64)
        self.kkt_diag = np.searchsorted(uniq, np.arange(N) * N + np.arange(N))
        self.N = N
        pattern = sp.csr_matrix((np.ones(self.kkt_nnz), self.kkt_indices, self.kkt_indptr), shape=(N, N))
        # unbounded primals may have no curvature; pair each with a short
        # constraint row it appears in so the ordering plans for the 2x2 pivot
        self.pattern = pattern
        self.partner, pair_a, pair_b = self._match(j_rows, j_cols)
        self.perm = amd_order(pattern, (pair_a, pair_b))
        self._slack_ones = -np.ones(mi)
        self._dual_diag = np.full(self.m, -delta_dual)

    def _match(self, j_rows, j_cols):
        """Pair constraint rows with primal variables appearing in them.

        A matched pair is ordered as one node and normally pivots as a 2x2
        block ``[h, a; a, -delta_c]``, so no dual row is eliminated before
        any of its primal couplings. Unbounded primals, which may lack
        curvature, are matched first.
        """
        partner = np.full(self.N, -1, dtype=np.int64)
        empty = np.zeros(0, dtype=np.int64)
        if self.m == 0 or self.nw == 0:
            return partner, empty, empty
        unbounded = ~self.has_l & ~self.has_u
        # columns ordered unbounded-first; the matching prefers low column ids
        col_rank = np.argsort(~unbounded, kind="stable")
        rank_of = np.empty(self.nw, dtype=np.int64)
        rank_of[col_rank] = np.arange(self.nw)
        graph = sp.csr_matrix((np.ones(len(j_rows)), (j_rows, rank_of[j_cols])),
                              shape=(self.m, self.nw))
        match = maximum_bipartite_matching(graph, perm_type="column")
        ok = match >= 0
        pair_a = col_rank[match[ok]]
        pair_b = self.nw + np.flatnonzero(ok)
        partner[pair_a] = pair_b
        partner[pair_b] = pair_a
        return partner, pair_a, pair_b

    # -- primal maps ------------------------------------------------------
    def x_of(self, w):
        x = self.x_template.copy()
        x[self.free] = w[: self.nf]
        return x

    def initial_w(self, x, push: float):
        x = np.asarray(x, float)
        c = self.problem.constraints(np.where(self.fixed, self.x_template, x))
        w = np.concatenate([x[self.free], c[self.ineq]])
        return self.push_interior(w, push)

    def push_interior(self, w, push):
        """Move ``w`` at least ``push`` (relative) inside every finite bound."""
        l = np.where(self.has_l, self.wl, 0.0)
        u = np.where(self.has_u, self.wu, 0.0)
        both = self.has_l & self.has_u
        span = np.where(both, u - l, 0.0)
        pl = push * np.maximum(1.0, np.abs(l))
        pu = push * np.maximum(1.0, np.abs(u))
        pl = np.where(both, np.minimum(pl, push * span), pl)
        pu = np.where(both, np.minimum(pu, push * span), pu)
        lo = np.where(self.has_l, l + pl, -np.inf)
        hi = np.where(self.has_u, u - pu, np.inf)
        return np.minimum(np.maximum(w, lo), hi)

    # -- evaluation -------------------------------------------------------
    def evaluate(self, w):
        x = self.x_of(w)
        p = self.problem
        f = p.objective(x)
        grad = np.zeros(self.nw)
        grad[: self.nf] = p.objective_gradient(x)[self.free]
        c = p.constraints(x)
        g = c - self.target
        g[self.ineq] -= w[self.nf:]
        J = p.jacobian(x)
        return x, f, grad, g, J

    def jt_times(self, J, lam):
        out = np.empty(self.nw)
        out[: self.nf] = (J.T @ lam)[self.free]
        out[self.nf:] = -lam[self.ineq]
        return out

    def j_times(self, J, dw):
        dx = np.zeros(self.n)
        dx[self.free] = dw[: self.nf]
        out = J @ dx
        out[self.ineq] -= dw[self.nf:]
        return out

    def kkt_matrix(self, x, J, lam, sigma):
        hv = self.problem.hessian_values(x, 1.0, lam)[self.h_keep]
        jv = J.data[self.j_keep]
        vals = np.concatenate([hv, hv[self.h_off], sigma, jv, jv,
                               self._slack_ones, self._slack_ones, self._dual_diag])
        data = np.bincount(self.kkt_map, weights=vals, minlength=self.kkt_nnz).astype(float, copy=False)
        return sp.csr_matrix((data, self.kkt_indices, self.kkt_indptr), shape=(self.N, self.N))

    def row_scale(self, w, target: float = 100.0):
        """Merit weights ``min(1, target / max|grad c_i|)`` taken at ``w``."""
        J = self.problem.jacobian(self.x_of(w))
        big = np.zeros(self.m)
        if J.nnz:
            big = np.maximum.reduceat(np.abs(np.r_[J.data, 0.0]), np.minimum(J.indptr[:-1], J.nnz))
            big[np.diff(J.indptr) == 0] = 0.0
        big[self.ineq] = np.maximum(big[self.ineq], 1.0)
        return np.minimum(1.0, target / np.maximum(big, 1e-300))

    def slacks(self, w):
        """Distances to the lower and upper bounds (1 where a bound is absent)."""
        sl = np.where(self.has_l, w - np.where(self.has_l, self.wl, 0.0), 1.0)
        su = np.where(self.has_u, np.where(self.has_u, self.wu, 0.0) - w, 1.0)
        return sl, su


def assemble_kkt(problem: NLPProblem, point, multipliers=None, mu: float = 0.1,
                 delta_dual: float = 1e-8) -> KKTSystem:
    """Primal-dual system at ``point`` for barrier parameter ``mu``.

    ``point`` is a :class:`Point` or a plain ``x``; missing bound duals default
    to ``mu / slack``. Slacks of inequality rows are set to ``c(x)`` pushed
    inside their bounds.
    """
    ws = _Workspace(problem, delta_dual)
    x = point.x if isinstance(point, Point) else np.asarray(point, float)
    w = ws.initial_w(x, 0.0) if ws.nw else np.zeros(0)
    lam = np.zeros(ws.m) if multipliers is None else np.asarray(multipliers, float)
    sl, su = ws.slacks(w)
    zl = np.where(ws.has_l, mu / sl, 0.0)
    zu = np.where(ws.has_u, mu / su, 0.0)
    if isinstance(point, Point) and point.z_lower is not None:
        zl = np.where(ws.has_l, np.concatenate([point.z_lower[ws.free], zl[ws.nf:]]), 0.0)
    if isinstance(point, Point) and point.z_upper is not None:
        zu = np.where(ws.has_u, np.concatenate([point.z_upper[ws.free], zu[ws.nf:]]), 0.0)
    xv, f, grad, g, J = ws.evaluate(w)
    sigma = np.where(ws.has_l, zl / sl, 0.0) + np.where(ws.has_u, zu / su, 0.0)
    mat = ws.kkt_matrix(xv, J, lam, sigma)
    barrier_grad = grad + ws.jt_times(J, lam)
    barrier_grad -= np.where(ws.has_l, mu / sl, 0.0) - np.where(ws.has_u, mu / su, 0.0)
    rhs = -np.concatenate([barrier_grad, g])
    return KKTSystem(mat, rhs, ws.nw, ws.m, ws.perm, ws.kkt_diag, ws.partner)


# ---------------------------------------------------------------------------
# main loop

def _errors(ws, grad, J, g, w, lam, zl, zu, mu):
    sl, su = ws.slacks(w)
    stat = grad + ws.jt_times(J, lam) - zl + zu
    stat_err = float(np.max(np.abs(stat), initial=0.0))
    feas = float(np.max(np.abs(g), initial=0.0))
    cl = np.where(ws.has_l, sl * zl, 0.0)
    cu = np.where(ws.has_u, su * zu, 0.0)
    comp0 = float(max(np.max(cl, initial=0.0), np.max(cu, initial=0.0)))
    comp_mu = float(max(np.max(np.abs(np.where(ws.has_l, cl - mu, 0.0)), initial=0.0),
                        np.max(np.abs(np.where(ws.has_u, cu - mu, 0.0)), initial=0.0)))
    return stat_err, feas, comp0, max(stat_err, feas, comp_mu)


def solve(problem: NLPProblem, options: SolverOptions | None = None, start=None) -> SolveResult:
    """Minimize ``problem`` from ``start`` (a :class:`Point`, an array, or bound midpoints)."""
    opts = options or SolverOptions()
    t0 = time.perf_counter()
    problem.finalize()
    n, m = problem.n, problem.m
    if start is None:
        xl, xu = problem.x_lower, problem.x_upper
        x0 = np.clip(np.zeros(n), xl, xu)
        both = np.isfinite(xl) & np.isfinite(xu)
        x0[both] = 0.5 * (xl[both] + xu[both])
    else:
        x0 = start.x if isinstance(start, Point) else np.asarray(start, float)
    x0 = np.asarray(x0, float)

    def result(status, x, lam, zl_full, zu_full, it, errs, log):
        return SolveResult(Status(status), problem.objective(x), it, time.perf_counter() - t0,
                           errs[0], errs[1], errs[2], x, lam, zl_full, zu_full, log)

    if problem.degrees_of_freedom() <= 0 and not opts.allow_degenerate:
        x = np.clip(x0, problem.x_lower, problem.x_upper)
        c = problem.constraints(x)
        feas = float(np.max(np.maximum(problem.c_lower - c, c - problem.c_upper), initial=0.0))
        return result(Status.DEGENERATE, x, np.zeros(m), np.zeros(n), np.zeros(n), 0,
                      (math.inf, max(feas, 0.0), math.inf), [])

    ws = _Workspace(problem, opts.delta_dual)
    mu = opts.mu_init
    floor = opts.tol / 10.0
    w = ws.initial_w(x0, opts.bound_push)
    lam = np.zeros(m)
    if isinstance(start, Point) and start.multipliers is not None:
        lam = np.asarray(start.multipliers, float).copy()
    sl, su = ws.slacks(w)
    zl = np.where(ws.has_l, mu / sl, 0.0)
    zu = np.where(ws.has_u, mu / su, 0.0)
    row_scale = ws.row_scale(w)
    pivot_tol = opts.pivot_tol
    nu = 0.0
    delta_last = 0.0
    stalls = 0
    log: list[IterationRecord] = []

    def full_duals():
        zl_full, zu_full = np.zeros(n), np.zeros(n)
        zl_full[ws.free] = zl[: ws.nf]
        zu_full[ws.free] = zu[: ws.nf]
        return zl_full, zu_full

    it = 0
    alpha_p = alpha_d = 0.0
    delta_w = 0.0
    backtracks = 0
    while True:
        x, f, grad, g, J = ws.evaluate(w)
        stat, feas, comp, err_mu = _errors(ws, grad, J, g, w, lam, zl, zu, mu)
        log.append(IterationRecord(it, mu, f, stat, feas, comp, alpha_p, alpha_d, delta_w, backtracks))
        errs = (stat, feas, comp)
        if max(errs) <= opts.tol:
            return result(Status.OPTIMAL, x, lam, *full_duals(), it, errs, log)
        if it >= opts.max_iter:
            return result(Status.MAX_ITER, x, lam, *full_duals(), it, errs, log)
        if opts.time_limit is not None and time.perf_counter() - t0 > opts.time_limit:
            return result(Status.TIME_LIMIT, x, lam, *full_duals(), it, errs, log)
        if not (np.isfinite(f) and np.all(np.isfinite(g))):
            return result(Status.LINE_SEARCH_FAILURE, x, lam, *full_duals(), it, errs, log)

        while mu > floor and err_mu <= opts.kappa_eps * mu:
            mu = update_barrier(mu, opts.tol, opts.kappa_mu, opts.theta_mu)
            err_mu = _errors(ws, grad, J, g, w, lam, zl, zu, mu)[3]

        sl, su = ws.slacks(w)
        sig_l = np.where(ws.has_l, zl / sl, 0.0)
        sig_u = np.where(ws.has_u, zu / su, 0.0)
        mat = ws.kkt_matrix(x, J, lam, sig_l + sig_u)
        kkt = KKTSystem(mat, None, ws.nw, m, ws.perm, ws.kkt_diag, ws.partner)

        bar_l = np.where(ws.has_l, mu / sl, 0.0)
        bar_u = np.where(ws.has_u, mu / su, 0.0)
        bgrad = grad - bar_l + bar_u
        rhs = -np.concatenate([bgrad + ws.jt_times(J, lam), g])

        while True:
            factor, delta_w = _regularized_factor(kkt, delta_last, opts, pivot_tol)
            if factor is None:
                return result(_failure_status(errs[1], opts), x, lam, *full_duals(), it, errs, log)
            sol = factor.solve(rhs)
            # an inaccurate solve means the relaxed pivoting was too loose
            if factor.last_residual <= opts.solve_accuracy or pivot_tol >= BK_ALPHA:
                break
            pivot_tol = min(BK_ALPHA, 100.0 * pivot_tol)
        delta_last = delta_w
        dw, dlam = sol[: ws.nw], sol[ws.nw:]
        dzl = np.where(ws.has_l, bar_l - zl - sig_l * dw, 0.0)
        dzu = np.where(ws.has_u, bar_u - zu + sig_u * dw, 0.0)

        alpha_max = fraction_to_boundary(w, dw, ws.wl, ws.wu, opts.tau)
        alpha_d = min(fraction_to_boundary(zl, dzl, tau=opts.tau),
                      fraction_to_boundary(zu, dzu, tau=opts.tau))

        # penalty parameter: exceed the new multipliers and make dw a descent direction
        gnorm = float(np.sum(row_scale * np.abs(g)))
        lam_plus = (lam + dlam) / row_scale
        curv = float(dw @ (mat @ np.concatenate([dw, np.zeros(m)]))[: ws.nw])
        dphi = float(bgrad @ dw)
        nu_req = float(np.max(np.abs(lam_plus), initial=0.0))
        if gnorm > 0:
            nu_req = max(nu_req, (dphi + 0.5 * max(curv, 0.0)) / (0.9 * gnorm))
        if nu < nu_req:
            nu = 1.1 * nu_req + 1e-6
        slope = dphi - nu * gnorm

        def merit(a, w=w):
            wt = w + a * dw
            slt, sut = ws.slacks(wt)
            if np.any(slt <= 0) or np.any(sut <= 0):
                return math.inf
            xt = ws.x_of(wt)
            gt = problem.constraints(xt) - ws.target
            gt[ws.ineq] -= wt[ws.nf:]
            barrier = -mu * (np.sum(np.log(slt[ws.has_l])) + np.sum(np.log(sut[ws.has_u])))
            return problem.objective(xt) + barrier + nu * float(np.sum(row_scale * np.abs(gt)))

        ls = line_search(merit, merit(0.0), slope, alpha_max, opts.armijo, opts.max_backtracks)
        backtracks = ls.backtracks
        it += 1
        if not ls.accepted:
            x, f, grad, g, J = ws.evaluate(w)
            errs = _errors(ws, grad, J, g, w, lam, zl, zu, mu)[:3]
            log.append(IterationRecord(it, mu, f, *errs, 0.0, 0.0, delta_w, backtracks))
            return result(_failure_status(errs[1], opts), x, lam, *full_duals(), it, errs, log)
        alpha_p = ls.alpha
        step = alpha_p * np.max(np.abs(dw), initial=0.0)
        w = w + alpha_p * dw
        lam = lam + alpha_p * dlam
        zl = zl + alpha_d * dzl
        zu = zu + alpha_d * dzu

        # keep bound duals within a factor kappa_sigma of the barrier centre
        sl, su = ws.slacks(w)
        k = opts.kappa_sigma
        zl = np.where(ws.has_l, np.clip(zl, mu / (k * sl), k * mu / sl), 0.0)
        zu = np.where(ws.has_u, np.clip(zu, mu / (k * su), k * mu / su), 0.0)

        if step <= 10.0 * np.finfo(float).eps * (1.0 + np.max(np.abs(w), initial=0.0)):
            if mu > floor:
                mu = update_barrier(mu, opts.tol, opts.kappa_mu, opts.theta_mu)
            else:
                stalls += 1
                if stalls >= 5:
                    x, f, grad, g, J = ws.evaluate(w)
                    errs = _errors(ws, grad, J, g, w, lam, zl, zu, mu)[:3]
                    return result(_failure_status(errs[1], opts), x, lam, *full_duals(), it, errs, log)
        else:
            stalls = 0
        if nu > 1e14 and feas > math.sqrt(opts.tol):
            x, f, grad, g, J = ws.evaluate(w)
            errs = _errors(ws, grad, J, g, w, lam, zl, zu, mu)[:3]
            return result(Status.INFEASIBLE, x, lam, *full_duals(), it, errs, log)


def _failure_status(feasibility: float, opts: SolverOptions) -> Status:
    """Status for a run that can make no further progress.

    Without a restoration phase a breakdown far from feasibility is the
    practical signature of a locally infeasible problem; near feasibility it
    is a plain line-search failure.
    """
    return Status.INFEASIBLE if feasibility > math.sqrt(opts.tol) else Status.LINE_SEARCH_FAILURE


def _regularized_factor(kkt: KKTSystem, delta_last: float, opts: SolverOptions, pivot_tol: float):
    """Try ``delta_w = 0``, then grow from ``max(floor, delta_last/3)`` by ``delta_growth``."""
    want = (kkt.n_primal, kkt.n_dual, 0)
    # the dual block carries -delta_dual, so legitimate pivots can be that small
    scale = float(np.max(np.abs(kkt.matrix.data), initial=1.0))
    zero_tol = min(1e-14 * max(scale, 1.0), 1e-2 * opts.delta_dual) if opts.delta_dual > 0 else None
    factor, inertia = factorize_with_inertia(kkt, 0.0, zero_tol=zero_tol, pivot_tol=pivot_tol,
                                             stop_on_wrong_inertia=True)
    if factor.complete and tuple(inertia) == want:
        return factor, 0.0
    delta = max(opts.delta_floor, delta_last / 3.0)
    for _ in range(opts.max_escalations):
        factor, inertia = factorize_with_inertia(kkt, delta, zero_tol=zero_tol, pivot_tol=pivot_tol,
                                                 stop_on_wrong_inertia=True)
        if factor.complete and tuple(inertia) == want:
            return factor, delta
        delta *= opts.delta_growth
    return None, delta
