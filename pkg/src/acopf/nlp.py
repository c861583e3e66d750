"""Sparse NLP container built from a closed set of algebraic kernels.

Every constraint row is a sum of terms drawn from five families:

* linear        ``c * x_a``
* quadratic     ``c * x_a**2``
* bilinear      ``c * x_a * x_b``
* trig-bilinear ``c * x_a * x_b * cos(x_c - x_d + phi)`` (or ``sin``)
* sum of squares ``c * (w . x_S + offset)**2``

Each family carries exact first and second derivatives, so the Jacobian and
the lower-triangular Hessian of the Lagrangian have a sparsity pattern that
is fixed once the problem is finalized.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

__all__ = [
    "Kernel", "VariableHandle", "ConstraintBlock", "NLPProblem", "Point",
    "LinearTerms", "QuadraticTerms", "BilinearTerms", "TrigTerms", "SquareTerms",
    "DerivativeReport", "eval_objective_gradient", "eval_constraints_jacobian",
    "eval_hessian_lagrangian", "check_derivatives",
]


class Kernel(str, enum.Enum):
    LINEAR = "Linear"
    QUADRATIC = "Quadratic"
    BILINEAR = "Bilinear"
    TRIG_BILINEAR = "TrigBilinear"
    SUM_OF_SQUARES = "SumOfSquares"


@dataclass(frozen=True)
class VariableHandle:
    index: int
    name: str
    lower: float
    upper: float


def _ints(a) -> np.ndarray:
    return np.atleast_1d(np.asarray(a, dtype=np.int64))


def _floats(a, n: int) -> np.ndarray:
    out = np.asarray(a, dtype=float)
    return np.broadcast_to(out, (n,)).copy() if out.ndim == 0 else out.astype(float)


@dataclass
class LinearTerms:
    rows: np.ndarray
    var: np.ndarray
    coef: np.ndarray

    def __post_init__(self):
        self.rows, self.var = _ints(self.rows), _ints(self.var)
        self.coef = _floats(self.coef, len(self.rows))


@dataclass
class QuadraticTerms:
    rows: np.ndarray
    var: np.ndarray
    coef: np.ndarray

    def __post_init__(self):
        self.rows, self.var = _ints(self.rows), _ints(self.var)
        self.coef = _floats(self.coef, len(self.rows))


@dataclass
class BilinearTerms:
    rows: np.ndarray
    a: np.ndarray
    b: np.ndarray
    coef: np.ndarray

    def __post_init__(self):
        self.rows, self.a, self.b = _ints(self.rows), _ints(self.a), _ints(self.b)
        self.coef = _floats(self.coef, len(self.rows))


@dataclass
class TrigTerms:
    """``coef * x_a * x_b * f(x_c - x_d + phase)`` with ``f`` cos, or sin where ``sine``."""
    rows: np.ndarray
    a: np.ndarray
    b: np.ndarray
    c: np.ndarray
    d: np.ndarray
    coef: np.ndarray
    phase: np.ndarray = 0.0
    sine: np.ndarray = False

    def __post_init__(self):
        self.rows = _ints(self.rows)
        self.a, self.b, self.c, self.d = map(_ints, (self.a, self.b, self.c, self.d))
        n = len(self.rows)
        self.coef = _floats(self.coef, n)
        self.phase = _floats(self.phase, n)
        sine = np.asarray(self.sine, dtype=bool)
        self.sine = np.broadcast_to(sine, (n,)).copy() if sine.ndim == 0 else sine


@dataclass
class SquareTerms:
    """``coef * (sum_k weights[:, k] * x[vars[:, k]] + offset)**2``."""
    rows: np.ndarray
    vars: np.ndarray
    weights: np.ndarray
    coef: np.ndarray = 1.0
    offset: np.ndarray = 0.0

    def __post_init__(self):
        self.rows = _ints(self.rows)
        self.vars = np.atleast_2d(np.asarray(self.vars, dtype=np.int64))
        self.weights = np.atleast_2d(np.asarray(self.weights, dtype=float))
        n = len(self.rows)
        self.coef = _floats(self.coef, n)
        self.offset = _floats(self.offset, n)
        if self.vars.shape != self.weights.shape or self.vars.shape[0] != n:
            raise ValueError("SquareTerms vars/weights shape mismatch")


_ALLOWED = {
    Kernel.LINEAR: (LinearTerms,),
    Kernel.QUADRATIC: (LinearTerms, QuadraticTerms, BilinearTerms),
    Kernel.BILINEAR: (LinearTerms, QuadraticTerms, BilinearTerms),
    Kernel.TRIG_BILINEAR: (LinearTerms, QuadraticTerms, BilinearTerms, TrigTerms),
    Kernel.SUM_OF_SQUARES: (LinearTerms, QuadraticTerms, BilinearTerms, SquareTerms),
}


@dataclass(frozen=True)
class ConstraintBlock:
    id: int
    name: str
    kernel: Kernel
    start: int
    size: int

    @property
    def rows(self) -> slice:
        return slice(self.start, self.start + self.size)

    @property
    def nonlinear(self) -> bool:
        return self.kernel is not Kernel.LINEAR


@dataclass
class Point:
    x: np.ndarray
    multipliers: np.ndarray | None = None
    z_lower: np.ndarray | None = None
    z_upper: np.ndarray | None = None


# ---------------------------------------------------------------------------
# kernel evaluation: values, slot gradients (S, T), slot Hessian pairs (P, T)

_TRIG_PAIRS = [(0, 1), (1, 0), (0, 2), (2, 0), (0, 3), (3, 0), (1, 2), (2, 1),
               (1, 3), (3, 1), (2, 2), (3, 3), (2, 3), (3, 2)]


def _trig_parts(x, t):
    xa, xb = x[t.a], x[t.b]
    u = x[t.c] - x[t.d] + t.phase
    cu, su = np.cos(u), np.sin(u)
    f = np.where(t.sine, su, cu)
    fp = np.where(t.sine, cu, -su)
    return xa, xb, f, fp


class _Compiled:
    """Flattened term arrays with precomputed sparsity maps."""

    def __init__(self, problem: "NLPProblem"):
        n = problem.n
        groups: dict[type, list] = {LinearTerms: [], QuadraticTerms: [], BilinearTerms: [],
                                    TrigTerms: [], SquareTerms: []}
        for blk, terms in zip(problem.blocks, problem._terms):
            for term in terms:
                groups[type(term)].append((blk.start, term))

        def cat(kind, attr, dtype):
            items = groups[kind]
            if not items:
                return np.zeros(0, dtype=dtype)
            if attr == "rows":
                return np.concatenate([s + t.rows for s, t in items]).astype(dtype)
            return np.concatenate([getattr(t, attr) for _, t in items]).astype(dtype)

        self.lin = {k: cat(LinearTerms, k, np.int64 if k != "coef" else float)
                    for k in ("rows", "var", "coef")}
        self.quad = {k: cat(QuadraticTerms, k, np.int64 if k != "coef" else float)
                     for k in ("rows", "var", "coef")}
        self.bil = {k: cat(BilinearTerms, k, np.int64 if k != "coef" else float)
                    for k in ("rows", "a", "b", "coef")}
        trig = [t for _, t in groups[TrigTerms]]
        if trig:
            self.trig = TrigTerms(
                rows=cat(TrigTerms, "rows", np.int64),
                a=np.concatenate([t.a for t in trig]), b=np.concatenate([t.b for t in trig]),
                c=np.concatenate([t.c for t in trig]), d=np.concatenate([t.d for t in trig]),
                coef=np.concatenate([t.coef for t in trig]),
                phase=np.concatenate([t.phase for t in trig]),
                sine=np.concatenate([t.sine for t in trig]))
        else:
            self.trig = None
        # sum-of-squares grouped by width
        by_width: dict[int, list] = {}
        for s, t in groups[SquareTerms]:
            by_width.setdefault(t.vars.shape[1], []).append((s, t))
        self.sos = []
        for width, items in sorted(by_width.items()):
            self.sos.append(SquareTerms(
                rows=np.concatenate([s + t.rows for s, t in items]),
                vars=np.vstack([t.vars for _, t in items]),
                weights=np.vstack([t.weights for _, t in items]),
                coef=np.concatenate([t.coef for _, t in items]),
                offset=np.concatenate([t.offset for _, t in items])))

        # Jacobian pattern
        jr, jc = [], []
        jr.append(self.lin["rows"]); jc.append(self.lin["var"])
        jr.append(self.quad["rows"]); jc.append(self.quad["var"])
        jr += [self.bil["rows"]] * 2; jc += [self.bil["a"], self.bil["b"]]
        if self.trig is not None:
            jr += [self.trig.rows] * 4
            jc += [self.trig.a, self.trig.b, self.trig.c, self.trig.d]
        for g in self.sos:
            w = g.vars.shape[1]
            jr.append(np.repeat(g.rows, w)); jc.append(g.vars.ravel())
        jr = np.concatenate(jr) if jr else np.zeros(0, np.int64)
        jc = np.concatenate(jc) if jc else np.zeros(0, np.int64)
        m = problem.m
        keys = jr * n + jc
        uniq, self.jac_map = np.unique(keys, return_inverse=True)
        self.jac_rows, self.jac_cols = uniq // n, uniq % n
        self.jac_indptr = np.searchsorted(self.jac_rows, np.arange(m + 1)).astype(np.int64)
        self.jac_nnz = len(uniq)

        # Hessian pattern (lower triangle, row >= col)
        hr, hc, self._hess_parts = [], [], []

        def add_pairs(tag, rows, slot_vars, pairs):
            for p, (s, u) in enumerate(pairs):
                vs, vu = slot_vars[s], slot_vars[u]
                keep = np.nonzero(vs >= vu)[0]
                hr.append(vs[keep]); hc.append(vu[keep])
                self._hess_parts.append((tag, p, keep, rows[keep]))

        add_pairs("quad", self.quad["rows"], [self.quad["var"]], [(0, 0)])
        add_pairs("bil", self.bil["rows"], [self.bil["a"], self.bil["b"]], [(0, 1), (1, 0)])
        if self.trig is not None:
            t = self.trig
            add_pairs("trig", t.rows, [t.a, t.b, t.c, t.d], _TRIG_PAIRS)
        for gi, g in enumerate(self.sos):
            w = g.vars.shape[1]
            pairs = [(s, u) for s in range(w) for u in range(w)]
            add_pairs(("sos", gi), g.rows, [g.vars[:, k] for k in range(w)], pairs)
        ov = problem._obj_var
        hr.append(ov); hc.append(ov)
        hr = np.concatenate(hr); hc = np.concatenate(hc)
        hkeys = hr * n + hc
        huniq, self.hess_map = np.unique(hkeys, return_inverse=True)
        self.hess_rows, self.hess_cols = huniq // n, huniq % n
        self.hess_nnz = len(huniq)
        self.n, self.m = n, m

    # -- evaluation -------------------------------------------------------
    def constraints(self, x):
        m = self.m
        out = np.zeros(m)
        out += np.bincount(self.lin["rows"], self.lin["coef"] * x[self.lin["var"]], minlength=m)
        q = self.quad
        out += np.bincount(q["rows"], q["coef"] * x[q["var"]] ** 2, minlength=m)
        b = self.bil
        out += np.bincount(b["rows"], b["coef"] * x[b["a"]] * x[b["b"]], minlength=m)
        if self.trig is not None:
            t = self.trig
            xa, xb, f, _ = _trig_parts(x, t)
            out += np.bincount(t.rows, t.coef * xa * xb * f, minlength=m)
        for g in self.sos:
            lin = np.einsum("tk,tk->t", g.weights, x[g.vars]) + g.offset
            out += np.bincount(g.rows, g.coef * lin * lin, minlength=m)
        return out[:m] if m else np.zeros(0)

    def jacobian_values(self, x):
        parts = [self.lin["coef"]]
        q = self.quad
        parts.append(2.0 * q["coef"] * x[q["var"]])
        b = self.bil
        parts += [b["coef"] * x[b["b"]], b["coef"] * x[b["a"]]]
        if self.trig is not None:
            t = self.trig
            xa, xb, f, fp = _trig_parts(x, t)
            g3 = t.coef * xa * xb * fp
            parts += [t.coef * xb * f, t.coef * xa * f, g3, -g3]
        for g in self.sos:
            lin = np.einsum("tk,tk->t", g.weights, x[g.vars]) + g.offset
            parts.append((2.0 * g.coef * lin)[:, None] * g.weights)
            parts[-1] = parts[-1].ravel()
        vals = np.concatenate(parts) if parts else np.zeros(0)
        return np.bincount(self.jac_map, vals, minlength=self.jac_nnz).astype(float, copy=False)

    def hessian_values(self, x, lam):
        trig_h = None
        if self.trig is not None:
            t = self.trig
            xa, xb, f, fp = _trig_parts(x, t)
            c = t.coef
            hab, ha, hb, hcc = c * f, c * xb * fp, c * xa * fp, -c * xa * xb * f
            trig_h = [hab, hab, ha, ha, -ha, -ha, hb, hb, -hb, -hb, hcc, hcc, -hcc, -hcc]
        vals = []
        for tag, p, keep, rows in self._hess_parts:
            if tag == "quad":
                h = 2.0 * self.quad["coef"][keep]
            elif tag == "bil":
                h = self.bil["coef"][keep]
            elif tag == "trig":
                h = trig_h[p][keep]
            else:
                g = self.sos[tag[1]]
                w = g.vars.shape[1]
                s, u = divmod(p, w)
                h = 2.0 * g.coef[keep] * g.weights[keep, s] * g.weights[keep, u]
            vals.append(h * lam[rows])
        return vals


class NLPProblem:
    """Variables with bounds, kernel-built constraint blocks and a separable
    quadratic objective ``sum c2*x^2 + c1*x + c0`` over selected variables."""

    def __init__(self, name: str = ""):
        self.name = name
        self._lower: list[float] = []
        self._upper: list[float] = []
        self._names: list[tuple[int, str, int]] = []  # (start, prefix, count)
        self.blocks: list[ConstraintBlock] = []
        self._terms: list[list] = []
        self._c_lower: list[np.ndarray] = []
        self._c_upper: list[np.ndarray] = []
        self._obj_var = np.zeros(0, np.int64)
        self._obj_c2 = np.zeros(0)
        self._obj_c1 = np.zeros(0)
        self._obj_c0 = 0.0
        self._compiled: _Compiled | None = None
        self._arrays = None

    # -- building ---------------------------------------------------------
    def _check_open(self):
        if self._compiled is not None:
            raise RuntimeError("problem is finalized")

    @property
    def n(self) -> int:
        return len(self._lower)

    @property
    def m(self) -> int:
        return sum(b.size for b in self.blocks)

    def add_variable(self, name: str, lower: float = -np.inf, upper: float = np.inf) -> VariableHandle:
        self._check_open()
        if not lower <= upper:
            raise ValueError(f"variable {name}: lower bound {lower} exceeds upper bound {upper}")
        idx = self.n
        self._lower.append(float(lower))
        self._upper.append(float(upper))
        self._names.append((idx, name, 1))
        return VariableHandle(idx, name, float(lower), float(upper))

    def add_variables(self, prefix: str, count: int, lower=-np.inf, upper=np.inf) -> np.ndarray:
        """Add ``count`` variables named ``prefix[k]``; return their indices."""
        self._check_open()
        lo = np.broadcast_to(np.asarray(lower, float), (count,))
        up = np.broadcast_to(np.asarray(upper, float), (count,))
        if np.any(lo > up):
            raise ValueError(f"variables {prefix}: inverted bounds")
        start = self.n
        self._lower.extend(lo.tolist())
        self._upper.extend(up.tolist())
        self._names.append((start, prefix, count))
        return np.arange(start, start + count, dtype=np.int64)

    def variable_name(self, index: int) -> str:
        for start, prefix, count in self._names:
            if start <= index < start + count:
                return prefix if count == 1 else f"{prefix}[{index - start}]"
        raise IndexError(index)

    def add_constraint_block(self, name: str, kernel: Kernel, terms, lower, upper) -> int:
        """Register rows ``lower <= sum(terms) <= upper``; return the block id.

        Row indices inside ``terms`` are local to the block.
        """
        self._check_open()
        kernel = Kernel(kernel)
        lower = np.atleast_1d(np.asarray(lower, dtype=float))
        upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if lower.shape != upper.shape:
            lower, upper = np.broadcast_arrays(lower, upper)
        size = len(lower)
        if np.any(lower > upper):
            raise ValueError(f"block {name}: inverted row bounds")
        n = self.n
        terms = list(terms)
        for term in terms:
            if not isinstance(term, _ALLOWED[kernel]):
                raise ValueError(f"block {name}: {type(term).__name__} not allowed in a {kernel.value} block")
            if len(term.rows) and (term.rows.min() < 0 or term.rows.max() >= size):
                raise ValueError(f"block {name}: term row outside block")
            for arr in _term_vars(term):
                if arr.size and (arr.min() < 0 or arr.max() >= n):
                    raise ValueError(f"block {name}: unknown variable handle")
        bid = len(self.blocks)
        self.blocks.append(ConstraintBlock(bid, name, kernel, self.m, size))
        self._terms.append(terms)
        self._c_lower.append(lower.astype(float))
        self._c_upper.append(upper.astype(float))
        return bid

    def set_objective(self, var, c2, c1, c0=0.0):
        self._check_open()
        var = _ints(var)
        if var.size and (var.min() < 0 or var.max() >= self.n):
            raise ValueError("objective references unknown variable")
        self._obj_var = var
        self._obj_c2 = _floats(c2, len(var))
        self._obj_c1 = _floats(c1, len(var))
        self._obj_c0 = float(np.sum(c0))

    def finalize(self) -> "NLPProblem":
        if self._compiled is None:
            self._compiled = _Compiled(self)
            self._arrays = (np.array(self._lower), np.array(self._upper),
                            np.concatenate(self._c_lower) if self._c_lower else np.zeros(0),
                            np.concatenate(self._c_upper) if self._c_upper else np.zeros(0))
        return self

    def with_bounds(self, x_lower=None, x_upper=None) -> "NLPProblem":
        """Copy sharing all structure, with replaced variable bounds."""
        self.finalize()
        new = NLPProblem.__new__(NLPProblem)
        new.__dict__.update(self.__dict__)
        xl = self.x_lower if x_lower is None else np.asarray(x_lower, float)
        xu = self.x_upper if x_upper is None else np.asarray(x_upper, float)
        if np.any(xl > xu):
            raise ValueError("inverted bounds")
        new._lower, new._upper = xl.tolist(), xu.tolist()
        new._arrays = (xl.copy(), xu.copy()) + self._arrays[2:]
        return new

    # -- structure ---------------------------------------------------------
    @property
    def x_lower(self) -> np.ndarray:
        return self.finalize()._arrays[0]

    @property
    def x_upper(self) -> np.ndarray:
        return self.finalize()._arrays[1]

    @property
    def c_lower(self) -> np.ndarray:
        return self.finalize()._arrays[2]

    @property
    def c_upper(self) -> np.ndarray:
        return self.finalize()._arrays[3]

    @property
    def equality_rows(self) -> np.ndarray:
        return self.c_lower == self.c_upper

    def block(self, name: str) -> ConstraintBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise KeyError(name)

    def nonlinear_rows(self) -> int:
        return sum(b.size for b in self.blocks if b.nonlinear)

    def degrees_of_freedom(self) -> int:
        free = int(np.count_nonzero(self.x_lower < self.x_upper))
        return free - int(np.count_nonzero(self.equality_rows))

    def jacobian_structure(self) -> tuple[np.ndarray, np.ndarray]:
        c = self.finalize()._compiled
        return c.jac_rows.copy(), c.jac_cols.copy()

    def hessian_structure(self) -> tuple[np.ndarray, np.ndarray]:
        c = self.finalize()._compiled
        return c.hess_rows.copy(), c.hess_cols.copy()

    # -- evaluation --------------------------------------------------------
    def objective(self, x) -> float:
        xv = x[self._obj_var]
        return float(np.sum(self._obj_c2 * xv * xv + self._obj_c1 * xv) + self._obj_c0)

    def objective_gradient(self, x) -> np.ndarray:
        g = np.zeros(self.n)
        np.add.at(g, self._obj_var, 2.0 * self._obj_c2 * x[self._obj_var] + self._obj_c1)
        return g

    def constraints(self, x) -> np.ndarray:
        return self.finalize()._compiled.constraints(np.asarray(x, float))

    def jacobian(self, x) -> sp.csr_matrix:
        c = self.finalize()._compiled
        vals = c.jacobian_values(np.asarray(x, float))
        return sp.csr_matrix((vals, c.jac_cols, c.jac_indptr), shape=(self.m, self.n))

    def hessian_values(self, x, obj_factor: float, multipliers) -> np.ndarray:
        c = self.finalize()._compiled
        lam = np.asarray(multipliers, float)
        parts = c.hessian_values(np.asarray(x, float), lam)
        parts.append(obj_factor * 2.0 * self._obj_c2)
        return np.bincount(c.hess_map, np.concatenate(parts),
                           minlength=c.hess_nnz).astype(float, copy=False)

    def hessian(self, x, obj_factor: float, multipliers) -> sp.coo_matrix:
        """Lower triangle of the Hessian of ``obj_factor*f + multipliers.c``."""
        c = self.finalize()._compiled
        vals = self.hessian_values(x, obj_factor, multipliers)
        return sp.coo_matrix((vals, (c.hess_rows, c.hess_cols)), shape=(self.n, self.n))


def _term_vars(term):
    if isinstance(term, (LinearTerms, QuadraticTerms)):
        return [term.var]
    if isinstance(term, BilinearTerms):
        return [term.a, term.b]
    if isinstance(term, TrigTerms):
        return [term.a, term.b, term.c, term.d]
    return [term.vars.ravel()]


# ---------------------------------------------------------------------------
# functional API

def eval_objective_gradient(problem: NLPProblem, x) -> tuple[float, np.ndarray]:
    x = np.asarray(x, float)
    return problem.objective(x), problem.objective_gradient(x)


def eval_constraints_jacobian(problem: NLPProblem, x) -> tuple[np.ndarray, sp.csr_matrix]:
    x = np.asarray(x, float)
    return problem.constraints(x), problem.jacobian(x)


def eval_hessian_lagrangian(problem: NLPProblem, x, obj_factor: float, multipliers) -> sp.coo_matrix:
    return problem.hessian(np.asarray(x, float), obj_factor, multipliers)


@dataclass
class DerivativeReport:
    jacobian_error: float
    hessian_error: float
    gradient_error: float
    worst_jacobian_entry: tuple[int, int] | None = None
    worst_hessian_entry: tuple[int, int] | None = None

    @property
    def max_error(self) -> float:
        return max(self.jacobian_error, self.hessian_error, self.gradient_error)

    def ok(self, tol: float = 1e-6) -> bool:
        return self.max_error <= tol


def _rel_err(a: np.ndarray, b: np.ndarray) -> tuple[float, int | None]:
    if a.size == 0:
        return 0.0, None
    err = np.abs(a - b) / np.maximum(1.0, np.abs(b))
    k = int(np.argmax(err))
    return float(err[k]), k


def check_derivatives(problem: NLPProblem, x, epsilon: float = 1e-6,
                      multipliers=None, obj_factor: float = 1.0,
                      rng: np.random.Generator | None = None) -> DerivativeReport:
    """Compare analytic derivatives against central differences.

    Errors are ``|analytic - fd| / max(1, |fd|)`` maximized over entries.
    The Hessian is checked against differences of the Lagrangian gradient
    for ``multipliers`` (random normal when omitted).
    """
    x = np.asarray(x, float)
    n, m = problem.n, problem.m
    if multipliers is None:
        rng = rng or np.random.default_rng(0)
        multipliers = rng.standard_normal(m)
    lam = np.asarray(multipliers, float)
    J = problem.jacobian(x).toarray()
    H = problem.hessian(x, obj_factor, lam).toarray()
    H = H + np.tril(H, -1).T
    g = problem.objective_gradient(x)

    J_fd = np.zeros((m, n))
    H_fd = np.zeros((n, n))
    g_fd = np.zeros(n)
    for k in range(n):
        e = np.zeros(n)
        e[k] = epsilon
        xp, xm = x + e, x - e
        J_fd[:, k] = (problem.constraints(xp) - problem.constraints(xm)) / (2 * epsilon)
        g_fd[k] = (problem.objective(xp) - problem.objective(xm)) / (2 * epsilon)
        gp = obj_factor * problem.objective_gradient(xp) + problem.jacobian(xp).T @ lam
        gm = obj_factor * problem.objective_gradient(xm) + problem.jacobian(xm).T @ lam
        H_fd[:, k] = (gp - gm) / (2 * epsilon)

    je, jk = _rel_err(J.ravel(), J_fd.ravel())
    he, hk = _rel_err(H.ravel(), H_fd.ravel())
    ge, _ = _rel_err(g, g_fd)
    return DerivativeReport(
        jacobian_error=je, hessian_error=he, gradient_error=ge,
        worst_jacobian_entry=None if jk is None else divmod(jk, n),
        worst_hessian_entry=None if hk is None else divmod(hk, n))
