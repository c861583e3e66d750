"""The nine ACOPF formulations, box augmentation and cross-formulation maps.

Naming: ``B``/``NI`` = branch flow / nodal injection; ``PF``/``CF`` = power
or current flow variables; ``PA``/``RA`` = polar or rectangular admittance;
``PV``/``RV``/``W`` = polar voltage, rectangular voltage, or squared-voltage
(W) variables.

Sign conventions derived from ``s = v * conj(i)``:

* ``W^r_ij + j W^i_ij = conj(v_i) * v_j``, so
  ``W^i_ij = vr_i*vi_j - vi_i*vr_j`` and ``W_ji = conj(W_ij)``.
* reactive injection through branch currents is ``vi*ir - vr*ii``.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .admittance import AdmittanceData, bus_admittance_matrix
from .case_io import NetworkCase
from .nlp import (BilinearTerms, Kernel, LinearTerms, NLPProblem, Point, QuadraticTerms,
                  SquareTerms, TrigTerms)

__all__ = [
    "FormulationKind", "BOX_KINDS", "NONLINEAR_COUNTS", "FormulationInstance", "ResidualReport",
    "BoxNotApplicableWarning", "build_formulation", "apply_box_constraints",
    "nonlinear_constraint_count", "initial_point", "map_solution", "residuals",
    "degrees_of_freedom", "is_degenerate", "grid_state", "point_from_state",
]


class FormulationKind(str, enum.Enum):
    BPFPV = "BPFPV"
    BPFRV = "BPFRV"
    BPFW = "BPFW"
    BCFRV = "BCFRV"
    BCFW = "BCFW"
    NIPAPV = "NIPAPV"
    NIRAPV = "NIRAPV"
    NIRARV = "NIRARV"
    NIRAW = "NIRAW"

    @property
    def polar(self) -> bool:
        return self in (FormulationKind.BPFPV, FormulationKind.NIPAPV, FormulationKind.NIRAPV)


K = FormulationKind
BOX_KINDS = frozenset({K.BPFPV, K.BPFRV, K.BCFRV, K.BCFW, K.NIRARV})

# Nonlinear-constraint counts as (buses coefficient, branches coefficient).
NONLINEAR_COUNTS = {
    K.BPFPV: (2, 6), K.BPFRV: (4, 6), K.BPFW: (1, 6), K.BCFRV: (4, 2), K.BCFW: (3, 6),
    K.NIPAPV: (2, 2), K.NIRAPV: (2, 2), K.NIRARV: (4, 2), K.NIRAW: (1, 4),
}
# Nonlinear thermal rows per limited branch (one per orientation); the
# nodal W model's current limit is linear in W.
_THERMAL_NONLINEAR = {k: (0 if k is K.NIRAW else 2) for k in K}


class BoxNotApplicableWarning(UserWarning):
    pass


def nonlinear_constraint_count(kind, n_buses: int, n_branches: int,
                               n_limited: int | None = None) -> int:
    """Nonlinear constraint count of ``kind`` for a network of the given size.

    ``n_limited`` (default: all branches) discounts the thermal rows of
    unlimited branches, which are never built.
    """
    kind = FormulationKind(kind)
    a_n, a_k = NONLINEAR_COUNTS[kind]
    count = a_n * n_buses + a_k * n_branches
    if n_limited is not None:
        count -= _THERMAL_NONLINEAR[kind] * (n_branches - n_limited)
    return count


@dataclass
class FormulationInstance:
    kind: FormulationKind
    case: NetworkCase
    admittance: AdmittanceData
    problem: NLPProblem
    maps: dict[str, np.ndarray]
    limited_pairs: np.ndarray
    box: bool = False

    @property
    def n_variables(self) -> int:
        return self.problem.n

    def nonlinear_rows(self) -> int:
        return self.problem.nonlinear_rows()

    def expected_nonlinear_rows(self) -> int:
        return nonlinear_constraint_count(self.kind, self.case.n_buses, self.case.n_branches,
                                          int(self.limited_pairs[: self.case.n_branches].sum()))


@dataclass
class ResidualReport:
    max_violation: float
    per_block: dict[str, float] = field(default_factory=dict)
    bound_violation: float = 0.0

    @property
    def worst(self) -> float:
        return max(self.max_violation, self.bound_violation)


# ---------------------------------------------------------------------------
# builder

class _Net:
    """Array view of a case plus its admittance data."""

    def __init__(self, case: NetworkCase, adm: AdmittanceData):
        self.case, self.adm = case, adm
        idx = case.bus_index()
        self.nb, self.ng, self.nl = case.n_buses, case.n_generators, case.n_branches
        self.npair = 2 * self.nl
        self.gen_bus = np.array([idx[g.bus] for g in case.generators], dtype=np.int64)
        self.pd, self.qd = case.bus_loads()
        self.vmin = np.array([b.v_min for b in case.buses])
        self.vmax = np.array([b.v_max for b in case.buses])
        self.gs, self.bs = adm.shunt_g, adm.shunt_b
        self.i = adm.pair_from
        self.j = adm.pair_to
        self.y, self.Y = adm.pair_self, adm.pair_mutual
        self.g, self.b = adm.pair_self.real, adm.pair_self.imag
        self.G, self.B = adm.pair_mutual.real, adm.pair_mutual.imag
        self.branch = adm.pair_branch
        self.orient = np.where(adm.pair_reversed, -1.0, 1.0)
        imax = np.array([br.i_max for br in case.branches])
        self.imax = np.concatenate([imax, imax])
        self.limited = self.imax > 0
        slack = case.slack_positions()
        self.ref = slack[0] if slack else 0
        self.pairs = np.arange(self.npair)
        self.buses = np.arange(self.nb)
        y = adm.ybus_lines.tocoo()
        off = y.row != y.col
        self.y_row, self.y_col, self.y_val = y.row[off], y.col[off], y.data[off]
        self.y_diag = adm.ybus_lines.diagonal()
        if adm.polar_lines is not None:
            mag = adm.polar_lines.magnitude.tocoo()
            ang = adm.polar_lines.angle.tocoo()
            moff = mag.row != mag.col
            self.y_abs, self.y_ang = mag.data[moff], ang.data[moff]
            self.y_diag_abs = adm.polar_lines.magnitude.diagonal()
            self.y_diag_ang = adm.polar_lines.angle.diagonal()


def _gen_vars(prob: NLPProblem, case: NetworkCase):
    gens = case.generators
    p = prob.add_variables("p", len(gens), [g.p_min for g in gens], [g.p_max for g in gens])
    q = prob.add_variables("q", len(gens), [g.q_min for g in gens], [g.q_max for g in gens])
    prob.set_objective(p, [g.c2 for g in gens], [g.c1 for g in gens], [g.c0 for g in gens])
    return p, q


def _free(prob, name, n, ref=None):
    lo = np.full(n, -np.inf)
    up = np.full(n, np.inf)
    if ref is not None:
        lo[ref] = up[ref] = 0.0
    return prob.add_variables(name, n, lo, up)


def _balance(prob, net, p, q, kernel_p, terms_p, terms_q, kernel_q=None):
    """Generation minus network terms equals demand at every bus."""
    gp = LinearTerms(net.gen_bus, p, 1.0)
    gq = LinearTerms(net.gen_bus, q, 1.0)
    prob.add_constraint_block("balance_p", kernel_p, [gp] + terms_p, net.pd, net.pd)
    prob.add_constraint_block("balance_q", kernel_q or kernel_p, [gq] + terms_q, net.qd, net.qd)


def _vmag_rect(prob, net, vr, vi):
    sq = [QuadraticTerms(net.buses, vr, 1.0), QuadraticTerms(net.buses, vi, 1.0)]
    prob.add_constraint_block("vmag_min", Kernel.QUADRATIC, sq, net.vmin ** 2, np.inf)
    prob.add_constraint_block("vmag_max", Kernel.QUADRATIC, sq, -np.inf, net.vmax ** 2)


def _thermal_power(prob, net, P, Q, mag_terms):
    """P^2 + Q^2 - I^2 * |v_i|^2 <= 0 on limited pairs."""
    lim = net.pairs[net.limited]
    rows = np.arange(len(lim))
    terms = [QuadraticTerms(rows, P[lim], 1.0), QuadraticTerms(rows, Q[lim], 1.0)]
    terms += mag_terms(rows, lim, -net.imax[lim] ** 2)
    prob.add_constraint_block("thermal", Kernel.QUADRATIC, terms, -np.inf, np.zeros(len(lim)))


def _thermal_current_vars(prob, net, ir, ii):
    lim = net.pairs[net.limited]
    rows = np.arange(len(lim))
    terms = [QuadraticTerms(rows, ir[lim], 1.0), QuadraticTerms(rows, ii[lim], 1.0)]
    prob.add_constraint_block("thermal", Kernel.QUADRATIC, terms, -np.inf, net.imax[lim] ** 2)


def _thermal_polar(prob, net, V, th):
    """|y v_i + Y v_j|^2 <= I^2 expanded in polar voltages."""
    lim = net.pairs[net.limited]
    rows = np.arange(len(lim))
    ya = net.adm.pair_self_abs[lim]
    Ya = net.adm.pair_mutual_abs[lim]
    ang = net.adm.pair_angle[lim]
    i, j = net.i[lim], net.j[lim]
    terms = [QuadraticTerms(rows, V[i], ya ** 2), QuadraticTerms(rows, V[j], Ya ** 2),
             TrigTerms(rows, V[i], V[j], th[i], th[j], 2.0 * ya * Ya, ang, False)]
    prob.add_constraint_block("thermal", Kernel.TRIG_BILINEAR, terms, -np.inf, net.imax[lim] ** 2)


def _current_defs(prob, net, ir, ii, vr, vi):
    r, i, j = net.pairs, net.i, net.j
    g, b, G, B = net.g, net.b, net.G, net.B
    prob.add_constraint_block("current_r", Kernel.LINEAR, [
        LinearTerms(r, ir, 1.0), LinearTerms(r, vr[i], -g), LinearTerms(r, vi[i], b),
        LinearTerms(r, vr[j], -G), LinearTerms(r, vi[j], B)], 0.0, np.zeros(net.npair))
    prob.add_constraint_block("current_i", Kernel.LINEAR, [
        LinearTerms(r, ii, 1.0), LinearTerms(r, vi[i], -g), LinearTerms(r, vr[i], -b),
        LinearTerms(r, vi[j], -G), LinearTerms(r, vr[j], -B)], 0.0, np.zeros(net.npair))


def _current_injection_terms(net, ir, ii, vr, vi):
    r, i = net.pairs, net.i
    tp = [BilinearTerms(i, vr[i], ir, -1.0), BilinearTerms(i, vi[i], ii, -1.0)]
    tq = [BilinearTerms(i, vi[i], ir, -1.0), BilinearTerms(i, vr[i], ii, 1.0)]
    return tp, tq


def _w_block(prob, net, vr, vi, Wd, Wr, Wi, coupling: bool):
    nb = net.nb
    prob.add_constraint_block("wd_def", Kernel.QUADRATIC, [
        LinearTerms(net.buses, Wd, 1.0), QuadraticTerms(net.buses, vr, -1.0),
        QuadraticTerms(net.buses, vi, -1.0)], 0.0, np.zeros(nb))
    if Wr is None:
        return
    f, t = net.adm.from_idx, net.adm.to_idx
    rows = np.arange(net.nl)
    prob.add_constraint_block("wr_def", Kernel.BILINEAR, [
        LinearTerms(rows, Wr, 1.0), BilinearTerms(rows, vr[f], vr[t], -1.0),
        BilinearTerms(rows, vi[f], vi[t], -1.0)], 0.0, np.zeros(net.nl))
    prob.add_constraint_block("wi_def", Kernel.BILINEAR, [
        LinearTerms(rows, Wi, 1.0), BilinearTerms(rows, vr[f], vi[t], -1.0),
        BilinearTerms(rows, vi[f], vr[t], 1.0)], 0.0, np.zeros(net.nl))
    if coupling:
        r = net.pairs
        l = net.branch
        prob.add_constraint_block("w_coupling", Kernel.QUADRATIC, [
            QuadraticTerms(r, Wr[l], 1.0), QuadraticTerms(r, Wi[l], 1.0),
            BilinearTerms(r, Wd[net.i], Wd[net.j], -1.0)], 0.0, np.zeros(net.npair))


def _build(kind: FormulationKind, net: _Net) -> tuple[NLPProblem, dict]:
    prob = NLPProblem(f"{kind.value}:{net.case.name}")
    p, q = _gen_vars(prob, net.case)
    maps = {"p": p, "q": q}
    nb, npair = net.nb, net.npair
    r, i, j = net.pairs, net.i, net.j
    g, b, G, B = net.g, net.b, net.G, net.B
    buses = net.buses

    if kind.polar:
        V = prob.add_variables("V", nb, net.vmin, net.vmax)
        th = _free(prob, "theta", nb, net.ref)
        maps.update(V=V, theta=th)
        shunt_p = QuadraticTerms(buses, V, -net.gs)
        shunt_q = QuadraticTerms(buses, V, net.bs)
    else:
        vr = _free(prob, "vr", nb)
        vi = _free(prob, "vi", nb, net.ref)
        maps.update(vr=vr, vi=vi)

    if kind in (K.BPFW, K.BCFW, K.NIRAW):
        Wd = prob.add_variables("Wd", nb, net.vmin ** 2, net.vmax ** 2)
        maps["Wd"] = Wd
    if kind in (K.BPFW, K.NIRAW):
        Wr = _free(prob, "Wr", net.nl)
        Wi = _free(prob, "Wi", net.nl)
        maps.update(Wr=Wr, Wi=Wi)
        Wr_p = Wr[net.branch]
        Wi_p = Wi[net.branch]
        s = net.orient

    if kind is K.BPFPV:
        P, Q = _free(prob, "P", npair), _free(prob, "Q", npair)
        maps.update(P=P, Q=Q)
        prob.add_constraint_block("flow_p", Kernel.TRIG_BILINEAR, [
            LinearTerms(r, P, 1.0), QuadraticTerms(r, V[i], -g),
            TrigTerms(r, V[i], V[j], th[i], th[j], -G, 0.0, False),
            TrigTerms(r, V[i], V[j], th[i], th[j], -B, 0.0, True)], 0.0, np.zeros(npair))
        prob.add_constraint_block("flow_q", Kernel.TRIG_BILINEAR, [
            LinearTerms(r, Q, 1.0), QuadraticTerms(r, V[i], b),
            TrigTerms(r, V[i], V[j], th[i], th[j], -G, 0.0, True),
            TrigTerms(r, V[i], V[j], th[i], th[j], B, 0.0, False)], 0.0, np.zeros(npair))
        _balance(prob, net, p, q, Kernel.QUADRATIC,
                 [LinearTerms(i, P, -1.0), shunt_p], [LinearTerms(i, Q, -1.0), shunt_q])
        _thermal_power(prob, net, P, Q,
                       lambda rows, lim, c: [QuadraticTerms(rows, V[i[lim]], c)])

    elif kind is K.BPFRV:
        P, Q = _free(prob, "P", npair), _free(prob, "Q", npair)
        maps.update(P=P, Q=Q)
        prob.add_constraint_block("flow_p", Kernel.BILINEAR, [
            LinearTerms(r, P, 1.0), QuadraticTerms(r, vr[i], -g), QuadraticTerms(r, vi[i], -g),
            BilinearTerms(r, vr[i], vr[j], -G), BilinearTerms(r, vi[i], vr[j], -B),
            BilinearTerms(r, vi[i], vi[j], -G), BilinearTerms(r, vr[i], vi[j], B)],
            0.0, np.zeros(npair))
        prob.add_constraint_block("flow_q", Kernel.BILINEAR, [
            LinearTerms(r, Q, 1.0), QuadraticTerms(r, vr[i], b), QuadraticTerms(r, vi[i], b),
            BilinearTerms(r, vi[i], vr[j], -G), BilinearTerms(r, vr[i], vr[j], B),
            BilinearTerms(r, vr[i], vi[j], G), BilinearTerms(r, vi[i], vi[j], B)],
            0.0, np.zeros(npair))
        _balance(prob, net, p, q, Kernel.QUADRATIC,
                 [LinearTerms(i, P, -1.0), QuadraticTerms(buses, vr, -net.gs),
                  QuadraticTerms(buses, vi, -net.gs)],
                 [LinearTerms(i, Q, -1.0), QuadraticTerms(buses, vr, net.bs),
                  QuadraticTerms(buses, vi, net.bs)])
        _thermal_power(prob, net, P, Q, lambda rows, lim, c: [
            QuadraticTerms(rows, vr[i[lim]], c), QuadraticTerms(rows, vi[i[lim]], c)])
        _vmag_rect(prob, net, vr, vi)

    elif kind is K.BPFW:
        P, Q = _free(prob, "P", npair), _free(prob, "Q", npair)
        maps.update(P=P, Q=Q)
        prob.add_constraint_block("flow_p", Kernel.LINEAR, [
            LinearTerms(r, P, 1.0), LinearTerms(r, Wd[i], -g), LinearTerms(r, Wr_p, -G),
            LinearTerms(r, Wi_p, B * s)], 0.0, np.zeros(npair))
        prob.add_constraint_block("flow_q", Kernel.LINEAR, [
            LinearTerms(r, Q, 1.0), LinearTerms(r, Wd[i], b), LinearTerms(r, Wi_p, G * s),
            LinearTerms(r, Wr_p, B)], 0.0, np.zeros(npair))
        _balance(prob, net, p, q, Kernel.LINEAR,
                 [LinearTerms(i, P, -1.0), LinearTerms(buses, Wd, -net.gs)],
                 [LinearTerms(i, Q, -1.0), LinearTerms(buses, Wd, net.bs)])
        _thermal_power(prob, net, P, Q, lambda rows, lim, c: [LinearTerms(rows, Wd[i[lim]], c)])
        _w_block(prob, net, vr, vi, Wd, Wr, Wi, coupling=True)

    elif kind in (K.BCFRV, K.BCFW):
        ir, ii = _free(prob, "ir", npair), _free(prob, "ii", npair)
        maps.update(ir=ir, ii=ii)
        _current_defs(prob, net, ir, ii, vr, vi)
        tp, tq = _current_injection_terms(net, ir, ii, vr, vi)
        if kind is K.BCFRV:
            tp += [QuadraticTerms(buses, vr, -net.gs), QuadraticTerms(buses, vi, -net.gs)]
            tq += [QuadraticTerms(buses, vr, net.bs), QuadraticTerms(buses, vi, net.bs)]
        else:
            tp.append(LinearTerms(buses, Wd, -net.gs))
            tq.append(LinearTerms(buses, Wd, net.bs))
        _balance(prob, net, p, q, Kernel.BILINEAR, tp, tq)
        _thermal_current_vars(prob, net, ir, ii)
        if kind is K.BCFRV:
            _vmag_rect(prob, net, vr, vi)
        else:
            _w_block(prob, net, vr, vi, Wd, None, None, coupling=False)

    elif kind in (K.NIPAPV, K.NIRAPV):
        n_, k_ = net.y_row, net.y_col
        if kind is K.NIPAPV:
            mag, ang = net.y_abs, net.y_ang
            tp = [TrigTerms(n_, V[n_], V[k_], th[n_], th[k_], -mag, -ang, False),
                  QuadraticTerms(buses, V, -net.y_diag_abs * np.cos(-net.y_diag_ang))]
            tq = [TrigTerms(n_, V[n_], V[k_], th[n_], th[k_], -mag, -ang, True),
                  QuadraticTerms(buses, V, -net.y_diag_abs * np.sin(-net.y_diag_ang))]
        else:
            Gnk, Bnk = net.y_val.real, net.y_val.imag
            tp = [TrigTerms(n_, V[n_], V[k_], th[n_], th[k_], -Gnk, 0.0, False),
                  TrigTerms(n_, V[n_], V[k_], th[n_], th[k_], -Bnk, 0.0, True),
                  QuadraticTerms(buses, V, -net.y_diag.real)]
            tq = [TrigTerms(n_, V[n_], V[k_], th[n_], th[k_], -Gnk, 0.0, True),
                  TrigTerms(n_, V[n_], V[k_], th[n_], th[k_], Bnk, 0.0, False),
                  QuadraticTerms(buses, V, net.y_diag.imag)]
        _balance(prob, net, p, q, Kernel.TRIG_BILINEAR, tp + [shunt_p], tq + [shunt_q])
        _thermal_polar(prob, net, V, th)

    elif kind is K.NIRARV:
        n_, k_ = net.y_row, net.y_col
        Gnk, Bnk = net.y_val.real, net.y_val.imag
        Gd, Bd = net.y_diag.real, net.y_diag.imag
        tp = [BilinearTerms(n_, vr[n_], vr[k_], -Gnk), BilinearTerms(n_, vi[n_], vr[k_], -Bnk),
              BilinearTerms(n_, vi[n_], vi[k_], -Gnk), BilinearTerms(n_, vr[n_], vi[k_], Bnk),
              QuadraticTerms(buses, vr, -(Gd + net.gs)), QuadraticTerms(buses, vi, -(Gd + net.gs))]
        tq = [BilinearTerms(n_, vi[n_], vr[k_], -Gnk), BilinearTerms(n_, vr[n_], vr[k_], Bnk),
              BilinearTerms(n_, vr[n_], vi[k_], Gnk), BilinearTerms(n_, vi[n_], vi[k_], Bnk),
              QuadraticTerms(buses, vr, Bd + net.bs), QuadraticTerms(buses, vi, Bd + net.bs)]
        _balance(prob, net, p, q, Kernel.BILINEAR, tp, tq)
        lim = net.pairs[net.limited]
        rows = np.arange(len(lim))
        li, lj = i[lim], j[lim]
        cols = np.stack([vr[li], vi[li], vr[lj], vi[lj]], axis=1)
        w_re = np.stack([g[lim], -b[lim], G[lim], -B[lim]], axis=1)
        w_im = np.stack([b[lim], g[lim], B[lim], G[lim]], axis=1)
        prob.add_constraint_block("thermal", Kernel.SUM_OF_SQUARES, [
            SquareTerms(rows, cols, w_re), SquareTerms(rows, cols, w_im)],
            -np.inf, net.imax[lim] ** 2)
        _vmag_rect(prob, net, vr, vi)

    elif kind is K.NIRAW:
        Gd, Bd = net.y_diag.real, net.y_diag.imag
        tp = [LinearTerms(i, Wr_p, -G), LinearTerms(i, Wi_p, B * s),
              LinearTerms(buses, Wd, -(Gd + net.gs))]
        tq = [LinearTerms(i, Wi_p, G * s), LinearTerms(i, Wr_p, B),
              LinearTerms(buses, Wd, Bd + net.bs)]
        _balance(prob, net, p, q, Kernel.LINEAR, tp, tq)
        lim = net.pairs[net.limited]
        rows = np.arange(len(lim))
        gl, bl, Gl, Bl = g[lim], b[lim], G[lim], B[lim]
        prob.add_constraint_block("thermal", Kernel.LINEAR, [
            LinearTerms(rows, Wr_p[lim], 2.0 * (gl * Gl + bl * Bl)),
            LinearTerms(rows, Wi_p[lim], 2.0 * (bl * Gl - gl * Bl) * s[lim]),
            LinearTerms(rows, Wd[i[lim]], np.abs(net.y[lim]) ** 2),
            LinearTerms(rows, Wd[j[lim]], np.abs(net.Y[lim]) ** 2)],
            -np.inf, net.imax[lim] ** 2)
        _w_block(prob, net, vr, vi, Wd, Wr, Wi, coupling=True)

    return prob.finalize(), maps


def build_formulation(kind, case: NetworkCase, admittance: AdmittanceData | None = None,
                      box: bool = False) -> FormulationInstance:
    """Build ``kind`` over ``case`` as an :class:`NLPProblem`.

    With ``box=True`` the result is passed through :func:`apply_box_constraints`.
    """
    kind = FormulationKind(kind)
    if admittance is None:
        admittance = bus_admittance_matrix(case)
    net = _Net(case, admittance)
    prob, maps = _build(kind, net)
    inst = FormulationInstance(kind, case, admittance, prob, maps, net.limited.copy())
    return apply_box_constraints(inst) if box else inst


def apply_box_constraints(instance: FormulationInstance) -> FormulationInstance:
    """Add square bounds circumscribing the voltage, current and power discs.

    Bounds only, never rows. Kinds outside :data:`BOX_KINDS` are returned
    unchanged with a :class:`BoxNotApplicableWarning`.
    """
    if instance.kind not in BOX_KINDS:
        warnings.warn(f"box constraints do not apply to {instance.kind.value}",
                      BoxNotApplicableWarning, stacklevel=2)
        return instance
    net = _Net(instance.case, instance.admittance)
    lo = instance.problem.x_lower.copy()
    up = instance.problem.x_upper.copy()
    maps = instance.maps

    def clamp(idx, radius):
        lo[idx] = np.maximum(lo[idx], -radius)
        up[idx] = np.minimum(up[idx], radius)

    if "vr" in maps:
        clamp(maps["vr"], net.vmax)
        clamp(maps["vi"], net.vmax)
    lim = net.limited
    if "ir" in maps:
        clamp(maps["ir"][lim], net.imax[lim])
        clamp(maps["ii"][lim], net.imax[lim])
    if "P" in maps:
        radius = net.imax[lim] * net.vmax[net.i[lim]]
        clamp(maps["P"][lim], radius)
        clamp(maps["Q"][lim], radius)
    return replace(instance, problem=instance.problem.with_bounds(lo, up), box=True)


# ---------------------------------------------------------------------------
# points

def grid_state(instance: FormulationInstance, point) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Complex bus voltages and generator (p, q) encoded in a point."""
    x = point.x if isinstance(point, Point) else np.asarray(point, float)
    m = instance.maps
    if "V" in m:
        v = x[m["V"]] * np.exp(1j * x[m["theta"]])
    else:
        v = x[m["vr"]] + 1j * x[m["vi"]]
    return v, x[m["p"]].copy(), x[m["q"]].copy()


def point_from_state(instance: FormulationInstance, v, p, q) -> Point:
    """Point of ``instance`` holding voltages ``v`` and generation ``p``, ``q``.

    Every derived quantity (flows, currents, W products) is recomputed from
    its defining equation.
    """
    v = np.asarray(v, dtype=complex)
    m = instance.maps
    adm = instance.admittance
    x = np.zeros(instance.problem.n)
    x[m["p"]] = p
    x[m["q"]] = q
    if "V" in m:
        mag = np.abs(v)
        if np.any(mag == 0):
            raise ValueError("zero voltage magnitude: polar angle undefined")
        x[m["V"]] = mag
        x[m["theta"]] = np.angle(v)
    if "vr" in m:
        x[m["vr"]] = v.real
        x[m["vi"]] = v.imag
    if "Wd" in m:
        x[m["Wd"]] = np.abs(v) ** 2
    if "Wr" in m:
        w = np.conj(v[adm.from_idx]) * v[adm.to_idx]
        x[m["Wr"]] = w.real
        x[m["Wi"]] = w.imag
    vi_, vj_ = v[adm.pair_from], v[adm.pair_to]
    current = adm.pair_self * vi_ + adm.pair_mutual * vj_
    if "P" in m:
        s = vi_ * np.conj(current)
        x[m["P"]] = s.real
        x[m["Q"]] = s.imag
    if "ir" in m:
        x[m["ir"]] = current.real
        x[m["ii"]] = current.imag
    return Point(x)


def initial_point(instance: FormulationInstance) -> Point:
    """Flat start clipped into the variable bounds."""
    case = instance.case
    lo, up = instance.problem.x_lower, instance.problem.x_upper

    def mid(a, b):
        a, b = np.asarray(a, float), np.asarray(b, float)
        both = np.isfinite(a) & np.isfinite(b)
        out = np.where(both, 0.5 * (a + b), 0.0)
        return np.clip(out, a, b)

    p = mid([g.p_min for g in case.generators], [g.p_max for g in case.generators])
    q = mid([g.q_min for g in case.generators], [g.q_max for g in case.generators])
    pt = point_from_state(instance, np.ones(case.n_buses, dtype=complex), p, q)
    return Point(np.clip(pt.x, lo, up))


def map_solution(source: FormulationInstance, point, target) -> Point:
    """Translate a point of ``source`` into the variable space of ``target``.

    ``target`` is an instance or a kind; a kind is built over the same case
    with the same box setting.
    """
    if not isinstance(target, FormulationInstance):
        target = build_formulation(target, source.case, source.admittance, box=False)
        if source.box and target.kind in BOX_KINDS:
            target = apply_box_constraints(target)
    v, p, q = grid_state(source, point)
    return point_from_state(target, v, p, q)


def residuals(instance: FormulationInstance, point) -> ResidualReport:
    x = point.x if isinstance(point, Point) else np.asarray(point, float)
    prob = instance.problem
    c = prob.constraints(x)
    viol = np.maximum(0.0, np.maximum(prob.c_lower - c, c - prob.c_upper))
    per_block = {blk.name: float(viol[blk.rows].max(initial=0.0)) for blk in prob.blocks}
    bviol = np.maximum(0.0, np.maximum(prob.x_lower - x, x - prob.x_upper))
    return ResidualReport(float(viol.max(initial=0.0)), per_block, float(bviol.max(initial=0.0)))


def degrees_of_freedom(instance: FormulationInstance) -> int:
    """Free variables minus equality rows."""
    return instance.problem.degrees_of_freedom()


def is_degenerate(instance: FormulationInstance) -> bool:
    return degrees_of_freedom(instance) <= 0
