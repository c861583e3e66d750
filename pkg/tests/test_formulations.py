import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acopf.case_io import BUILTIN_CASES, Branch, load_case
from acopf.formulations import (BOX_KINDS, BoxNotApplicableWarning, FormulationKind,
                                apply_box_constraints, build_formulation, degrees_of_freedom,
                                grid_state, initial_point, is_degenerate, map_solution,
                                nonlinear_constraint_count, point_from_state, residuals)
from acopf.nlp import Point

K = FormulationKind
DEFINITION_BLOCKS = {"flow_p", "flow_q", "current_r", "current_i", "wd_def", "wr_def",
                     "wi_def", "w_coupling"}
# Nonlinear rows per (bus, branch) as built; identical to the reference
# formulas for every kind except BCFW (see test_acceptance criterion 2).
BUILT = {K.BPFPV: (2, 6), K.BPFRV: (4, 6), K.BPFW: (1, 6), K.BCFRV: (4, 2), K.BCFW: (3, 2),
         K.NIPAPV: (2, 2), K.NIRAPV: (2, 2), K.NIRARV: (4, 2), K.NIRAW: (1, 4)}


def random_state(case, rng, spread=0.3):
    nb, ng = case.n_buses, case.n_generators
    v = rng.uniform(0.9, 1.1, nb) * np.exp(1j * rng.uniform(-spread, spread, nb))
    return v, rng.uniform(0, 2, ng), rng.uniform(-1, 1, ng)


class TestCounts:
    def test_bpfpv_case9_variables(self, case9):
        inst = build_formulation(K.BPFPV, case9)
        assert inst.problem.n == 9 + 9 + 3 + 3 + 18 + 18 == 60

    @pytest.mark.parametrize("kind, n, k, expected", [
        (K.BPFPV, 500, 594, 4564),
        (K.BPFPV, 9, 9, 72),
        (K.NIPAPV, 9, 9, 36),
        (K.NIRAW, 9, 9, 45),
        (K.BCFRV, 1, 0, 4),
        (K.BPFRV, 2, 3, 26),
        (K.BPFW, 3, 1, 9),
        (K.BCFW, 1, 1, 9),
        (K.NIRAPV, 4, 5, 18),
        (K.NIRARV, 0, 0, 0),
    ])
    def test_formula(self, kind, n, k, expected):
        assert nonlinear_constraint_count(kind, n, k) == expected

    def test_formula_discounts_unlimited_branches(self):
        assert nonlinear_constraint_count(K.BPFPV, 9, 9, n_limited=7) == 72 - 2 * 2
        assert nonlinear_constraint_count(K.NIRAW, 9, 9, n_limited=0) == 45

    @pytest.mark.parametrize("name", BUILTIN_CASES)
    @pytest.mark.parametrize("kind", list(K))
    def test_built_rows(self, name, kind):
        case = load_case(name)
        inst = build_formulation(kind, case)
        a_n, a_k = BUILT[kind]
        assert inst.nonlinear_rows() == a_n * case.n_buses + a_k * case.n_branches
        if kind is not K.BCFW:
            assert inst.nonlinear_rows() == inst.expected_nonlinear_rows()

    def test_unlimited_branch_has_no_thermal_rows(self, two_bus):
        for kind in K:
            inst = build_formulation(kind, two_bus)
            names = {b.name for b in inst.problem.blocks}
            assert "thermal" not in names or inst.problem.block("thermal").size == 0

    def test_both_orientations_defined(self, case9):
        inst = build_formulation(K.BPFPV, case9)
        assert inst.problem.block("flow_p").size == 18
        assert inst.problem.block("thermal").size == 18

    def test_kind_vocabulary(self):
        assert [k.value for k in K] == ["BPFPV", "BPFRV", "BPFW", "BCFRV", "BCFW",
                                        "NIPAPV", "NIRAPV", "NIRARV", "NIRAW"]


class TestDegeneracy:
    @pytest.mark.parametrize("name", BUILTIN_CASES)
    def test_full_w_models_flagged(self, name):
        case = load_case(name)
        for kind in (K.BPFW, K.NIRAW):
            inst = build_formulation(kind, case)
            assert degrees_of_freedom(inst) <= 0 and is_degenerate(inst)

    @pytest.mark.parametrize("kind", [k for k in K if k not in (K.BPFW, K.NIRAW)])
    def test_others_not_flagged(self, case9, kind):
        assert degrees_of_freedom(build_formulation(kind, case9)) > 0

    def test_nipapv_case9_value(self, case9):
        # 9 V + 8 free angles + 6 generator variables minus 18 balance rows
        assert degrees_of_freedom(build_formulation(K.NIPAPV, case9)) == 9 + 8 + 6 - 18


class TestBox:
    def test_current_square(self, two_bus):
        limited = two_bus.__class__(two_bus.base_mva, two_bus.buses, two_bus.generators,
                                    two_bus.loads, (Branch(1, 2, 0.0, 0.1, i_max=2.0),))
        inst = build_formulation(K.BCFRV, limited, box=True)
        for key in ("ir", "ii"):
            idx = inst.maps[key]
            np.testing.assert_array_equal(inst.problem.x_lower[idx], -2.0)
            np.testing.assert_array_equal(inst.problem.x_upper[idx], 2.0)

    def test_voltage_square(self, two_bus):
        inst = apply_box_constraints(build_formulation(K.BPFRV, two_bus))
        lo, up = inst.problem.x_lower, inst.problem.x_upper
        vr, vi = inst.maps["vr"], inst.maps["vi"]
        np.testing.assert_array_equal(up[vr], 1.1)
        np.testing.assert_array_equal(lo[vr], -1.1)
        # the reference bus keeps its imaginary part fixed at zero
        assert (lo[vi[0]], up[vi[0]], lo[vi[1]], up[vi[1]]) == (0.0, 0.0, -1.1, 1.1)
        assert inst.box

    def test_power_square(self, case9):
        inst = build_formulation(K.BPFPV, case9, box=True)
        P = inst.maps["P"]
        i_max = np.array([b.i_max for b in case9.branches] * 2)
        vmax = np.array([b.v_max for b in case9.buses])[inst.admittance.pair_from]
        np.testing.assert_allclose(inst.problem.x_upper[P], i_max * vmax)

    def test_no_new_rows(self, case9):
        for kind in BOX_KINDS:
            plain, boxed = build_formulation(kind, case9), build_formulation(kind, case9, box=True)
            assert boxed.problem.m == plain.problem.m
            assert boxed.problem.n == plain.problem.n

    @pytest.mark.parametrize("kind", sorted(set(K) - BOX_KINDS))
    def test_other_kinds_warn(self, case9, kind):
        inst = build_formulation(kind, case9)
        with pytest.warns(BoxNotApplicableWarning):
            same = apply_box_constraints(inst)
        assert same is inst and not same.box

    @settings(max_examples=40, deadline=None)
    @given(phase=st.floats(-np.pi, np.pi), kind=st.sampled_from(sorted(BOX_KINDS)))
    def test_disc_boundary_inside_square(self, phase, kind):
        case = load_case("case9")
        inst = build_formulation(kind, case, box=True)
        lo, up = inst.problem.x_lower, inst.problem.x_upper
        on_circle = np.exp(1j * phase)
        vmax = np.array([b.v_max for b in case.buses])
        i_max = np.array([b.i_max for b in case.branches] * 2)
        pairs = [("vr", "vi", vmax)] if "vr" in inst.maps else []
        if "ir" in inst.maps:
            pairs.append(("ir", "ii", i_max))
        if "P" in inst.maps:
            pairs.append(("P", "Q", i_max * vmax[inst.admittance.pair_from]))
        for re_key, im_key, radius in pairs:
            z = radius * on_circle
            for key, val in ((re_key, z.real), (im_key, z.imag)):
                idx = inst.maps[key]
                free = lo[idx] < up[idx]
                idx, val = idx[free], val[free]
                assert np.all(lo[idx] <= val + 1e-15) and np.all(val <= up[idx] + 1e-15)

    @pytest.mark.parametrize("kind", sorted(BOX_KINDS))
    def test_optimum_satisfies_box(self, solved, kind):
        inst, res = solved("case9", kind)
        boxed = apply_box_constraints(inst)
        assert residuals(boxed, res.x).bound_violation == 0.0


class TestPoints:
    def test_flat_polar_to_rect(self, case9):
        src = build_formulation(K.NIPAPV, case9)
        pt = initial_point(src)
        out = map_solution(src, pt, K.NIRARV)
        tgt = build_formulation(K.NIRARV, case9)
        np.testing.assert_allclose(out.x[tgt.maps["vr"]], 1.0)
        np.testing.assert_allclose(out.x[tgt.maps["vi"]], 0.0)

    def test_flat_w_values(self, case9):
        inst = build_formulation(K.BPFW, case9)
        pt = point_from_state(inst, np.ones(9, complex), np.zeros(3), np.zeros(3))
        np.testing.assert_allclose(pt.x[inst.maps["Wd"]], 1.0)
        np.testing.assert_allclose(pt.x[inst.maps["Wr"]], 1.0)
        np.testing.assert_allclose(pt.x[inst.maps["Wi"]], 0.0)

    def test_w_products(self, case9, rng):
        inst = build_formulation(K.NIRAW, case9)
        v, p, q = random_state(case9, rng)
        x = point_from_state(inst, v, p, q).x
        f, t = inst.admittance.from_idx, inst.admittance.to_idx
        Vf, Vt, df = np.abs(v[f]), np.abs(v[t]), np.angle(v[f]) - np.angle(v[t])
        np.testing.assert_allclose(x[inst.maps["Wr"]], Vf * Vt * np.cos(df), atol=1e-14)
        np.testing.assert_allclose(x[inst.maps["Wi"]], -Vf * Vt * np.sin(df), atol=1e-14)

    def test_zero_voltage_polar_rejected(self, case9):
        src = build_formulation(K.NIRARV, case9)
        x = np.zeros(src.problem.n)
        with pytest.raises(ValueError, match="zero voltage"):
            map_solution(src, Point(x), K.NIPAPV)

    @pytest.mark.parametrize("kind", list(K))
    def test_initial_point_within_bounds(self, case9, kind):
        inst = build_formulation(kind, case9)
        x = initial_point(inst).x
        assert residuals(inst, x).bound_violation == 0.0

    @pytest.mark.parametrize("kind", [K.BPFPV, K.NIPAPV, K.NIRAPV])
    def test_reference_angle_fixed(self, case9, kind):
        inst = build_formulation(kind, case9)
        ref = inst.maps["theta"][case9.slack_positions()[0]]
        assert inst.problem.x_lower[ref] == inst.problem.x_upper[ref] == 0.0
        assert initial_point(inst).x[ref] == 0.0

    def test_lossless_flat_start_flows_zero(self, two_bus):
        for kind in (K.BPFPV, K.BPFRV, K.BPFW):
            inst = build_formulation(kind, two_bus)
            x = initial_point(inst).x
            np.testing.assert_allclose(x[inst.maps["P"]], 0.0, atol=1e-15)
            np.testing.assert_allclose(x[inst.maps["Q"]], 0.0, atol=1e-15)

    def test_grid_state_round_trip(self, case9, rng):
        v, p, q = random_state(case9, rng)
        for kind in K:
            inst = build_formulation(kind, case9)
            v2, p2, q2 = grid_state(inst, point_from_state(inst, v, p, q))
            np.testing.assert_allclose(v2, v, atol=1e-14)
            np.testing.assert_array_equal(p2, p)


class TestResiduals:
    def test_flat_start_zero_generation_real_balance(self, case9):
        # With no generation every bus real mismatch is its own load, since
        # flat voltages carry no real flow on tap-free lines without shunts.
        pd, _ = case9.bus_loads()
        for kind in K:
            inst = build_formulation(kind, case9)
            pt = point_from_state(inst, np.ones(9, complex), np.zeros(3), np.zeros(3))
            rep = residuals(inst, pt)
            assert rep.per_block["balance_p"] == pytest.approx(pd.max(), abs=1e-12)

    def test_flat_start_mismatch_matches_injection(self, case9):
        pd, _ = case9.bus_loads()
        idx = case9.bus_index()
        inject = -pd.copy()
        for g in case9.generators:
            inject[idx[g.bus]] += 0.5 * (g.p_min + g.p_max)
        inst = build_formulation(K.NIPAPV, case9)
        assert residuals(inst, initial_point(inst)).per_block["balance_p"] == \
            pytest.approx(np.abs(inject).max(), abs=1e-12)

    def test_definitions_hold_at_any_state(self, case9, rng):
        v, p, q = random_state(case9, rng)
        for kind in K:
            inst = build_formulation(kind, case9)
            rep = residuals(inst, point_from_state(inst, v, p, q))
            for name, viol in rep.per_block.items():
                if name in DEFINITION_BLOCKS:
                    assert viol <= 1e-12, (kind, name)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**32 - 1))
    def test_balance_mismatch_is_formulation_independent(self, seed):
        case = load_case("case9")
        v, p, q = random_state(case, np.random.default_rng(seed))
        seen = {}
        for kind in K:
            inst = build_formulation(kind, case)
            x = point_from_state(inst, v, p, q).x
            c = inst.problem.constraints(x)
            lo = inst.problem.c_lower
            for name in ("balance_p", "balance_q"):
                rows = inst.problem.block(name).rows
                seen.setdefault(name, []).append(np.abs(c[rows] - lo[rows]))
        for name, vals in seen.items():
            for other in vals[1:]:
                np.testing.assert_allclose(other, vals[0], atol=1e-10)

    def test_solved_point_feasible(self, solved):
        inst, res = solved("case9", K.NIPAPV)
        rep = residuals(inst, res.x)
        assert rep.worst <= 1e-6


class TestMapping:
    @pytest.mark.parametrize("kind", [k for k in K if k is not K.NIPAPV])
    def test_optimum_maps_feasibly(self, solved, kind):
        src, res = solved("case9", K.NIPAPV)
        pt = map_solution(src, res.point, kind)
        tgt = build_formulation(kind, src.case)
        assert residuals(tgt, pt).worst <= 1e-6
        assert tgt.problem.objective(pt.x) == src.problem.objective(res.x)

    def test_round_trip(self, solved):
        src, res = solved("case9", K.BPFRV)
        there = map_solution(src, res.point, K.NIPAPV)
        back = map_solution(build_formulation(K.NIPAPV, src.case), there, src)
        np.testing.assert_allclose(back.x, res.x, atol=1e-12)

    def test_box_setting_carried(self, solved):
        src, res = solved("case9", K.BCFRV, True)
        out = map_solution(src, res.point, K.BPFRV)
        assert residuals(build_formulation(K.BPFRV, src.case, box=True), out).worst <= 1e-6

    def test_branch_losses_nonnegative(self, solved):
        inst, res = solved("case30", K.BPFPV)
        P = res.x[inst.maps["P"]]
        nl = inst.case.n_branches
        losses = P[:nl] + P[nl:]
        resistive = np.array([b.r > 0 for b in inst.case.branches])
        assert np.all(losses[resistive] >= -1e-9)
        np.testing.assert_allclose(losses[~resistive], 0.0, atol=1e-9)
