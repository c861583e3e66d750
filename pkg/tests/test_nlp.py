import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from acopf.formulations import FormulationKind, build_formulation
from acopf.nlp import (BilinearTerms, Kernel, LinearTerms, NLPProblem, QuadraticTerms,
                       SquareTerms, TrigTerms, check_derivatives, eval_constraints_jacobian,
                       eval_hessian_lagrangian, eval_objective_gradient)


def fd_jacobian(prob, x, h=1e-6):
    cols = []
    for k in range(prob.n):
        e = np.zeros(prob.n)
        e[k] = h
        cols.append((prob.constraints(x + e) - prob.constraints(x - e)) / (2 * h))
    return np.column_stack(cols)


def full_hessian(prob, x, obj_factor, lam):
    H = prob.hessian(x, obj_factor, lam).toarray()
    return H + np.tril(H, -1).T


def make_kernel_zoo():
    """One block per kernel family over four variables."""
    p = NLPProblem("zoo")
    x = p.add_variables("x", 4)
    p.add_constraint_block("lin", Kernel.LINEAR, [LinearTerms([0, 0], x[:2], [1.0, -2.0])], 0, 0)
    p.add_constraint_block("quad", Kernel.QUADRATIC, [QuadraticTerms([0], x[2], 3.0),
                                                     LinearTerms([0], x[3], 1.0)], -np.inf, 1)
    p.add_constraint_block("bil", Kernel.BILINEAR, [BilinearTerms([0], x[0], x[3], 1.5)], 0, 0)
    p.add_constraint_block("trig", Kernel.TRIG_BILINEAR, [
        TrigTerms([0, 0, 1], x[[0, 0, 1]], x[[1, 1, 2]], x[[2, 3, 2]], x[[3, 2, 3]],
                  [2.0, -1.0, 0.5], [0.1, -0.3, 0.0], [False, True, False])], [0, 0], [0, 0])
    p.add_constraint_block("sos", Kernel.SUM_OF_SQUARES, [
        SquareTerms([0], [[x[0], x[1], x[3]]], [[1.0, -2.0, 0.5]], 1.0, 0.2),
        QuadraticTerms([0], x[2], -1.0)], -np.inf, 0)
    p.set_objective(x[:2], [1.0, 2.0], [0.5, -1.0], [3.0, 1.0])
    return p.finalize()


@pytest.fixture
def kernel_zoo():
    return make_kernel_zoo()


class TestVariables:
    def test_bounded_handle(self):
        h = NLPProblem().add_variable("V_1", 0.9, 1.1)
        assert (h.index, h.lower, h.upper) == (0, 0.9, 1.1)

    def test_free_handle(self):
        h = NLPProblem().add_variable("theta_1")
        assert h.lower == -np.inf and h.upper == np.inf

    def test_indices_are_stable(self):
        p = NLPProblem()
        a = p.add_variable("pg", 0.1, 2.0)
        block = p.add_variables("v", 3)
        b = p.add_variable("q")
        assert a.index == 0 and list(block) == [1, 2, 3] and b.index == 4
        assert p.variable_name(2) == "v[1]" and p.variable_name(0) == "pg"

    def test_inverted_bounds(self):
        with pytest.raises(ValueError, match="exceeds"):
            NLPProblem().add_variable("x", 2.0, 1.0)


class TestConstraintBlocks:
    def test_linear_row(self):
        p = NLPProblem()
        pg, pd_, P12 = p.add_variables("x", 3)
        bid = p.add_constraint_block("bal", Kernel.LINEAR,
                                     [LinearTerms([0, 0, 0], [pg, pd_, P12], [1, -1, -1])], 0, 0)
        p.finalize()
        assert bid == 0 and p.m == 1
        assert p.constraints(np.array([3.0, 1.0, 2.0]))[0] == 0.0
        assert list(np.flatnonzero(p.equality_rows)) == [0]

    def test_unknown_handle(self):
        p = NLPProblem()
        p.add_variable("x")
        with pytest.raises(ValueError, match="unknown variable"):
            p.add_constraint_block("b", Kernel.LINEAR, [LinearTerms([0], [5], [1.0])], 0, 0)

    def test_unsupported_composition(self):
        p = NLPProblem()
        x = p.add_variables("x", 2)
        with pytest.raises(ValueError, match="not allowed"):
            p.add_constraint_block("b", Kernel.LINEAR, [BilinearTerms([0], x[0], x[1], 1.0)], 0, 0)

    def test_frozen_after_finalize(self):
        p = NLPProblem().finalize()
        with pytest.raises(RuntimeError):
            p.add_variable("late")

    def test_trig_at_zero_angle(self):
        p = NLPProblem()
        V1, V2, t1, t2 = p.add_variables("x", 4)
        p.add_constraint_block("t", Kernel.TRIG_BILINEAR, [
            TrigTerms([0, 1], [V1, V1], [V2, V2], [t1, t1], [t2, t2], [2.0, 2.0],
                      sine=[False, True])], [0, 0], [0, 0])
        p.finalize()
        c = p.constraints(np.array([1.0, 1.0, 0.3, 0.3]))
        np.testing.assert_allclose(c, [2.0, 0.0])

    def test_sum_of_squares_thermal_row(self):
        # P^2 + Q^2 - (I * V)^2 <= 0 with I = 2
        p = NLPProblem()
        P, Q, V = p.add_variables("x", 3)
        p.add_constraint_block("thermal", Kernel.SUM_OF_SQUARES, [
            QuadraticTerms([0, 0, 0], [P, Q, V], [1.0, 1.0, -4.0])], -np.inf, 0)
        p.finalize()
        assert p.constraints(np.array([1.2, 1.6, 1.0]))[0] == pytest.approx(0.0)
        assert p.constraints(np.array([1.2, 1.6, 1.1]))[0] < 0


class TestObjective:
    def test_single_generator(self):
        p = NLPProblem()
        g = p.add_variable("p")
        p.set_objective([g.index], 1.0, 2.0, 3.0)
        p.finalize()
        value, grad = eval_objective_gradient(p, np.array([2.0]))
        assert value == 11.0 and grad[0] == 6.0

    def test_zero_output_gives_constant_terms(self, kernel_zoo):
        value, _ = eval_objective_gradient(kernel_zoo, np.zeros(4))
        assert value == 4.0

    def test_gradient_only_on_objective_variables(self, kernel_zoo, rng):
        _, grad = eval_objective_gradient(kernel_zoo, rng.normal(size=4))
        assert np.all(grad[2:] == 0.0)

    def test_finite_difference_gradient(self, kernel_zoo, rng):
        x = rng.normal(size=4)
        _, grad = eval_objective_gradient(kernel_zoo, x)
        h = 1e-5
        fd = [(kernel_zoo.objective(x + h * e) - kernel_zoo.objective(x - h * e)) / (2 * h)
              for e in np.eye(4)]
        np.testing.assert_allclose(grad, fd, atol=1e-8)


class TestDerivatives:
    def test_lossless_flat_point_has_zero_flow(self, two_bus):
        for kind in (FormulationKind.BPFPV, FormulationKind.BPFRV):
            inst = build_formulation(kind, two_bus)
            x = np.zeros(inst.problem.n)
            if kind.polar:
                x[inst.maps["V"]] = 1.0
            else:
                x[inst.maps["vr"]] = 1.0
            c = inst.problem.constraints(x)
            np.testing.assert_allclose(c[inst.problem.block("flow_p").rows], 0.0, atol=1e-15)

    def test_jacobian_matches_fd(self, kernel_zoo, rng):
        x = rng.normal(size=4)
        _, J = eval_constraints_jacobian(kernel_zoo, x)
        np.testing.assert_allclose(J.toarray(), fd_jacobian(kernel_zoo, x), rtol=1e-6, atol=1e-7)

    def test_fixed_sparsity(self, kernel_zoo, rng):
        pattern = kernel_zoo.jacobian_structure()
        for _ in range(3):
            J = kernel_zoo.jacobian(rng.normal(size=4)).tocoo()
            assert J.nnz == len(pattern[0])
        assert kernel_zoo.jacobian(np.zeros(4)).nnz == len(pattern[0])

    def test_quadratic_objective_hessian(self):
        p = NLPProblem()
        x = p.add_variables("p", 2)
        p.set_objective(x, [1.5, 2.0], [0.0, 0.0])
        p.finalize()
        H = eval_hessian_lagrangian(p, np.ones(2), 3.0, np.zeros(0)).toarray()
        np.testing.assert_allclose(H, np.diag([9.0, 12.0]))

    def test_bilinear_hessian(self):
        p = NLPProblem()
        x = p.add_variables("x", 2)
        p.add_constraint_block("xy", Kernel.BILINEAR, [BilinearTerms([0], x[0], x[1], 1.0)], 0, 0)
        p.finalize()
        H = eval_hessian_lagrangian(p, np.array([0.3, -0.7]), 0.0, np.array([1.0])).toarray()
        np.testing.assert_allclose(H, [[0.0, 0.0], [1.0, 0.0]])

    def test_hessian_is_lower_triangular(self, kernel_zoo, rng):
        H = kernel_zoo.hessian(rng.normal(size=4), 1.0, rng.normal(size=kernel_zoo.m))
        assert np.all(H.row >= H.col)

    @settings(max_examples=25, deadline=None)
    @given(st.lists(st.floats(-2, 2), min_size=4, max_size=4),
           st.lists(st.floats(-3, 3), min_size=6, max_size=6), st.floats(0, 2))
    def test_hessian_matches_fd(self, x, lam, sigma):
        kernel_zoo = make_kernel_zoo()
        x, lam = np.array(x), np.array(lam)
        H = full_hessian(kernel_zoo, x, sigma, lam)
        h = 1e-6

        def grad(z):
            return sigma * kernel_zoo.objective_gradient(z) + kernel_zoo.jacobian(z).T @ lam

        fd = np.column_stack([(grad(x + h * e) - grad(x - h * e)) / (2 * h) for e in np.eye(4)])
        np.testing.assert_allclose(H, fd, rtol=1e-6, atol=1e-6)

    def test_check_derivatives_quadratic(self):
        p = NLPProblem()
        x = p.add_variables("x", 3)
        p.add_constraint_block("q", Kernel.QUADRATIC, [
            QuadraticTerms([0, 0], x[:2], [1.0, 2.0]), BilinearTerms([0], x[1], x[2], -1.0)], 0, 0)
        p.set_objective(x, [1.0, 1.0, 1.0], [0.0, 1.0, 2.0])
        p.finalize()
        report = check_derivatives(p, np.array([0.5, -1.0, 2.0]), epsilon=1e-4)
        assert report.max_error <= 1e-10

    def test_check_derivatives_flags_corruption(self, kernel_zoo, rng):
        x = rng.normal(size=4)
        assert check_derivatives(kernel_zoo, x).ok(1e-6)
        corrupted = kernel_zoo.jacobian

        def wrong(z):
            J = corrupted(z).tolil()
            J[0, 0] += 0.01
            return J.tocsr()

        kernel_zoo.jacobian = wrong
        report = check_derivatives(kernel_zoo, x)
        assert report.jacobian_error > 1e-3
        assert report.worst_jacobian_entry == (0, 0)

    def test_bpfpv_case9(self, case9, rng):
        inst = build_formulation(FormulationKind.BPFPV, case9)
        p = inst.problem
        lo = np.where(np.isfinite(p.x_lower), p.x_lower, -1.0)
        up = np.where(np.isfinite(p.x_upper), p.x_upper, 1.0)
        x = rng.uniform(lo, up)
        assert check_derivatives(p, x).max_error <= 1e-6


class TestProblemViews:
    def test_with_bounds_shares_structure(self, kernel_zoo):
        tight = kernel_zoo.with_bounds(-np.ones(4), np.ones(4))
        assert tight.m == kernel_zoo.m
        assert np.all(kernel_zoo.x_lower == -np.inf)
        np.testing.assert_array_equal(tight.x_upper, 1.0)

    def test_degrees_of_freedom(self, kernel_zoo):
        # equality rows: lin 1, bil 1, trig 2
        assert int(kernel_zoo.equality_rows.sum()) == 4
        assert kernel_zoo.degrees_of_freedom() == 0

    def test_nonlinear_rows(self, kernel_zoo):
        assert kernel_zoo.nonlinear_rows() == kernel_zoo.m - 1
