"""Follow the interior-point method through one solve.

The log records, per iteration, the barrier parameter, the three scaled
KKT residuals and the step lengths. Early iterations take short steps
while the iterate is far from feasible; once the Newton model is good
the steps reach one and the residuals fall fast.

Run with ``python demos/04_inside_the_solver.py [kind]`` (default BPFPV).
"""
import sys

from acopf import FormulationKind, SolverOptions, build_formulation, initial_point, load_case, solve
from acopf.ipm import assemble_kkt, factorize_with_inertia

kind = FormulationKind(sys.argv[1].upper() if len(sys.argv) > 1 else "BPFPV")
inst = build_formulation(kind, load_case("case9"))
start = initial_point(inst)

# The Newton system at the start point. A descent step needs exactly as
# many positive eigenvalues as there are primal unknowns.
kkt = assemble_kkt(inst.problem, start)
_, inertia = factorize_with_inertia(kkt)
print(f"KKT matrix {kkt.matrix.shape[0]}x{kkt.matrix.shape[0]}, "
      f"inertia {tuple(inertia)}, wanted ({kkt.n_primal}, {kkt.n_dual}, 0)\n")

res = solve(inst.problem, SolverOptions(tol=1e-8), start)
print(f"{'it':>3} {'mu':>9} {'objective':>13} {'stat':>9} {'feas':>9} {'compl':>9} "
      f"{'a_p':>6} {'a_d':>6} {'shift':>8}")
for r in res.log:
    print(f"{r.iteration:>3} {r.mu:>9.2e} {r.objective:>13.4f} {r.stationarity:>9.2e} "
          f"{r.feasibility:>9.2e} {r.complementarity:>9.2e} {r.alpha_primal:>6.3f} "
          f"{r.alpha_dual:>6.3f} {r.delta_primal:>8.1e}")
print(f"\n{res.status.value} after {res.iterations} iterations, objective {res.objective:.6f}")
