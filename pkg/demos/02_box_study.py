"""Add redundant box bounds and watch what they do to the solver.

Five formulations carry variables confined to a disc (a voltage
magnitude, a branch current, ...). Bounding each coordinate by the disc
radius removes no feasible point, so the optimum cannot move. It may
still change the path the interior-point method takes to get there.

Run with ``python demos/02_box_study.py``.
"""
from acopf.bench import BenchConfig, compare_box, run_matrix
from acopf.formulations import BOX_KINDS

config = BenchConfig(("case9", "case14", "case30", "case57"), tuple(sorted(BOX_KINDS)),
                     box_study=True, repeats=1)
records = run_matrix(config)

print(f"{'case':>7} {'kind':<7} {'iters off':>9} {'iters on':>9} {'ratio':>6} "
      f"{'objective change':>17}")
for row in compare_box(records):
    flag = "  status changed" if row.status_changed else ""
    print(f"{row.case:>7} {row.kind:<7} {row.iterations_off:>9} {row.iterations_on:>9} "
          f"{row.iteration_ratio:>6.2f} {row.objective_change:>17.2e}{flag}")

# A ratio below one means the bounds saved iterations. On networks this
# small they as often cost a few iterations as save them. The objective
# column stays at rounding level because the box never cuts into the
# feasible set.
