"""Benchmark every formulation and summarise the timings as a profile.

For each case, every solver's time is divided by the fastest time on
that case. A solver's profile value at ``tau`` is the share of cases it
solved within ``tau`` times the best. Reading off ``tau = 1`` tells how
often a solver was fastest; the value for large ``tau`` is its success
rate.

Run with ``python demos/03_performance_profile.py [out_dir]``. The
records and curves are also written as CSV and JSON.
"""
import sys
import warnings

from acopf.bench import BenchConfig, emit_report, performance_profile, profile_table, run_matrix

out_dir = sys.argv[1] if len(sys.argv) > 1 else "bench-out"
records = run_matrix(BenchConfig(("case9", "case14", "case30", "case57", "case118"),
                                 repeats=3, jobs=1))

with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    curves = performance_profile(records)
taus, table = profile_table(curves)

# Print the curves at a few fixed tau values rather than every breakpoint.
grid = [1.0, 1.25, 1.5, 2.0, 3.0, 5.0, 10.0]
print(f"{'solver':<8}" + "".join(f"{t:>7.2f}" for t in grid))
for name, curve in sorted(curves.items(), key=lambda kv: -kv[1](2.0)):
    print(f"{name:<8}" + "".join(f"{curve(t):>7.2f}" for t in grid))

for path in emit_report(records, out_dir, curves):
    print(f"wrote {path}")
