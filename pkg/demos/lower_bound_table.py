"""Median final gap of the two-group quadratic construction over (E, S).

Run with ``python demos/lower_bound_table.py``.
"""
from distdpo.lowerbound import QuadraticInstance, log_slope, median_table, run_lowerbound_sweep

inst = QuadraticInstance(n_clients=8, alpha=1.0, noise_std=0.5)
E_grid, S_grid = (1, 2, 4), (1, 2, 4, 8)
table = median_table(run_lowerbound_sweep(inst, E_grid, S_grid, seeds=range(1, 6)))

print("E \\ S " + "".join(f"{S:>11d}" for S in S_grid))
for E in E_grid:
    print(f"{E:5d} " + "".join(f"{table[(E, S)]:11.3e}" for S in S_grid))
print(f"slope of log gap against log(E/S): {log_slope(table):.3f}")
