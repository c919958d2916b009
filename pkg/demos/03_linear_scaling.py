"""Time and memory of the linear-time solver as n doubles.

With factored costs every step costs O((n + m) r d) and no buffer grows
like n^2.  The allocation scope records the largest buffer any step needed;
it should grow linearly, far below n^2.

Run:  python demos/03_linear_scaling.py
"""

import time

from lowrank_gw import DatasetSpec, GwLrConfig, generate, normalize_costs, solve_gw_lr_linear, squared_euclidean_factors
from lowrank_gw.oracles import allocation_scope
from lowrank_gw.sinkhorn import uniform

print(f"{'n':>6} {'seconds':>8} {'peak elements':>14} {'n^2':>12}")
for n in (1000, 2000, 4000, 8000):
    X = generate(DatasetSpec("unit_square", n, seed=0))
    Y = generate(DatasetSpec("unit_square", n, seed=1))
    A, B, _ = normalize_costs(squared_euclidean_factors(X), squared_euclidean_factors(Y))
    a = uniform(n)
    start = time.monotonic()
    with allocation_scope(threshold=n * n) as stats:
        solve_gw_lr_linear(A, B, a, a, GwLrConfig(rank=10, outer_iter=20))
    print(f"{n:>6} {time.monotonic() - start:>8.2f} {stats.peak_buffer_elements:>14} {n * n:>12}")
