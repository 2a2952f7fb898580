"""Online vs offline welfare across the p spectrum.

For a batch of random streams this script runs the online allocators,
solves the offline optimum, and prints the realized OPT/ALG ratio next to
the theoretical regime for that (n, p): 1/p for markedly positive p,
log n around the Nash point, n^{|p|/(|p|+1)} for moderately negative p,
and sqrt(n) at p <= -1 and the egalitarian limit.
"""

import numpy as np

from pmean_arena import PMeanParam, p_mean_welfare, random_instance, solve_opt
from pmean_arena.allocators import make_allocator, run_online
from pmean_arena.harness import regime_bound

n, m, trials = 12, 36, 5
p_grid = ["1", "0.5", "0.1", "nash", "-0.5", "-1", "-2", "-inf"]

print(f"n = {n}, m = {m}, {trials} random streams per p\n")
print(f"{'p':>6} {'algo':>10} {'ALG':>8} {'OPT':>8} {'ratio':>7} "
      f"{'regime':>18} {'bound':>8}")

for ptxt in p_grid:
    p = PMeanParam.parse(ptxt)
    algo = "pd_greedy" if (p.is_finite and p.p > 0) else "mixed"
    ratios = []
    for t in range(trials):
        inst = random_instance(n, m, seed=100 + t)
        allocator = make_allocator(algo, p=p)
        trace = run_online(allocator, inst)
        alg = p_mean_welfare(trace.final_utilities, p)
        opt = solve_opt(inst, p).opt_value
        ratios.append((alg, opt))
    alg = np.mean([a for a, _ in ratios])
    opt = np.mean([o for _, o in ratios])
    label, bound = regime_bound(n, p)
    print(f"{ptxt:>6} {algo:>10} {alg:>8.4f} {opt:>8.4f} {opt / alg:>7.3f} "
          f"{label:>18} {bound:>8.2f}")

print("\nThe online runs use the relaxed accounting (a V_a/n base credit), "
      "so the ratio can even dip below 1 at small n while the benchmark "
      "stays unrelaxed.")
print("Ratios stay far below the theoretical regime at this small n; the "
      "hardness constructions in demos/adversarial_hardness.py are what "
      "push them toward the bound.")
