"""
Distribution of total communication energy
==========================================

Repeat the random placement many times and look at the empirical CCDF,
P(E > x), of each scheme's total energy over a full 500-iteration run.
"""

import numpy as np

from lfgadmm.netcost import ccdf_experiment

result = ccdf_experiment(n_runs=200, seed=0)

for label, stats in result.summary().items():
    print(f"{label:<13} mean {stats['mean']:9.1f} J   var {stats['variance']:12.1f}")

# A few points of each CCDF, read at shared energy levels
levels = [1e3, 3e3, 1e4, 3e4]
for label in result.energies:
    e = result.energies[label]
    print(label.ljust(13), "  ".join(f"P(E>{x:g})={np.mean(e > x):.2f}" for x in levels))
