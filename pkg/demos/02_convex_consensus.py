"""
Chain ADMM on least squares
===========================

Four workers each hold a quarter of a linear regression problem.  With the
exact local solver and an exchange every iteration the chain reaches the
centralised normal-equations solution.
"""

import numpy as np

from lfgadmm.admm import AdmmConfig, consensus_residual, make_chain_workers, run_iteration
from lfgadmm.data import BatchSampler, split_even, synth_regression
from lfgadmm.model import init_params, linear_spec, param_counts
from lfgadmm.schedule import CommSchedule
from lfgadmm.topology import ChainOrder

data, w_true = synth_regression(1000, 10, noise_std=0.1, seed=0)
parts = split_even(data, 4)
spec = linear_spec(10)

# Centralised answer, bias as the last coordinate
x = np.hstack([data.inputs, np.ones((len(data), 1))])
target = np.linalg.solve(x.T @ x, x.T @ data.labels)

workers = make_chain_workers(ChainOrder.from_order(range(4)), init_params(spec, 0, "zeros"))
samplers = {i: BatchSampler(p, len(p), seed=i) for i, p in enumerate(parts)}
schedule = CommSchedule.for_model(param_counts(spec), base_period=1, beta=1, total_iterations=60)
config = AdmmConfig(rho=1.0, solver="exact")

for k in range(1, 61):
    run_iteration(workers, k, schedule, config, samplers, spec)
    if k % 10 == 0:
        err = max(np.linalg.norm(w.params[0] - target) / np.linalg.norm(target) for w in workers)
        print(f"k={k:3d}  residual={consensus_residual(workers):.2e}  worst rel. error={err:.2e}")
