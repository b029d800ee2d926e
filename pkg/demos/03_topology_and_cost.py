"""
Placement, chain order and the price of one exchange
====================================================

Workers are dropped uniformly in a square.  The chain is the shortest open
path through them; the FL server is the worker closest to everyone else.
Each exchange is priced with a free-space Shannon-rate link.
"""

import numpy as np

from lfgadmm.model import mlp_spec, param_counts
from lfgadmm.netcost import ChannelModel, CostScheme, aggregate_run_cost, scheme_log
from lfgadmm.topology import fl_server, min_path_order, path_length, place_workers

placement = place_workers(4, area_side=100.0, seed=3)
chain = min_path_order(placement)
print("positions (m):\n", np.round(placement.positions, 1))
print("chain order:", chain.order, "length %.1f m" % path_length(chain.order, placement.distances()))
print("groups along the chain:", [chain.groups[w].value for w in chain.order])
print("FL server:", fl_server(placement))

# Price the whole 500-iteration exchange pattern of each scheme on this placement
counts = param_counts(mlp_spec())
channel = ChannelModel()
for scheme in (CostScheme("1x", "lfgadmm", 1), CostScheme("2x", "lfgadmm", 2),
               CostScheme("4x", "lfgadmm", 4), CostScheme("FL", "fl")):
    log = scheme_log(scheme, placement, counts, base_period=5, total_iterations=500)
    cost = aggregate_run_cost(log, placement.positions, channel)
    print(f"{scheme.label:>3}: {log.total_elements():>12,d} elements  {cost.total_energy:9.1f} J")
