"""
Hill-climbing baselines
=======================

Discrete mode walks the 0.01 grid; continuous mode adapts a per-coordinate
step by a factor of 1.1. Both start at 0.5.
"""

import numpy as np

from strategy_search.baselines import HillClimbConfig, hill_climb
from strategy_search.objectives import load_sim_trainer
from strategy_search.search_space import StrategyVector

sim = load_sim_trainer("d2", noise=0.0)


def objective(x):
    return sim.reward(x.values, 0)


start = StrategyVector([0.5, 0.5])
for mode in ("discrete", "continuous"):
    res = hill_climb(objective, start, HillClimbConfig(mode=mode))
    print(f"{mode:10s} best={np.round(res.best.values, 4)} value={res.best_value:.4f} "
          f"evals={res.evals} moves={res.moves}")

# the d2 fixture ships with its brute-force grid optimum
print("grid optimum: [0.62, 0.27] value", round(objective(StrategyVector([0.62, 0.27])), 4))
