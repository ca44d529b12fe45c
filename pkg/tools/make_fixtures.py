"""Regenerate the committed fixtures under src/strategy_search/data/.

sim_trainer constants are hand-picked; the d2 grid optimum is found by
brute force over the 101 x 101 grid and stored next to them.
"""

import itertools
import json
from pathlib import Path

import numpy as np

from strategy_search.objectives import SimTrainer, write_toy_fixture

DATA = Path(__file__).resolve().parents[1] / "src" / "strategy_search" / "data"

FIXTURES = {
    "d2": {
        "base": 0.3,
        "weights": [0.35, 0.25],
        "centers": [0.62, 0.27],
        "widths": [0.18, 0.12],
        "interactions": [[0, 1, 0.08]],
        "noise": 0.0,
    },
    # sharpen, smooth, gaussian_noise, contrast, intensity_shift, learning_rate
    "d6": {
        "base": 0.25,
        "weights": [0.12, 0.1, 0.08, 0.1, 0.07, 0.13],
        "centers": [0.78, 0.22, 0.64, 0.35, 0.85, 0.3],
        "widths": [0.15, 0.2, 0.12, 0.18, 0.22, 0.1],
        "interactions": [[0, 1, 0.05], [2, 5, 0.04], [3, 4, 0.03]],
        "noise": 0.0,
    },
}


def grid_optimum(sim: SimTrainer, resolution: int = 100):
    best_x, best_v = None, -np.inf
    ticks = [i / resolution for i in range(resolution + 1)]
    for x in itertools.product(ticks, repeat=sim.dim):
        v = sim.mean_reward(np.array(x))
        if v > best_v:
            best_x, best_v = list(x), v
    return best_x, best_v


def main():
    out = {}
    for name, f in FIXTURES.items():
        entry = dict(f)
        if name == "d2":
            sim = SimTrainer(f["base"], tuple(f["weights"]), tuple(f["centers"]), tuple(f["widths"]),
                             tuple(tuple(t) for t in f["interactions"]))
            x, v = grid_optimum(sim)
            entry["grid_optimum"] = {"resolution": 0.01, "point": x, "value": v}
        out[name] = entry
    DATA.mkdir(parents=True, exist_ok=True)
    (DATA / "sim_trainer.json").write_text(json.dumps(out, indent=2) + "\n")
    write_toy_fixture(DATA / "toy")


if __name__ == "__main__":
    main()
