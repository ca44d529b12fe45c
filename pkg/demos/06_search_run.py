"""
A complete search run
=====================

Random trials seed the search, then each finished proposal updates the
controller and triggers the next proposal. The run directory holds the
config, a JSONL trial log and controller checkpoints; ``resume`` replays it.
"""

import tempfile
from pathlib import Path

from strategy_search import parse_config, report, resume, run_search
from strategy_search.orchestrator import SearchInterrupted

config = parse_config({
    "search_space": [{"name": f"x{i}", "min": 0.0, "max": 1.0} for i in range(6)],
    "controller": {"learning_rate": 0.03, "use_reward_baseline": True},
    "evaluator": {"type": "sim_trainer", "fixture": "d6", "noise": 0.02},
    "run": {"max_epoch": 120, "initial_jobs": 8, "workers": 2, "master_seed": 1},
})

out = Path(tempfile.mkdtemp()) / "run"
try:
    run_search(config, out, stop_after=40)  # pretend the machine went down
except SearchInterrupted as exc:
    print("interrupted:", exc)

run = resume(out)
print(f"finished {run.epoch} trials, best reward {run.best_reward:.4f}")
print("files:", sorted(p.name for p in out.iterdir()), len(run.checkpoints), "checkpoints")

text = report(out)
print("\n".join(text.splitlines()[:12]))
