import json
import sys
from pathlib import Path

import pytest

from strategy_search.config import parse_config

CHILD = Path(__file__).parent / "helpers" / "child_trainer.py"


def make_config(dim=2, evaluator=None, **run):
    run = {"max_epoch": 30, "initial_jobs": 3, "workers": 1, "master_seed": 7, "clock": "logical", **run}
    return parse_config({
        "search_space": [{"name": f"x{i}", "min": 0.0, "max": 1.0} for i in range(dim)],
        "evaluator": evaluator or {"type": "sphere", "optimum": [0.3] * dim},
        "run": run,
    })


def child_command(mode):
    return f"{sys.executable} {CHILD} {mode} {{request}}"


def write_config(path, config):
    path.write_text(json.dumps(config.to_dict(), indent=2))
    return path


@pytest.fixture
def config_factory():
    return make_config


def pytest_terminal_summary(terminalreporter):
    module = sys.modules.get("test_acceptance")
    if not module or not module.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for row in sorted(module.RESULTS):
        terminalreporter.write_line(module.format_line(*row))
