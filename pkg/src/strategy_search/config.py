"""Run configuration: parsing, defaults and validation of the JSON config file."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Optional

from .controller import ControllerConfig
from .search_space import SearchSpace

SECTIONS = ("search_space", "controller", "evaluator", "run")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunSettings:
    """
    Attributes:
        max_epoch: Completed trials to collect before stopping
        initial_jobs: Randomly initialized trials launched up front
        workers: Maximum trials evaluated concurrently
        master_seed: Root of every derived seed
        checkpoint_every: Controller checkpoint cadence in completed trials
        max_failures: Abort once this many trials have failed
        clock: "wall" stamps events with real time; "logical" uses the
            event sequence number so logs are byte-reproducible
    """

    max_epoch: int = 1000
    initial_jobs: int = 8
    workers: int = 1
    master_seed: int = 0
    checkpoint_every: int = 10
    max_failures: int = 100
    clock: str = "wall"

    def __post_init__(self):
        if self.workers < 1:
            raise ConfigError("run.workers must be >= 1")
        if self.initial_jobs < 1:
            raise ConfigError("run.initial_jobs must be >= 1")
        if self.max_epoch < self.initial_jobs:
            raise ConfigError("run.max_epoch must be >= run.initial_jobs")
        if self.checkpoint_every < 1:
            raise ConfigError("run.checkpoint_every must be >= 1")
        if self.max_failures < 1:
            raise ConfigError("run.max_failures must be >= 1")
        if self.master_seed < 0:
            raise ConfigError("run.master_seed must be non-negative")
        if self.clock not in ("wall", "logical"):
            raise ConfigError("run.clock must be 'wall' or 'logical'")


@dataclass(frozen=True)
class RunConfig:
    search_space: SearchSpace
    controller: ControllerConfig
    evaluator: dict
    run: RunSettings = field(default_factory=RunSettings)

    def to_dict(self) -> dict:
        ctrl = asdict(self.controller)
        ctrl.pop("dim")
        return {
            "search_space": self.search_space.to_list(),
            "controller": ctrl,
            "evaluator": dict(self.evaluator),
            "run": asdict(self.run),
        }

    def replace_run(self, **changes) -> "RunConfig":
        run = asdict(self.run)
        run.update({k: v for k, v in changes.items() if v is not None})
        return RunConfig(self.search_space, self.controller, self.evaluator, RunSettings(**run))


def _known(cls, section: str, data: dict, exclude=()) -> dict:
    names = {f.name for f in fields(cls)} - set(exclude)
    unknown = set(data) - names
    if unknown:
        raise ConfigError(f"unknown keys in '{section}': {sorted(unknown)}")
    return data


def parse_config(data: dict) -> RunConfig:
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - set(SECTIONS)
    if unknown:
        raise ConfigError(f"unknown config sections: {sorted(unknown)}")
    for required in ("search_space", "evaluator"):
        if required not in data:
            raise ConfigError(f"config is missing the '{required}' section")
    try:
        space = SearchSpace.from_list(data["search_space"])
        ctrl = _known(ControllerConfig, "controller", data.get("controller", {}), exclude=("dim",))
        controller = ControllerConfig(dim=space.dim, **ctrl)
        run = RunSettings(**_known(RunSettings, "run", data.get("run", {})))
    except ConfigError:
        raise
    except (TypeError, ValueError, KeyError) as exc:
        raise ConfigError(str(exc)) from exc
    evaluator = data["evaluator"]
    if not isinstance(evaluator, dict) or "type" not in evaluator:
        raise ConfigError("evaluator section must be an object with a 'type'")
    config = RunConfig(space, controller, dict(evaluator), run)
    # surface evaluator-specific errors at load time
    from .objectives import build_evaluator

    try:
        build_evaluator(config.evaluator, space)
    except Exception as exc:
        raise ConfigError(f"evaluator: {exc}") from exc
    return config


def load_config(path, overrides: Optional[dict] = None) -> RunConfig:
    path = Path(path)
    try:
        data = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    config = parse_config(data)
    if overrides:
        try:
            config = config.replace_run(**overrides)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
    return config
