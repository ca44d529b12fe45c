"""
Greedy hill-climbing baselines over the normalized box.

Discrete mode walks a regular grid (integer indices, ``grid_dim`` steps per
axis) with best-improvement moves. Continuous mode cycles through the
coordinates with a signed per-coordinate step that grows by ``growth`` on
success and shrinks by it on failure. Failures in a row alternate between
reversing the direction and keeping it.

Both maximize the objective and cache evaluations by exact strategy value.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .search_space import StrategyVector

Objective = Callable[[StrategyVector], float]
TraceSink = Callable[[StrategyVector, float], None]


class Mode(str, enum.Enum):
    DISCRETE = "discrete"
    CONTINUOUS = "continuous"


class ObjectiveError(RuntimeError):
    """The objective raised or returned a non-finite value at ``strategy``."""

    def __init__(self, strategy: StrategyVector, message: str):
        super().__init__(f"{message} at {strategy.tolist()}")
        self.strategy = strategy


@dataclass(frozen=True)
class HillClimbConfig:
    mode: Mode = Mode.DISCRETE
    grid_dim: int = 100
    step: float = 0.01
    growth: float = 1.1
    min_step: float = 1e-4
    max_evals: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "mode", Mode(self.mode))
        if self.grid_dim < 1 or self.max_evals < 1:
            raise ValueError("grid_dim and max_evals must be positive")
        if not self.step > 0 or not self.min_step > 0:
            raise ValueError("step and min_step must be positive")
        if not self.growth > 1:
            raise ValueError("growth must exceed 1")
        if self.mode is Mode.DISCRETE and not math.isclose(self.step * self.grid_dim, 1.0):
            raise ValueError("discrete mode requires step == 1 / grid_dim")


@dataclass(frozen=True)
class HillClimbResult:
    best: StrategyVector
    best_value: float
    evals: int
    moves: int


class _CachedObjective:
    def __init__(self, objective: Objective, trace: Optional[TraceSink], max_evals: int):
        self.objective = objective
        self.trace = trace
        self.max_evals = max_evals
        self.cache: dict[tuple[float, ...], float] = {}

    @property
    def evals(self) -> int:
        return len(self.cache)

    @property
    def exhausted(self) -> bool:
        return self.evals >= self.max_evals

    def __call__(self, x: StrategyVector) -> float:
        key = x.key()
        if key in self.cache:
            return self.cache[key]
        try:
            value = float(self.objective(x))
        except ObjectiveError:
            raise
        except Exception as exc:
            raise ObjectiveError(x, f"objective failed: {exc!r}") from exc
        if not math.isfinite(value):
            raise ObjectiveError(x, f"objective returned non-finite value {value}")
        self.cache[key] = value
        if self.trace is not None:
            self.trace(x, value)
        return value


def hill_climb(
    objective: Objective,
    start: StrategyVector,
    config: HillClimbConfig,
    trace_sink: Optional[TraceSink] = None,
) -> HillClimbResult:
    f = _CachedObjective(objective, trace_sink, config.max_evals)
    if config.mode is Mode.DISCRETE:
        return _discrete(f, start, config)
    return _continuous(f, start, config)


def _discrete(f: _CachedObjective, start: StrategyVector, config: HillClimbConfig) -> HillClimbResult:
    n = config.grid_dim
    idx = np.rint(start.values * n).astype(int)
    if not np.allclose(idx / n, start.values, rtol=0, atol=1e-9):
        raise ValueError(f"start {start.tolist()} is not on the {n}-step grid")

    def point(i: np.ndarray) -> StrategyVector:
        return StrategyVector(i / n)

    current = idx
    value = f(point(current))
    moves = 0
    while not f.exhausted:
        best_i, best_v = None, value
        for k in range(current.size):
            for sign in (-1, 1):
                cand = current.copy()
                cand[k] = min(max(cand[k] + sign, 0), n)
                if cand[k] == current[k]:
                    continue
                if f.exhausted and point(cand).key() not in f.cache:
                    break
                v = f(point(cand))
                if v > best_v:
                    best_i, best_v = cand, v
        if best_i is None:
            break
        current, value = best_i, best_v
        moves += 1
    return HillClimbResult(point(current), value, f.evals, moves)


def _continuous(f: _CachedObjective, start: StrategyVector, config: HillClimbConfig) -> HillClimbResult:
    x = start.values.copy()
    if np.any(x <= 0):
        raise ValueError("continuous hill climbing needs a strictly positive start")
    steps = np.full(x.size, config.step)
    misses = np.zeros(x.size, dtype=int)  # consecutive failures per coordinate
    value = f(StrategyVector(x))
    moves = 0
    while not f.exhausted and np.any(np.abs(steps) >= config.min_step):
        for k in range(x.size):
            if abs(steps[k]) < config.min_step:
                continue
            if f.exhausted:
                break
            cand = x.copy()
            cand[k] = min(cand[k] + steps[k], 1.0)
            v = None
            # infeasible (non-positive) or clamped no-op moves count as failures
            if cand[k] > 0 and cand[k] != x[k]:
                v = f(StrategyVector(cand))
            if v is not None and v > value:
                x, value = cand, v
                steps[k] *= config.growth
                misses[k] = 0
                moves += 1
            else:
                # first, third, ... failure in a row flips the direction
                sign = -1.0 if misses[k] % 2 == 0 else 1.0
                steps[k] = sign * steps[k] / config.growth
                misses[k] += 1
    return HillClimbResult(StrategyVector(x), value, f.evals, moves)
