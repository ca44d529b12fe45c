"""
Normalized search space.

Every searched quantity is declared with native bounds and mapped linearly
onto [0, 1]. Searchers (controller, hill climbing) only ever see the
normalized coordinates; evaluators receive both forms.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class ParamKind(str, enum.Enum):
    HYPERPARAMETER = "hyperparameter"
    AUGMENTATION_PROBABILITY = "augmentation_probability"


@dataclass(frozen=True)
class ParamSpec:
    """
    A single searched dimension.

    Attributes:
        name: Unique identifier within the space
        min: Lower native bound
        max: Upper native bound
        kind: Plain hyperparameter or augmentation probability
    """

    name: str
    min: float
    max: float
    kind: ParamKind = ParamKind.HYPERPARAMETER

    def __post_init__(self) -> None:
        object.__setattr__(self, "kind", ParamKind(self.kind))
        if not self.name:
            raise ValueError("parameter name must be non-empty")
        if not (np.isfinite(self.min) and np.isfinite(self.max)):
            raise ValueError(f"{self.name}: bounds must be finite")
        if not self.min < self.max:
            raise ValueError(f"{self.name}: min ({self.min}) must be less than max ({self.max})")
        if self.kind is ParamKind.AUGMENTATION_PROBABILITY and (self.min, self.max) != (0.0, 1.0):
            raise ValueError(f"{self.name}: augmentation probabilities must span [0, 1]")

    @property
    def span(self) -> float:
        return self.max - self.min

    def to_dict(self) -> dict:
        return {"name": self.name, "min": self.min, "max": self.max, "kind": self.kind.value}


class SearchSpace:
    """Ordered, fixed-size collection of ParamSpec."""

    def __init__(self, params: Iterable[ParamSpec]):
        self.params: tuple[ParamSpec, ...] = tuple(params)
        if not self.params:
            raise ValueError("search space must contain at least one parameter")
        names = [p.name for p in self.params]
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate parameter names in {names}")
        self._mins = np.array([p.min for p in self.params], dtype=float)
        self._maxs = np.array([p.max for p in self.params], dtype=float)

    @property
    def dim(self) -> int:
        return len(self.params)

    @property
    def names(self) -> list[str]:
        return [p.name for p in self.params]

    def __len__(self) -> int:
        return self.dim

    def __eq__(self, other: object) -> bool:
        return isinstance(other, SearchSpace) and self.params == other.params

    def __repr__(self) -> str:
        return f"SearchSpace({list(self.params)!r})"

    def index(self, name: str) -> int:
        return self.names.index(name)

    def to_list(self) -> list[dict]:
        return [p.to_dict() for p in self.params]

    @classmethod
    def from_list(cls, entries: Sequence[dict]) -> "SearchSpace":
        params = []
        for entry in entries:
            unknown = set(entry) - {"name", "min", "max", "kind"}
            if unknown:
                raise ValueError(f"unknown search-space keys: {sorted(unknown)}")
            params.append(
                ParamSpec(
                    name=str(entry["name"]),
                    min=float(entry["min"]),
                    max=float(entry["max"]),
                    kind=ParamKind(entry.get("kind", ParamKind.HYPERPARAMETER.value)),
                )
            )
        return cls(params)


class StrategyVector:
    """
    One candidate configuration in normalized coordinates.

    Immutable: the backing array is read-only. Compares equal by exact value.
    """

    __slots__ = ("_values",)

    def __init__(self, values: Iterable[float]):
        arr = np.array(list(values) if not isinstance(values, np.ndarray) else values, dtype=float)
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError("strategy must be a non-empty 1-D vector")
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"strategy has non-finite components: {arr}")
        if np.any(arr < 0.0) or np.any(arr > 1.0):
            raise ValueError(f"strategy components must lie in [0, 1]: {arr}")
        arr.setflags(write=False)
        self._values = arr

    @property
    def values(self) -> np.ndarray:
        return self._values

    def __len__(self) -> int:
        return self._values.size

    def __iter__(self):
        return iter(self._values.tolist())

    def __getitem__(self, k):
        return self._values[k]

    def __eq__(self, other: object) -> bool:
        return isinstance(other, StrategyVector) and np.array_equal(self._values, other._values)

    def __hash__(self) -> int:
        return hash(self.key())

    def __repr__(self) -> str:
        return f"StrategyVector({self._values.tolist()})"

    def key(self) -> tuple[float, ...]:
        return tuple(self._values.tolist())

    def tolist(self) -> list[float]:
        return self._values.tolist()


def _check_dim(space: SearchSpace, n: int) -> None:
    if n != space.dim:
        raise ValueError(f"dimension mismatch: expected {space.dim}, got {n}")


def normalize(space: SearchSpace, native: Sequence[float]) -> StrategyVector:
    """Map native values into [0, 1] per dimension."""
    x = np.asarray(native, dtype=float)
    _check_dim(space, x.size)
    bad = (x < space._mins) | (x > space._maxs) | ~np.isfinite(x)
    if np.any(bad):
        k = int(np.flatnonzero(bad)[0])
        p = space.params[k]
        raise ValueError(f"{p.name}={x[k]} outside [{p.min}, {p.max}]")
    values = (x - space._mins) / (space._maxs - space._mins)
    # rounding can leave values a hair outside the box at the endpoints
    return StrategyVector(np.clip(values, 0.0, 1.0))


def denormalize(space: SearchSpace, strategy: StrategyVector) -> list[float]:
    _check_dim(space, len(strategy))
    native = space._mins + strategy.values * (space._maxs - space._mins)
    return np.clip(native, space._mins, space._maxs).tolist()


def random_strategy(space: SearchSpace, rng_seed: int) -> StrategyVector:
    rng = np.random.default_rng(rng_seed)
    return StrategyVector(rng.random(space.dim))


def constant_strategy(space: SearchSpace, value: float = 0.5) -> StrategyVector:
    return StrategyVector(np.full(space.dim, float(value)))
