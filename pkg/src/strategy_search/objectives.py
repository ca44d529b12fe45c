"""
Reward evaluators.

Each evaluator is a callable taking an EvaluationRequest and returning an
EvaluationResult whose reward is maximized. Evaluators must tolerate
concurrent calls on distinct requests.
"""

from __future__ import annotations

import json
import math
import os
import re
import shlex
import subprocess
import tempfile
import time
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional, Protocol, Sequence

import numpy as np

from . import augmentation
from .search_space import SearchSpace, StrategyVector, denormalize

SURFACES = ("sphere", "rosenbrock", "sim_trainer")


@dataclass(frozen=True)
class EvaluationRequest:
    trial_id: str
    strategy: StrategyVector
    native: tuple[float, ...]
    rng_seed: int

    @classmethod
    def build(cls, space: SearchSpace, trial_id: str, strategy: StrategyVector, rng_seed: int):
        return cls(trial_id, strategy, tuple(denormalize(space, strategy)), int(rng_seed))


@dataclass(frozen=True)
class EvaluationResult:
    trial_id: str
    reward: float
    wall_time: float = 0.0
    detail: dict = field(default_factory=dict)

    def __post_init__(self):
        if not math.isfinite(self.reward):
            raise ValueError(f"trial {self.trial_id}: non-finite reward {self.reward}")


class Evaluator(Protocol):
    def __call__(self, request: EvaluationRequest) -> EvaluationResult: ...


class EvaluatorError(RuntimeError):
    """Base class for evaluation failures recorded on a trial."""

    kind = "EvaluatorError"


class NonZeroExit(EvaluatorError):
    kind = "NonZeroExit"

    def __init__(self, returncode: int, stderr: str = ""):
        super().__init__(f"evaluator exited with status {returncode}: {stderr[-500:]}")
        self.returncode = returncode


class EvaluatorTimeout(EvaluatorError):
    kind = "Timeout"


class MissingReward(EvaluatorError):
    kind = "MissingReward"


class FixtureError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Dice


def dice_score(pred, truth, num_classes: int) -> float:
    """
    Mean Dice over foreground classes 1..num_classes-1.

    A class absent from both volumes scores 1.0.
    """
    p = np.asarray(pred)
    t = np.asarray(truth)
    if p.shape != t.shape:
        raise ValueError(f"shape mismatch: {p.shape} vs {t.shape}")
    if num_classes < 2:
        raise ValueError("need at least one foreground class")
    for name, lab in (("pred", p), ("truth", t)):
        if lab.size and (lab.min() < 0 or lab.max() >= num_classes or np.any(lab != np.round(lab))):
            raise ValueError(f"{name} has labels outside [0, {num_classes})")
    scores = []
    for c in range(1, num_classes):
        pc, tc = p == c, t == c
        denom = int(pc.sum()) + int(tc.sum())
        scores.append(1.0 if denom == 0 else 2.0 * int(np.sum(pc & tc)) / denom)
    return float(np.mean(scores))


# --------------------------------------------------------------------------
# Synthetic response surfaces


def sphere(x: np.ndarray, optimum: np.ndarray) -> float:
    return float(1.0 - np.mean((x - optimum) ** 2))


def rosenbrock(x: np.ndarray) -> float:
    """Rosenbrock on [-2, 2]^d, negated and shifted so the maximum (x = 0.75) is 1."""
    z = 4.0 * x - 2.0
    if z.size == 1:
        return float(1.0 - (1.0 - z[0]) ** 2)
    val = np.sum(100.0 * (z[1:] - z[:-1] ** 2) ** 2 + (1.0 - z[:-1]) ** 2)
    return float(1.0 - val)


@dataclass(frozen=True)
class SimTrainer:
    """
    Simulated training run: a base accuracy plus a Gaussian bump per
    coordinate, pairwise bump products as interactions, and optional
    observation noise, clamped to [0, 1].
    """

    base: float
    weights: tuple[float, ...]
    centers: tuple[float, ...]
    widths: tuple[float, ...]
    interactions: tuple[tuple[int, int, float], ...] = ()
    noise: float = 0.0

    @property
    def dim(self) -> int:
        return len(self.centers)

    def bumps(self, x: np.ndarray) -> np.ndarray:
        c, s = np.asarray(self.centers), np.asarray(self.widths)
        return np.exp(-0.5 * ((x - c) / s) ** 2)

    def mean_reward(self, x) -> float:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"sim_trainer expects {self.dim} coordinates, got {x.shape}")
        b = self.bumps(x)
        value = self.base + float(np.dot(self.weights, b))
        for i, j, u in self.interactions:
            value += u * b[i] * b[j]
        return value

    def reward(self, x, rng_seed: int) -> float:
        value = self.mean_reward(x)
        if self.noise > 0:
            value += np.random.default_rng(rng_seed).normal(0.0, self.noise)
        return float(min(max(value, 0.0), 1.0))

    def with_noise(self, noise: float) -> "SimTrainer":
        return SimTrainer(self.base, self.weights, self.centers, self.widths, self.interactions, noise)


def _data_path(*parts: str) -> Path:
    return Path(str(resources.files("strategy_search").joinpath("data", *parts)))


def load_sim_trainer(name: str, noise: Optional[float] = None) -> SimTrainer:
    """Load a committed sim_trainer fixture ('d2', 'd6', ...)."""
    path = _data_path("sim_trainer.json")
    try:
        fixtures = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise FixtureError(f"{path}: {exc}") from exc
    if name not in fixtures:
        raise FixtureError(f"unknown sim_trainer fixture {name!r}; have {sorted(fixtures)}")
    f = fixtures[name]
    sim = SimTrainer(
        base=f["base"],
        weights=tuple(f["weights"]),
        centers=tuple(f["centers"]),
        widths=tuple(f["widths"]),
        interactions=tuple((int(i), int(j), float(u)) for i, j, u in f["interactions"]),
        noise=f.get("noise", 0.0),
    )
    return sim if noise is None else sim.with_noise(noise)


def sim_trainer_fixture_meta(name: str) -> dict:
    return json.loads(_data_path("sim_trainer.json").read_text())[name]


class SyntheticEvaluator:
    def __init__(self, surface: str, dim: int, optimum: Optional[Sequence[float]] = None,
                 fixture: Optional[str] = None, noise: Optional[float] = None):
        if surface not in SURFACES:
            raise ValueError(f"unknown surface {surface!r}; choose from {SURFACES}")
        self.surface = surface
        self.dim = dim
        self.optimum = np.full(dim, 0.5) if optimum is None else np.asarray(optimum, dtype=float)
        if self.optimum.shape != (dim,):
            raise ValueError(f"optimum must have {dim} entries")
        self.sim = None
        if surface == "sim_trainer":
            self.sim = load_sim_trainer(fixture or f"d{dim}", noise)
            if self.sim.dim != dim:
                raise ValueError(f"sim_trainer fixture has dim {self.sim.dim}, search space has {dim}")

    def value(self, x: np.ndarray, rng_seed: int = 0) -> float:
        if self.surface == "sphere":
            return sphere(x, self.optimum)
        if self.surface == "rosenbrock":
            return rosenbrock(x)
        return self.sim.reward(x, rng_seed)

    def __call__(self, request: EvaluationRequest) -> EvaluationResult:
        t0 = time.perf_counter()
        reward = self.value(request.strategy.values, request.rng_seed)
        return EvaluationResult(request.trial_id, reward, time.perf_counter() - t0)


def eval_synthetic(request: EvaluationRequest, surface: str, **kwargs) -> EvaluationResult:
    return SyntheticEvaluator(surface, len(request.strategy), **kwargs)(request)


# --------------------------------------------------------------------------
# Toy volumetric segmentation

TOY_SHAPE = (20, 20, 20)
TOY_SUBJECTS = 4
TOY_CLASSES = 3
TOY_LEVELS = (0.2, 0.5, 0.8)
TOY_NOISE = 0.12
TOY_THRESHOLDS = (0.35, 0.65)
TOY_BEST_LR = 0.4
TOY_CALIBRATION = 0.3


def make_toy_subject(seed: int, shape=TOY_SHAPE) -> tuple[np.ndarray, np.ndarray]:
    """A noisy ball (class 1) holding a box (class 2) at random positions."""
    rng = np.random.default_rng(seed)
    grid = np.indices(shape).transpose(1, 2, 3, 0).astype(float)
    n = np.array(shape, dtype=float)
    center = rng.uniform(0.4, 0.6, size=3) * n
    radius = rng.uniform(0.25, 0.35) * n.min()
    labels = np.zeros(shape, dtype=np.int64)
    labels[np.linalg.norm(grid - center, axis=-1) <= radius] = 1
    half = rng.uniform(0.3, 0.45) * radius
    labels[np.all(np.abs(grid - center) <= half, axis=-1)] = 2
    image = np.asarray(TOY_LEVELS)[labels] + rng.normal(0.0, TOY_NOISE, size=shape)
    return np.clip(image, 0.0, 1.0), labels


def write_toy_fixture(directory, subjects: int = TOY_SUBJECTS) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for s in range(subjects):
        image, labels = make_toy_subject(1000 + s)
        augmentation.write_volume(directory / f"subject{s}_image.vol", image)
        augmentation.write_volume(directory / f"subject{s}_label.vol", labels)


def load_toy_fixture(directory=None) -> list[tuple[np.ndarray, np.ndarray]]:
    directory = Path(directory) if directory is not None else _data_path("toy")
    images = sorted(directory.glob("subject*_image.vol"))
    if not images:
        raise FixtureError(f"{directory}: no toy segmentation volumes found")
    out = []
    for img_path in images:
        lab_path = img_path.with_name(img_path.name.replace("_image", "_label"))
        try:
            image = augmentation.read_volume(img_path)
            labels = augmentation.read_volume(lab_path)
        except augmentation.VolumeFormatError as exc:
            raise FixtureError(str(exc)) from exc
        if image.shape != labels.shape:
            raise FixtureError(f"{img_path.name}: image/label shape mismatch")
        out.append((image, labels.astype(np.int64)))
    return out


def threshold_segment(image: np.ndarray, offset: float = 0.0) -> np.ndarray:
    lo, hi = TOY_THRESHOLDS
    return (image >= lo + offset).astype(np.int64) + (image >= hi + offset).astype(np.int64)


class ToySegmentationEvaluator:
    """
    Stand-in for "train, then validate with Dice".

    The strategy's augmentation probabilities are applied to each subject
    image, a fixed two-threshold segmenter labels the result, and the
    reward is the Dice averaged over classes, then subjects. A coordinate
    named ``learning_rate`` (normalized) shifts both thresholds by
    ``TOY_CALIBRATION * (lr - TOY_BEST_LR)``; without it thresholds are ideal.
    """

    def __init__(self, space: SearchSpace, fixture_dir=None):
        self.names = space.names
        self.subjects = load_toy_fixture(fixture_dir)

    def __call__(self, request: EvaluationRequest) -> EvaluationResult:
        t0 = time.perf_counter()
        values = request.strategy.tolist()
        policy = augmentation.policy_from_strategy(self.names, values)
        lookup = dict(zip(self.names, values))
        offset = TOY_CALIBRATION * (lookup.get("learning_rate", TOY_BEST_LR) - TOY_BEST_LR)
        seeds = np.random.SeedSequence(request.rng_seed).generate_state(len(self.subjects))
        scores, fired = [], np.zeros(len(augmentation.TRANSFORM_NAMES), dtype=int)
        for (image, labels), seed in zip(self.subjects, seeds):
            augmented, applied = augmentation.apply_policy(image, policy, int(seed))
            fired += np.asarray(applied, dtype=int)
            scores.append(dice_score(threshold_segment(augmented, offset), labels, TOY_CLASSES))
        detail = {"subject_dice": scores, "applied_counts": fired.tolist()}
        return EvaluationResult(request.trial_id, float(np.mean(scores)), time.perf_counter() - t0, detail)


def eval_toy_segmentation(request: EvaluationRequest, space: SearchSpace) -> EvaluationResult:
    return ToySegmentationEvaluator(space)(request)


# --------------------------------------------------------------------------
# External process protocol

REWARD_RE = re.compile(r"^\s*REWARD:\s*(\S+)\s*$")


def request_document(space: SearchSpace, request: EvaluationRequest) -> dict:
    return {
        "trial_id": request.trial_id,
        "seed": request.rng_seed,
        "params": [
            {"name": name, "normalized": float(v), "native": float(n)}
            for name, v, n in zip(space.names, request.strategy.tolist(), request.native)
        ],
    }


def parse_reward(stdout: str) -> float:
    """Last ``REWARD: <float>`` line wins."""
    value = None
    for line in stdout.splitlines():
        m = REWARD_RE.match(line)
        if m:
            value = m.group(1)
    if value is None:
        raise MissingReward("no 'REWARD: <float>' line on stdout")
    try:
        reward = float(value)
    except ValueError:
        raise MissingReward(f"unparseable reward {value!r}") from None
    if not math.isfinite(reward):
        raise MissingReward(f"non-finite reward {value!r}")
    return reward


class ExternalEvaluator:
    """
    Run a training command per trial.

    ``command`` is a shell-style template; ``{request}`` is replaced by the
    path of the JSON request file and ``{trial_id}``/``{seed}`` by those
    fields. The child runs inside a fresh temporary directory.
    """

    def __init__(self, space: SearchSpace, command: str, timeout: float = 3600.0):
        if "{request}" not in command:
            raise ValueError("command template must contain a {request} placeholder")
        self.space = space
        self.command = command
        self.timeout = float(timeout)

    def __call__(self, request: EvaluationRequest) -> EvaluationResult:
        t0 = time.perf_counter()
        with tempfile.TemporaryDirectory(prefix=f"trial-{request.trial_id}-") as tmp:
            req_path = Path(tmp) / "request.json"
            req_path.write_text(json.dumps(request_document(self.space, request), indent=2))
            argv = [
                arg.format(request=str(req_path), trial_id=request.trial_id, seed=request.rng_seed)
                for arg in shlex.split(self.command)
            ]
            try:
                proc = subprocess.run(
                    argv, cwd=tmp, capture_output=True, text=True, timeout=self.timeout,
                    env={**os.environ, "STRATEGY_SEARCH_REQUEST": str(req_path)},
                )
            except subprocess.TimeoutExpired:
                raise EvaluatorTimeout(f"evaluator exceeded {self.timeout}s") from None
        if proc.returncode != 0:
            raise NonZeroExit(proc.returncode, proc.stderr)
        reward = parse_reward(proc.stdout)
        return EvaluationResult(request.trial_id, reward, time.perf_counter() - t0)


def eval_external(request: EvaluationRequest, space: SearchSpace, command_template: str,
                  timeout: float) -> EvaluationResult:
    return ExternalEvaluator(space, command_template, timeout)(request)


def build_evaluator(spec: dict, space: SearchSpace) -> Evaluator:
    """Construct an evaluator from the ``evaluator`` section of a run config."""
    spec = dict(spec)
    kind = spec.pop("type", None)
    allowed = {
        "sphere": {"optimum"},
        "rosenbrock": set(),
        "sim_trainer": {"fixture", "noise"},
        "toy_segmentation": {"fixture_dir"},
        "external": {"command", "timeout"},
    }
    if kind not in allowed:
        raise ValueError(f"unknown evaluator type {kind!r}; choose from {sorted(allowed)}")
    unknown = set(spec) - allowed[kind]
    if unknown:
        raise ValueError(f"unknown keys for evaluator {kind!r}: {sorted(unknown)}")
    if kind in SURFACES:
        return SyntheticEvaluator(kind, space.dim, **spec)
    if kind == "toy_segmentation":
        return ToySegmentationEvaluator(space, spec.get("fixture_dir"))
    if "command" not in spec:
        raise ValueError("external evaluator needs a 'command'")
    return ExternalEvaluator(space, spec["command"], spec.get("timeout", 3600.0))
