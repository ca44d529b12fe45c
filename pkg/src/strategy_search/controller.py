"""
Recurrent policy controller.

A single tanh recurrent layer reads the previous strategy and emits two
logits per search dimension. The first softmax channel of each pair is the
mean of a Gaussian over the next strategy coordinate; a sample from that
Gaussian (clamped into the open unit box) is the proposal. Weights are
trained with the REINFORCE rule

    theta <- theta + lr * r * grad_theta log H(C_i | C_{i-1}, theta)

using an RMSprop-preconditioned ascent step.
"""

from __future__ import annotations

import io
import json
import math
import zipfile
from dataclasses import asdict, dataclass, fields, replace

import numpy as np
from scipy.special import expit

from .search_space import StrategyVector

ACTION_LOW = 0.001
ACTION_HIGH = 0.999
INIT_SCALE = 0.08
CHECKPOINT_FORMAT = "strategy-search/controller"
CHECKPOINT_VERSION = 1

PARAM_NAMES = ("W_xh", "W_hh", "b_h", "W_ho", "b_o")


class CheckpointError(ValueError):
    """Raised when a checkpoint blob cannot be decoded."""


@dataclass(frozen=True)
class ControllerConfig:
    dim: int
    hidden_size: int = 32
    policy_stddev: float = 0.1
    learning_rate: float = 0.1
    rmsprop_decay: float = 0.9
    rmsprop_epsilon: float = 1e-8
    use_reward_baseline: bool = False
    baseline_momentum: float = 0.9

    def __post_init__(self):
        if self.dim < 1 or self.hidden_size < 1:
            raise ValueError("dim and hidden_size must be positive")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be > 0")
        if not self.policy_stddev > 0:
            raise ValueError("policy_stddev must be > 0")
        if not 0 < self.rmsprop_decay < 1:
            raise ValueError("rmsprop_decay must lie in (0, 1)")
        if not self.rmsprop_epsilon > 0:
            raise ValueError("rmsprop_epsilon must be > 0")
        if not 0 < self.baseline_momentum < 1:
            raise ValueError("baseline_momentum must lie in (0, 1)")


@dataclass(frozen=True)
class ControllerParams:
    W_xh: np.ndarray
    W_hh: np.ndarray
    b_h: np.ndarray
    W_ho: np.ndarray
    b_o: np.ndarray

    def tensors(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def map(self, fn) -> "ControllerParams":
        return ControllerParams(**{name: fn(name, t) for name, t in self.tensors().items()})

    def check(self, config: ControllerConfig) -> None:
        h, d = config.hidden_size, config.dim
        expected = {"W_xh": (h, d), "W_hh": (h, h), "b_h": (h,), "W_ho": (2 * d, h), "b_o": (2 * d,)}
        for name, t in self.tensors().items():
            if t.shape != expected[name]:
                raise ValueError(f"{name} has shape {t.shape}, expected {expected[name]}")
            if not np.all(np.isfinite(t)):
                raise ValueError(f"{name} contains non-finite weights")

    @classmethod
    def zeros(cls, config: ControllerConfig) -> "ControllerParams":
        h, d = config.hidden_size, config.dim
        return cls(
            W_xh=np.zeros((h, d)),
            W_hh=np.zeros((h, h)),
            b_h=np.zeros(h),
            W_ho=np.zeros((2 * d, h)),
            b_o=np.zeros(2 * d),
        )


@dataclass(frozen=True)
class ControllerState:
    hidden: np.ndarray
    accumulators: ControllerParams
    reward_baseline: float = 0.0


@dataclass(frozen=True)
class PolicyStep:
    """Everything needed to recompute log H for one proposal."""

    input: StrategyVector
    means: np.ndarray
    sampled_action: StrategyVector
    log_prob: float
    hidden_before: np.ndarray

    def to_dict(self) -> dict:
        return {
            "input": self.input.tolist(),
            "means": self.means.tolist(),
            "action": self.sampled_action.tolist(),
            "log_prob": self.log_prob,
            "hidden_before": self.hidden_before.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PolicyStep":
        return cls(
            input=StrategyVector(d["input"]),
            means=np.array(d["means"], dtype=float),
            sampled_action=StrategyVector(d["action"]),
            log_prob=float(d["log_prob"]),
            hidden_before=np.array(d["hidden_before"], dtype=float),
        )

    def same_as(self, other: "PolicyStep") -> bool:
        return (
            self.input == other.input
            and self.sampled_action == other.sampled_action
            and self.log_prob == other.log_prob
            and np.array_equal(self.means, other.means)
            and np.array_equal(self.hidden_before, other.hidden_before)
        )


def init_controller(config: ControllerConfig, rng_seed: int) -> tuple[ControllerParams, ControllerState]:
    rng = np.random.default_rng(rng_seed)
    shapes = ControllerParams.zeros(config)
    params = shapes.map(lambda name, t: rng.uniform(-INIT_SCALE, INIT_SCALE, size=t.shape))
    state = ControllerState(
        hidden=np.zeros(config.hidden_size),
        accumulators=ControllerParams.zeros(config),
        reward_baseline=0.0,
    )
    return params, state


def _hidden(params: ControllerParams, hidden: np.ndarray, x: np.ndarray) -> np.ndarray:
    return np.tanh(params.W_xh @ x + params.W_hh @ hidden + params.b_h)


def _means(params: ControllerParams, h: np.ndarray) -> np.ndarray:
    o = params.W_ho @ h + params.b_o
    # first channel of a two-way softmax == logistic of the logit difference
    return expit(o[0::2] - o[1::2])


def gaussian_log_prob(action: np.ndarray, means: np.ndarray, sigma: float) -> float:
    z = (action - means) / sigma
    return float(np.sum(-0.5 * z * z - math.log(sigma * math.sqrt(2.0 * math.pi))))


def log_prob(
    params: ControllerParams,
    hidden_before: np.ndarray,
    prev: np.ndarray,
    action: np.ndarray,
    sigma: float,
) -> float:
    """log H(action | prev, theta) for a given recurrent state."""
    h = _hidden(params, hidden_before, prev)
    return gaussian_log_prob(np.asarray(action, dtype=float), _means(params, h), sigma)


def policy_forward(
    params: ControllerParams,
    state: ControllerState,
    prev: StrategyVector,
    config: ControllerConfig,
    rng_seed: int,
) -> tuple[PolicyStep, ControllerState]:
    if len(prev) != config.dim:
        raise ValueError(f"dimension mismatch: controller dim {config.dim}, input {len(prev)}")
    params.check(config)
    x = prev.values
    h = _hidden(params, state.hidden, x)
    means = _means(params, h)
    z = np.random.default_rng(rng_seed).standard_normal(config.dim)
    action = np.clip(means + config.policy_stddev * z, ACTION_LOW, ACTION_HIGH)
    step = PolicyStep(
        input=prev,
        means=means,
        sampled_action=StrategyVector(action),
        log_prob=gaussian_log_prob(action, means, config.policy_stddev),
        hidden_before=state.hidden.copy(),
    )
    return step, replace(state, hidden=h)


def log_prob_gradient(params: ControllerParams, step: PolicyStep, sigma: float) -> ControllerParams:
    """Backprop of log H through one recurrent step; hidden_before is a constant."""
    x = step.input.values
    h = _hidden(params, step.hidden_before, x)
    mu = _means(params, h)
    a = step.sampled_action.values

    d_mu = (a - mu) / (sigma * sigma)
    d_diff = d_mu * mu * (1.0 - mu)
    d_o = np.empty(2 * mu.size)
    d_o[0::2] = d_diff
    d_o[1::2] = -d_diff

    d_h = params.W_ho.T @ d_o
    d_z = d_h * (1.0 - h * h)
    return ControllerParams(
        W_xh=np.outer(d_z, x),
        W_hh=np.outer(d_z, step.hidden_before),
        b_h=d_z,
        W_ho=np.outer(d_o, h),
        b_o=d_o,
    )


def policy_update(
    params: ControllerParams,
    state: ControllerState,
    step: PolicyStep,
    reward: float,
    config: ControllerConfig,
    *,
    precondition: bool = True,
) -> tuple[ControllerParams, ControllerState]:
    """
    One REINFORCE ascent step on the reward-scaled log-likelihood gradient.

    With ``precondition=False`` the RMSprop scaling is bypassed (plain
    gradient ascent, accumulators untouched); used to probe the update
    direction in isolation.
    """
    if not math.isfinite(reward):
        raise ValueError(f"reward must be finite, got {reward}")
    params.check(config)
    if len(step.input) != config.dim or len(step.sampled_action) != config.dim:
        raise ValueError("policy step does not match controller dimension")
    if step.hidden_before.shape != (config.hidden_size,):
        raise ValueError("policy step hidden state does not match controller hidden size")

    grad = log_prob_gradient(params, step, config.policy_stddev)
    scale = reward - state.reward_baseline if config.use_reward_baseline else reward
    lr = config.learning_rate

    if precondition:
        rho, eps = config.rmsprop_decay, config.rmsprop_epsilon
        acc = ControllerParams(
            **{
                name: rho * state.accumulators.tensors()[name] + (1.0 - rho) * g * g
                for name, g in grad.tensors().items()
            }
        )
        new_params = ControllerParams(
            **{
                name: params.tensors()[name]
                + lr * scale * g / (np.sqrt(acc.tensors()[name]) + eps)
                for name, g in grad.tensors().items()
            }
        )
    else:
        acc = state.accumulators
        new_params = ControllerParams(
            **{name: params.tensors()[name] + lr * scale * g for name, g in grad.tensors().items()}
        )

    baseline = state.reward_baseline
    if config.use_reward_baseline:
        m = config.baseline_momentum
        baseline = m * baseline + (1.0 - m) * reward
    return new_params, ControllerState(hidden=state.hidden, accumulators=acc, reward_baseline=baseline)


def checkpoint(params: ControllerParams, state: ControllerState, config: ControllerConfig) -> bytes:
    """Serialize controller weights, recurrent state and config to bytes."""
    meta = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": asdict(config),
        "reward_baseline": float(state.reward_baseline).hex(),
    }
    arrays = {f"param/{k}": v for k, v in params.tensors().items()}
    arrays.update({f"acc/{k}": v for k, v in state.accumulators.tensors().items()})
    arrays["hidden"] = state.hidden
    def entry(name: str) -> zipfile.ZipInfo:
        # fixed timestamp keeps identical controllers byte-identical
        return zipfile.ZipInfo(name, date_time=(1980, 1, 1, 0, 0, 0))

    buf = io.BytesIO()
    with zipfile.ZipFile(buf, "w", compression=zipfile.ZIP_STORED) as zf:
        zf.writestr(entry("meta.json"), json.dumps(meta, sort_keys=True))
        for name, arr in sorted(arrays.items()):
            item = io.BytesIO()
            np.save(item, np.ascontiguousarray(arr, dtype="<f8"), allow_pickle=False)
            zf.writestr(entry(name + ".npy"), item.getvalue())
    return buf.getvalue()


def restore(blob: bytes) -> tuple[ControllerParams, ControllerState, ControllerConfig]:
    try:
        with zipfile.ZipFile(io.BytesIO(blob)) as zf:
            meta = json.loads(zf.read("meta.json"))
            if meta.get("format") != CHECKPOINT_FORMAT:
                raise CheckpointError(f"not a controller checkpoint: {meta.get('format')!r}")
            if meta.get("version") != CHECKPOINT_VERSION:
                raise CheckpointError(f"unsupported checkpoint version {meta.get('version')!r}")
            known = {f.name for f in fields(ControllerConfig)}
            config = ControllerConfig(**{k: v for k, v in meta["config"].items() if k in known})

            def load(name: str) -> np.ndarray:
                return np.load(io.BytesIO(zf.read(name + ".npy")), allow_pickle=False).astype(float)

            params = ControllerParams(**{k: load(f"param/{k}") for k in PARAM_NAMES})
            acc = ControllerParams(**{k: load(f"acc/{k}") for k in PARAM_NAMES})
            hidden = load("hidden")
            baseline = float.fromhex(meta["reward_baseline"])
    except CheckpointError:
        raise
    except (zipfile.BadZipFile, KeyError, ValueError, TypeError, EOFError, OSError) as exc:
        raise CheckpointError(f"corrupt controller checkpoint: {exc}") from exc

    try:
        params.check(config)
        acc.check(config)
    except ValueError as exc:
        raise CheckpointError(f"incompatible controller checkpoint: {exc}") from exc
    if hidden.shape != (config.hidden_size,) or not np.all(np.isfinite(hidden)):
        raise CheckpointError("incompatible controller checkpoint: bad hidden state")
    if any(np.any(t < 0) for t in acc.tensors().values()):
        raise CheckpointError("corrupt controller checkpoint: negative accumulator")
    return params, ControllerState(hidden=hidden, accumulators=acc, reward_baseline=baseline), config


def params_equal(a: ControllerParams, b: ControllerParams) -> bool:
    return all(np.array_equal(a.tensors()[k], b.tensors()[k]) for k in PARAM_NAMES)


def states_equal(a: ControllerState, b: ControllerState) -> bool:
    return (
        np.array_equal(a.hidden, b.hidden)
        and params_equal(a.accumulators, b.accumulators)
        and a.reward_baseline == b.reward_baseline
    )
