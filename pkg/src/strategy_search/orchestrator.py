"""
Asynchronous search loop.

A single coordinator owns the controller and the run log. Trials are
evaluated on a thread pool; completions are consumed one at a time from a
queue, in completion order. Each successful completion of a
controller-proposed trial updates the controller with that trial's own
policy step and reward; any completion (random or proposed, succeeded or
failed) conditions the next proposal, which is launched only while more
completed trials are still needed.

Run directory layout::

    config.json            the resolved run configuration
    trials.jsonl           append-only event log (header first)
    checkpoints/*.ckpt     controller snapshots, referenced from the log

The coordinator's output is a deterministic function of the sequence of
completions it consumes. Resuming therefore replays the log through the
same code path, checking every regenerated record against the logged one,
and switches to live execution where the log ends.
"""

from __future__ import annotations

import enum
import hashlib
import json
import logging
import os
import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import controller as ctl
from .config import ConfigError, RunConfig, parse_config
from .objectives import EvaluationRequest, Evaluator, EvaluatorError, build_evaluator
from .search_space import StrategyVector, denormalize, random_strategy

log = logging.getLogger(__name__)

LOG_SCHEMA = "strategy-search.trial-log"
LOG_VERSION = 1
LOG_NAME = "trials.jsonl"
CONFIG_NAME = "config.json"
CHECKPOINT_DIR = "checkpoints"

# streams for derived seeds
_CONTROLLER_INIT, _TRIAL_EVAL, _RANDOM_INIT, _POLICY_SAMPLE = range(4)

# fields excluded when a replayed record is compared to the logged one
_VOLATILE = ("ts", "wall_time")


class RunError(RuntimeError):
    """Setup or runtime failure that aborts a run."""


class RunAborted(RunError):
    pass


class ResumeError(RunError):
    pass


class SearchInterrupted(RunError):
    """Raised when ``stop_after`` simulates a crash."""


class TrialStatus(str, enum.Enum):
    PENDING = "pending"
    RUNNING = "running"
    SUCCEEDED = "succeeded"
    FAILED = "failed"


class Origin(str, enum.Enum):
    RANDOM_INIT = "random"
    PROPOSAL = "proposal"


@dataclass
class Trial:
    trial_id: str
    index: int
    strategy: StrategyVector
    origin: Origin
    seed: int
    status: TrialStatus = TrialStatus.PENDING
    reward: Optional[float] = None
    error: Optional[dict] = None
    policy_step: Optional[ctl.PolicyStep] = None
    conditioned_on: Optional[str] = None
    submitted_at: Optional[float] = None
    finished_at: Optional[float] = None

    def finish(self, reward: Optional[float], error: Optional[dict], at: float) -> None:
        if self.status in (TrialStatus.SUCCEEDED, TrialStatus.FAILED):
            raise RunError(f"trial {self.trial_id} finished twice")
        if error is None:
            self.status, self.reward = TrialStatus.SUCCEEDED, reward
        else:
            self.status, self.error = TrialStatus.FAILED, error
        self.finished_at = at


@dataclass
class SearchRun:
    config: RunConfig
    run_dir: Path
    trials: list[Trial] = field(default_factory=list)
    epoch: int = 0
    best_strategy: Optional[StrategyVector] = None
    best_reward: Optional[float] = None
    best_trial: Optional[str] = None
    checkpoints: list[str] = field(default_factory=list)
    finished: bool = False
    max_running: int = 0

    @property
    def succeeded(self) -> list[Trial]:
        return [t for t in self.trials if t.status is TrialStatus.SUCCEEDED]

    @property
    def failed(self) -> list[Trial]:
        return [t for t in self.trials if t.status is TrialStatus.FAILED]

    def best_native(self) -> Optional[list[float]]:
        if self.best_strategy is None:
            return None
        return denormalize(self.config.search_space, self.best_strategy)


def derive_seed(master_seed: int, stream: int, index: int) -> int:
    state = np.random.SeedSequence([master_seed, stream, index]).generate_state(1)
    return int(state[0])


def config_digest(config: RunConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def _jsonable(record: dict) -> dict:
    return json.loads(json.dumps(record))


def _stable(record: dict) -> dict:
    return {k: v for k, v in record.items() if k not in _VOLATILE}


def read_log(path) -> list[dict]:
    """Parse a trial log, dropping a torn final line left by a crash."""
    path = Path(path)
    try:
        lines = path.read_bytes().split(b"\n")
    except OSError as exc:
        raise ResumeError(f"{path}: {exc}") from exc
    records = []
    for i, line in enumerate(lines):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError as exc:
            if i == len(lines) - 1:
                break
            raise ResumeError(f"{path}: corrupt record on line {i + 1}: {exc}") from exc
    if not records or records[0].get("event") != "header":
        raise ResumeError(f"{path}: missing header record")
    header = records[0]
    if header.get("schema") != LOG_SCHEMA or header.get("version") != LOG_VERSION:
        raise ResumeError(f"{path}: unsupported log schema {header.get('schema')!r} v{header.get('version')}")
    return records


def _write_atomic(path: Path, data: bytes) -> None:
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as fh:
        fh.write(data)
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


class _Coordinator:
    def __init__(self, config: RunConfig, run_dir: Path, evaluator: Evaluator,
                 replay: Optional[list[dict]] = None):
        self.config = config
        self.space = config.search_space
        self.settings = config.run
        self.run_dir = run_dir
        self.evaluator = evaluator
        self.run = SearchRun(config, run_dir)
        self.by_id: dict[str, Trial] = {}
        self.params: Optional[ctl.ControllerParams] = None
        self.state: Optional[ctl.ControllerState] = None
        self.seq = 0
        self.failures = 0
        self.last_checkpoint_epoch: Optional[int] = None

        self._replay = list(replay or [])
        self._cursor = 0
        self._live = not self._replay
        self._fh = None
        self._pool: Optional[ThreadPoolExecutor] = None
        self._done: "queue.Queue[tuple]" = queue.Queue()
        self._lock = threading.Lock()
        self._running = 0

    # ---------------------------------------------------------------- log

    @property
    def log_path(self) -> Path:
        return self.run_dir / LOG_NAME

    def _now(self) -> float:
        return float(self.seq) if self.settings.clock == "logical" else time.time()

    def _emit(self, event: str, **fields) -> dict:
        ts = self._now()
        record = _jsonable({"seq": self.seq, "ts": ts, "event": event, **fields})
        self.seq += 1
        if not self._live and self._cursor < len(self._replay):
            logged = self._replay[self._cursor]
            if _stable(logged) != _stable(record):
                raise ResumeError(
                    f"{self.log_path}: record {logged.get('seq')} does not match replay "
                    f"(logged {logged.get('event')!r}, regenerated {event!r})"
                )
            self._cursor += 1
            return logged
        self._go_live()
        self._fh.write((json.dumps(record) + "\n").encode())
        self._fh.flush()
        return record

    def _go_live(self) -> None:
        if self._live:
            return
        self._live = True
        if self._cursor < len(self._replay):
            raise ResumeError(f"{self.log_path}: unexpected trailing records after seq {self.seq}")
        self._open_log(truncate_to_records=True)
        for trial in sorted(self.run.trials, key=lambda t: t.index):
            if trial.status in (TrialStatus.PENDING, TrialStatus.RUNNING):
                log.info("relaunching unfinished trial %s", trial.trial_id)
                self._submit(trial)

    def _open_log(self, truncate_to_records: bool = False) -> None:
        if truncate_to_records:
            # rewrite exactly the replayed records, dropping any torn tail
            data = b"".join((json.dumps(r) + "\n").encode() for r in self._replay)
            if self.log_path.read_bytes() != data:
                _write_atomic(self.log_path, data)
        self._fh = open(self.log_path, "ab", buffering=0)

    # ---------------------------------------------------------- execution

    def _submit(self, trial: Trial) -> None:
        request = EvaluationRequest.build(self.space, trial.trial_id, trial.strategy, trial.seed)
        self._pool.submit(self._evaluate, trial, request)

    def _evaluate(self, trial: Trial, request: EvaluationRequest) -> None:
        with self._lock:
            self._running += 1
            self.run.max_running = max(self.run.max_running, self._running)
            trial.status = TrialStatus.RUNNING
        t0 = time.perf_counter()
        try:
            result = self.evaluator(request)
            outcome = ("ok", float(result.reward), dict(result.detail))
        except Exception as exc:  # recorded on the trial, never fatal here
            kind = getattr(exc, "kind", type(exc).__name__)
            outcome = ("error", {"type": kind, "message": str(exc)}, {})
        finally:
            with self._lock:
                self._running -= 1
        self._done.put((trial.trial_id, outcome, time.perf_counter() - t0))

    def _next_completion(self) -> tuple[str, Optional[float], Optional[dict], dict, Optional[float]]:
        if not self._live:
            if self._cursor < len(self._replay):
                rec = self._replay[self._cursor]
                if rec.get("event") != "trial_finished":
                    raise ResumeError(
                        f"{self.log_path}: expected trial_finished at seq {rec.get('seq')}, "
                        f"found {rec.get('event')!r}"
                    )
                return rec["trial_id"], rec.get("reward"), rec.get("error"), rec.get("detail", {}), None
            self._go_live()
        if not any(t.status in (TrialStatus.PENDING, TrialStatus.RUNNING) for t in self.run.trials):
            raise RunError("no trials in flight but more completions are required")
        trial_id, outcome, elapsed = self._done.get()
        if outcome[0] == "ok":
            return trial_id, outcome[1], None, outcome[2], elapsed
        return trial_id, None, outcome[1], {}, elapsed

    # ---------------------------------------------------------- lifecycle

    def in_flight(self) -> list[Trial]:
        return [t for t in self.run.trials if t.status in (TrialStatus.PENDING, TrialStatus.RUNNING)]

    def _launch(self, origin: Origin, strategy: StrategyVector, policy_step=None,
                conditioned_on: Optional[str] = None, forward_seed: Optional[int] = None) -> Trial:
        index = len(self.run.trials)
        trial = Trial(
            trial_id=f"t{index:05d}",
            index=index,
            strategy=strategy,
            origin=origin,
            seed=derive_seed(self.settings.master_seed, _TRIAL_EVAL, index),
            policy_step=policy_step,
            conditioned_on=conditioned_on,
        )
        record = self._emit(
            "trial_launched",
            trial_id=trial.trial_id,
            origin=origin.value,
            seed=trial.seed,
            strategy=strategy.tolist(),
            native=denormalize(self.space, strategy),
            conditioned_on=conditioned_on,
            forward_seed=forward_seed,
            policy_step=None if policy_step is None else policy_step.to_dict(),
        )
        trial.submitted_at = record["ts"]
        self.run.trials.append(trial)
        self.by_id[trial.trial_id] = trial
        if self._live:
            self._submit(trial)
        return trial

    def _checkpoint(self) -> None:
        epoch = self.run.epoch
        rel = f"{CHECKPOINT_DIR}/ckpt_e{epoch:06d}.ckpt"
        path = self.run_dir / rel
        blob = ctl.checkpoint(self.params, self.state, self.config.controller)
        if self._live or self._cursor >= len(self._replay):
            _write_atomic(path, blob)
        else:
            try:
                on_disk = path.read_bytes()
            except OSError as exc:
                raise ResumeError(f"{path}: checkpoint referenced by the log is unreadable ({exc})") from exc
            if on_disk != blob:
                raise ResumeError(f"{path}: checkpoint does not match the replayed controller")
        self._emit("checkpoint", path=rel, epoch=epoch, sha256=hashlib.sha256(blob).hexdigest())
        self.run.checkpoints.append(rel)
        self.last_checkpoint_epoch = epoch

    def _propose(self, parent: Trial) -> None:
        index = len(self.run.trials)
        fseed = derive_seed(self.settings.master_seed, _POLICY_SAMPLE, index)
        step, self.state = ctl.policy_forward(
            self.params, self.state, parent.strategy, self.config.controller, fseed
        )
        self._launch(Origin.PROPOSAL, step.sampled_action, step, parent.trial_id, fseed)

    def _process(self, trial_id: str, reward, error, detail, elapsed) -> None:
        trial = self.by_id.get(trial_id)
        if trial is None:
            raise ResumeError(f"{self.log_path}: completion for unknown trial {trial_id}")
        fields = {"trial_id": trial_id, "status": "succeeded" if error is None else "failed",
                  "reward": reward, "error": error, "detail": detail}
        if self.settings.clock == "wall" and elapsed is not None:
            fields["wall_time"] = elapsed
        record = self._emit("trial_finished", **fields)
        trial.finish(reward, error, record["ts"])

        if error is None:
            if trial.origin is Origin.PROPOSAL:
                self.params, self.state = ctl.policy_update(
                    self.params, self.state, trial.policy_step, reward, self.config.controller
                )
                self._emit("controller_update", trial_id=trial_id, reward=reward,
                           epoch=self.run.epoch + 1, reward_baseline=self.state.reward_baseline)
        else:
            self.failures += 1
            log.warning("trial %s failed: %s", trial_id, error)
            if self.failures >= self.settings.max_failures:
                self._emit("run_aborted", reason=f"{self.failures} failed trials")
                raise RunAborted(f"aborting after {self.failures} failed trials (last: {error})")

        succeeded = self.run.epoch + (error is None)
        if succeeded + len(self.in_flight()) < self.settings.max_epoch:
            self._propose(trial)

        if error is None:
            self.run.epoch += 1
            if self.run.best_reward is None or reward > self.run.best_reward:
                self.run.best_reward = reward
                self.run.best_strategy = trial.strategy
                self.run.best_trial = trial_id
            if self.run.epoch % self.settings.checkpoint_every == 0:
                self._checkpoint()

    def execute(self, stop_after: Optional[int] = None) -> SearchRun:
        if self._live:
            self._fh = open(self.log_path, "xb", buffering=0)
        self._pool = ThreadPoolExecutor(max_workers=self.settings.workers, thread_name_prefix="trial")
        try:
            self._emit("header", schema=LOG_SCHEMA, version=LOG_VERSION,
                       config_sha256=config_digest(self.config))
            self.params, self.state = ctl.init_controller(
                self.config.controller, derive_seed(self.settings.master_seed, _CONTROLLER_INIT, 0)
            )
            self._checkpoint()
            for i in range(self.settings.initial_jobs):
                seed = derive_seed(self.settings.master_seed, _RANDOM_INIT, i)
                self._launch(Origin.RANDOM_INIT, random_strategy(self.space, seed))

            processed = 0
            while self.run.epoch < self.settings.max_epoch:
                self._process(*self._next_completion())
                processed += 1
                if stop_after is not None and processed >= stop_after and self._live:
                    raise SearchInterrupted(f"stopped after {processed} completions")

            # awaited but never used to propose
            while self.in_flight():
                trial_id, reward, error, detail, elapsed = self._next_completion()
                rec = self._emit("trial_finished", trial_id=trial_id,
                                 status="succeeded" if error is None else "failed",
                                 reward=reward, error=error, detail=detail, awaited=True)
                self.by_id[trial_id].finish(reward, error, rec["ts"])
            if self.last_checkpoint_epoch != self.run.epoch:
                self._checkpoint()
            self._emit("run_finished", epoch=self.run.epoch, best_trial=self.run.best_trial,
                       best_reward=self.run.best_reward)
            if not self._live and self._cursor < len(self._replay):
                raise ResumeError(f"{self.log_path}: records found after run_finished")
            self.run.finished = True
            return self.run
        finally:
            interrupted = not self.run.finished
            self._pool.shutdown(wait=not interrupted, cancel_futures=interrupted)
            if self._fh is not None:
                self._fh.close()


def _prepare_run_dir(run_dir: Path, config: RunConfig) -> None:
    try:
        run_dir.mkdir(parents=True, exist_ok=True)
        if (run_dir / LOG_NAME).exists():
            raise RunError(f"{run_dir} already holds a run; use resume")
        (run_dir / CHECKPOINT_DIR).mkdir(exist_ok=True)
        (run_dir / CONFIG_NAME).write_text(json.dumps(config.to_dict(), indent=2) + "\n")
    except OSError as exc:
        raise RunError(f"output directory {run_dir} is not writable: {exc}") from exc


def run_search(config: RunConfig, output_dir, evaluator: Optional[Evaluator] = None,
               stop_after: Optional[int] = None) -> SearchRun:
    """
    Run the controller-driven search to ``config.run.max_epoch`` completions.

    Args:
        config: Parsed run configuration
        output_dir: Fresh (or empty) directory for the log and checkpoints
        evaluator: Overrides the evaluator described in the config
        stop_after: Simulate a crash after this many completions (testing)
    """
    run_dir = Path(output_dir)
    if evaluator is None:
        evaluator = build_evaluator(config.evaluator, config.search_space)
    _prepare_run_dir(run_dir, config)
    return _Coordinator(config, run_dir, evaluator).execute(stop_after=stop_after)


def load_run_config(run_dir) -> RunConfig:
    path = Path(run_dir) / CONFIG_NAME
    try:
        return parse_config(json.loads(path.read_text()))
    except OSError as exc:
        raise ResumeError(f"{path}: {exc}") from exc
    except (json.JSONDecodeError, ConfigError) as exc:
        raise ResumeError(f"{path}: invalid run config ({exc})") from exc


def resume(run_dir, evaluator: Optional[Evaluator] = None,
           stop_after: Optional[int] = None) -> SearchRun:
    """
    Continue an interrupted run.

    The log is replayed from the start through the coordinator, verifying
    every regenerated record and every referenced checkpoint. Trials that
    were launched but never finished are re-run with their original seeds.
    A finished run replays to completion without doing any work.
    """
    run_dir = Path(run_dir)
    config = load_run_config(run_dir)
    records = read_log(run_dir / LOG_NAME)
    if records[0].get("config_sha256") != config_digest(config):
        raise ResumeError(f"{run_dir / CONFIG_NAME}: does not match the config recorded in the log")
    if not any(r.get("event") == "checkpoint" for r in records):
        raise ResumeError(f"{run_dir / CHECKPOINT_DIR}: no controller checkpoint recorded")
    if evaluator is None:
        evaluator = build_evaluator(config.evaluator, config.search_space)
    return _Coordinator(config, run_dir, evaluator, replay=records).execute(stop_after=stop_after)


def load_checkpoint(run_dir, rel_path: str):
    path = Path(run_dir) / rel_path
    try:
        return ctl.restore(path.read_bytes())
    except OSError as exc:
        raise ResumeError(f"{path}: {exc}") from exc
    except ctl.CheckpointError as exc:
        raise ResumeError(f"{path}: {exc}") from exc


def replay_controller(run_dir) -> tuple[ctl.ControllerParams, ctl.ControllerState]:
    """
    Rebuild the controller from the initial checkpoint by re-applying every
    logged forward pass and update, in log order.
    """
    records = read_log(Path(run_dir) / LOG_NAME)
    ckpts = [r for r in records if r["event"] == "checkpoint"]
    if not ckpts:
        raise ResumeError(f"{run_dir}: no checkpoints in log")
    params, state, cfg = load_checkpoint(run_dir, ckpts[0]["path"])
    steps: dict[str, ctl.PolicyStep] = {}
    for rec in records:
        if rec["event"] == "trial_launched" and rec["policy_step"] is not None:
            logged = ctl.PolicyStep.from_dict(rec["policy_step"])
            step, state = ctl.policy_forward(params, state, logged.input, cfg, rec["forward_seed"])
            if not step.same_as(logged):
                raise ResumeError(f"forward pass for {rec['trial_id']} does not reproduce the log")
            steps[rec["trial_id"]] = step
        elif rec["event"] == "controller_update":
            params, state = ctl.policy_update(params, state, steps[rec["trial_id"]], rec["reward"], cfg)
    return params, state
