import json
import threading
import time

import numpy as np
import pytest

from conftest import child_command, make_config
from strategy_search import controller as ctl
from strategy_search.objectives import EvaluationResult, build_evaluator
from strategy_search.orchestrator import (
    RunAborted, RunError, ResumeError, SearchInterrupted, TrialStatus, read_log, replay_controller,
    resume, run_search,
)


def events(run_dir, kind=None):
    recs = read_log(run_dir / "trials.jsonl")
    return [r for r in recs if kind is None or r["event"] == kind]


def log_bytes(run_dir):
    return (run_dir / "trials.jsonl").read_bytes()


def test_serial_run_is_reproducible(tmp_path):
    cfg = make_config(max_epoch=3, initial_jobs=1)
    a = run_search(cfg, tmp_path / "a")
    b = run_search(cfg, tmp_path / "b")
    assert log_bytes(tmp_path / "a") == log_bytes(tmp_path / "b")
    assert [t.strategy for t in a.trials] == [t.strategy for t in b.trials]
    assert len(a.succeeded) == 3 and a.epoch == 3


def test_seed_changes_the_run(tmp_path):
    a = run_search(make_config(master_seed=1), tmp_path / "a")
    b = run_search(make_config(master_seed=2), tmp_path / "b")
    assert a.trials[0].strategy != b.trials[0].strategy


def test_max_epoch_equal_to_initial_jobs_runs_no_proposals(tmp_path):
    run = run_search(make_config(max_epoch=4, initial_jobs=4), tmp_path / "r")
    assert len(run.trials) == 4
    assert all(t.origin.value == "random" for t in run.trials)
    assert not events(tmp_path / "r", "controller_update")


def test_one_update_per_successful_proposal(tmp_path):
    run = run_search(make_config(max_epoch=25, initial_jobs=5), tmp_path / "r")
    updates = events(tmp_path / "r", "controller_update")
    proposals = [t for t in run.trials if t.origin.value == "proposal"]
    assert len(run.trials) == 25
    assert [u["trial_id"] for u in updates] == [t.trial_id for t in proposals]
    assert run.best_reward == max(t.reward for t in run.succeeded)


def test_policy_step_logged_before_update(tmp_path):
    run_search(make_config(max_epoch=20), tmp_path / "r")
    seen = {}
    for rec in events(tmp_path / "r"):
        if rec["event"] == "trial_launched":
            seen[rec["trial_id"]] = rec
        elif rec["event"] == "controller_update":
            launched = seen[rec["trial_id"]]
            assert launched["policy_step"] is not None
            assert launched["policy_step"]["action"] == launched["strategy"]


def test_sequence_numbers_monotone(tmp_path):
    run_search(make_config(), tmp_path / "r")
    recs = events(tmp_path / "r")
    assert [r["seq"] for r in recs] == list(range(len(recs)))
    assert recs[0]["event"] == "header" and recs[-1]["event"] == "run_finished"


def test_wall_clock_timestamps(tmp_path):
    before = time.time()
    run_search(make_config(clock="wall"), tmp_path / "r")
    recs = events(tmp_path / "r")
    ts = [r["ts"] for r in recs]
    assert ts == sorted(ts) and ts[0] >= before
    assert all("wall_time" in r for r in recs if r["event"] == "trial_finished")


def test_replay_reproduces_final_checkpoint(tmp_path):
    cfg = make_config(dim=3, max_epoch=35, initial_jobs=4)
    run = run_search(cfg, tmp_path / "r")
    params, state = replay_controller(tmp_path / "r")
    final = (tmp_path / "r" / run.checkpoints[-1]).read_bytes()
    assert ctl.checkpoint(params, state, cfg.controller) == final


def test_checkpoint_cadence(tmp_path):
    run = run_search(make_config(max_epoch=25, checkpoint_every=10), tmp_path / "r")
    assert [c["epoch"] for c in events(tmp_path / "r", "checkpoint")] == [0, 10, 20, 25]
    assert all((tmp_path / "r" / c).exists() for c in run.checkpoints)


class FlakyEvaluator:
    """Sphere evaluator that raises on chosen trial ids."""

    def __init__(self, cfg, failing):
        self.inner = build_evaluator(cfg.evaluator, cfg.search_space)
        self.failing = set(failing)

    def __call__(self, request):
        if request.trial_id in self.failing:
            raise RuntimeError(f"crash in {request.trial_id}")
        return self.inner(request)


def test_failed_trials_trigger_replacement_without_update(tmp_path):
    cfg = make_config(max_epoch=15, initial_jobs=3)
    run = run_search(cfg, tmp_path / "r", evaluator=FlakyEvaluator(cfg, {"t00001", "t00005"}))
    assert len(run.succeeded) == 15
    assert {t.trial_id for t in run.failed} == {"t00001", "t00005"}
    assert len(run.trials) == 17  # launched = succeeded + failed
    updated = {u["trial_id"] for u in events(tmp_path / "r", "controller_update")}
    assert not updated & {"t00001", "t00005"}
    children = {t.conditioned_on for t in run.trials}
    assert {"t00001", "t00005"} <= children
    failed = [r for r in events(tmp_path / "r", "trial_finished") if r["status"] == "failed"]
    assert failed[0]["error"]["type"] == "RuntimeError"


def test_too_many_failures_abort(tmp_path):
    cfg = make_config(max_epoch=10, initial_jobs=2, max_failures=3)
    ids = {f"t{i:05d}" for i in range(100)}
    with pytest.raises(RunAborted):
        run_search(cfg, tmp_path / "r", evaluator=FlakyEvaluator(cfg, ids))
    assert events(tmp_path / "r")[-1]["event"] == "run_aborted"


def test_unwritable_output_dir(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(RunError):
        run_search(make_config(), blocker / "run")


def test_refuses_to_overwrite_run(tmp_path):
    run_search(make_config(max_epoch=3), tmp_path / "r")
    with pytest.raises(RunError, match="resume"):
        run_search(make_config(max_epoch=3), tmp_path / "r")


class SlowEvaluator:
    def __init__(self, cfg, delay=0.01):
        self.inner = build_evaluator(cfg.evaluator, cfg.search_space)
        self.delay = delay
        self.lock = threading.Lock()
        self.active = 0
        self.peak = 0

    def __call__(self, request):
        with self.lock:
            self.active += 1
            self.peak = max(self.peak, self.active)
        try:
            time.sleep(self.delay * (1 + request.rng_seed % 3))
            return self.inner(request)
        finally:
            with self.lock:
                self.active -= 1


def test_parallel_workers_bound_and_accounting(tmp_path):
    cfg = make_config(max_epoch=40, initial_jobs=8, workers=4)
    ev = SlowEvaluator(cfg)
    run = run_search(cfg, tmp_path / "r", evaluator=ev)
    assert ev.peak <= 4 and run.max_running <= 4
    assert ev.peak >= 2
    assert len(run.succeeded) == 40
    finished = events(tmp_path / "r", "trial_finished")
    assert len(finished) == len(events(tmp_path / "r", "trial_launched"))
    # resume of the finished parallel run replays its completion order
    again = resume(tmp_path / "r")
    assert again.finished and again.best_reward == run.best_reward


def test_parallel_replay_reproduces_checkpoint(tmp_path):
    cfg = make_config(max_epoch=30, initial_jobs=6, workers=3)
    run = run_search(cfg, tmp_path / "r", evaluator=SlowEvaluator(cfg, 0.005))
    params, state = replay_controller(tmp_path / "r")
    assert ctl.checkpoint(params, state, cfg.controller) == (tmp_path / "r" / run.checkpoints[-1]).read_bytes()


@pytest.mark.parametrize("stop", [1, 3, 10, 17, 29])
def test_interrupted_run_resumes_to_identical_log(tmp_path, stop):
    cfg = make_config(max_epoch=30, initial_jobs=3)
    run_search(cfg, tmp_path / "full")
    with pytest.raises(SearchInterrupted):
        run_search(cfg, tmp_path / "cut", stop_after=stop)
    done = resume(tmp_path / "cut")
    assert len(done.succeeded) == 30
    assert log_bytes(tmp_path / "cut") == log_bytes(tmp_path / "full")


def test_resume_twice_in_a_row(tmp_path):
    cfg = make_config(max_epoch=30)
    run_search(cfg, tmp_path / "full")
    with pytest.raises(SearchInterrupted):
        run_search(cfg, tmp_path / "cut", stop_after=5)
    with pytest.raises(SearchInterrupted):
        resume(tmp_path / "cut", stop_after=7)
    resume(tmp_path / "cut")
    assert log_bytes(tmp_path / "cut") == log_bytes(tmp_path / "full")


def test_resume_drops_torn_tail(tmp_path):
    cfg = make_config(max_epoch=20)
    run_search(cfg, tmp_path / "full")
    with pytest.raises(SearchInterrupted):
        run_search(cfg, tmp_path / "cut", stop_after=8)
    with open(tmp_path / "cut" / "trials.jsonl", "ab") as fh:
        fh.write(b'{"seq": 999, "ev')
    resume(tmp_path / "cut")
    assert log_bytes(tmp_path / "cut") == log_bytes(tmp_path / "full")


def test_resume_completed_run_is_noop(tmp_path):
    run = run_search(make_config(), tmp_path / "r")
    before = log_bytes(tmp_path / "r")
    again = resume(tmp_path / "r")
    assert log_bytes(tmp_path / "r") == before
    assert again.finished and again.epoch == run.epoch and again.best_reward == run.best_reward
    assert all(t.status is TrialStatus.SUCCEEDED for t in again.trials)


def test_resume_diagnostics_name_the_file(tmp_path):
    cfg = make_config(max_epoch=25)
    with pytest.raises(SearchInterrupted):
        run_search(cfg, tmp_path / "r", stop_after=15)
    ckpt = tmp_path / "r" / "checkpoints" / "ckpt_e000010.ckpt"
    ckpt.write_bytes(ckpt.read_bytes()[:50])
    with pytest.raises(ResumeError, match="ckpt_e000010"):
        resume(tmp_path / "r")

    (tmp_path / "r" / "config.json").unlink()
    with pytest.raises(ResumeError, match="config.json"):
        resume(tmp_path / "r")

    (tmp_path / "q").mkdir()
    with pytest.raises(ResumeError, match="config.json|trials.jsonl"):
        resume(tmp_path / "q")


def test_resume_rejects_tampered_log(tmp_path):
    cfg = make_config(max_epoch=20)
    with pytest.raises(SearchInterrupted):
        run_search(cfg, tmp_path / "r", stop_after=10)
    path = tmp_path / "r" / "trials.jsonl"
    lines = path.read_text().splitlines()
    rec = json.loads(lines[6])
    assert rec["event"] == "trial_launched"
    rec["strategy"][0] = 0.123
    lines[6] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ResumeError, match="trials.jsonl"):
        resume(tmp_path / "r")


def test_resume_rejects_changed_config(tmp_path):
    with pytest.raises(SearchInterrupted):
        run_search(make_config(max_epoch=20), tmp_path / "r", stop_after=4)
    doc = json.loads((tmp_path / "r" / "config.json").read_text())
    doc["run"]["max_epoch"] = 21
    (tmp_path / "r" / "config.json").write_text(json.dumps(doc))
    with pytest.raises(ResumeError, match="config"):
        resume(tmp_path / "r")


def test_external_evaluator_failures_recorded(tmp_path):
    cfg = make_config(max_epoch=4, initial_jobs=2, evaluator={"type": "external", "command": child_command("fail")},
                      max_failures=2)
    with pytest.raises(RunAborted):
        run_search(cfg, tmp_path / "r")
    failed = [r for r in events(tmp_path / "r", "trial_finished") if r["status"] == "failed"]
    assert {f["error"]["type"] for f in failed} == {"NonZeroExit"}


def test_search_beats_random_on_sphere(tmp_path):
    """Controller search vs. pure random draws of the same budget, 5 master seeds."""
    from strategy_search.search_space import random_strategy
    from strategy_search.orchestrator import derive_seed

    wins = 0
    for seed in range(5):
        cfg = make_config(dim=2, max_epoch=200, initial_jobs=8, master_seed=seed,
                          evaluator={"type": "sphere", "optimum": [0.82, 0.17]})
        cfg = type(cfg)(cfg.search_space, ctl.ControllerConfig(dim=2, learning_rate=0.03, use_reward_baseline=True),
                        cfg.evaluator, cfg.run)
        run = run_search(cfg, tmp_path / f"s{seed}")
        ev = build_evaluator(cfg.evaluator, cfg.search_space)
        rand = max(ev.value(random_strategy(cfg.search_space, derive_seed(seed, 2, i)).values) for i in range(200))
        wins += run.best_reward >= rand
    assert wins >= 4


def test_evaluation_result_rejects_nan():
    with pytest.raises(ValueError):
        EvaluationResult("t", float("nan"))
    assert np.isfinite(EvaluationResult("t", 0.5).reward)
