import json

import pytest

from conftest import make_config
from strategy_search.objectives import EvaluationResult
from strategy_search.orchestrator import RunAborted, run_search
from strategy_search.report import build_report, format_text, report


class Fixed:
    def __init__(self, rewards):
        self.rewards = rewards

    def __call__(self, request):
        r = self.rewards[int(request.trial_id[1:]) % len(self.rewards)]
        if r is None:
            raise RuntimeError("no luck")
        return EvaluationResult(request.trial_id, r)


def test_single_trial_report(tmp_path):
    run_search(make_config(max_epoch=1, initial_jobs=1), tmp_path / "r", evaluator=Fixed([0.5]))
    doc = build_report(tmp_path / "r")
    assert doc["status"] == "ok"
    assert doc["reward_curve"]["reward"] == [0.5]
    assert doc["reward_curve"]["best_so_far"] == [0.5]
    assert doc["best"]["trial_id"] == "t00000" and doc["best"]["reward"] == 0.5
    assert all(v == [] for v in doc["proposal_trajectory"].values())


def test_best_so_far_is_running_max(tmp_path):
    rewards = [0.2, 0.7, 0.1, 0.9, 0.3, 0.8]
    run_search(make_config(max_epoch=12, initial_jobs=2), tmp_path / "r", evaluator=Fixed(rewards))
    curve = build_report(tmp_path / "r")["reward_curve"]
    running = [max(curve["reward"][: i + 1]) for i in range(len(curve["reward"]))]
    assert curve["best_so_far"] == running
    assert curve["best_so_far"] == sorted(curve["best_so_far"])
    assert curve["epoch"] == list(range(1, 13))


def test_text_and_json_agree(tmp_path):
    run_search(make_config(max_epoch=10, initial_jobs=3), tmp_path / "r")
    doc = json.loads(report(tmp_path / "r", "json"))
    text = report(tmp_path / "r", "text")
    assert repr(doc["best"]["reward"]) in text
    for name, v in doc["best"]["native"].items():
        assert f"native={v!r}" in text
    for r in doc["reward_curve"]["reward"]:
        assert repr(r) in text
    assert format_text(build_report(tmp_path / "r")) == text


def test_trajectory_lists_proposals_only(tmp_path):
    run = run_search(make_config(max_epoch=10, initial_jobs=3), tmp_path / "r")
    traj = build_report(tmp_path / "r")["proposal_trajectory"]
    proposals = [t.strategy for t in run.trials if t.origin.value == "proposal"]
    assert traj["x0"] == [s[0] for s in proposals]
    assert len(traj["x1"]) == 7


def test_empty_run(tmp_path):
    with pytest.raises(RunAborted):
        run_search(make_config(max_epoch=5, initial_jobs=2, max_failures=3), tmp_path / "r",
                   evaluator=Fixed([None]))
    doc = build_report(tmp_path / "r")
    assert doc["status"] == "empty" and doc["trials_succeeded"] == 0
    assert doc["failures"] == {"RuntimeError": doc["trials_failed"]}
    text = report(tmp_path / "r")
    assert "no completed trials" in text and "(unfinished)" in text


def test_unknown_format(tmp_path):
    run_search(make_config(max_epoch=1, initial_jobs=1), tmp_path / "r")
    with pytest.raises(ValueError):
        report(tmp_path / "r", "csv")
