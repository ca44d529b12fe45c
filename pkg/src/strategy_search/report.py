"""Summaries of a run directory, as a dict (json) or plain text."""

from __future__ import annotations

import json
from collections import Counter
from pathlib import Path

from .orchestrator import LOG_NAME, load_run_config, read_log
from .search_space import StrategyVector, denormalize


def build_report(run_dir) -> dict:
    run_dir = Path(run_dir)
    config = load_run_config(run_dir)
    space = config.search_space
    records = read_log(run_dir / LOG_NAME)

    launched = {r["trial_id"]: r for r in records if r["event"] == "trial_launched"}
    finished = [r for r in records if r["event"] == "trial_finished"]
    succeeded = [r for r in finished if r["status"] == "succeeded"]
    failed = [r for r in finished if r["status"] == "failed"]

    trajectory = {name: [] for name in space.names}
    for rec in launched.values():
        if rec["origin"] == "proposal":
            for name, v in zip(space.names, rec["strategy"]):
                trajectory[name].append(v)

    report = {
        "run_dir": str(run_dir),
        "trials_launched": len(launched),
        "trials_succeeded": len(succeeded),
        "trials_failed": len(failed),
        "finished": any(r["event"] == "run_finished" for r in records),
        "proposal_trajectory": trajectory,
        "failures": dict(Counter((r["error"] or {}).get("type", "unknown") for r in failed)),
    }
    if not succeeded:
        report["status"] = "empty"
        report["message"] = "no completed trials"
        return report

    rewards, best_curve, best = [], [], None
    for rec in succeeded:
        rewards.append(rec["reward"])
        if best is None or rec["reward"] > best["reward"]:
            best = rec
        best_curve.append(best["reward"])
    strategy = launched[best["trial_id"]]["strategy"]
    report.update(
        status="ok",
        best={
            "trial_id": best["trial_id"],
            "reward": best["reward"],
            "normalized": dict(zip(space.names, strategy)),
            "native": dict(zip(space.names, denormalize(space, StrategyVector(strategy)))),
        },
        reward_curve={
            "epoch": list(range(1, len(rewards) + 1)),
            "trial_id": [r["trial_id"] for r in succeeded],
            "reward": rewards,
            "best_so_far": best_curve,
        },
    )
    return report


def format_text(report: dict) -> str:
    lines = [
        f"run: {report['run_dir']}",
        f"trials: {report['trials_launched']} launched, {report['trials_succeeded']} succeeded, "
        f"{report['trials_failed']} failed" + ("" if report["finished"] else " (unfinished)"),
    ]
    if report["failures"]:
        lines.append("failures: " + ", ".join(f"{k}={v}" for k, v in sorted(report["failures"].items())))
    if report["status"] == "empty":
        lines.append("no completed trials")
        return "\n".join(lines) + "\n"

    best = report["best"]
    lines.append(f"best reward: {best['reward']!r} (trial {best['trial_id']})")
    lines.append("best strategy:")
    for name, v in best["normalized"].items():
        lines.append(f"  {name}: normalized={v!r} native={best['native'][name]!r}")
    lines.append("reward curve (epoch, trial, reward, best_so_far):")
    curve = report["reward_curve"]
    for e, tid, r, b in zip(curve["epoch"], curve["trial_id"], curve["reward"], curve["best_so_far"]):
        lines.append(f"  {e} {tid} {r!r} {b!r}")
    lines.append("proposal trajectory:")
    for name, values in report["proposal_trajectory"].items():
        lines.append(f"  {name}: " + " ".join(repr(v) for v in values))
    return "\n".join(lines) + "\n"


def report(run_dir, format: str = "text") -> str:
    doc = build_report(run_dir)
    if format == "json":
        return json.dumps(doc, indent=2) + "\n"
    if format == "text":
        return format_text(doc)
    raise ValueError(f"unknown report format {format!r}")
