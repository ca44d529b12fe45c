"""
Command line entry point.

    strategy-search search --config run.json --out runs/a [--seed N] [--workers N]
    strategy-search resume runs/a
    strategy-search report runs/a [--format text|json]
    strategy-search baseline --config run.json --mode discrete --out runs/hc
    strategy-search eval-once --config run.json --strategy '[0.5, 0.5]'

Exit codes: 0 success, 2 configuration error, 3 run aborted by an
evaluator or runtime failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from pathlib import Path

from . import baselines
from .config import ConfigError, load_config
from .objectives import EvaluationRequest, build_evaluator
from .orchestrator import (
    CONFIG_NAME, LOG_NAME, LOG_SCHEMA, LOG_VERSION, RunError, config_digest, derive_seed,
    resume, run_search,
)
from .report import report
from .search_space import StrategyVector, constant_strategy, denormalize

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 2, 3


def _search(args) -> int:
    config = load_config(args.config, {"master_seed": args.seed, "workers": args.workers})
    run = run_search(config, args.out)
    print(f"best reward {run.best_reward!r} at {dict(zip(config.search_space.names, run.best_native()))}")
    return EXIT_OK


def _resume(args) -> int:
    run = resume(args.run_dir)
    print(f"best reward {run.best_reward!r} after {run.epoch} completed trials")
    return EXIT_OK


def _report(args) -> int:
    sys.stdout.write(report(args.run_dir, args.format))
    return EXIT_OK


def _baseline(args) -> int:
    config = load_config(args.config)
    space = config.search_space
    evaluator = build_evaluator(config.evaluator, space)
    hc = baselines.HillClimbConfig(mode=args.mode, max_evals=args.max_evals)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / CONFIG_NAME).write_text(json.dumps(config.to_dict(), indent=2) + "\n")
        fh = open(out / LOG_NAME, "x")
    except OSError as exc:
        raise RunError(f"output directory {out} is not usable: {exc}") from exc

    logical = config.run.clock == "logical"
    seq = 0

    def emit(event, **fields):
        nonlocal seq
        rec = {"seq": seq, "ts": float(seq) if logical else time.time(), "event": event, **fields}
        fh.write(json.dumps(rec) + "\n")
        fh.flush()
        seq += 1

    count = 0

    def objective(x: StrategyVector) -> float:
        nonlocal count
        tid = f"t{count:05d}"
        seed = derive_seed(config.run.master_seed, 1, count)
        count += 1
        emit("trial_launched", trial_id=tid, origin=f"hill_climb_{hc.mode.value}", seed=seed,
             strategy=x.tolist(), native=denormalize(space, x), conditioned_on=None,
             forward_seed=None, policy_step=None)
        try:
            result = evaluator(EvaluationRequest.build(space, tid, x, seed))
        except Exception as exc:
            emit("trial_finished", trial_id=tid, status="failed", reward=None,
                 error={"type": getattr(exc, "kind", type(exc).__name__), "message": str(exc)}, detail={})
            raise
        emit("trial_finished", trial_id=tid, status="succeeded", reward=result.reward,
             error=None, detail=result.detail)
        return result.reward

    with fh:
        emit("header", schema=LOG_SCHEMA, version=LOG_VERSION, config_sha256=config_digest(config),
             searcher=f"hill_climb_{hc.mode.value}")
        try:
            res = baselines.hill_climb(objective, constant_strategy(space, 0.5), hc)
        except baselines.ObjectiveError as exc:
            emit("run_aborted", reason=str(exc))
            raise RunError(str(exc)) from exc
        emit("run_finished", epoch=res.evals, best_reward=res.best_value,
             best_strategy=res.best.tolist(), moves=res.moves)
    print(f"best reward {res.best_value!r} at {dict(zip(space.names, denormalize(space, res.best)))} "
          f"after {res.evals} evaluations")
    return EXIT_OK


def _eval_once(args) -> int:
    config = load_config(args.config)
    space = config.search_space
    try:
        values = json.loads(args.strategy)
        if isinstance(values, dict):
            values = [values[name] for name in space.names]
        strategy = StrategyVector(values)
        if len(strategy) != space.dim:
            raise ValueError(f"expected {space.dim} values")
    except (ValueError, KeyError, TypeError) as exc:
        raise ConfigError(f"--strategy: {exc}") from exc
    request = EvaluationRequest.build(space, "eval-once", strategy, args.seed)
    try:
        result = build_evaluator(config.evaluator, space)(request)
    except Exception as exc:
        raise RunError(f"evaluation failed: {exc}") from exc
    print(json.dumps({"reward": result.reward, "native": dict(zip(space.names, request.native)),
                      "detail": result.detail}))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="strategy-search", description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("search", help="run the controller-driven search")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--workers", type=int, default=None)
    p.set_defaults(func=_search)

    p = sub.add_parser("resume", help="continue an interrupted run")
    p.add_argument("run_dir")
    p.set_defaults(func=_resume)

    p = sub.add_parser("report", help="summarize a run directory")
    p.add_argument("run_dir")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.set_defaults(func=_report)

    p = sub.add_parser("baseline", help="hill-climbing baseline from 0.5 in every coordinate")
    p.add_argument("--config", required=True)
    p.add_argument("--mode", choices=("discrete", "continuous"), required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--max-evals", type=int, default=10_000)
    p.set_defaults(func=_baseline)

    p = sub.add_parser("eval-once", help="evaluate a single strategy (debugging)")
    p.add_argument("--config", required=True)
    p.add_argument("--strategy", required=True, help="JSON list of normalized values, or name->value map")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_eval_once)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RunError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
