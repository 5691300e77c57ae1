"""Command-line entry point: ``zmerge {train,eval,sweep,report}``.

Configuration precedence: built-in defaults, then ``--config`` JSON, then
``ZMERGE_*`` environment variables, then command-line flags. Errors are
reported as one JSON object on stderr with a nonzero exit code.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from zmerge.config import POLICIES, load_config

EXIT_USAGE = 2
EXIT_FAILURE = 1


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="flat JSON config file")
    p.add_argument("--seed", type=int, help="run seed")
    p.add_argument("--episodes", type=int, help="training or evaluation episodes")
    p.add_argument("--policy", help=f"one of {', '.join(POLICIES)} (sweep: comma-separated list)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--checkpoint", help="trained agent checkpoint (zmerge policy)")
    p.add_argument("--baseline3-checkpoint", help="checkpoint of the local-information agent")
    p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override any config field (JSON value), repeatable")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="zmerge", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("train", help="train a shared agent")
    _common(p)
    p = sub.add_parser("eval", help="evaluate one policy and write reports")
    _common(p)
    p.add_argument("--latency", action="store_true", help="also measure per-decision latency")
    p.add_argument("--trace", help="write a per-tick JSON-lines trace to this file")
    p = sub.add_parser("sweep", help="evaluate policies across the penetration-rate sweep")
    _common(p)
    p = sub.add_parser("report", help="re-emit CSV reports from a metrics.json")
    p.add_argument("--in", dest="src", required=True, help="directory or metrics.json file")
    p.add_argument("--out", help="output directory (default: next to the input)")
    return parser


def _parse_set(items: list[str]) -> dict:
    out = {}
    for item in items:
        key, sep, raw = item.partition("=")
        if not sep:
            raise ValueError(f"--set expects KEY=VALUE, got {item!r}")
        try:
            out[key] = json.loads(raw)
        except json.JSONDecodeError:
            out[key] = raw
    return out


def _config(args, mode: str, policy_list: bool = False):
    overrides = _parse_set(args.set)
    overrides.update(mode=mode, seed=args.seed, out=args.out, checkpoint=args.checkpoint,
                     baseline3_checkpoint=args.baseline3_checkpoint)
    if args.episodes is not None:
        overrides["episodes" if mode == "train" else "eval_episodes"] = args.episodes
    if args.policy and not policy_list:
        overrides["policy"] = args.policy
    return load_config(args.config, overrides)


def cmd_train(args) -> dict:
    from zmerge.runner import run_training

    cfg = _config(args, "train")
    res = run_training(cfg)
    return {"out": str(res.out), "episodes": res.episodes, "checkpoint": str(res.final_checkpoint),
            "grad_steps": res.agent.grad_steps}


def cmd_eval(args) -> dict:
    from zmerge.runner import load_agent, measure_inference_latency, policy_for, run_evaluation, write_eval_outputs

    cfg = _config(args, "eval")
    policy = policy_for(cfg)
    res = run_evaluation(cfg, policy, trace_path=args.trace)
    if args.latency:
        agent = getattr(policy, "agent", None) or load_agent(cfg.checkpoint)
        res.latency_ms = measure_inference_latency(agent, cfg)
    write_eval_outputs([res], cfg.out)
    return {"out": cfg.out, "policy": res.policy,
            "aggregate": {k: s.mean for k, s in ((n, res.stat(n)) for n in ("mean_speed", "success_rate", "collision_rate"))}}


def cmd_sweep(args) -> dict:
    from zmerge.runner import run_sweep, write_eval_outputs

    cfg = _config(args, "eval", policy_list=True)
    names = args.policy.split(",") if args.policy else ["random", "baseline1", "baseline2"]
    unknown = [n for n in names if n not in POLICIES]
    if unknown:
        raise ValueError(f"unknown policies {unknown}")
    results = run_sweep(cfg, names)
    write_eval_outputs(results, cfg.out)
    return {"out": cfg.out, "runs": len(results)}


def cmd_report(args) -> dict:
    from zmerge.reports import emit_reports

    src = Path(args.src)
    path = src / "metrics.json" if src.is_dir() else src
    if not path.is_file():
        raise FileNotFoundError(f"no metrics.json at {src}")
    data = json.loads(path.read_text(encoding="utf-8"))
    out = Path(args.out) if args.out else path.parent
    emit_reports(data["results"], out)
    return {"out": str(out)}


COMMANDS = {"train": cmd_train, "eval": cmd_eval, "sweep": cmd_sweep, "report": cmd_report}


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        if exc.code in (0, None):
            return 0
        return _fail("usage", "invalid command line", EXIT_USAGE)
    try:
        result = COMMANDS[args.command](args)
    except (ValueError, TypeError, KeyError) as exc:
        return _fail("config", str(exc), EXIT_USAGE)
    except FileNotFoundError as exc:
        return _fail("missing_file", str(exc), EXIT_FAILURE)
    except Exception as exc:  # noqa: BLE001 - reported, not swallowed
        return _fail(type(exc).__name__, str(exc), EXIT_FAILURE)
    print(json.dumps(result, sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
