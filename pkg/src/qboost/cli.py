"""Command line driver: train, eval, verify, report.

Exit codes: 0 on success, 1 on a validation failure (bad flags, bad config,
failed verification), 2 on an I/O error. The environment variable
QBOOST_SEED, when set, overrides every configured seed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .environment import BiddingEnv, EpisodeConfig, generate_episode, load_episode_csv
from .learning import POLICY_NAMES, TrainConfig, evaluate, train
from .mlp import load_model, save_model
from .reporting import render_svg, write_metrics
from .verify import SUITES


class CliValidationError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise CliValidationError(f"{self.format_usage()}{self.prog}: error: {message}")


def _build_parser() -> _Parser:
    parser = _Parser(prog="qboost", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train the boost predictor online")
    p_train.add_argument("--config", required=True, help="JSON config file")
    p_train.add_argument("--episodes", type=int, default=None)
    p_train.add_argument("--seed", type=int, default=None)
    p_train.add_argument("--out", required=True, help="output directory")

    p_eval = sub.add_parser("eval", help="replay episodes under a boost policy")
    p_eval.add_argument("--model", default=None, help="model JSON from train")
    p_eval.add_argument("--policy", required=True, choices=POLICY_NAMES)
    p_eval.add_argument("--episodes", type=int, default=1)
    p_eval.add_argument("--seed", type=int, default=None)
    p_eval.add_argument("--config", default=None, help="JSON config file (overrides model)")
    p_eval.add_argument("--out", required=True, help="output directory")

    p_verify = sub.add_parser("verify", help="randomized checks of the guarantees")
    p_verify.add_argument("--suite", required=True, choices=sorted(SUITES))
    p_verify.add_argument("--trials", type=int, default=1000)
    p_verify.add_argument("--seed", type=int, default=None)

    p_report = sub.add_parser("report", help="summarize metrics directories")
    p_report.add_argument("--in", dest="in_dir", required=True,
                          help="directory with per_tick.csv files (directly or per policy)")
    p_report.add_argument("--svg", action="store_true", help="render SVG charts")
    return parser


def _load_json(path):
    with open(path, "r", encoding="utf-8") as fh:
        try:
            return json.load(fh)
        except json.JSONDecodeError as e:
            raise CliValidationError(f"{path}: invalid JSON: {e}") from e


def _seed_override(flag_seed):
    env_seed = os.environ.get("QBOOST_SEED")
    if env_seed is not None:
        try:
            return int(env_seed)
        except ValueError:
            raise CliValidationError(f"QBOOST_SEED must be an integer, got {env_seed!r}")
    return flag_seed


def _cmd_train(args) -> int:
    blob = _load_json(args.config)
    env_cfg = EpisodeConfig.from_dict(blob.get("env", {}))
    train_cfg = TrainConfig.from_dict(blob.get("train", {}))
    if args.episodes is not None:
        train_cfg.episodes = args.episodes
    seed = _seed_override(args.seed)
    if seed is not None:
        env_cfg.seed = seed
        train_cfg.seed = seed

    env = BiddingEnv(env_cfg)
    params, metrics = train(train_cfg, env)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    save_model(params, train_cfg.seed,
               {"env": env_cfg.to_dict(), "train": train_cfg.to_dict()},
               out / "model.json")
    write_metrics(metrics, out)
    last = metrics[-1]
    print(f"trained {len(metrics)} episodes; "
          f"final cumulative welfare ratio {last.cum_ratio[-1]:.4f}; "
          f"model and metrics in {out}")
    return 0


def _cmd_eval(args) -> int:
    params = None
    hyper = {}
    if args.model is not None:
        params, _, hyper = load_model(args.model)
    if args.policy == "qboost" and params is None:
        raise CliValidationError("eval --policy qboost needs --model")

    blob = _load_json(args.config) if args.config is not None else {}
    env_dict = blob.get("env") if blob.get("env") is not None else hyper.get("env")
    if env_dict is None and "episode_csv" not in blob:
        raise CliValidationError("eval needs env settings from --config or --model")
    batch_cap = int(hyper.get("train", {}).get("batch_cap", 256))

    seed = _seed_override(args.seed)
    episodes = []
    if "episode_csv" in blob:
        if args.episodes != 1:
            raise CliValidationError("episode CSVs replay one fixed episode; use --episodes 1")
        src = blob["episode_csv"]
        cfg = EpisodeConfig.from_dict(env_dict) if env_dict else None
        episodes.append(load_episode_csv(src["accounts"], src["ticks"], cfg))
    else:
        env_cfg = EpisodeConfig.from_dict(env_dict)
        if seed is not None:
            env_cfg.seed = seed
        if args.episodes < 1:
            raise CliValidationError("--episodes must be at least 1")
        for k in range(args.episodes):
            episodes.append(generate_episode(env_cfg, env_cfg.seed + k))

    metrics = [
        evaluate(args.policy, ep, params=params, episode_index=k, batch_cap=batch_cap)
        for k, ep in enumerate(episodes)
    ]
    out = Path(args.out)
    write_metrics(metrics, out)
    mean_daily = float(np.mean([m.daily_welfare for m in metrics]))
    print(f"policy {args.policy}: mean daily welfare {mean_daily:.4f} "
          f"over {len(metrics)} episode(s); metrics in {out}")
    return 0


def _cmd_verify(args) -> int:
    suite = SUITES[args.suite]
    result = suite(args.trials) if args.seed is None else suite(args.trials, seed=args.seed)
    for line in result.lines:
        print(f"  {line}")
    print(result.summary())
    return 0 if result.ok else 1


def _cmd_report(args) -> int:
    root = Path(args.in_dir)
    if not root.is_dir():
        raise FileNotFoundError(f"no such directory: {root}")
    found = []
    if (root / "per_tick.csv").exists():
        found.append((root.name, root / "per_tick.csv"))
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        if (sub / "per_tick.csv").exists():
            found.append((sub.name, sub / "per_tick.csv"))
    if not found:
        raise CliValidationError(f"no per_tick.csv found under {root}")
    labels = [label for label, _ in found]
    print(f"found {len(found)} metric series: {', '.join(labels)}")
    for label, path in found:
        summary = path.parent / "summary.csv"
        if summary.exists():
            with open(summary, "r", encoding="utf-8") as fh:
                lines = fh.read().strip().splitlines()
            for line in lines[1:]:
                print(f"  {label}: {line}")
    if args.svg:
        paths = render_svg([p for _, p in found], labels, root)
        for p in paths:
            print(f"wrote {p}")
    return 0


def run_command(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "eval":
            return _cmd_eval(args)
        if args.command == "verify":
            return _cmd_verify(args)
        if args.command == "report":
            return _cmd_report(args)
        raise CliValidationError(f"unknown command {args.command!r}")
    except CliValidationError as e:
        print(str(e), file=sys.stderr)
        return 1
    except (ValueError, KeyError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return 2


def main(argv=None) -> None:
    sys.exit(run_command(sys.argv[1:] if argv is None else argv))
