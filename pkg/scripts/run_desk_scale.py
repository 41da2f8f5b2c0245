#!/usr/bin/env python3
"""Desk-scale end-to-end run: train, ablate, and compare boost policies.

Trains the boost predictor on the desk config, repeats training with the
competitive projection ablated, then replays five held-out episodes under
every policy with shared randomness so the welfare columns are directly
comparable. Metrics land under --out as per-policy CSV directories plus
SVG charts.
"""

import argparse
import json
import time
from pathlib import Path

import numpy as np

from qboost import (
    POLICY_NAMES,
    BiddingEnv,
    EpisodeConfig,
    TrainConfig,
    evaluate,
    generate_episode,
    render_svg,
    save_model,
    train,
    write_metrics,
)

EVAL_EPISODES = 5
EVAL_SEED_BASE = 9000


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--config", default=str(Path(__file__).resolve().parents[1] / "configs" / "desk.json"))
    parser.add_argument("--out", default="desk_run")
    args = parser.parse_args()

    with open(args.config, "r", encoding="utf-8") as fh:
        blob = json.load(fh)
    env_cfg = EpisodeConfig.from_dict(blob.get("env", {}))
    train_cfg = TrainConfig.from_dict(blob.get("train", {}))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.time()
    params, train_metrics = train(train_cfg, BiddingEnv(env_cfg))
    print(f"trained {len(train_metrics)} episodes in {time.time() - t0:.1f}s")
    save_model(params, train_cfg.seed,
               {"env": env_cfg.to_dict(), "train": train_cfg.to_dict()},
               out / "model.json")
    write_metrics(train_metrics, out / "train")

    ablate_cfg = TrainConfig.from_dict({**train_cfg.to_dict(), "use_projection": False})
    _, ablate_metrics = train(ablate_cfg, BiddingEnv(env_cfg))
    write_metrics(ablate_metrics, out / "train_noproj")
    quartile = max(1, len(train_metrics) // 4)
    with_proj = float(np.mean([m.loss.mean() for m in train_metrics[-quartile:]]))
    without = float(np.mean([m.loss.mean() for m in ablate_metrics[-quartile:]]))
    print(f"final-quartile loss: {with_proj:.4f} with projection, {without:.4f} without")

    episodes = [generate_episode(env_cfg, EVAL_SEED_BASE + k) for k in range(EVAL_EPISODES)]
    summary = {}
    for policy in POLICY_NAMES:
        metrics = [
            evaluate(policy, ep, params=params if policy == "qboost" else None,
                     episode_index=k, batch_cap=train_cfg.batch_cap)
            for k, ep in enumerate(episodes)
        ]
        write_metrics(metrics, out / policy)
        summary[policy] = (
            float(np.mean([m.daily_welfare for m in metrics])),
            float(np.mean([m.cum_ratio[-1] for m in metrics])),
            float(np.mean([m.daily_revenue for m in metrics])),
        )

    print(f"\n{'policy':12s} {'daily welfare':>14s} {'final ratio':>12s} {'daily revenue':>14s}")
    for policy, (dw, cr, rev) in summary.items():
        print(f"{policy:12s} {dw:14.2f} {cr:12.4f} {rev:14.2f}")
    best_baseline = max(v[0] for k, v in summary.items() if k != "qboost")
    lift = 100.0 * (summary["qboost"][0] / best_baseline - 1.0)
    print(f"\nlearned boosts vs best baseline: {lift:+.2f}% daily welfare")

    charts = render_svg([out / p / "per_tick.csv" for p in POLICY_NAMES],
                        list(POLICY_NAMES), out)
    for path in charts:
        print(f"wrote {path}")


if __name__ == "__main__":
    main()
