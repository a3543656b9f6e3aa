#!/usr/bin/env python3
"""Run the full comparison on the chop grid: scripted demos, frozen
autoencoder, then every algorithm across seeds, each evaluated greedily.

Writes per-run metrics/checkpoints plus summary.json under --out and prints
one table row per (algorithm, seed): training mean/max logs over all training
episodes and the post-hoc greedy evaluation mean.
"""

import argparse
import json
import os
import sys

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from diprl import config as cfgmod
from diprl.cli import cmd_eval, cmd_gen_demos, cmd_train, cmd_train_ae
from diprl.metrics import compute_summary, load_metrics

ALGOS = ("bc", "sqil", "sac_true", "diprl")


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--out", default="comparison_out")
    parser.add_argument("--seeds", default="0,1,2")
    parser.add_argument("--steps", type=int, default=100_000)
    parser.add_argument("--algos", default=",".join(ALGOS),
                        help="comma-separated subset of " + "/".join(ALGOS))
    parser.add_argument("--eval-episodes", type=int, default=50)
    ns = parser.parse_args(argv)
    seeds = [int(s) for s in ns.seeds.split(",")]
    algos = [a.strip() for a in ns.algos.split(",") if a.strip()]

    base = {"output_dir": ns.out, "step_budget": str(ns.steps)}
    cfg = cfgmod.build_config(base)
    demo_path = cmd_gen_demos(cfg)
    ae_path = cmd_train_ae(cfg, demo_path)

    table = []
    for algo in algos:
        cfg_a = cfgmod.build_config({**base, "algo": algo})
        written = cmd_train(cfg_a, ae_path, demo_path, seeds=seeds)
        for seed, (metrics_path, policy_path) in zip(seeds, written):
            rows = load_metrics(metrics_path)
            if rows:
                s = compute_summary(rows)
                train_mean, train_max = s.mean_logs_per_episode, s.max_logs
            else:
                train_mean, train_max = None, None
            ev = cmd_eval(policy_path, cfg_a, ns.eval_episodes)
            table.append({"algo": algo, "seed": seed,
                          "train_mean_logs": train_mean,
                          "train_max_logs": train_max,
                          "eval_mean_logs": ev.mean_logs_per_episode,
                          "eval_max_logs": ev.max_logs})

    ref = cfgmod.build_config(base)
    random_eval = cmd_eval("random", ref, ns.eval_episodes)
    expert_eval = cmd_eval("expert", ref, ns.eval_episodes)
    payload = {"runs": table,
               "random_eval_mean": random_eval.mean_logs_per_episode,
               "expert_eval_mean": expert_eval.mean_logs_per_episode}
    summary_path = os.path.join(ns.out, "summary.json")
    with open(summary_path, "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")

    print(f"\n{'algo':<10}{'seed':>5}{'train mean':>12}{'train max':>11}"
          f"{'eval mean':>11}")
    for row in table:
        tm = "-" if row["train_mean_logs"] is None else \
            f"{row['train_mean_logs']:.2f}"
        tx = "-" if row["train_max_logs"] is None else row["train_max_logs"]
        print(f"{row['algo']:<10}{row['seed']:>5}{tm:>12}{tx:>11}"
              f"{row['eval_mean_logs']:>11.2f}")
    print(f"random eval mean {random_eval.mean_logs_per_episode:.2f}, "
          f"expert eval mean {expert_eval.mean_logs_per_episode:.2f}")
    print(f"wrote {summary_path}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
