"""Command-line front door: gen-demos, train-ae, train, eval, summarize."""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict

import numpy as np

from . import config as cfgmod
from . import nets
from .agents import (AlgoKind, PolicyNetwork, RunConfig, evaluate_expert,
                     evaluate_policy, evaluate_random, train_run)
from .autoencoder import (AeConfig, AutoencoderModel, build_diverse_dataset,
                          init_autoencoder, load_autoencoder, save_autoencoder,
                          train_autoencoder)
from .data import DemoDataset, expert_episode, load_demos, save_demos
from .env import obs_dim
from .errors import ConfigError
from .metrics import RunSummary, compute_summary, export_metrics, load_metrics
from .reward import save_preferences

POLICY_CHECKPOINT_KIND = "diprl-policy"


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", default=None, metavar="FILE",
                        help="key=value config file with dotted keys")
    group = parser.add_argument_group(
        "config overrides", "any config key as a flag, e.g. --env.grid_size 10")
    for key in cfgmod.known_keys():
        group.add_argument(f"--{key}", dest=key, default=None, metavar="V")
    parser.add_argument("--steps", dest="step_budget", default=None, metavar="N",
                        help="alias for --step_budget")


def _config_from_args(ns: argparse.Namespace) -> cfgmod.ExperimentConfig:
    values = {}
    if ns.config:
        values.update(cfgmod.parse_config_file(ns.config))
    for key in cfgmod.known_keys():
        flag = vars(ns).get(key)
        if flag is not None:
            values[key] = flag
    return cfgmod.build_config(values)


def _out_path(cfg, name, override=None):
    if override:
        return override
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, name)


def cmd_gen_demos(cfg: cfgmod.ExperimentConfig, out=None) -> str:
    """Write n_demos scripted-expert episodes in the demo file format."""
    episodes = [expert_episode(cfg.env) for _ in range(cfg.n_demos)]
    demos = DemoDataset(episodes=episodes, env=cfg.env)
    path = _out_path(cfg, "demos.jsonl", out)
    save_demos(demos, path)
    for i, ep in enumerate(episodes):
        logs = sum(1 for t in ep if t.hidden_reward > 0)
        print(f"episode {i}: {logs} logs in {len(ep)} steps")
    print(f"wrote {len(episodes)} episodes to {path}")
    return path


def cmd_train_ae(cfg: cfgmod.ExperimentConfig, demos_path, out=None) -> str:
    """Pretrain the autoencoder on task demos plus diverse rollouts, freeze it,
    and write the checkpoint with its loss log."""
    if not os.path.exists(demos_path):
        raise ConfigError(f"demo file not found: {demos_path}")
    demos = load_demos(demos_path)
    rng = np.random.default_rng(cfg.run_seed)
    diverse = build_diverse_dataset(cfg.env, cfg.ae.diverse_episodes, rng)
    model = init_autoencoder(obs_dim(cfg.env), cfg.ae, rng)
    model = train_autoencoder(model, demos, diverse, cfg.ae, rng)
    path = _out_path(cfg, "autoencoder.json", out)
    save_autoencoder(path, model)
    for epoch, loss in enumerate(model.loss_history):
        print(f"epoch {epoch}: mixture loss {loss:.6f}")
    print(f"wrote frozen autoencoder to {path}")
    return path


def save_policy_checkpoint(path, policy: PolicyNetwork,
                           encoder_model: AutoencoderModel, cfg, seed: int):
    heads = {"policy": policy.params, "encoder": encoder_model.encoder,
             "decoder": encoder_model.decoder}
    meta = {
        "kind": POLICY_CHECKPOINT_KIND,
        "algo": cfg.algo.value,
        "seed": seed,
        "env": asdict(cfg.env),
        "ae_config": {k: list(v) if isinstance(v, tuple) else v
                      for k, v in asdict(encoder_model.cfg).items()},
    }
    nets.save_heads(path, heads, meta)


def load_policy_checkpoint(path):
    heads, meta = nets.load_heads(path)
    if meta.get("kind") != POLICY_CHECKPOINT_KIND:
        raise ConfigError(f"{path} is not a policy checkpoint")
    raw = dict(meta["ae_config"])
    raw["hidden_dims"] = tuple(raw["hidden_dims"])
    encoder_model = AutoencoderModel(encoder=heads["encoder"],
                                     decoder=heads["decoder"],
                                     cfg=AeConfig(**raw), frozen=True)
    return PolicyNetwork(params=heads["policy"]), encoder_model, meta


def _train_one_seed(cfg: cfgmod.ExperimentConfig, run_cfg: RunConfig,
                    ae_path, demos_path, needs_demos: bool, seed: int):
    """Worker for one seed: loads its own encoder and demos so concurrent
    seeds share no mutable state."""
    encoder = load_autoencoder(ae_path)
    demos = load_demos(demos_path) if needs_demos else None
    rng = np.random.default_rng(seed)
    tag = f"{cfg.algo.value}_seed{seed}"
    before_path = _out_path(cfg, f"encoder_before_{tag}.json")
    save_autoencoder(before_path, encoder)

    result = train_run(cfg.algo, cfg.env, demos, encoder, run_cfg, rng,
                       seed=seed)

    after_path = _out_path(cfg, f"encoder_after_{tag}.json")
    save_autoencoder(after_path, encoder)
    metrics_path = _out_path(cfg, f"metrics_{tag}.csv")
    export_metrics(result.rows, "csv", metrics_path)
    policy_path = _out_path(cfg, f"policy_{tag}.json")
    save_policy_checkpoint(policy_path, result.policy, encoder, cfg, seed)
    if result.preferences is not None and result.preferences.n > 0:
        save_preferences(result.preferences,
                         _out_path(cfg, f"preferences_{tag}.jsonl"))
    if result.rows:
        s = compute_summary(result.rows)
        note = (f"{tag}: {s.n_episodes} episodes, max logs {s.max_logs}, "
                f"mean logs {s.mean_logs_per_episode:.3f}")
    else:
        note = (f"{tag}: no training episodes (no environment interaction); "
                f"evaluate with the eval command")
    return metrics_path, policy_path, note


def cmd_train(cfg: cfgmod.ExperimentConfig, ae_path, demos_path,
              seeds=None) -> list:
    """Run training for each seed; seeds run concurrently with fully
    independent state and per-seed metrics CSV and checkpoint files."""
    if not os.path.exists(ae_path):
        raise ConfigError(f"autoencoder checkpoint not found: {ae_path}")
    seeds = list(seeds) if seeds else [cfg.run_seed]
    needs_demos = cfg.algo is not AlgoKind.SAC_TRUE
    if needs_demos and not os.path.exists(demos_path):
        raise ConfigError(f"demo file not found: {demos_path}")
    run_cfg = RunConfig(sac=cfg.sac, reward=cfg.reward,
                        step_budget=cfg.step_budget,
                        buffer_capacity=cfg.buffer_capacity,
                        bc_epochs=cfg.bc_epochs)
    written = []
    if len(seeds) == 1:
        results = [_train_one_seed(cfg, run_cfg, ae_path, demos_path,
                                   needs_demos, seeds[0])]
    else:
        with ThreadPoolExecutor(max_workers=len(seeds)) as pool:
            futures = [pool.submit(_train_one_seed, cfg, run_cfg, ae_path,
                                   demos_path, needs_demos, seed)
                       for seed in seeds]
            results = [f.result() for f in futures]
    for metrics_path, policy_path, note in results:
        print(note)
        written.append((metrics_path, policy_path))
    return written


def cmd_eval(policy_arg, cfg: cfgmod.ExperimentConfig,
             n_episodes: int) -> RunSummary:
    """Greedy rollouts of a policy checkpoint, or of the built-in 'expert' /
    'random' reference policies."""
    if n_episodes < 1:
        raise ConfigError("n_episodes must be >= 1")
    if policy_arg == "expert":
        logs, lengths = evaluate_expert(cfg.env, n_episodes)
    elif policy_arg == "random":
        rng = np.random.default_rng(cfg.run_seed)
        logs, lengths = evaluate_random(cfg.env, n_episodes, rng)
    else:
        if not os.path.exists(policy_arg):
            raise ConfigError(f"policy checkpoint not found: {policy_arg}")
        policy, encoder_model, meta = load_policy_checkpoint(policy_arg)
        if meta["env"] != asdict(cfg.env):
            raise ConfigError(
                f"checkpoint was trained on a different environment: "
                f"{meta['env']} vs {asdict(cfg.env)}")
        logs, lengths = evaluate_policy(policy, encoder_model, cfg.env,
                                        n_episodes)
    summary = RunSummary(max_logs=max(logs),
                         mean_logs_per_episode=sum(logs) / len(logs),
                         n_episodes=len(logs))
    payload = summary.to_dict()
    payload["mean_episode_length"] = sum(lengths) / len(lengths)
    print(json.dumps(payload, indent=2))
    return summary


def cmd_summarize(metrics_path) -> RunSummary:
    rows = load_metrics(metrics_path)
    summary = compute_summary(rows)
    print(json.dumps(summary.to_dict(), indent=2))
    return summary


def _parse_seeds(raw: str) -> list:
    return [int(p) for p in raw.replace(",", " ").split()]


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="diprl",
        description="Preference-from-demonstration reward learning and "
                    "demo-seeded soft actor-critic on the chop-grid task.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-demos", help="write scripted-expert demonstrations")
    _add_config_flags(p)
    p.add_argument("--out", default=None, help="demo file path")

    p = sub.add_parser("train-ae", help="pretrain and freeze the autoencoder")
    _add_config_flags(p)
    p.add_argument("--demos", required=True, help="demo file from gen-demos")
    p.add_argument("--out", default=None, help="checkpoint path")

    p = sub.add_parser("train", help="run one training algorithm")
    _add_config_flags(p)
    p.add_argument("--ae", required=True, help="autoencoder checkpoint")
    p.add_argument("--demos", default="demos.jsonl", help="demo file")
    p.add_argument("--seeds", default=None,
                   help="comma-separated seed list; per-seed output files")

    p = sub.add_parser("eval", help="evaluate a policy checkpoint greedily")
    _add_config_flags(p)
    p.add_argument("--policy", required=True,
                   help="policy checkpoint path, or 'expert' / 'random'")
    p.add_argument("--episodes", type=int, default=50)

    p = sub.add_parser("summarize", help="summarize a metrics file")
    p.add_argument("--metrics", required=True, help="metrics CSV or JSON path")

    ns = parser.parse_args(argv)
    try:
        if ns.command == "gen-demos":
            cmd_gen_demos(_config_from_args(ns), out=ns.out)
        elif ns.command == "train-ae":
            cmd_train_ae(_config_from_args(ns), ns.demos, out=ns.out)
        elif ns.command == "train":
            seeds = _parse_seeds(ns.seeds) if ns.seeds else None
            cmd_train(_config_from_args(ns), ns.ae, ns.demos, seeds=seeds)
        elif ns.command == "eval":
            cmd_eval(ns.policy, _config_from_args(ns), ns.episodes)
        elif ns.command == "summarize":
            cmd_summarize(ns.metrics)
    except Exception as exc:  # surface component errors as CLI diagnostics
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
