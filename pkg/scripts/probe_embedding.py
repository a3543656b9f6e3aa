#!/usr/bin/env python3
"""Measure how much task state survives the frozen embedding.

Fits least-squares readouts of interpretable state variables (collected-log
count, agent position) from the embeddings of random-policy rollouts and
reports R^2 per variable. A low score on the log counter is a red flag: the
critics then cannot tell a nearly-finished episode from a fresh one, which
shows up downstream as agents that refuse to finish.

Usage: probe_embedding.py [--ae checkpoint.json] [--episodes 30]
Without --ae, trains a fresh autoencoder at the default configuration first.
"""

import argparse
import os
import sys

import numpy as np

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from diprl import env as envmod
from diprl.autoencoder import (AeConfig, build_diverse_dataset, encode,
                               init_autoencoder, load_autoencoder,
                               train_autoencoder)
from diprl.data import DemoDataset, expert_episode
from diprl.env import EnvConfig, N_ACTIONS, obs_dim


def rollout_states(cfg: EnvConfig, n_episodes: int, rng):
    """Observations paired with the state variables we try to read back."""
    obs_rows, targets = [], []
    for _ in range(n_episodes):
        state, obs = envmod.reset(cfg)
        while not state.done:
            obs_rows.append(obs)
            targets.append((state.logs_collected, state.row, state.col))
            state, obs, _, _ = envmod.step(state,
                                           int(rng.integers(N_ACTIONS)))
    return np.stack(obs_rows), np.asarray(targets, dtype=np.float64)


def r_squared(embeddings: np.ndarray, target: np.ndarray) -> float:
    x = np.concatenate([embeddings, np.ones((len(embeddings), 1))], axis=1)
    coef, *_ = np.linalg.lstsq(x, target, rcond=None)
    pred = x @ coef
    ss_res = float(np.sum((target - pred) ** 2))
    ss_tot = float(np.sum((target - target.mean()) ** 2))
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--ae", default=None, help="autoencoder checkpoint")
    parser.add_argument("--episodes", type=int, default=30)
    parser.add_argument("--seed", type=int, default=0)
    ns = parser.parse_args(argv)

    cfg = EnvConfig()
    rng = np.random.default_rng(ns.seed)
    if ns.ae:
        model = load_autoencoder(ns.ae)
        print(f"loaded {ns.ae}")
    else:
        ae_cfg = AeConfig()
        demos = DemoDataset(episodes=[expert_episode(cfg) for _ in range(25)],
                            env=cfg)
        diverse = build_diverse_dataset(cfg, ae_cfg.diverse_episodes, rng)
        model = init_autoencoder(obs_dim(cfg), ae_cfg, rng)
        model = train_autoencoder(model, demos, diverse, ae_cfg, rng)
        print(f"trained fresh autoencoder: epochs {ae_cfg.epochs}, "
              f"hidden {ae_cfg.hidden_dims}, final loss "
              f"{model.loss_history[-1]:.5f}")

    obs, targets = rollout_states(cfg, ns.episodes, rng)
    emb = encode(model, obs)
    names = ("logs_collected", "agent_row", "agent_col")
    print(f"{len(obs)} observations from {ns.episodes} random episodes")
    for i, name in enumerate(names):
        print(f"  R^2[{name}] = {r_squared(emb, targets[:, i]):.3f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
