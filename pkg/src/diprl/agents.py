"""Discrete soft actor-critic engine with four reward-source modes: learned
preference reward, binary demo/agent stamping, the true environment reward,
and plain behavioral cloning.

All expectations over the 5-action set are exact; twin critics are combined by
elementwise min in targets and in the policy objective; targets track online
weights by polyak averaging."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from . import env as envmod
from . import nets
from .autoencoder import AutoencoderModel, encode
from .data import (DemoDataset, ReplayBuffer, Transition, append_episode,
                   sample_mixed_batch)
from .env import N_ACTIONS, EnvConfig
from .errors import ConfigError, ContractError, NumericError, ShapeError
from .metrics import MetricsRow
from .reward import (PreferenceDataset, RewardConfig, RewardModel,
                     extend_preferences, generate_preferences,
                     init_reward_model, train_reward)
from .reward import _head_inputs as _reward_inputs


class AlgoKind(enum.Enum):
    DIP_RL = "diprl"
    SQIL = "sqil"
    SAC_TRUE = "sac_true"
    BC = "bc"


@dataclass(frozen=True)
class SacConfig:
    gamma: float = 0.99
    alpha: float = 0.05
    polyak: float = 0.005
    lr: float = 3e-4
    batch_size: int = 64
    demo_fraction: float = 0.25
    updates_per_env_step: int = 1
    warmup_steps: int = 1000
    hidden_dims: tuple = (64, 64)

    def __post_init__(self):
        if not 0.0 < self.gamma < 1.0:
            raise ConfigError("gamma must lie in (0, 1)")
        if self.alpha <= 0:
            raise ConfigError("alpha must be > 0")
        if not 0.0 < self.polyak < 1.0:
            raise ConfigError("polyak must lie in (0, 1)")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not 0.0 <= self.demo_fraction <= 1.0:
            raise ConfigError("demo_fraction must lie in [0, 1]")
        if self.updates_per_env_step < 0 or self.warmup_steps < 0:
            raise ConfigError("updates_per_env_step and warmup_steps must be >= 0")


@dataclass
class CriticPair:
    q1: nets.MlpParams
    q2: nets.MlpParams
    target1: nets.MlpParams
    target2: nets.MlpParams


@dataclass
class PolicyNetwork:
    params: nets.MlpParams


def init_critics(latent_dim: int, cfg: SacConfig, rng) -> CriticPair:
    dims = [latent_dim, *cfg.hidden_dims, N_ACTIONS]
    q1 = nets.init_mlp(dims, rng)
    q2 = nets.init_mlp(dims, rng)
    return CriticPair(q1=q1, q2=q2, target1=q1.copy(), target2=q2.copy())


def init_policy(latent_dim: int, cfg: SacConfig, rng) -> PolicyNetwork:
    return PolicyNetwork(params=nets.init_mlp(
        [latent_dim, *cfg.hidden_dims, N_ACTIONS], rng))


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def _policy_logs(policy: PolicyNetwork, embeddings: np.ndarray):
    logp = _log_softmax(nets.mlp_forward(policy.params, embeddings))
    return np.exp(logp), logp


def policy_distribution(policy: PolicyNetwork, embedding: np.ndarray) -> np.ndarray:
    """Softmax action distribution for one embedding."""
    probs, _ = _policy_logs(policy, np.asarray(embedding, dtype=np.float64))
    return probs


def _embed_transitions(batch: list, encoder: AutoencoderModel,
                       nxt: bool = False) -> np.ndarray:
    """Gather cached embeddings, encoding any misses in one batched pass. The
    cache is identity-keyed to the encoder, which is frozen during a run."""
    attr = "next_emb" if nxt else "emb"
    out = [None] * len(batch)
    missing = []
    for i, t in enumerate(batch):
        cached = getattr(t, attr)
        if cached is not None and cached[0] is encoder:
            out[i] = cached[1]
        else:
            missing.append(i)
    if missing:
        obs = np.stack([batch[i].next_obs if nxt else batch[i].obs
                        for i in missing])
        embs = encode(encoder, obs)
        for j, i in enumerate(missing):
            setattr(batch[i], attr, (encoder, embs[j]))
            out[i] = embs[j]
    return np.stack(out)


def label_batch_rewards(batch: list, algo: AlgoKind,
                        reward_model: RewardModel | None,
                        encoder: AutoencoderModel | None) -> np.ndarray:
    """Per-transition reward vector for a sampled batch.

    DIP_RL scores every transition (demo and agent alike) with one snapshot of
    the learned reward head; SQIL stamps 1.0 on demo-sourced and 0.0 on
    agent-sourced transitions; SAC_TRUE reads the stored environment reward.
    The stored reward is never consulted on the DIP_RL or SQIL paths.
    """
    if not batch:
        raise ContractError("empty batch")
    if algo is AlgoKind.DIP_RL:
        if reward_model is None or encoder is None:
            raise ConfigError("learned-reward labeling needs a reward model "
                              "and an encoder")
        embs = _embed_transitions(batch, encoder)
        actions = np.fromiter((t.action for t in batch), dtype=np.int64,
                              count=len(batch))
        x = _reward_inputs(embs, actions)
        return nets.mlp_forward(reward_model.params, x)[:, 0]
    if algo is AlgoKind.SQIL:
        return np.fromiter((1.0 if t.source == "demo" else 0.0 for t in batch),
                           dtype=np.float64, count=len(batch))
    if algo is AlgoKind.SAC_TRUE:
        return np.fromiter((t.hidden_reward for t in batch), dtype=np.float64,
                           count=len(batch))
    raise ConfigError(f"{algo} has no reward labeling")


def _soft_target_values(critics: CriticPair, policy: PolicyNetwork,
                        embeddings: np.ndarray, alpha: float) -> np.ndarray:
    qmin = np.minimum(nets.mlp_forward(critics.target1, embeddings),
                      nets.mlp_forward(critics.target2, embeddings))
    probs, logp = _policy_logs(policy, embeddings)
    return np.sum(probs * (qmin - alpha * logp), axis=-1)


def soft_target_value(critics: CriticPair, policy: PolicyNetwork,
                      embedding: np.ndarray, alpha: float) -> float:
    """Exact E_a~pi[min(Qbar1, Qbar2)(o,a) - alpha*log pi(a|o)]."""
    emb = np.asarray(embedding, dtype=np.float64).reshape(1, -1)
    return float(_soft_target_values(critics, policy, emb, alpha)[0])


def _batch_arrays(batch: list, encoder: AutoencoderModel):
    embs = _embed_transitions(batch, encoder)
    next_embs = _embed_transitions(batch, encoder, nxt=True)
    actions = np.fromiter((t.action for t in batch), dtype=np.int64,
                          count=len(batch))
    dones = np.fromiter((1.0 if t.done else 0.0 for t in batch),
                        dtype=np.float64, count=len(batch))
    return embs, next_embs, actions, dones


def _critic_targets(critics, batch, rewards, policy, cfg, encoder):
    embs, next_embs, actions, dones = _batch_arrays(batch, encoder)
    rewards = np.asarray(rewards, dtype=np.float64)
    if rewards.shape != (len(batch),):
        raise ShapeError(f"rewards shape {rewards.shape} does not match "
                         f"batch of {len(batch)}")
    next_v = _soft_target_values(critics, policy, next_embs, cfg.alpha)
    targets = rewards + cfg.gamma * (1.0 - dones) * next_v
    return embs, actions, targets


def critic_loss(critics: CriticPair, batch: list, rewards, policy: PolicyNetwork,
                cfg: SacConfig, encoder: AutoencoderModel) -> float:
    """Mean over the batch and over both Q-heads of the squared error against
    r + gamma*(1-done)*soft_target_value(next); targets carry no gradient."""
    embs, actions, targets = _critic_targets(critics, batch, rewards, policy,
                                             cfg, encoder)
    idx = np.arange(len(batch))
    q1 = nets.mlp_forward(critics.q1, embs)[idx, actions]
    q2 = nets.mlp_forward(critics.q2, embs)[idx, actions]
    return float((np.sum((q1 - targets)**2) + np.sum((q2 - targets)**2))
                 / (2 * len(batch)))


def policy_loss(policy: PolicyNetwork, critics: CriticPair, batch: list,
                alpha: float, encoder: AutoencoderModel) -> float:
    """Mean over the batch of sum_a pi(a|o)*(alpha*log pi(a|o) - min(Q1,Q2));
    gradients flow only into the policy."""
    embs = _embed_transitions(batch, encoder)
    qmin = np.minimum(nets.mlp_forward(critics.q1, embs),
                      nets.mlp_forward(critics.q2, embs))
    probs, logp = _policy_logs(policy, embs)
    return float(np.mean(np.sum(probs * (alpha * logp - qmin), axis=-1)))


def polyak_update(critics: CriticPair, polyak: float) -> CriticPair:
    """target <- (1 - polyak)*target + polyak*online, elementwise, both heads."""
    def blend(target: nets.MlpParams, online: nets.MlpParams) -> nets.MlpParams:
        return nets.MlpParams(
            weights=[(1.0 - polyak) * tw + polyak * ow
                     for tw, ow in zip(target.weights, online.weights)],
            biases=[(1.0 - polyak) * tb + polyak * ob
                    for tb, ob in zip(target.biases, online.biases)],
            activations=list(online.activations),
        )
    return CriticPair(q1=critics.q1, q2=critics.q2,
                      target1=blend(critics.target1, critics.q1),
                      target2=blend(critics.target2, critics.q2))


def bc_loss(policy: PolicyNetwork, demo_batch: list,
            encoder: AutoencoderModel) -> float:
    """Mean cross-entropy of demo actions under the policy."""
    for t in demo_batch:
        if t.source != "demo":
            raise ContractError("behavioral cloning consumes demo batches only")
    embs = _embed_transitions(demo_batch, encoder)
    _, logp = _policy_logs(policy, embs)
    idx = np.arange(len(demo_batch))
    actions = np.fromiter((t.action for t in demo_batch), dtype=np.int64,
                          count=len(demo_batch))
    return float(-np.mean(logp[idx, actions]))


# --- gradient steps -----------------------------------------------------------

def _critic_step(critics, opt1, opt2, batch, rewards, policy, cfg, encoder):
    embs, actions, targets = _critic_targets(critics, batch, rewards, policy,
                                             cfg, encoder)
    n = len(batch)
    idx = np.arange(n)
    new_heads = []
    for params, opt in ((critics.q1, opt1), (critics.q2, opt2)):
        q = nets.mlp_forward(params, embs)
        upstream = np.zeros_like(q)
        upstream[idx, actions] = (q[idx, actions] - targets) / n
        grads = nets.mlp_backward(params, embs, upstream)
        new_heads.append(nets.adam_step(params, grads, opt, cfg.lr))
    (q1, opt1), (q2, opt2) = new_heads
    return CriticPair(q1=q1, q2=q2, target1=critics.target1,
                      target2=critics.target2), opt1, opt2


def _policy_step(policy, opt, critics, batch, cfg, encoder):
    embs = _embed_transitions(batch, encoder)
    qmin = np.minimum(nets.mlp_forward(critics.q1, embs),
                      nets.mlp_forward(critics.q2, embs))
    probs, logp = _policy_logs(policy, embs)
    g = cfg.alpha * logp - qmin
    per_row = np.sum(probs * g, axis=-1, keepdims=True)
    upstream = probs * (g - per_row) / len(batch)
    grads = nets.mlp_backward(policy.params, embs, upstream)
    params, opt = nets.adam_step(policy.params, grads, opt, cfg.lr)
    return PolicyNetwork(params=params), opt


def _bc_step(policy, opt, demo_batch, lr, encoder):
    embs = _embed_transitions(demo_batch, encoder)
    probs, logp = _policy_logs(policy, embs)
    n = len(demo_batch)
    idx = np.arange(n)
    actions = np.fromiter((t.action for t in demo_batch), dtype=np.int64, count=n)
    loss = float(-np.mean(logp[idx, actions]))
    one_hot = np.zeros_like(probs)
    one_hot[idx, actions] = 1.0
    grads = nets.mlp_backward(policy.params, embs, (probs - one_hot) / n)
    params, opt = nets.adam_step(policy.params, grads, opt, lr)
    return PolicyNetwork(params=params), opt, loss


# --- full training runs -------------------------------------------------------

@dataclass
class RunConfig:
    sac: SacConfig = field(default_factory=SacConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    step_budget: int = 100_000
    buffer_capacity: int = 100_000
    bc_epochs: int = 50

    def __post_init__(self):
        if self.step_budget < 0 or self.bc_epochs < 1 or self.buffer_capacity < 1:
            raise ConfigError("run sizes out of range")


@dataclass
class TrainResult:
    policy: PolicyNetwork
    critics: CriticPair | None
    reward_model: RewardModel | None
    preferences: PreferenceDataset | None
    rows: list
    env_steps: int


def _has_segment_source(buffer: ReplayBuffer, k: int) -> bool:
    return any(not ep.truncated and len(ep.steps) >= k for ep in buffer.episodes)


def train_run(algo: AlgoKind, env_cfg: EnvConfig, demos: DemoDataset | None,
              encoder: AutoencoderModel, cfg: RunConfig, rng,
              seed: int = 0) -> TrainResult:
    """One full training run; emits one MetricsRow per finished episode.

    DIP_RL: act, store, periodically regenerate auto-labeled preferences and
    refit the reward head, and on every step update critics and policy on a
    mixed demo/agent batch relabeled by the current reward snapshot. SQIL is
    the same loop with binary stamping instead of a reward model. SAC_TRUE
    draws agent-only batches labeled by the stored environment reward. BC
    never touches the environment: it is pure supervised learning on demos.
    """
    if not encoder.frozen:
        raise ContractError("encoder must be frozen before a training run")
    needs_demos = algo in (AlgoKind.DIP_RL, AlgoKind.SQIL, AlgoKind.BC)
    if needs_demos and (demos is None or demos.m == 0):
        raise ConfigError(f"{algo.value} requires demonstrations")

    sac = cfg.sac
    latent = encoder.cfg.latent_dim
    policy = init_policy(latent, sac, rng)

    if algo is AlgoKind.BC:
        opt = nets.AdamState.zeros_like(policy.params)
        flat = demos.all_transitions()
        for _ in range(cfg.bc_epochs):
            order = rng.permutation(len(flat))
            for lo in range(0, len(flat), sac.batch_size):
                batch = [flat[i] for i in order[lo:lo + sac.batch_size]]
                policy, opt, loss = _bc_step(policy, opt, batch, sac.lr, encoder)
                if not np.isfinite(loss):
                    raise NumericError(f"non-finite cloning loss {loss}")
        return TrainResult(policy=policy, critics=None, reward_model=None,
                           preferences=None, rows=[], env_steps=0)

    critics = init_critics(latent, sac, rng)
    opt_q1 = nets.AdamState.zeros_like(critics.q1)
    opt_q2 = nets.AdamState.zeros_like(critics.q2)
    opt_pi = nets.AdamState.zeros_like(policy.params)

    reward_model = None
    preferences = PreferenceDataset()
    rcfg = cfg.reward
    if algo is AlgoKind.DIP_RL:
        reward_model = init_reward_model(latent, rcfg, rng)

    buffer = ReplayBuffer(cfg.buffer_capacity)
    demo_fraction = sac.demo_fraction if algo is not AlgoKind.SAC_TRUE else 0.0
    batch_demos = demos if algo is not AlgoKind.SAC_TRUE else None

    rows = []
    state, obs = envmod.reset(env_cfg)
    episode: list[Transition] = []
    episode_index = 0

    for env_step in range(1, cfg.step_budget + 1):
        emb = None
        if env_step <= sac.warmup_steps:
            action = int(rng.integers(N_ACTIONS))
        else:
            emb = encode(encoder, obs)
            probs = policy_distribution(policy, emb)
            action = int(rng.choice(N_ACTIONS, p=probs))
        state, next_obs, true_reward, done = envmod.step(state, action)
        tr = Transition(obs, action, next_obs, done, true_reward, "agent")
        if emb is not None:
            tr.emb = (encoder, emb)
        episode.append(tr)
        obs = next_obs

        if done:
            rows.append(MetricsRow(env_step=env_step,
                                   episode_index=episode_index,
                                   episode_logs=state.logs_collected,
                                   episode_length=state.t,
                                   algo=algo.value, seed=seed))
            append_episode(buffer, episode)
            episode = []
            episode_index += 1
            state, obs = envmod.reset(env_cfg)

        if (algo is AlgoKind.DIP_RL
                and env_step % rcfg.refresh_interval == 0
                and _has_segment_source(buffer, rcfg.segment_len)):
            fresh = generate_preferences(demos, buffer, rcfg.pairs_per_refresh,
                                         rcfg.segment_len, rng)
            preferences = extend_preferences(preferences, fresh, rcfg.max_pairs)
            reward_model = train_reward(reward_model, preferences, encoder, rng)

        if env_step > sac.warmup_steps and len(buffer) > 0:
            for _ in range(sac.updates_per_env_step):
                batch = sample_mixed_batch(buffer, batch_demos, sac.batch_size,
                                           demo_fraction, rng)
                rewards = label_batch_rewards(batch, algo, reward_model,
                                              encoder)
                critics, opt_q1, opt_q2 = _critic_step(
                    critics, opt_q1, opt_q2, batch, rewards, policy, sac,
                    encoder)
                policy, opt_pi = _policy_step(policy, opt_pi, critics, batch,
                                              sac, encoder)
                critics = polyak_update(critics, sac.polyak)

    return TrainResult(policy=policy, critics=critics,
                       reward_model=reward_model, preferences=preferences,
                       rows=rows, env_steps=cfg.step_budget)


def evaluate_policy(policy: PolicyNetwork, encoder: AutoencoderModel,
                    env_cfg: EnvConfig, n_episodes: int, rng=None):
    """Greedy (argmax) rollouts; returns (logs, lengths) per episode."""
    logs, lengths = [], []
    for _ in range(n_episodes):
        state, obs = envmod.reset(env_cfg)
        while not state.done:
            probs = policy_distribution(policy, encode(encoder, obs))
            action = int(np.argmax(probs))
            state, obs, _, _ = envmod.step(state, action)
        logs.append(state.logs_collected)
        lengths.append(state.t)
    return logs, lengths


def evaluate_random(env_cfg: EnvConfig, n_episodes: int, rng):
    """Uniform-random-action rollouts; returns (logs, lengths) per episode."""
    logs, lengths = [], []
    for _ in range(n_episodes):
        state, _ = envmod.reset(env_cfg)
        while not state.done:
            state, _, _, _ = envmod.step(state, int(rng.integers(N_ACTIONS)))
        logs.append(state.logs_collected)
        lengths.append(state.t)
    return logs, lengths


def evaluate_expert(env_cfg: EnvConfig, n_episodes: int):
    """Scripted-expert rollouts; returns (logs, lengths) per episode."""
    logs, lengths = [], []
    for _ in range(n_episodes):
        state, _ = envmod.reset(env_cfg)
        while not state.done:
            state, _, _, _ = envmod.step(state, envmod.scripted_expert(state))
        logs.append(state.logs_collected)
        lengths.append(state.t)
    return logs, lengths
