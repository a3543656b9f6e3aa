"""Preference-based reward learning. Segment pairs are auto-labeled (demo
segment preferred over agent segment), and the reward head is fit by
Bradley-Terry negative log-likelihood with weight decay plus an L2 penalty on
the magnitude of predicted rewards."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from . import nets
from .autoencoder import AutoencoderModel, encode
from .data import DemoDataset, ReplayBuffer, TrajectorySegment, sample_segment
from .env import N_ACTIONS
from .errors import ConfigError, ContractError, NumericError


@dataclass(frozen=True)
class RewardConfig:
    weight_decay: float = 1e-4
    output_l2_coeff: float = 1e-3
    lr: float = 1e-3
    epochs_per_round: int = 5
    batch_pairs: int = 32
    segment_len: int = 16
    refresh_interval: int = 2000
    pairs_per_refresh: int = 200
    max_pairs: int = 10000
    hidden_dims: tuple = (64, 64)

    def __post_init__(self):
        if self.weight_decay < 0 or self.output_l2_coeff < 0:
            raise ConfigError("penalty coefficients must be >= 0")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if min(self.epochs_per_round, self.batch_pairs, self.segment_len,
               self.refresh_interval, self.pairs_per_refresh, self.max_pairs) < 1:
            raise ConfigError("schedule fields must be >= 1")


@dataclass
class RewardModel:
    params: nets.MlpParams
    cfg: RewardConfig


@dataclass
class PreferencePair:
    preferred: TrajectorySegment
    dispreferred: TrajectorySegment

    def __post_init__(self):
        if len(self.preferred) != len(self.dispreferred):
            raise ContractError("paired segments must share one length")


@dataclass
class PreferenceDataset:
    pairs: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.pairs)


def init_reward_model(latent_dim: int, cfg: RewardConfig, rng) -> RewardModel:
    dims = [latent_dim + N_ACTIONS, *cfg.hidden_dims, 1]
    return RewardModel(params=nets.init_mlp(dims, rng), cfg=cfg)


def _segment_embeddings(segment: TrajectorySegment,
                        encoder: AutoencoderModel) -> np.ndarray:
    # Cache holds (encoder, array); identity-checked so a different encoder
    # never serves stale embeddings.
    if segment.emb is not None and segment.emb[0] is encoder:
        return segment.emb[1]
    emb = encode(encoder, segment.observations)
    segment.emb = (encoder, emb)
    return emb


def _head_inputs(embeddings: np.ndarray, actions: np.ndarray) -> np.ndarray:
    one_hot = np.zeros((len(actions), N_ACTIONS), dtype=np.float64)
    one_hot[np.arange(len(actions)), actions] = 1.0
    return np.concatenate([embeddings, one_hot], axis=1)


def predict_reward(model: RewardModel, embedding: np.ndarray, action: int) -> float:
    emb = np.asarray(embedding, dtype=np.float64).reshape(1, -1)
    x = _head_inputs(emb, np.array([action]))
    return float(nets.mlp_forward(model.params, x)[0, 0])


def _segment_step_rewards(model: RewardModel, segment: TrajectorySegment,
                          encoder: AutoencoderModel) -> np.ndarray:
    emb = _segment_embeddings(segment, encoder)
    x = _head_inputs(emb, segment.actions)
    return nets.mlp_forward(model.params, x)[:, 0]


def segment_return(model: RewardModel, segment: TrajectorySegment,
                   encoder: AutoencoderModel) -> float:
    """Sum of per-step predicted rewards along the segment."""
    return float(np.sum(_segment_step_rewards(model, segment, encoder)))


def _sigmoid(gap: float) -> float:
    if gap >= 0:
        return float(1.0 / (1.0 + np.exp(-gap)))
    e = np.exp(gap)
    return float(e / (1.0 + e))


def preference_prob(model: RewardModel, tau_i: TrajectorySegment,
                    tau_j: TrajectorySegment, encoder: AutoencoderModel) -> float:
    """P(tau_i preferred over tau_j) = sigmoid of the return gap; stable at
    large gaps of either sign."""
    gap = (segment_return(model, tau_i, encoder)
           - segment_return(model, tau_j, encoder))
    return _sigmoid(gap)


def generate_preferences(demos: DemoDataset, buffer: ReplayBuffer,
                         n_pairs: int, k: int, rng) -> PreferenceDataset:
    """Auto-labeled pairs: the preferred side always comes from demos, the
    dispreferred side from agent experience. No human input anywhere."""
    pairs = [PreferencePair(preferred=sample_segment(demos, k, rng),
                            dispreferred=sample_segment(buffer, k, rng))
             for _ in range(n_pairs)]
    return PreferenceDataset(pairs=pairs)


def extend_preferences(dataset: PreferenceDataset, fresh: PreferenceDataset,
                       max_pairs: int) -> PreferenceDataset:
    """Append fresh pairs, then FIFO-trim to the cap."""
    merged = dataset.pairs + fresh.pairs
    if len(merged) > max_pairs:
        merged = merged[len(merged) - max_pairs:]
    return PreferenceDataset(pairs=merged)


def _dataset_gaps_and_rewards(model, dataset, encoder):
    gaps = np.empty(dataset.n)
    step_rewards = []
    for i, pair in enumerate(dataset.pairs):
        rp = _segment_step_rewards(model, pair.preferred, encoder)
        rd = _segment_step_rewards(model, pair.dispreferred, encoder)
        gaps[i] = rp.sum() - rd.sum()
        step_rewards.append(rp)
        step_rewards.append(rd)
    return gaps, np.concatenate(step_rewards)


def reward_loss(model: RewardModel, dataset: PreferenceDataset,
                encoder: AutoencoderModel) -> float:
    """Mean Bradley-Terry NLL over pairs plus output_l2_coeff times the mean
    squared per-step predicted reward over every step in the dataset. Weight
    decay lives in the optimizer, not here."""
    if dataset.n == 0:
        raise ValueError("empty preference dataset")
    gaps, steps = _dataset_gaps_and_rewards(model, dataset, encoder)
    nll = float(np.mean(np.logaddexp(0.0, -gaps)))
    return nll + model.cfg.output_l2_coeff * float(np.mean(steps**2))


def pairwise_accuracy(model: RewardModel, dataset: PreferenceDataset,
                      encoder: AutoencoderModel) -> float:
    """Fraction of pairs whose preferred segment gets the higher return."""
    gaps, _ = _dataset_gaps_and_rewards(model, dataset, encoder)
    return float(np.mean(gaps > 0))


def train_reward(model: RewardModel, dataset: PreferenceDataset,
                 encoder: AutoencoderModel, rng) -> RewardModel:
    """epochs_per_round minibatch passes of Adam on reward_loss; returns a new
    model, leaving the input parameters untouched."""
    if dataset.n == 0:
        raise ValueError("empty preference dataset")
    cfg = model.cfg
    params = model.params
    opt = nets.AdamState.zeros_like(params)

    for epoch in range(cfg.epochs_per_round):
        order = rng.permutation(dataset.n)
        for lo in range(0, dataset.n, cfg.batch_pairs):
            pick = order[lo:lo + cfg.batch_pairs]
            m = len(pick)
            k = len(dataset.pairs[pick[0]].preferred)
            xs = []
            for i in pick:
                pair = dataset.pairs[i]
                xs.append(_head_inputs(
                    _segment_embeddings(pair.preferred, encoder),
                    pair.preferred.actions))
                xs.append(_head_inputs(
                    _segment_embeddings(pair.dispreferred, encoder),
                    pair.dispreferred.actions))
            x = np.concatenate(xs)                      # (2*m*k, in)
            r = nets.mlp_forward(params, x)[:, 0]
            per_pair = r.reshape(m, 2, k)
            gaps = per_pair[:, 0, :].sum(axis=1) - per_pair[:, 1, :].sum(axis=1)
            loss = float(np.mean(np.logaddexp(0.0, -gaps)))
            loss += cfg.output_l2_coeff * float(np.mean(r**2))
            if not np.isfinite(loss):
                raise NumericError(
                    f"non-finite reward loss {loss} at epoch {epoch}, "
                    f"batch starting {lo}; max |gap| {np.max(np.abs(gaps))}")

            d_gap = (_np_sigmoid(gaps) - 1.0) / m       # d mean-NLL / d gap
            upstream = np.empty_like(per_pair)
            upstream[:, 0, :] = d_gap[:, None]
            upstream[:, 1, :] = -d_gap[:, None]
            upstream = upstream.reshape(-1, 1)
            upstream += 2.0 * cfg.output_l2_coeff * r[:, None] / r.size
            grads = nets.mlp_backward(params, x, upstream)
            params, opt = nets.adam_step(params, grads, opt, cfg.lr,
                                         cfg.weight_decay)
    return RewardModel(params=params, cfg=cfg)


def _np_sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    e = np.exp(x[~pos])
    out[~pos] = e / (1.0 + e)
    return out


def save_preferences(dataset: PreferenceDataset, path):
    """Audit dump: one line per pair, referencing source episodes/offsets."""
    header = {"kind": "diprl-preferences", "schema_version": 1, "n_pairs": dataset.n}
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for pair in dataset.pairs:
            rec = {}
            for role, seg in (("preferred", pair.preferred),
                              ("dispreferred", pair.dispreferred)):
                rec[role] = {"origin": seg.origin, "episode_id": seg.episode_id,
                             "start": seg.start, "length": len(seg)}
            fh.write(json.dumps(rec) + "\n")
