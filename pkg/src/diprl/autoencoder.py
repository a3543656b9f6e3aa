"""Observation autoencoder: pretrained once on a mixture of task and diverse
rollout observations, then frozen; every downstream head consumes its
embeddings, never raw observations."""

from __future__ import annotations

from dataclasses import dataclass, field, asdict, replace

import numpy as np

from . import nets
from .data import DemoDataset, random_episode
from .env import EnvConfig, obs_dim
from .errors import ConfigError, ProtocolError


@dataclass(frozen=True)
class AeConfig:
    latent_dim: int = 32
    weight_decay: float = 1e-5
    recon_l2_coeff: float = 1e-4
    task_batch_fraction: float = 0.10
    # 100 epochs at this width is what it takes for the embedding to carry the
    # inventory count faithfully; shallower settings leave the critics unable
    # to tell a 3-log state from a fresh one, which visibly stalls training.
    epochs: int = 100
    batch_size: int = 64
    lr: float = 3e-3
    hidden_dims: tuple = (128, 128)
    # The magnitude penalty slot: the default penalizes reconstruction
    # magnitudes; "latent" redirects it to embedding magnitudes instead.
    l2_target: str = "reconstruction"
    diverse_episodes: int = 50

    def __post_init__(self):
        if self.latent_dim < 1:
            raise ConfigError("latent_dim must be >= 1")
        if self.weight_decay < 0 or self.recon_l2_coeff < 0:
            raise ConfigError("penalty coefficients must be >= 0")
        if not 0.0 <= self.task_batch_fraction <= 1.0:
            raise ConfigError("task_batch_fraction must lie in [0, 1]")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if self.lr <= 0:
            raise ConfigError("lr must be > 0")
        if self.l2_target not in ("reconstruction", "latent"):
            raise ConfigError(f"unknown l2_target {self.l2_target!r}")
        if self.diverse_episodes < 1:
            raise ConfigError("diverse_episodes must be >= 1")


@dataclass
class AutoencoderModel:
    encoder: nets.MlpParams
    decoder: nets.MlpParams
    cfg: AeConfig
    frozen: bool = False
    loss_history: list = field(default_factory=list)


def init_autoencoder(observation_dim: int, cfg: AeConfig, rng) -> AutoencoderModel:
    if cfg.latent_dim >= observation_dim:
        raise ConfigError(f"latent_dim {cfg.latent_dim} must be smaller than "
                          f"the observation length {observation_dim}")
    enc_dims = [observation_dim, *cfg.hidden_dims, cfg.latent_dim]
    dec_dims = [cfg.latent_dim, *reversed(cfg.hidden_dims), observation_dim]
    return AutoencoderModel(
        encoder=nets.init_mlp(enc_dims, rng),
        decoder=nets.init_mlp(dec_dims, rng),
        cfg=cfg,
    )


def build_diverse_dataset(base_cfg: EnvConfig, n_episodes: int, rng) -> DemoDataset:
    """Uniform-random-policy rollouts across freshly drawn world seeds; the
    actions are recorded but the autoencoder only consumes observations."""
    if n_episodes < 1:
        raise ValueError("n_episodes must be >= 1")
    episodes = []
    for _ in range(n_episodes):
        seed = int(rng.integers(0, 2**31 - 1))
        cfg_i = replace(base_cfg, world_seed=seed)
        episodes.append(random_episode(cfg_i, rng, source="demo"))
    return DemoDataset(episodes=episodes, env=base_cfg)


def _stack_observations(demos: DemoDataset) -> np.ndarray:
    obs = [t.obs for ep in demos.episodes for t in ep]
    if not obs:
        raise ValueError("dataset holds no observations")
    return np.stack(obs)


def _reconstruction_loss(model: AutoencoderModel, x: np.ndarray):
    """Mean squared error plus the configured magnitude penalty; returns the
    scalar and the pieces needed for the backward pass."""
    z = nets.mlp_forward(model.encoder, x)
    recon = nets.mlp_forward(model.decoder, z)
    err = recon - x
    loss = float(np.mean(err**2))
    coeff = model.cfg.recon_l2_coeff
    if model.cfg.l2_target == "reconstruction":
        loss += coeff * float(np.mean(recon**2))
    else:
        loss += coeff * float(np.mean(z**2))
    return loss, z, recon, err


def ae_loss(model: AutoencoderModel, x: np.ndarray) -> float:
    return _reconstruction_loss(model, np.atleast_2d(x))[0]


def train_autoencoder(model: AutoencoderModel, task_demos: DemoDataset,
                      diverse: DemoDataset, cfg: AeConfig, rng) -> AutoencoderModel:
    """Joint encoder/decoder training on mixture batches holding exactly
    round(task_batch_fraction * batch_size) task observations each; the
    returned model is frozen."""
    if model.frozen:
        raise ProtocolError("autoencoder is frozen")
    task_obs = _stack_observations(task_demos)
    div_obs = _stack_observations(diverse)
    n_task = int(round(cfg.task_batch_fraction * cfg.batch_size))
    n_div = cfg.batch_size - n_task
    total = len(task_obs) + len(div_obs)
    batches_per_epoch = max(1, total // cfg.batch_size)

    enc, dec = model.encoder, model.decoder
    enc_opt = nets.AdamState.zeros_like(enc)
    dec_opt = nets.AdamState.zeros_like(dec)
    work = AutoencoderModel(encoder=enc, decoder=dec, cfg=cfg)
    history = []
    mixture = np.concatenate([task_obs, div_obs])

    for _ in range(cfg.epochs):
        for _ in range(batches_per_epoch):
            parts = []
            if n_task > 0:
                parts.append(task_obs[rng.integers(0, len(task_obs), size=n_task)])
            if n_div > 0:
                parts.append(div_obs[rng.integers(0, len(div_obs), size=n_div)])
            x = np.concatenate(parts)
            _, z, recon, err = _reconstruction_loss(work, x)

            d_recon = 2.0 * err / err.size
            if cfg.l2_target == "reconstruction":
                d_recon = d_recon + 2.0 * cfg.recon_l2_coeff * recon / recon.size
            dec_grads, dz = nets.mlp_backward_input(work.decoder, z, d_recon)
            if cfg.l2_target == "latent":
                dz = dz + 2.0 * cfg.recon_l2_coeff * z / z.size
            enc_grads = nets.mlp_backward(work.encoder, x, dz)

            work.decoder, dec_opt = nets.adam_step(
                work.decoder, dec_grads, dec_opt, cfg.lr, cfg.weight_decay)
            work.encoder, enc_opt = nets.adam_step(
                work.encoder, enc_grads, enc_opt, cfg.lr, cfg.weight_decay)
        history.append(_reconstruction_loss(work, mixture)[0])

    work.frozen = True
    work.loss_history = history
    return work


def encode(model: AutoencoderModel, obs: np.ndarray) -> np.ndarray:
    """Deterministic embedding; accepts a single observation or a batch."""
    return nets.mlp_forward(model.encoder, obs)


def assert_frozen(model: AutoencoderModel, checkpoint_before,
                  checkpoint_after) -> bool:
    """True iff the encoder is flagged frozen and its parameters are
    bit-identical between the two checkpoint files."""
    heads_before, _ = nets.load_heads(checkpoint_before)
    heads_after, _ = nets.load_heads(checkpoint_after)
    return (model.frozen
            and nets.params_equal(heads_before["encoder"], heads_after["encoder"]))


def save_autoencoder(path, model: AutoencoderModel):
    meta = {
        "frozen": model.frozen,
        "ae_config": {k: list(v) if isinstance(v, tuple) else v
                      for k, v in asdict(model.cfg).items()},
        "loss_history": model.loss_history,
    }
    nets.save_heads(path, {"encoder": model.encoder, "decoder": model.decoder}, meta)


def load_autoencoder(path) -> AutoencoderModel:
    heads, meta = nets.load_heads(path)
    raw = dict(meta["ae_config"])
    raw["hidden_dims"] = tuple(raw["hidden_dims"])
    return AutoencoderModel(
        encoder=heads["encoder"],
        decoder=heads["decoder"],
        cfg=AeConfig(**raw),
        frozen=bool(meta["frozen"]),
        loss_history=list(meta.get("loss_history", [])),
    )
