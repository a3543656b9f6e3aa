"""Representation pretraining: mixture batches, the frozen-encoder contract,
and reconstruction quality on a small grid."""

import dataclasses

import numpy as np
import pytest

from diprl import autoencoder as ae
from diprl import data, env, nets
from diprl.data import DemoDataset, expert_episode
from diprl.env import EnvConfig
from diprl.errors import ConfigError, ProtocolError

# small world keeps training in the low seconds
SMALL = EnvConfig(grid_size=8, view_radius=1, horizon=60)
SMALL_OBS = env.obs_dim(SMALL)  # 32
SMALL_AE = ae.AeConfig(latent_dim=8, hidden_dims=(32, 32), epochs=20,
                       diverse_episodes=10)


@pytest.fixture(scope="module")
def task_demos():
    return DemoDataset(episodes=[expert_episode(SMALL) for _ in range(5)],
                       env=SMALL)


@pytest.fixture(scope="module")
def diverse():
    return ae.build_diverse_dataset(SMALL, 10, np.random.default_rng(21))


@pytest.fixture(scope="module")
def trained(task_demos, diverse):
    rng = np.random.default_rng(22)
    model = ae.init_autoencoder(SMALL_OBS, SMALL_AE, rng)
    return ae.train_autoencoder(model, task_demos, diverse, SMALL_AE, rng)


class TestConfig:
    def test_latent_must_compress(self):
        with pytest.raises(ConfigError):
            ae.init_autoencoder(32, ae.AeConfig(latent_dim=32),
                                np.random.default_rng(0))

    def test_field_validation(self):
        with pytest.raises(ConfigError):
            ae.AeConfig(task_batch_fraction=1.5)
        with pytest.raises(ConfigError):
            ae.AeConfig(recon_l2_coeff=-1.0)
        with pytest.raises(ConfigError):
            ae.AeConfig(l2_target="weights")


class TestDiverseDataset:
    def test_multiple_layouts_represented(self, diverse):
        first_obs = {ep[0].obs.tobytes() for ep in diverse.episodes}
        assert len(first_obs) >= 2

    def test_more_varied_than_single_seed_demos(self):
        cfg = EnvConfig()
        demo_obs = np.stack([t.obs for t in expert_episode(cfg)])
        div = ae.build_diverse_dataset(cfg, 10, np.random.default_rng(21))
        div_obs = np.stack([t.obs for t in div.all_transitions()])
        assert div_obs.var(axis=0).mean() > demo_obs.var(axis=0).mean()

    def test_n_episodes_validated(self):
        with pytest.raises(ValueError):
            ae.build_diverse_dataset(SMALL, 0, np.random.default_rng(0))


class TestTraining:
    def test_returns_frozen_with_history(self, trained):
        assert trained.frozen
        assert len(trained.loss_history) == SMALL_AE.epochs

    def test_loss_history_non_increasing(self, trained):
        h = trained.loss_history
        violations = sum(b > a for a, b in zip(h, h[1:]))
        assert violations <= 1

    def test_beats_untrained_reconstruction(self, trained):
        held_out = EnvConfig(grid_size=8, view_radius=1, horizon=60,
                             world_seed=987)
        obs = np.stack([t.obs for t in expert_episode(held_out)])
        fresh = ae.init_autoencoder(SMALL_OBS, SMALL_AE,
                                    np.random.default_rng(23))

        def mse(model):
            z = ae.encode(model, obs)
            recon = nets.mlp_forward(model.decoder, z)
            return float(np.mean((recon - obs) ** 2))

        assert mse(fresh) / mse(trained) >= 5.0

    def test_frozen_model_refuses_training(self, trained, task_demos, diverse):
        with pytest.raises(ProtocolError):
            ae.train_autoencoder(trained, task_demos, diverse, SMALL_AE,
                                 np.random.default_rng(0))

    def test_empty_dataset_rejected(self):
        model = ae.init_autoencoder(SMALL_OBS, SMALL_AE,
                                    np.random.default_rng(0))
        with pytest.raises(ValueError):
            ae.train_autoencoder(model, DemoDataset(episodes=[]),
                                 DemoDataset(episodes=[]), SMALL_AE,
                                 np.random.default_rng(0))

    def test_heavier_output_penalty_shrinks_reconstructions(
            self, task_demos, diverse):
        sizes = {}
        for coeff in (1e-4, 10.0):
            cfg = dataclasses.replace(SMALL_AE, recon_l2_coeff=coeff, epochs=6)
            rng = np.random.default_rng(24)
            model = ae.train_autoencoder(
                ae.init_autoencoder(SMALL_OBS, cfg, rng),
                task_demos, diverse, cfg, rng)
            obs = np.stack([t.obs for t in task_demos.all_transitions()])
            recon = nets.mlp_forward(model.decoder, ae.encode(model, obs))
            sizes[coeff] = float(np.abs(recon).mean())
        assert sizes[10.0] < sizes[1e-4]


class _RecordingRng:
    """Duck-typed rng wrapper logging every integers() draw."""

    def __init__(self, seed):
        self.inner = np.random.default_rng(seed)
        self.calls = []

    def integers(self, low, high=None, size=None):
        self.calls.append((low, high, size))
        return self.inner.integers(low, high, size=size)


def test_batch_composition_exact(task_demos, diverse):
    cfg = dataclasses.replace(SMALL_AE, epochs=2, batch_size=64,
                              task_batch_fraction=0.10)
    rng = _RecordingRng(25)
    model = ae.init_autoencoder(SMALL_OBS, cfg, np.random.default_rng(26))
    ae.train_autoencoder(model, task_demos, diverse, cfg, rng)

    n_task_pool = task_demos.m
    n_div_pool = diverse.m
    task_draws = [c for c in rng.calls if c[1] == n_task_pool]
    div_draws = [c for c in rng.calls if c[1] == n_div_pool]
    assert task_draws and len(task_draws) == len(div_draws)
    # round(0.10 * 64) = 6 task observations, 58 diverse, in every batch
    assert all(c[2] == 6 for c in task_draws)
    assert all(c[2] == 58 for c in div_draws)


class TestEncode:
    def test_deterministic_and_sized(self, trained):
        obs = np.stack([t.obs for t in expert_episode(SMALL)])[:4]
        a = ae.encode(trained, obs)
        b = ae.encode(trained, obs)
        assert a.shape == (4, SMALL_AE.latent_dim)
        assert np.array_equal(a, b)

    def test_batch_matches_single(self, trained):
        obs = np.stack([t.obs for t in expert_episode(SMALL)])[:3]
        batched = ae.encode(trained, obs)
        for i in range(3):
            np.testing.assert_allclose(batched[i], ae.encode(trained, obs[i]),
                                       rtol=0, atol=1e-12)

    def test_log_counter_reaches_embedding(self, trained):
        obs = expert_episode(SMALL)[0].obs.copy()
        bumped = obs.copy()
        bumped[-1] = 1.0
        assert not np.array_equal(ae.encode(trained, obs),
                                  ae.encode(trained, bumped))


class TestFreezeContract:
    def test_identical_checkpoints_pass(self, trained, tmp_path):
        before, after = tmp_path / "b.json", tmp_path / "a.json"
        nets.save_heads(before, {"encoder": trained.encoder}, {})
        nets.save_heads(after, {"encoder": trained.encoder}, {})
        assert ae.assert_frozen(trained, before, after)

    def test_mutated_encoder_fails(self, trained, tmp_path):
        before, after = tmp_path / "b.json", tmp_path / "a.json"
        nets.save_heads(before, {"encoder": trained.encoder}, {})
        weights = [w.copy() for w in trained.encoder.weights]
        weights[0][0, 0] += 1e-9
        mutated = nets.MlpParams(weights=weights,
                                 biases=[b.copy() for b in trained.encoder.biases],
                                 activations=list(trained.encoder.activations))
        nets.save_heads(after, {"encoder": mutated}, {})
        assert not ae.assert_frozen(trained, before, after)


class TestCheckpointFile:
    def test_round_trip(self, trained, tmp_path):
        path = tmp_path / "ae.json"
        ae.save_autoencoder(path, trained)
        loaded = ae.load_autoencoder(path)
        assert loaded.frozen == trained.frozen
        assert loaded.cfg == trained.cfg
        assert loaded.loss_history == trained.loss_history
        assert nets.params_equal(loaded.encoder, trained.encoder)
        assert nets.params_equal(loaded.decoder, trained.decoder)
