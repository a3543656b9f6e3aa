"""Config files, metrics export, and the CLI front door end to end."""

import json

import numpy as np
import pytest

from diprl import cli, config as cfgmod
from diprl.agents import AlgoKind
from diprl.data import load_demos
from diprl.errors import (ConfigError, ContractError, ParseError, SummaryError)
from diprl.metrics import (CSV_COLUMNS, MetricsRow, compute_summary,
                           export_metrics, load_metrics)

ROWS = [MetricsRow(env_step=1000, episode_index=0, episode_logs=3,
                   episode_length=250, algo="diprl", seed=0),
        MetricsRow(env_step=1500, episode_index=1, episode_logs=4,
                   episode_length=120, algo="diprl", seed=0),
        MetricsRow(env_step=2000, episode_index=2, episode_logs=0,
                   episode_length=400, algo="diprl", seed=0)]

GOLDEN_CSV = (
    "env_step,episode_index,episode_logs,episode_length,algo,seed\n"
    "1000,0,3,250,diprl,0\n"
    "1500,1,4,120,diprl,0\n"
    "2000,2,0,400,diprl,0\n")


class TestMetrics:
    def test_row_rejects_negative_fields(self):
        with pytest.raises(ContractError):
            MetricsRow(env_step=-1, episode_index=0, episode_logs=0,
                       episode_length=0, algo="bc", seed=0)
        with pytest.raises(ContractError):
            MetricsRow(env_step=0, episode_index=0, episode_logs=-2,
                       episode_length=0, algo="bc", seed=0)

    def test_summary_values(self):
        s = compute_summary(ROWS)
        assert s.max_logs == 4
        assert s.mean_logs_per_episode == pytest.approx(7.0 / 3.0)
        assert s.n_episodes == 3

    def test_summary_empty_rejected(self):
        with pytest.raises(SummaryError):
            compute_summary([])

    def test_csv_golden_bytes(self, tmp_path):
        path = tmp_path / "m.csv"
        export_metrics(ROWS, "csv", path)
        assert path.read_bytes() == GOLDEN_CSV.encode()

    def test_csv_rewrite_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        export_metrics(ROWS, "csv", a)
        export_metrics(ROWS, "csv", b)
        assert a.read_bytes() == b.read_bytes()

    @pytest.mark.parametrize("fmt,name", [("csv", "m.csv"), ("json", "m.json")])
    def test_round_trip(self, tmp_path, fmt, name):
        path = tmp_path / name
        export_metrics(ROWS, fmt, path)
        assert load_metrics(path) == ROWS

    def test_json_payload_shape(self, tmp_path):
        path = tmp_path / "m.json"
        export_metrics(ROWS, "json", path)
        payload = json.loads(path.read_text())
        assert payload[1] == {"env_step": 1500, "episode_index": 1,
                              "episode_logs": 4, "episode_length": 120,
                              "algo": "diprl", "seed": 0}

    def test_unknown_format_rejected(self, tmp_path):
        with pytest.raises(ValueError):
            export_metrics(ROWS, "yaml", tmp_path / "m.yaml")

    def test_bad_header_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text("env_step,episode_logs\n1,2\n")
        with pytest.raises(ParseError):
            load_metrics(path)

    def test_bad_record_rejected(self, tmp_path):
        path = tmp_path / "m.csv"
        path.write_text(",".join(CSV_COLUMNS) + "\n1,0,three,10,bc,0\n")
        with pytest.raises(ParseError):
            load_metrics(path)

    def test_empty_rows_round_trip(self, tmp_path):
        path = tmp_path / "m.csv"
        export_metrics([], "csv", path)
        assert load_metrics(path) == []


class TestConfigFile:
    def test_parse_key_value_lines(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("# a comment\n"
                        "env.grid_size = 10\n"
                        "\n"
                        "sac.lr=0.001   # trailing comment\n"
                        "algo = sqil\n")
        assert cfgmod.parse_config_file(path) == {
            "env.grid_size": "10", "sac.lr": "0.001", "algo": "sqil"}

    def test_missing_equals_names_line(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("env.grid_size = 10\nnot a setting\n")
        with pytest.raises(ParseError, match="line 2"):
            cfgmod.parse_config_file(path)

    def test_empty_value_rejected(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("env.grid_size =\n")
        with pytest.raises(ParseError, match="line 1"):
            cfgmod.parse_config_file(path)

    def test_build_coerces_types(self):
        cfg = cfgmod.build_config({"env.grid_size": "10", "sac.lr": "0.001",
                                   "ae.hidden_dims": "(32, 16)",
                                   "algo": "sac_true", "step_budget": "5000"})
        assert cfg.env.grid_size == 10
        assert cfg.sac.lr == 0.001
        assert cfg.ae.hidden_dims == (32, 16)
        assert cfg.algo is AlgoKind.SAC_TRUE
        assert cfg.step_budget == 5000

    def test_defaults_untouched_by_empty_mapping(self):
        cfg = cfgmod.build_config({})
        assert cfg.env.grid_size == cfgmod.ExperimentConfig().env.grid_size
        assert cfg.algo is AlgoKind.DIP_RL

    def test_unknown_section_and_key(self):
        with pytest.raises(ConfigError):
            cfgmod.build_config({"optimizer.lr": "0.1"})
        with pytest.raises(ConfigError):
            cfgmod.build_config({"env.n_rocks": "3"})
        with pytest.raises(ConfigError):
            cfgmod.build_config({"budget": "100"})

    def test_algo_parsing(self):
        for raw, kind in (("diprl", AlgoKind.DIP_RL), ("sqil", AlgoKind.SQIL),
                          ("SAC_TRUE", AlgoKind.SAC_TRUE), ("bc", AlgoKind.BC)):
            assert cfgmod.parse_algo(raw) is kind
        with pytest.raises(ConfigError, match="diprl"):
            cfgmod.parse_algo("ppo")

    def test_known_keys_cover_sections(self):
        keys = cfgmod.known_keys()
        for probe in ("env.grid_size", "sac.gamma", "reward.segment_len",
                      "ae.latent_dim", "algo", "step_budget"):
            assert probe in keys


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One tiny CLI pipeline: demos -> autoencoder -> sac_true training."""
    out = tmp_path_factory.mktemp("cli")
    base = ["--output_dir", str(out), "--n_demos", "3",
            "--ae.epochs", "2", "--ae.latent_dim", "8",
            "--ae.hidden_dims", "(16,16)", "--ae.diverse_episodes", "3"]
    assert cli.main(["gen-demos", *base]) == 0
    demos = str(out / "demos.jsonl")
    assert cli.main(["train-ae", *base, "--demos", demos]) == 0
    ae = str(out / "autoencoder.json")
    assert cli.main(["train", *base, "--ae", ae, "--demos", demos,
                     "--algo", "sac_true", "--steps", "900",
                     "--sac.warmup_steps", "100"]) == 0
    return out


class TestCli:
    def test_gen_demos_file(self, pipeline):
        demos = load_demos(str(pipeline / "demos.jsonl"))
        assert len(demos.episodes) == 3
        for ep in demos.episodes:
            assert sum(t._hidden_reward for t in ep) == 4.0

    def test_train_outputs(self, pipeline):
        tag = "sac_true_seed0"
        rows = load_metrics(str(pipeline / f"metrics_{tag}.csv"))
        assert rows
        assert all(r.algo == "sac_true" and r.seed == 0 for r in rows)
        assert rows[-1].env_step <= 900
        assert (pipeline / f"policy_{tag}.json").exists()

    def test_encoder_untouched_by_training(self, pipeline):
        tag = "sac_true_seed0"
        before = (pipeline / f"encoder_before_{tag}.json").read_bytes()
        after = (pipeline / f"encoder_after_{tag}.json").read_bytes()
        assert before == after

    def test_policy_checkpoint_round_trip(self, pipeline):
        policy, encoder, meta = cli.load_policy_checkpoint(
            str(pipeline / "policy_sac_true_seed0.json"))
        assert meta["algo"] == "sac_true"
        assert encoder.frozen
        assert encoder.cfg.latent_dim == 8
        assert policy.params.weights[0].shape[1] == 8

    def test_eval_checkpoint(self, pipeline, capsys):
        assert cli.main(["eval", "--output_dir", str(pipeline),
                         "--policy", str(pipeline / "policy_sac_true_seed0.json"),
                         "--episodes", "2"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert 0 <= payload["mean_logs_per_episode"] <= 4
        assert payload["n_episodes"] == 2

    def test_eval_env_mismatch_rejected(self, pipeline, capsys):
        code = cli.main(["eval", "--env.grid_size", "10",
                         "--policy", str(pipeline / "policy_sac_true_seed0.json"),
                         "--episodes", "1"])
        assert code == 1
        assert "error:" in capsys.readouterr().err

    def test_eval_expert_reference(self, capsys):
        assert cli.main(["eval", "--policy", "expert", "--episodes", "3"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["max_logs"] == 4
        assert payload["mean_logs_per_episode"] == 4.0

    def test_eval_random_reference(self, capsys):
        assert cli.main(["eval", "--policy", "random", "--episodes", "3"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert 0 <= payload["mean_logs_per_episode"] <= 4

    def test_summarize(self, pipeline, capsys):
        assert cli.main(["summarize", "--metrics",
                         str(pipeline / "metrics_sac_true_seed0.csv")]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert set(payload) == {"max_logs", "mean_logs_per_episode",
                                "n_episodes"}

    def test_missing_checkpoint_is_cli_error(self, tmp_path, capsys):
        code = cli.main(["train", "--output_dir", str(tmp_path),
                         "--ae", str(tmp_path / "nope.json")])
        assert code == 1
        assert capsys.readouterr().err.startswith("error:")

    def test_config_file_with_flag_override(self, tmp_path, capsys):
        cfg_file = tmp_path / "exp.cfg"
        cfg_file.write_text("n_demos = 2\nenv.grid_size = 10\n"
                            f"output_dir = {tmp_path}\n")
        assert cli.main(["gen-demos", "--config", str(cfg_file),
                         "--env.grid_size", "9"]) == 0
        demos = load_demos(str(tmp_path / "demos.jsonl"))
        assert len(demos.episodes) == 2
        assert demos.env.grid_size == 9

    def test_seed_list_parsing(self):
        assert cli._parse_seeds("0,1, 5") == [0, 1, 5]
        assert cli._parse_seeds("3") == [3]

    def test_gen_demos_regeneration_byte_identical(self, tmp_path):
        args = ["gen-demos", "--output_dir", str(tmp_path), "--n_demos", "2"]
        assert cli.main([*args, "--out", str(tmp_path / "a.jsonl")]) == 0
        assert cli.main([*args, "--out", str(tmp_path / "b.jsonl")]) == 0
        assert (tmp_path / "a.jsonl").read_bytes() == \
            (tmp_path / "b.jsonl").read_bytes()

    def test_multi_seed_training_independent_files(self, pipeline, tmp_path):
        base = ["--output_dir", str(tmp_path), "--algo", "sac_true",
                "--steps", "600", "--sac.warmup_steps", "100",
                "--ae", str(pipeline / "autoencoder.json")]
        assert cli.main(["train", *base, "--seeds", "0,1"]) == 0
        per_seed = {}
        for seed in (0, 1):
            path = tmp_path / f"metrics_sac_true_seed{seed}.csv"
            rows = load_metrics(str(path))
            assert all(r.seed == seed for r in rows)
            per_seed[seed] = path.read_bytes()
        # concurrent execution must match a solo run of the same seed
        solo = tmp_path / "solo"
        solo_args = ["--output_dir", str(solo), *base[2:]]
        assert cli.main(["train", *solo_args, "--seeds", "0"]) == 0
        assert (solo / "metrics_sac_true_seed0.csv").read_bytes() == \
            per_seed[0]
