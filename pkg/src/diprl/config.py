"""Experiment configuration: one flat dataclass bundling the component
configs, loadable from a plain key=value file with dotted section keys
(env.grid_size, sac.gamma, ...) and overridable by flags of the same names."""

from __future__ import annotations

import os
from dataclasses import dataclass, field, fields, replace

from .agents import AlgoKind, SacConfig
from .autoencoder import AeConfig
from .env import EnvConfig
from .errors import ConfigError, ParseError
from .reward import RewardConfig

SECTIONS = ("env", "ae", "sac", "reward")
TOP_LEVEL_KEYS = ("algo", "run_seed", "step_budget", "n_demos", "output_dir",
                  "bc_epochs", "buffer_capacity")


@dataclass
class ExperimentConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    ae: AeConfig = field(default_factory=AeConfig)
    sac: SacConfig = field(default_factory=SacConfig)
    reward: RewardConfig = field(default_factory=RewardConfig)
    algo: AlgoKind = AlgoKind.DIP_RL
    run_seed: int = 0
    step_budget: int = 100_000
    n_demos: int = 25
    output_dir: str = ""
    bc_epochs: int = 50
    buffer_capacity: int = 100_000

    def __post_init__(self):
        if self.n_demos < 1:
            raise ConfigError("n_demos must be >= 1")
        if self.step_budget < 0:
            raise ConfigError("step_budget must be >= 0")
        if not self.output_dir:
            self.output_dir = os.environ.get("DIPRL_OUTPUT_DIR", ".")


def parse_config_file(path) -> dict:
    """key = value lines; '#' starts a comment; keys keep their dotted form."""
    values = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError(f"{path}: line {lineno}: expected key = value, "
                                 f"got {raw.strip()!r}")
            key, _, value = line.partition("=")
            key, value = key.strip(), value.strip()
            if not key or not value:
                raise ParseError(f"{path}: line {lineno}: empty key or value")
            values[key] = value
    return values


def _coerce(current, raw: str):
    if isinstance(current, bool):
        return raw.lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(raw)
    if isinstance(current, float):
        return float(raw)
    if isinstance(current, tuple):
        parts = raw.replace("(", " ").replace(")", " ").replace(",", " ").split()
        return tuple(int(p) for p in parts)
    if isinstance(current, AlgoKind):
        return parse_algo(raw)
    return raw


def parse_algo(raw: str) -> AlgoKind:
    try:
        return AlgoKind(raw.strip().lower())
    except ValueError:
        valid = ", ".join(a.value for a in AlgoKind)
        raise ConfigError(f"unknown algo {raw!r}; expected one of {valid}") from None


def build_config(values: dict) -> ExperimentConfig:
    """Materialize an ExperimentConfig from dotted key/value strings; later
    callers merge file values and flag values before calling this."""
    cfg = ExperimentConfig()
    section_updates: dict[str, dict] = {s: {} for s in SECTIONS}
    top_updates: dict[str, object] = {}
    for key, raw in values.items():
        if "." in key:
            section, _, name = key.partition(".")
            if section not in SECTIONS:
                raise ConfigError(f"unknown config section {section!r} in {key!r}")
            sub = getattr(cfg, section)
            if not hasattr(sub, name):
                raise ConfigError(f"unknown config key {key!r}")
            section_updates[section][name] = _coerce(getattr(sub, name), raw)
        else:
            if key not in TOP_LEVEL_KEYS:
                raise ConfigError(f"unknown config key {key!r}")
            top_updates[key] = _coerce(getattr(cfg, key), raw)
    for section, updates in section_updates.items():
        if updates:
            top_updates[section] = replace(getattr(cfg, section), **updates)
    return replace(cfg, **top_updates)


def known_keys() -> list[str]:
    """Every accepted dotted key, for flag generation and help text."""
    keys = list(TOP_LEVEL_KEYS)
    cfg = ExperimentConfig()
    for section in SECTIONS:
        for f in fields(getattr(cfg, section)):
            keys.append(f"{section}.{f.name}")
    return keys
