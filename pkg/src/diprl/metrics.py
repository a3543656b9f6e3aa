"""Per-episode metrics rows, run summaries, and the CSV/JSON export contract."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field

from .errors import ContractError, ParseError, SummaryError

CSV_COLUMNS = ("env_step", "episode_index", "episode_logs", "episode_length",
               "algo", "seed")


@dataclass(frozen=True)
class MetricsRow:
    env_step: int
    episode_index: int
    episode_logs: int
    episode_length: int
    algo: str
    seed: int

    def __post_init__(self):
        if self.env_step < 0 or self.episode_index < 0:
            raise ContractError("env_step and episode_index must be >= 0")
        if self.episode_logs < 0 or self.episode_length < 0:
            raise ContractError("episode_logs and episode_length must be >= 0")


@dataclass
class RunSummary:
    max_logs: int
    mean_logs_per_episode: float
    n_episodes: int
    rows: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {"max_logs": self.max_logs,
                "mean_logs_per_episode": self.mean_logs_per_episode,
                "n_episodes": self.n_episodes}


def compute_summary(rows: list) -> RunSummary:
    """Max and arithmetic mean of episode_logs over all rows."""
    if not rows:
        raise SummaryError("no metrics rows to summarize")
    logs = [r.episode_logs for r in rows]
    return RunSummary(max_logs=max(logs),
                      mean_logs_per_episode=sum(logs) / len(logs),
                      n_episodes=len(rows),
                      rows=list(rows))


def export_metrics(rows: list, format: str, path):
    """CSV columns exactly env_step,episode_index,episode_logs,episode_length,
    algo,seed with a header row; JSON as an array of row objects."""
    if format == "csv":
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for r in rows:
                writer.writerow([r.env_step, r.episode_index, r.episode_logs,
                                 r.episode_length, r.algo, r.seed])
    elif format == "json":
        payload = [{c: getattr(r, c) for c in CSV_COLUMNS} for r in rows]
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(payload, fh, indent=2)
            fh.write("\n")
    else:
        raise ValueError(f"unknown metrics format {format!r}")


def load_metrics(path) -> list:
    """Read back either export format, by extension."""
    path = str(path)
    rows = []
    if path.endswith(".json"):
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
        for rec in payload:
            rows.append(_row_from_mapping(rec, path))
    else:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or tuple(reader.fieldnames) != CSV_COLUMNS:
                raise ParseError(f"{path}: bad metrics header {reader.fieldnames}")
            for rec in reader:
                rows.append(_row_from_mapping(rec, path))
    return rows


def _row_from_mapping(rec, path) -> MetricsRow:
    try:
        return MetricsRow(env_step=int(rec["env_step"]),
                          episode_index=int(rec["episode_index"]),
                          episode_logs=int(rec["episode_logs"]),
                          episode_length=int(rec["episode_length"]),
                          algo=str(rec["algo"]),
                          seed=int(rec["seed"]))
    except (KeyError, ValueError) as exc:
        raise ParseError(f"{path}: bad metrics record {rec!r} ({exc})") from exc
