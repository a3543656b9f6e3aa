"""Experience containers: demonstration dataset, FIFO replay buffer, segment
extraction, mixed demo/agent batch sampling, and the on-disk demo format."""

from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field, asdict

import numpy as np

from . import env as envmod
from .env import EnvConfig
from .errors import ContractError, ParseError, SamplingError

DEMO_SCHEMA_VERSION = 1

# Test hook: every read of Transition.hidden_reward bumps this counter, so a
# run can prove the stored true reward was never consumed by a hidden-reward
# code path.
_hidden_reward_reads = 0


def hidden_reward_read_count() -> int:
    return _hidden_reward_reads


def reset_hidden_reward_read_count():
    global _hidden_reward_reads
    _hidden_reward_reads = 0


class Transition:
    """One environment step. ``source`` is fixed at insertion ('demo'/'agent');
    the true reward is stored for the true-reward baseline and evaluation only
    and is read through a counting property."""

    __slots__ = ("obs", "action", "next_obs", "done", "_hidden_reward", "source",
                 "emb", "next_emb")

    def __init__(self, obs, action, next_obs, done, hidden_reward, source):
        if source not in ("demo", "agent"):
            raise ContractError(f"bad source {source!r}")
        self.obs = obs
        self.action = int(action)
        self.next_obs = next_obs
        self.done = bool(done)
        self._hidden_reward = float(hidden_reward)
        self.source = source
        self.emb = None       # lazy embedding caches, filled by the agents module
        self.next_emb = None

    @property
    def hidden_reward(self) -> float:
        global _hidden_reward_reads
        _hidden_reward_reads += 1
        return self._hidden_reward

    def __repr__(self):
        return (f"Transition(action={self.action}, done={self.done}, "
                f"source={self.source!r})")


@dataclass
class DemoDataset:
    """Episodes of demo-sourced transitions; M is the total tuple count."""

    episodes: list
    env: EnvConfig | None = None

    def __post_init__(self):
        for ep in self.episodes:
            for t in ep:
                if t.source != "demo":
                    raise ContractError("demo dataset may only hold demo transitions")

    @property
    def m(self) -> int:
        return sum(len(ep) for ep in self.episodes)

    def all_transitions(self):
        return [t for ep in self.episodes for t in ep]


@dataclass
class _BufferEpisode:
    steps: list
    episode_id: int
    start: int = 0  # first live index; > 0 once FIFO eviction has bitten

    @property
    def live(self) -> int:
        return len(self.steps) - self.start

    @property
    def truncated(self) -> bool:
        return self.start > 0


class ReplayBuffer:
    """FIFO transition store with episode boundaries.

    Eviction drops the oldest transitions one at a time; an episode whose front
    has been evicted keeps feeding uniform transition sampling but is excluded
    from segment extraction, so segments never cross the eviction seam.
    """

    def __init__(self, capacity: int = 100_000):
        if capacity < 1:
            raise ValueError("capacity must be >= 1")
        self.capacity = capacity
        self.episodes: deque[_BufferEpisode] = deque()
        self.size = 0
        self._next_episode_id = 0

    def __len__(self):
        return self.size


def append_episode(buffer: ReplayBuffer, episode) -> ReplayBuffer:
    """Append agent transitions in order, evicting the oldest past capacity."""
    for t in episode:
        if t.source != "agent":
            raise ContractError("replay buffer only accepts agent transitions")
    if not episode:
        return buffer
    buffer.episodes.append(_BufferEpisode(list(episode), buffer._next_episode_id))
    buffer._next_episode_id += 1
    buffer.size += len(episode)
    while buffer.size > buffer.capacity:
        oldest = buffer.episodes[0]
        oldest.start += 1
        buffer.size -= 1
        if oldest.live == 0:
            buffer.episodes.popleft()
    return buffer


def _buffer_transition(buffer: ReplayBuffer, idx: int) -> Transition:
    for ep in buffer.episodes:
        if idx < ep.live:
            return ep.steps[ep.start + idx]
        idx -= ep.live
    raise IndexError(idx)


def sample_mixed_batch(buffer: ReplayBuffer, demos: DemoDataset | None,
                       batch_size: int, demo_fraction: float, rng) -> list:
    """Batch with exactly round(demo_fraction * batch_size) demo transitions,
    the rest drawn from the buffer; both uniform with replacement, then the
    order is shuffled."""
    if not 0.0 <= demo_fraction <= 1.0:
        raise ValueError("demo_fraction must lie in [0, 1]")
    n_demo = int(round(demo_fraction * batch_size))
    n_agent = batch_size - n_demo
    if n_agent > 0 and buffer.size == 0:
        raise SamplingError("replay buffer is empty")
    if n_demo > 0 and (demos is None or demos.m == 0):
        raise SamplingError("demo dataset is empty")

    batch = []
    if n_demo > 0:
        flat = demos.all_transitions()
        for i in rng.integers(0, len(flat), size=n_demo):
            batch.append(flat[i])
    if n_agent > 0:
        counts = np.fromiter((ep.live for ep in buffer.episodes), dtype=np.int64)
        bounds = np.cumsum(counts)
        draws = rng.integers(0, buffer.size, size=n_agent)
        ep_idx = np.searchsorted(bounds, draws, side="right")
        eps = list(buffer.episodes)
        for j, d in zip(ep_idx, draws):
            ep = eps[j]
            offset = d - (bounds[j] - counts[j])
            batch.append(ep.steps[ep.start + offset])
    order = rng.permutation(len(batch))
    return [batch[i] for i in order]


@dataclass
class TrajectorySegment:
    """Contiguous k-step (observation, action) run from a single episode."""

    observations: np.ndarray  # (k, obs_dim)
    actions: np.ndarray       # (k,) int
    origin: str               # 'demo' or 'agent'
    episode_id: int
    start: int
    emb: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __len__(self):
        return len(self.actions)

    @property
    def steps(self):
        return list(zip(self.observations, self.actions))


def _segment_sources(source):
    """Yield (episode_id, steps_slice) for every episode eligible for segments."""
    if isinstance(source, DemoDataset):
        for i, ep in enumerate(source.episodes):
            yield i, ep, "demo"
    elif isinstance(source, ReplayBuffer):
        for ep in source.episodes:
            if not ep.truncated:
                yield ep.episode_id, ep.steps, "agent"
    else:
        raise TypeError(f"cannot sample segments from {type(source).__name__}")


def sample_segment(source, k: int, rng) -> TrajectorySegment:
    """Uniform over all valid start offsets across eligible episodes (episodes
    weighted by their offset count), never spanning an episode boundary."""
    if k < 1:
        raise ValueError("k must be >= 1")
    eligible = [(eid, ep, origin) for eid, ep, origin in _segment_sources(source)
                if len(ep) >= k]
    if not eligible:
        raise SamplingError(f"no episode with >= {k} steps available")
    offsets = np.array([len(ep) - k + 1 for _, ep, _ in eligible], dtype=np.int64)
    bounds = np.cumsum(offsets)
    draw = int(rng.integers(0, bounds[-1]))
    idx = int(np.searchsorted(bounds, draw, side="right"))
    eid, ep, origin = eligible[idx]
    start = draw - (bounds[idx] - offsets[idx])
    window = ep[start:start + k]
    return TrajectorySegment(
        observations=np.stack([t.obs for t in window]),
        actions=np.fromiter((t.action for t in window), dtype=np.int64, count=k),
        origin=origin,
        episode_id=eid,
        start=int(start),
    )


# --- rollout helpers ----------------------------------------------------------

def expert_episode(cfg: EnvConfig) -> list:
    """One full scripted-expert episode as demo transitions."""
    state, obs = envmod.reset(cfg)
    out = []
    while not state.done:
        action = envmod.scripted_expert(state)
        state, next_obs, reward, done = envmod.step(state, action)
        out.append(Transition(obs, action, next_obs, done, reward, "demo"))
        obs = next_obs
    return out


def random_episode(cfg: EnvConfig, rng, source: str = "agent") -> list:
    """One uniform-random-policy episode."""
    state, obs = envmod.reset(cfg)
    out = []
    while not state.done:
        action = int(rng.integers(envmod.N_ACTIONS))
        state, next_obs, reward, done = envmod.step(state, action)
        out.append(Transition(obs, action, next_obs, done, reward, source))
        obs = next_obs
    return out


# --- on-disk demo format ------------------------------------------------------
# Line-delimited JSON: a header record, then one transition per line.

def save_demos(demos: DemoDataset, path):
    """Lossless dump; the header carries the schema version and the EnvConfig."""
    header = {
        "schema_version": DEMO_SCHEMA_VERSION,
        "kind": "diprl-demos",
        "env": asdict(demos.env) if demos.env is not None else None,
    }
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for episode_id, ep in enumerate(demos.episodes):
            for step_i, t in enumerate(ep):
                rec = {
                    "episode_id": episode_id,
                    "step": step_i,
                    "obs": np.asarray(t.obs).tolist(),
                    "action": t.action,
                    "next_obs": np.asarray(t.next_obs).tolist(),
                    "done": t.done,
                    "hidden_reward": t.hidden_reward,
                }
                fh.write(json.dumps(rec) + "\n")


def load_demos(path) -> DemoDataset:
    """Inverse of save_demos; malformed lines raise ParseError with the line
    number (1-based)."""
    episodes: list[list[Transition]] = []
    env_cfg = None
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc.msg}") from exc
            if lineno == 1:
                if rec.get("kind") != "diprl-demos":
                    raise ParseError(f"{path}: line 1: missing demo header")
                if rec.get("env") is not None:
                    env_cfg = EnvConfig(**rec["env"])
                continue
            try:
                t = Transition(
                    obs=np.array(rec["obs"], dtype=np.float64),
                    action=rec["action"],
                    next_obs=np.array(rec["next_obs"], dtype=np.float64),
                    done=rec["done"],
                    hidden_reward=rec["hidden_reward"],
                    source="demo",
                )
                episode_id = rec["episode_id"]
            except (KeyError, TypeError) as exc:
                raise ParseError(f"{path}: line {lineno}: bad record ({exc})") from exc
            while len(episodes) <= episode_id:
                episodes.append([])
            episodes[episode_id].append(t)
    return DemoDataset(episodes=episodes, env=env_cfg)
