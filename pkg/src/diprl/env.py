"""Deterministic, partially observed chop-grid environment.

A square grid holds trees; the agent moves/turns and chops the tree it faces.
Each chopped tree yields a hidden +1 reward and the episode ends once
``max_logs`` are collected or the horizon runs out. The world layout is a pure
function of ``world_seed``. A scripted expert (which reads the full state, the
way a human demonstrator reads the screen) stands in for human demonstrations.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from collections import deque

import numpy as np

from .errors import ConfigError, ExpertError, ProtocolError

EMPTY, TREE = 0, 1
_OOB = 2  # observation channel only; out-of-bounds doubles as the wall border

# headings
N, E, S, W = 0, 1, 2, 3
HEADING_DELTAS = ((-1, 0), (0, 1), (1, 0), (0, -1))  # N, E, S, W

# actions
FORWARD, BACKWARD, TURN_LEFT, TURN_RIGHT, CHOP = 0, 1, 2, 3, 4
N_ACTIONS = 5
ACTION_NAMES = ("forward", "backward", "turn_left", "turn_right", "chop")


@dataclass(frozen=True)
class EnvConfig:
    grid_size: int = 12
    n_trees: int = 8
    view_radius: int = 2
    horizon: int = 400
    max_logs: int = 4
    world_seed: int = 0

    def __post_init__(self):
        if self.n_trees < self.max_logs:
            raise ConfigError("n_trees must be >= max_logs")
        if self.view_radius < 1:
            raise ConfigError("view_radius must be >= 1")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1")
        if self.grid_size < 2:
            raise ConfigError("grid_size must be >= 2")


@dataclass
class WorldState:
    """Full (hidden) world state; the agent only ever sees emit_observation."""

    cfg: EnvConfig
    cells: np.ndarray  # (grid_size, grid_size) of EMPTY/TREE
    row: int
    col: int
    heading: int
    logs_collected: int = 0
    t: int = 0

    @property
    def done(self) -> bool:
        return self.logs_collected >= self.cfg.max_logs or self.t >= self.cfg.horizon


def obs_dim(cfg: EnvConfig) -> int:
    side = 2 * cfg.view_radius + 1
    return 3 * side * side + 5


def reset(cfg: EnvConfig):
    """Build the world for cfg.world_seed and return (state, observation)."""
    n_cells = cfg.grid_size * cfg.grid_size
    if cfg.n_trees + 1 > n_cells:
        raise ConfigError(f"{cfg.n_trees} trees do not fit a {cfg.grid_size}x{cfg.grid_size} grid")
    rng = np.random.default_rng(cfg.world_seed)
    picks = rng.choice(n_cells, size=cfg.n_trees + 1, replace=False)
    cells = np.zeros((cfg.grid_size, cfg.grid_size), dtype=np.int8)
    for flat in picks[:-1]:
        cells[flat // cfg.grid_size, flat % cfg.grid_size] = TREE
    spawn = int(picks[-1])
    state = WorldState(cfg, cells, spawn // cfg.grid_size, spawn % cfg.grid_size, heading=N)
    return state, emit_observation(state)


def _in_bounds(cfg: EnvConfig, row: int, col: int) -> bool:
    return 0 <= row < cfg.grid_size and 0 <= col < cfg.grid_size


def step(state: WorldState, action: int):
    """Pure transition: returns (next_state, observation, hidden_reward, done).

    The hidden reward (+1 per chopped log) is for the true-reward baseline and
    evaluation only; it must never reach a preference-trained path.
    """
    if state.done:
        raise ProtocolError("step called on a finished episode")
    cfg = state.cfg
    row, col, heading = state.row, state.col, state.heading
    cells = state.cells
    logs = state.logs_collected
    reward = 0.0

    if action in (FORWARD, BACKWARD):
        dr, dc = HEADING_DELTAS[heading]
        if action == BACKWARD:
            dr, dc = -dr, -dc
        nr, nc = row + dr, col + dc
        if _in_bounds(cfg, nr, nc) and cells[nr, nc] == EMPTY:
            row, col = nr, nc
    elif action == TURN_LEFT:
        heading = (heading - 1) % 4
    elif action == TURN_RIGHT:
        heading = (heading + 1) % 4
    elif action == CHOP:
        dr, dc = HEADING_DELTAS[heading]
        fr, fc = row + dr, col + dc
        if _in_bounds(cfg, fr, fc) and cells[fr, fc] == TREE:
            cells = cells.copy()
            cells[fr, fc] = EMPTY
            logs += 1
            reward = 1.0
    else:
        raise ValueError(f"unknown action {action}")

    nxt = replace(state, cells=cells, row=row, col=col, heading=heading,
                  logs_collected=logs, t=state.t + 1)
    return nxt, emit_observation(nxt), reward, nxt.done


def emit_observation(state: WorldState) -> np.ndarray:
    """Agent-centric view: the (2r+1)^2 window rotated so "up" is the heading,
    one-hot over {empty, tree, out-of-bounds}, then heading one-hot and the
    normalized log counter."""
    cfg = state.cfg
    r = cfg.view_radius
    side = 2 * r + 1
    win = np.full((side, side), _OOB, dtype=np.int8)
    r0, r1 = state.row - r, state.row + r + 1
    c0, c1 = state.col - r, state.col + r + 1
    gr0, gc0 = max(r0, 0), max(c0, 0)
    gr1, gc1 = min(r1, cfg.grid_size), min(c1, cfg.grid_size)
    if gr0 < gr1 and gc0 < gc1:
        win[gr0 - r0:gr1 - r0, gc0 - c0:gc1 - c0] = state.cells[gr0:gr1, gc0:gc1]
    win = np.rot90(win, k=state.heading)

    flat = win.reshape(-1)
    obs = np.empty(obs_dim(cfg), dtype=np.float64)
    n = side * side
    obs[0:n] = flat == EMPTY
    obs[n:2 * n] = flat == TREE
    obs[2 * n:3 * n] = flat == _OOB
    obs[3 * n:3 * n + 4] = 0.0
    obs[3 * n + state.heading] = 1.0
    obs[3 * n + 4] = state.logs_collected / cfg.max_logs
    return obs


def _turn_toward(heading: int, target: int) -> int:
    """Single turn action moving heading toward target; 180-degree turns go left."""
    diff = (target - heading) % 4
    if diff == 1:
        return TURN_RIGHT
    return TURN_LEFT  # diff 2 (behind) or 3


def scripted_expert(state: WorldState) -> int:
    """First action of a shortest rotate-then-move plan to the nearest tree.

    Chops immediately when facing an adjacent tree. Plans by BFS over empty
    cells (neighbors expanded N,E,S,W); the nearest tree is chosen by approach
    distance with ties broken in row-major scan order, and the approach cell by
    distance with ties on the facing heading in N,E,S,W order.
    """
    if state.done:
        raise ProtocolError("expert queried on a finished episode")
    cfg = state.cfg
    cells = state.cells
    dr, dc = HEADING_DELTAS[state.heading]
    fr, fc = state.row + dr, state.col + dc
    if _in_bounds(cfg, fr, fc) and cells[fr, fc] == TREE:
        return CHOP

    # BFS over empty cells from the agent position
    dist = np.full(cells.shape, -1, dtype=np.int32)
    parent = {}
    start = (state.row, state.col)
    dist[start] = 0
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        for hd in (N, E, S, W):
            d = HEADING_DELTAS[hd]
            nxt = (cur[0] + d[0], cur[1] + d[1])
            if _in_bounds(cfg, *nxt) and cells[nxt] == EMPTY and dist[nxt] < 0:
                dist[nxt] = dist[cur] + 1
                parent[nxt] = cur
                queue.append(nxt)

    # nearest tree by best approach-cell distance; row-major scan keeps the first tie
    best = None  # (approach_dist, tree, approach_cell, facing)
    for tr in range(cfg.grid_size):
        for tc in range(cfg.grid_size):
            if cells[tr, tc] != TREE:
                continue
            for hd in (N, E, S, W):
                d = HEADING_DELTAS[hd]
                q = (tr - d[0], tc - d[1])  # cell from which facing hd sees the tree
                if _in_bounds(cfg, *q) and cells[q] == EMPTY and dist[q] >= 0:
                    if best is None or dist[q] < best[0]:
                        best = (int(dist[q]), (tr, tc), q, hd)
    if best is None:
        raise ExpertError("no reachable tree")

    _, _, approach, facing = best
    if approach == start:
        return _turn_toward(state.heading, facing)

    # walk the BFS parents back to the cell adjacent to the start
    cur = approach
    while parent[cur] != start:
        cur = parent[cur]
    move_dir = next(
        hd for hd in (N, E, S, W)
        if (start[0] + HEADING_DELTAS[hd][0], start[1] + HEADING_DELTAS[hd][1]) == cur
    )
    if move_dir == state.heading:
        return FORWARD
    return _turn_toward(state.heading, move_dir)
