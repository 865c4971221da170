"""Episodic grid environment with shaped rewards and image observations.

An agent moves over the cells of a :class:`DemGrid` with eight actions
(see :mod:`slopeplan.moves`). Each step is rewarded with

    r = r_d1 + r_d2 + r_s + r_w (+ r_t on reaching the goal)

where ``r_d1`` penalises the 3D step length, ``r_d2`` the remaining 2D
distance to the goal, ``r_s`` the step energy, ``r_w`` proximity to the
map border and ``r_t`` is the goal bonus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cost import CostModel, DEFAULT_MODEL, point_distance, step_energy
from .moves import MOVES, N_ACTIONS
from .terrain import DemGrid, Z_MAX

DEFAULT_MAX_STEPS = 150
SPRITE_RADIUS = 1  # 3x3 sprites


class EpisodeError(RuntimeError):
    pass


@dataclass(frozen=True)
class RewardParams:
    d_b1: float = 10.0
    d_b2: float = 50.0
    k: float = 5.0
    wall_bound: float = 6.0
    wall_intensity: float = 5.0
    wall_margin: int = 3
    reach_coefficient: float = 5.0

    def __post_init__(self):
        for name in ("d_b1", "d_b2", "wall_bound", "wall_intensity", "reach_coefficient"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if not self.k >= 0:
            raise ValueError("k must be >= 0")
        if self.wall_margin < 1:
            raise ValueError("wall_margin must be >= 1")

    def wall_lines(self, grid_width: int) -> tuple[int, int]:
        """``(l1, l2)`` band lines for a grid of ``grid_width`` cells."""
        l1 = self.wall_margin
        l2 = grid_width - self.wall_margin
        if not l1 < l2 < grid_width:
            raise ValueError(f"wall margin {self.wall_margin} too wide for width {grid_width}")
        return l1, l2

    @property
    def reach_reward(self) -> float:
        return self.reach_coefficient * self.k


@dataclass
class EpisodeState:
    dem: DemGrid
    agent: tuple[int, int]
    goal: tuple[int, int]
    prev: tuple[int, int] | None = None
    steps: int = 0
    done: bool = False
    reached: bool = False
    max_steps: int = DEFAULT_MAX_STEPS


def _cell(dem: DemGrid, c) -> tuple[float, float, float]:
    return (float(c[0]), float(c[1]), dem.z(c[0], c[1]))


def reset(dem: DemGrid, start, goal, max_steps: int = DEFAULT_MAX_STEPS) -> EpisodeState:
    start = (int(start[0]), int(start[1]))
    goal = (int(goal[0]), int(goal[1]))
    for name, c in (("start", start), ("goal", goal)):
        if not dem.in_bounds(*c):
            raise ValueError(f"{name} {c} outside the {dem.width}x{dem.height} grid")
    if start == goal:
        raise ValueError("start and goal must differ")
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    return EpisodeState(dem, start, goal, max_steps=max_steps)


def move(dem: DemGrid, cell, action: int) -> tuple[int, int]:
    """Successor of ``cell`` under ``action``; off-grid moves stay in place."""
    dx, dy = MOVES[action]
    nx, ny = cell[0] + dx, cell[1] + dy
    if dem.in_bounds(nx, ny):
        return nx, ny
    return cell[0], cell[1]


def distance_penalty(dem: DemGrid, cell, next_cell, goal, params: RewardParams = RewardParams()):
    """``(r_d1, r_d2)`` for moving from ``cell`` to ``next_cell``."""
    r_d1 = -point_distance(_cell(dem, cell), _cell(dem, next_cell)) / params.d_b1
    r_d2 = -math.hypot(next_cell[0] - goal[0], next_cell[1] - goal[1]) / params.d_b2
    return r_d1, r_d2


def slope_penalty(dem: DemGrid, cell, next_cell, params: RewardParams = RewardParams(),
                  model: CostModel = DEFAULT_MODEL) -> float:
    """Energy of the executed step in map units times ``-k``; zero for a blocked move."""
    if tuple(cell) == tuple(next_cell):
        return 0.0
    return -step_energy(_cell(dem, cell), _cell(dem, next_cell), model) * params.k


def wall_terms(coord: int, l1: int, l2: int) -> float:
    if coord <= l1:
        return (l1 - coord) * 2.0
    if coord >= l2:
        return (coord - l2) * 2.0
    return 0.0


def wall_penalty(cell, grid_width: int, params: RewardParams = RewardParams()) -> float:
    """Border-proximity penalty (non-positive).

    The same band lines apply to both axes, derived from ``grid_width``.
    """
    l1, l2 = params.wall_lines(grid_width)
    total = wall_terms(cell[0], l1, l2) + wall_terms(cell[1], l1, l2)
    return -min(total, params.wall_bound) * params.wall_intensity


def transition_reward(dem: DemGrid, cell, next_cell, goal, params: RewardParams = RewardParams(),
                      model: CostModel = DEFAULT_MODEL) -> float:
    r_d1, r_d2 = distance_penalty(dem, cell, next_cell, goal, params)
    r = r_d1 + r_d2 + slope_penalty(dem, cell, next_cell, params, model)
    r += wall_penalty(next_cell, dem.width, params)
    if tuple(next_cell) == tuple(goal):
        r += params.reach_reward
    return r


def step(state: EpisodeState, action: int, params: RewardParams = RewardParams(),
         model: CostModel = DEFAULT_MODEL):
    """Advance ``state`` by ``action``; returns ``(state', reward, done)``.

    ``state`` itself is left untouched.
    """
    if state.done:
        raise EpisodeError("episode already finished")
    if not 0 <= action < N_ACTIONS:
        raise ValueError(f"action must be in 0..{N_ACTIONS - 1}, got {action}")
    nxt = move(state.dem, state.agent, action)
    reward = transition_reward(state.dem, state.agent, nxt, state.goal, params, model)
    reached = nxt == state.goal
    steps = state.steps + 1
    done = reached or steps >= state.max_steps
    new = replace(state, agent=nxt, prev=state.agent, steps=steps, done=done, reached=reached)
    return new, reward, done


def elevation_channel(dem: DemGrid) -> np.ndarray:
    return np.clip(dem.elevations / Z_MAX, 0.0, 1.0)


def stamp_sprite(channel: np.ndarray, cell, value: float = 1.0) -> None:
    x, y = cell
    h, w = channel.shape
    r = SPRITE_RADIUS
    channel[max(0, y - r):min(h, y + r + 1), max(0, x - r):min(w, x + r + 1)] = value


def render_observation(dem: DemGrid, agent, goal, elev: np.ndarray | None = None,
                       dtype=np.float64) -> np.ndarray:
    """``(3, height, width)`` image: elevation/2, agent sprite, goal sprite."""
    obs = np.zeros((3, dem.height, dem.width), dtype=dtype)
    obs[0] = elevation_channel(dem) if elev is None else elev
    stamp_sprite(obs[1], agent)
    stamp_sprite(obs[2], goal)
    return obs


def observe(state: EpisodeState) -> np.ndarray:
    return render_observation(state.dem, state.agent, state.goal)


class ObservationRenderer:
    """Batch renderer for a fixed map, caching the elevation channel."""

    def __init__(self, dem: DemGrid, dtype=np.float64):
        self.dem = dem
        self.dtype = dtype
        self.elev = elevation_channel(dem).astype(dtype)

    def __call__(self, agent, goal) -> np.ndarray:
        return render_observation(self.dem, agent, goal, self.elev, self.dtype)

    def batch(self, agents, goals) -> np.ndarray:
        agents = np.asarray(agents)
        goals = np.asarray(goals)
        n = len(agents)
        out = np.zeros((n, 3, self.dem.height, self.dem.width), dtype=self.dtype)
        out[:, 0] = self.elev
        for i in range(n):
            stamp_sprite(out[i, 1], agents[i])
            stamp_sprite(out[i, 2], goals[i])
        return out


def reward_table(dem: DemGrid, goal, params: RewardParams = RewardParams(),
                 model: CostModel = DEFAULT_MODEL) -> np.ndarray:
    """``(height, width, 8)`` rewards of every (cell, action) pair for ``goal``."""
    out = np.empty((dem.height, dem.width, N_ACTIONS))
    for y in range(dem.height):
        for x in range(dem.width):
            for a in range(N_ACTIONS):
                nxt = move(dem, (x, y), a)
                out[y, x, a] = transition_reward(dem, (x, y), nxt, goal, params, model)
    return out


class TransitionTable:
    """Goal-independent parts of every (cell, action) transition on one map.

    ``step`` reproduces :func:`transition_reward` exactly, summing the
    terms in the same order.
    """

    def __init__(self, dem: DemGrid, params: RewardParams = RewardParams(),
                 model: CostModel = DEFAULT_MODEL):
        self.dem = dem
        self.params = params
        h, w = dem.height, dem.width
        nxt = [[[None] * N_ACTIONS for _ in range(w)] for _ in range(h)]
        rd1 = [[[0.0] * N_ACTIONS for _ in range(w)] for _ in range(h)]
        rs = [[[0.0] * N_ACTIONS for _ in range(w)] for _ in range(h)]
        rw = [[[0.0] * N_ACTIONS for _ in range(w)] for _ in range(h)]
        for y in range(h):
            for x in range(w):
                for a in range(N_ACTIONS):
                    n = move(dem, (x, y), a)
                    nxt[y][x][a] = n
                    rd1[y][x][a] = -point_distance(_cell(dem, (x, y)), _cell(dem, n)) / params.d_b1
                    rs[y][x][a] = slope_penalty(dem, (x, y), n, params, model)
                    rw[y][x][a] = wall_penalty(n, w, params)
        self.next = nxt
        self.rd1, self.rs, self.rw = rd1, rs, rw
        self.reach = params.reach_reward
        self.d_b2 = params.d_b2

    def step(self, cell, action: int, goal):
        """``(next_cell, reward, reached)``."""
        x, y = cell
        n = self.next[y][x][action]
        r = self.rd1[y][x][action] + (-math.hypot(n[0] - goal[0], n[1] - goal[1]) / self.d_b2)
        r += self.rs[y][x][action]
        r += self.rw[y][x][action]
        reached = n[0] == goal[0] and n[1] == goal[1]
        if reached:
            r += self.reach
        return n, r, reached
