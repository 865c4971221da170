"""Graph-search baselines, goal-biased RRT, the greedy heuristic and DQN rollouts.

Every planner works on the 8-connected cell graph of a :class:`DemGrid` and
reports metrics recomputed from its path by :mod:`slopeplan.cost`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from . import search
from .cost import CostModel, DEFAULT_MODEL, GridPath
from .gridworld import DEFAULT_MAX_STEPS, elevation_channel, move
from .moves import MOVES, N_ACTIONS
from .qnet import GoalConditionedQ, QNetworkParams
from .terrain import DemGrid, downscale


class PlannerError(RuntimeError):
    pass


@dataclass
class PlannerResult:
    planner_name: str
    path: GridPath | None
    success: bool
    distance_m: float = float("nan")
    energy_u: float = float("nan")
    objective_sum: float = float("nan")
    wall_time_s: float = 0.0
    expanded: int = 0
    info: dict = field(default_factory=dict)

    @classmethod
    def from_path(cls, name, path, success, model, world_scale_m, wall_time_s, expanded, **info):
        if path is None:
            return cls(name, None, False, wall_time_s=wall_time_s, expanded=expanded, info=info)
        d, e, s = path.metrics(model, world_scale_m)
        return cls(name, path, success, d, e, s, wall_time_s, expanded, info)


def _check_task(dem: DemGrid, start, goal):
    start = (int(start[0]), int(start[1]))
    goal = (int(goal[0]), int(goal[1]))
    for name, c in (("start", start), ("goal", goal)):
        if not dem.in_bounds(*c):
            raise ValueError(f"{name} {c} outside the {dem.width}x{dem.height} grid")
    if start == goal:
        raise ValueError("start and goal must differ")
    return start, goal


def _graph_search(name, dem, model, start, goal, h_dist, h_energy, backend):
    start, goal = _check_task(dem, start, goal)
    fn = search.get_backend(backend)
    t0 = time.perf_counter()
    cells, expanded = fn(dem.elevations, dem.world_scale_m, model.eta_us, model.eta_ds,
                         model.energy_weight, start[0], start[1], goal[0], goal[1],
                         float(h_dist), float(h_energy))
    elapsed = time.perf_counter() - t0
    if cells is None:
        raise PlannerError(f"{name}: goal {goal} unreachable from {start}")
    path = GridPath.on_surface(dem, cells)
    return PlannerResult.from_path(name, path, True, model, dem.world_scale_m, elapsed, expanded)


def dijkstra(dem: DemGrid, model: CostModel = DEFAULT_MODEL, start=(0, 0), goal=(1, 1),
             backend: str | None = None) -> PlannerResult:
    """Minimum distance + weighted energy path over 8-connected moves."""
    return _graph_search("dijkstra", dem, model, start, goal, 0.0, 0.0, backend)


def astar(dem: DemGrid, model: CostModel = DEFAULT_MODEL, start=(0, 0), goal=(1, 1),
          h_weights=(1.0, 1.0), backend: str | None = None) -> PlannerResult:
    """A* with an admissible heuristic.

    The heuristic is ``h_weights[0]`` times the straight 3D distance plus
    ``h_weights[1]`` times the cheapest energy for the unavoidable net climb
    or descent. With weights in ``[0, 1]`` it never overestimates, so the
    result is as good as Dijkstra's.
    """
    return _graph_search("astar", dem, model, start, goal, h_weights[0], h_weights[1], backend)


def greedy_heuristic_action(dem: DemGrid, pos, goal) -> int:
    """Action whose successor is closest to ``goal`` in 2D; lowest index wins ties."""
    best, best_d = 0, None
    for a in range(N_ACTIONS):
        nx, ny = move(dem, pos, a)
        d = (nx - goal[0]) ** 2 + (ny - goal[1]) ** 2
        if best_d is None or d < best_d:
            best, best_d = a, d
    return best


def _step_toward(dem: DemGrid, cell, target) -> tuple[int, int]:
    return move(dem, cell, greedy_heuristic_action(dem, cell, target))


@dataclass(frozen=True)
class RRTConfig:
    goal_bias: float = 0.05
    max_iterations: int = 200_000
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.goal_bias <= 1.0:
            raise ValueError("goal_bias must lie in [0, 1]")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")


def rrt(dem: DemGrid, model: CostModel = DEFAULT_MODEL, start=(0, 0), goal=(1, 1),
        config: RRTConfig = RRTConfig()) -> PlannerResult:
    """Goal-biased RRT growing one grid step per iteration.

    Each iteration samples a cell (the goal with probability ``goal_bias``),
    picks the nearest tree node in 2D and adds its greedy neighbour toward
    the sample unless that cell is already in the tree.
    """
    start, goal = _check_task(dem, start, goal)
    rng = np.random.default_rng(config.seed)
    t0 = time.perf_counter()
    cap = dem.width * dem.height
    xs = np.empty(cap, dtype=np.int64)
    ys = np.empty(cap, dtype=np.int64)
    parent = np.full(cap, -1, dtype=np.int64)
    xs[0], ys[0] = start
    size = 1
    in_tree = {start: 0}
    reached = None
    iterations = 0
    for iterations in range(1, config.max_iterations + 1):
        if rng.random() < config.goal_bias:
            sample = goal
        else:
            sample = (int(rng.integers(dem.width)), int(rng.integers(dem.height)))
        d2 = (xs[:size] - sample[0]) ** 2 + (ys[:size] - sample[1]) ** 2
        near = int(np.argmin(d2))
        near_cell = (int(xs[near]), int(ys[near]))
        if near_cell == sample:
            continue
        new = _step_toward(dem, near_cell, sample)
        if new in in_tree:
            continue
        xs[size], ys[size] = new
        parent[size] = near
        in_tree[new] = size
        size += 1
        if new == goal:
            reached = size - 1
            break
    elapsed = time.perf_counter() - t0
    info = {"iterations": iterations, "tree": list(zip(xs[:size].tolist(), ys[:size].tolist()))}
    if reached is None:
        return PlannerResult("rrt", None, False, wall_time_s=elapsed, expanded=size, info=info)
    cells = []
    node = reached
    while node != -1:
        cells.append((int(xs[node]), int(ys[node])))
        node = int(parent[node])
    cells.reverse()
    path = GridPath.on_surface(dem, cells)
    return PlannerResult.from_path("rrt", path, True, model, dem.world_scale_m, elapsed, size, **info)


def dmop_rollout(dem: DemGrid, params: QNetworkParams, start, goal,
                 max_steps: int = DEFAULT_MAX_STEPS, detect_loops: bool = True):
    """Greedy network rollout; returns ``(cells, reached, reason)``.

    A repeated ``(cell, action)`` pair means the deterministic policy is
    cycling, so the rollout stops there when ``detect_loops`` is set.
    """
    arch = params.arch
    if (dem.width, dem.height) != (arch.input_width, arch.input_height):
        raise ValueError(f"network expects a {arch.input_width}x{arch.input_height} map, "
                         f"got {dem.width}x{dem.height}")
    q_of = GoalConditionedQ(params, elevation_channel(dem), goal)
    agent = start
    cells = [agent]
    seen = set()
    for _ in range(max_steps):
        a = int(np.argmax(q_of(agent)))
        if detect_loops:
            if (agent, a) in seen:
                return cells, False, "loop"
            seen.add((agent, a))
        nxt = move(dem, agent, a)
        if nxt != agent:
            cells.append(nxt)
            agent = nxt
        if agent == goal:
            return cells, True, "reached"
    return cells, False, "max_steps"


def dmop_plan(dem: DemGrid, params: QNetworkParams, start, goal,
              max_steps: int = DEFAULT_MAX_STEPS, model: CostModel = DEFAULT_MODEL,
              detect_loops: bool = True) -> PlannerResult:
    """Plan by following the network's argmax action from ``start``.

    Never raises on policy failure: a loop or exhausted step budget gives an
    unsuccessful result carrying the partial path.
    """
    start, goal = _check_task(dem, start, goal)
    t0 = time.perf_counter()
    cells, reached, reason = dmop_rollout(dem, params, start, goal, max_steps, detect_loops)
    elapsed = time.perf_counter() - t0
    path = GridPath.on_surface(dem, cells)
    return PlannerResult.from_path("dmop", path, reached, model, dem.world_scale_m, elapsed,
                                   len(cells), reason=reason)


def snap_endpoints(path: GridPath, dem: DemGrid, start, goal) -> GridPath:
    """Replace the first/last points by the exact high-resolution start and goal."""
    xy = path.xy.copy()
    xy[0] = start
    xy[-1] = goal
    keep = np.ones(len(xy), dtype=bool)
    keep[1:] = np.any(xy[1:] != xy[:-1], axis=1)
    return GridPath.on_surface(dem, xy[keep])


def dmop_plan_highres(dem: DemGrid, params: QNetworkParams, start, goal,
                      max_steps: int = DEFAULT_MAX_STEPS, model: CostModel = DEFAULT_MODEL,
                      enhance_path: bool = False, coarse: DemGrid | None = None) -> PlannerResult:
    """Downscale, roll out on the coarse grid, lift the path back to ``dem``.

    Metrics are measured on ``dem``. ``coarse`` may be passed to reuse an
    already downscaled map.
    """
    from . import enhance

    start, goal = _check_task(dem, start, goal)
    arch = params.arch
    if dem.width % arch.input_width or dem.height % arch.input_height:
        raise ValueError(f"{dem.width}x{dem.height} map is not a multiple of the network input "
                         f"{arch.input_width}x{arch.input_height}")
    factor = dem.width // arch.input_width
    if dem.height // arch.input_height != factor:
        raise ValueError("non-uniform downscale factor")
    t0 = time.perf_counter()
    if coarse is None:
        coarse = dem if factor == 1 else downscale(dem, factor)
    c_start = (start[0] // factor, start[1] // factor)
    c_goal = (goal[0] // factor, goal[1] // factor)
    if c_start == c_goal:
        cells, reached, reason = [c_start], True, "same_block"
    else:
        cells, reached, reason = dmop_rollout(coarse, params, c_start, c_goal, max_steps)
    coarse_path = GridPath.on_surface(coarse, cells)
    lifted = enhance.upscale_path(coarse_path, factor, dem)
    end = goal if reached else lifted.xy[-1]
    if len(lifted) == 1:
        lifted = GridPath.on_surface(dem, [start, end]) if tuple(start) != tuple(end) else \
            GridPath.on_surface(dem, [start])
    else:
        lifted = snap_endpoints(lifted, dem, start, end)
    if enhance_path and len(lifted) >= 2:
        lifted = enhance.enhance_lifted(lifted, dem)
    elapsed = time.perf_counter() - t0
    name = "dmop+enhance" if enhance_path else "dmop"
    return PlannerResult.from_path(name, lifted, reached, model, dem.world_scale_m, elapsed,
                                   len(cells), reason=reason, factor=factor)


PLANNERS = ("dijkstra", "astar", "rrt", "dmop")


def run_planner(name: str, dem: DemGrid, model: CostModel, start, goal, *,
                params: QNetworkParams | None = None, rrt_config: RRTConfig = RRTConfig(),
                max_steps: int = DEFAULT_MAX_STEPS, backend: str | None = None,
                enhance_path: bool = False) -> PlannerResult:
    if name == "dijkstra":
        return dijkstra(dem, model, start, goal, backend=backend)
    if name == "astar":
        return astar(dem, model, start, goal, backend=backend)
    if name == "rrt":
        return rrt(dem, model, start, goal, rrt_config)
    if name in ("dmop", "dmop+enhance"):
        if params is None:
            raise ValueError("dmop needs trained network parameters")
        if (dem.width, dem.height) == (params.arch.input_width, params.arch.input_height) \
                and not enhance_path and name == "dmop":
            return dmop_plan(dem, params, start, goal, max_steps, model)
        return dmop_plan_highres(dem, params, start, goal, max_steps, model,
                                 enhance_path=enhance_path or name == "dmop+enhance")
    raise ValueError(f"unknown planner {name!r}; choose from {PLANNERS}")
