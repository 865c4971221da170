import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from slopeplan import planners, qnet, search, terrain
from slopeplan.cost import CostModel, DEFAULT_MODEL, path_energy, path_objective
from slopeplan.planners import RRTConfig

from oracles import exhaustive_best

UNIT = CostModel()


def flat(n, scale=1.0):
    return terrain.DemGrid(np.zeros((n, n)), world_scale_m=scale)


def test_dijkstra_flat_corner_to_corner():
    res = planners.dijkstra(flat(3), UNIT, (0, 0), (2, 2))
    assert res.objective_sum == pytest.approx(4 * math.sqrt(2), rel=1e-15)
    assert res.path.cells() == [(0, 0), (1, 1), (2, 2)]
    oracle, _ = exhaustive_best(flat(3), UNIT, (0, 0), (2, 2))
    assert res.objective_sum == oracle


@pytest.mark.parametrize("goal,expected", [((1, 0), 2.0), ((1, 1), 2 * math.sqrt(2))])
def test_dijkstra_adjacent(goal, expected):
    res = planners.dijkstra(flat(3), UNIT, (0, 0), goal)
    assert len(res.path) == 2
    assert res.objective_sum == pytest.approx(expected, rel=1e-15)


@given(st.integers(0, 10_000), st.integers(2, 4), st.integers(2, 4))
@settings(max_examples=40)
def test_dijkstra_matches_exhaustive(seed, w, h):
    rng = np.random.default_rng(seed)
    dem = terrain.DemGrid(rng.random((h, w)) * 2, world_scale_m=float(rng.choice([1, 100])))
    cells = [(x, y) for y in range(h) for x in range(w)]
    i, j = rng.choice(len(cells), 2, replace=False)
    res = planners.dijkstra(dem, DEFAULT_MODEL, cells[i], cells[j])
    oracle, _ = exhaustive_best(dem, DEFAULT_MODEL, cells[i], cells[j])
    assert res.objective_sum == pytest.approx(oracle, rel=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_astar_equals_dijkstra(seed):
    dem = terrain.generate(seed, 20, 20)
    rng = np.random.default_rng(seed)
    s, g = [tuple(int(v) for v in rng.integers(20, size=2)) for _ in range(2)]
    if s == g:
        return
    d = planners.dijkstra(dem, DEFAULT_MODEL, s, g)
    a = planners.astar(dem, DEFAULT_MODEL, s, g)
    assert a.objective_sum == d.objective_sum
    assert a.expanded <= d.expanded


def test_astar_zero_weights_is_dijkstra():
    dem = terrain.generate(2, 20, 20)
    d = planners.dijkstra(dem, DEFAULT_MODEL, (1, 1), (18, 15))
    a = planners.astar(dem, DEFAULT_MODEL, (1, 1), (18, 15), h_weights=(0, 0))
    assert a.expanded == d.expanded
    assert a.path == d.path


def test_astar_flat_map_is_straight():
    res = planners.astar(flat(12), UNIT, (1, 2), (9, 2))
    assert res.path.cells() == [(x, 2) for x in range(1, 10)]
    assert res.objective_sum == pytest.approx(16.0)


@pytest.mark.parametrize("backend", ["python", "compiled"])
def test_backends_agree(backend):
    if backend not in search.BACKENDS:
        pytest.skip("compiled extension not built")
    dem = terrain.generate(4, 30, 30)
    ref = planners.dijkstra(dem, DEFAULT_MODEL, (0, 0), (29, 17), backend="python")
    got = planners.dijkstra(dem, DEFAULT_MODEL, (0, 0), (29, 17), backend=backend)
    assert got.path == ref.path
    assert got.expanded == ref.expanded
    ref = planners.astar(dem, DEFAULT_MODEL, (3, 25), (20, 2), backend="python")
    got = planners.astar(dem, DEFAULT_MODEL, (3, 25), (20, 2), backend=backend)
    assert got.path == ref.path
    assert got.expanded == ref.expanded


def test_unknown_backend():
    with pytest.raises(ValueError):
        search.get_backend("fortran")


def test_result_metrics_match_recomputation(hills20):
    for fn in (planners.dijkstra, planners.astar, planners.rrt):
        res = fn(hills20, DEFAULT_MODEL, (2, 3), (17, 11))
        d, e, s = res.path.metrics(DEFAULT_MODEL, hills20.world_scale_m)
        assert (res.distance_m, res.energy_u, res.objective_sum) == (d, e, s)
        assert res.path.cells()[0] == (2, 3)
        assert res.path.cells()[-1] == (17, 11)
        res.path.check_surface(hills20)


def test_planners_reject_bad_tasks(hills20):
    with pytest.raises(ValueError):
        planners.dijkstra(hills20, DEFAULT_MODEL, (1, 1), (1, 1))
    with pytest.raises(ValueError):
        planners.astar(hills20, DEFAULT_MODEL, (1, 1), (20, 1))


def test_greedy_heuristic_examples():
    dem = flat(9)
    assert planners.greedy_heuristic_action(dem, (4, 4), (4, 0)) == 0
    assert planners.greedy_heuristic_action(dem, (4, 4), (7, 1)) == 1
    assert planners.greedy_heuristic_action(dem, (4, 4), (5, 5)) == 3
    assert planners.greedy_heuristic_action(dem, (4, 4), (8, 4)) == 2


def test_rrt_full_goal_bias_goes_straight():
    dem = flat(20)
    res = planners.rrt(dem, UNIT, (2, 3), (15, 9), RRTConfig(goal_bias=1.0))
    assert res.success
    assert res.info["iterations"] <= max(13, 6)  # Chebyshev distance


def test_rrt_deterministic(hills20):
    a = planners.rrt(hills20, DEFAULT_MODEL, (0, 0), (19, 19), RRTConfig(seed=3))
    b = planners.rrt(hills20, DEFAULT_MODEL, (0, 0), (19, 19), RRTConfig(seed=3))
    assert a.path == b.path and a.info["tree"] == b.info["tree"]


def test_rrt_budget_exhaustion():
    res = planners.rrt(flat(30), UNIT, (0, 0), (29, 29), RRTConfig(goal_bias=0.0, max_iterations=5))
    assert not res.success and res.path is None


@pytest.mark.parametrize("seed", range(5))
def test_rrt_never_beats_dijkstra(seed):
    dem = terrain.generate(seed, 25, 25)
    d = planners.dijkstra(dem, DEFAULT_MODEL, (1, 1), (22, 20))
    r = planners.rrt(dem, DEFAULT_MODEL, (1, 1), (22, 20), RRTConfig(seed=seed))
    assert r.success
    assert r.objective_sum >= d.objective_sum


@pytest.mark.parametrize("seed", range(6))
def test_energy_non_increasing_in_weight(seed):
    dem = terrain.generate(seed, 20, 20)
    energies = [path_energy(planners.dijkstra(dem, DEFAULT_MODEL.with_weight(w), (0, 2),
                                              (19, 17)).path, DEFAULT_MODEL, dem.world_scale_m)
                for w in (0.5, 1, 2, 4)]
    for lo, hi in zip(energies, energies[1:]):
        assert hi <= lo * (1 + 1e-12)


def test_dmop_untrained_does_not_crash(hills20):
    p = qnet.init_network(0, qnet.Architecture.for_grid(20, 20))
    res = planners.dmop_plan(hills20, p, (2, 2), (17, 16))
    assert res.planner_name == "dmop"
    assert res.info["reason"] in ("loop", "max_steps", "reached")
    assert res.path.cells()[0] == (2, 2)
    if not res.success:
        assert res.path.cells()[-1] != (17, 16)


def test_dmop_rejects_wrong_map_size(hills50):
    p = qnet.init_network(0, qnet.Architecture.for_grid(20, 20))
    with pytest.raises(ValueError):
        planners.dmop_plan(hills50, p, (0, 0), (5, 5))


def test_dmop_follows_argmax(monkeypatch, hills20):
    goal = (15, 12)

    class Greedy:
        def __init__(self, params, elev, g, *a, **kw):
            self.goal = g

        def __call__(self, agent):
            q = np.zeros(8)
            q[planners.greedy_heuristic_action(hills20, agent, self.goal)] = 1
            return q

    monkeypatch.setattr(planners, "GoalConditionedQ", Greedy)
    p = qnet.init_network(0, qnet.Architecture.for_grid(20, 20))
    res = planners.dmop_plan(hills20, p, (14, 12), goal)
    assert res.success and len(res.path) == 2
    res = planners.dmop_plan(hills20, p, (1, 1), goal)
    assert res.success and res.info["reason"] == "reached"
    assert res.path.cells()[-1] == goal


def test_dmop_loop_detection(monkeypatch, hills20):
    class Bounce:
        def __init__(self, *a, **kw):
            pass

        def __call__(self, agent):
            q = np.zeros(8)
            q[2 if agent[0] % 2 == 0 else 6] = 1
            return q

    monkeypatch.setattr(planners, "GoalConditionedQ", Bounce)
    p = qnet.init_network(0, qnet.Architecture.for_grid(20, 20))
    res = planners.dmop_plan(hills20, p, (4, 4), (15, 15))
    assert not res.success and res.info["reason"] == "loop"


def test_dmop_highres_lifts_to_full_map(monkeypatch):
    big = terrain.generate(3, 40, 40)
    coarse = terrain.downscale(big, 2)

    class Greedy:
        def __init__(self, params, elev, g, *a, **kw):
            self.goal = g

        def __call__(self, agent):
            q = np.zeros(8)
            q[planners.greedy_heuristic_action(coarse, agent, self.goal)] = 1
            return q

    monkeypatch.setattr(planners, "GoalConditionedQ", Greedy)
    p = qnet.init_network(0, qnet.Architecture.for_grid(20, 20))
    for enhance_path in (False, True):
        res = planners.dmop_plan_highres(big, p, (1, 2), (37, 30), enhance_path=enhance_path)
        assert res.success
        assert tuple(res.path.xy[0]) == (1, 2)
        assert tuple(res.path.xy[-1]) == (37, 30)
        res.path.check_surface(big)
        d, e, s = res.path.metrics(DEFAULT_MODEL, big.world_scale_m)
        assert s == res.objective_sum
        assert res.planner_name == ("dmop+enhance" if enhance_path else "dmop")


def test_run_planner_dispatch(hills20):
    res = planners.run_planner("astar", hills20, DEFAULT_MODEL, (0, 0), (5, 5))
    assert res.planner_name == "astar"
    with pytest.raises(ValueError):
        planners.run_planner("dmop", hills20, DEFAULT_MODEL, (0, 0), (5, 5))
    with pytest.raises(ValueError):
        planners.run_planner("bfs", hills20, DEFAULT_MODEL, (0, 0), (5, 5))


def test_objective_is_path_objective(hills20):
    res = planners.dijkstra(hills20, DEFAULT_MODEL, (0, 19), (19, 0))
    assert res.objective_sum == path_objective(res.path, DEFAULT_MODEL, hills20.world_scale_m)
