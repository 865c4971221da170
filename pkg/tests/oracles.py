"""Independent reference implementations used as test oracles."""

import math

from slopeplan.cost import CostModel, path_objective, step_cost
from slopeplan.moves import MOVES


def exhaustive_best(dem, model: CostModel, start, goal):
    """Minimum-objective simple path by depth-first enumeration.

    Branches whose partial cost already exceeds the best complete path are
    cut; with positive edge costs that never discards an optimum.
    """
    z = dem.elevations
    scale = dem.world_scale_m
    best = [math.inf, None]
    path = [start]
    seen = {start}

    def edge(a, b):
        return step_cost((a[0], a[1], z[a[1], a[0]]), (b[0], b[1], z[b[1], b[0]]), model, scale)

    def dfs(cell, cost):
        if cost >= best[0]:
            return
        if cell == goal:
            best[0], best[1] = cost, list(path)
            return
        for dx, dy in MOVES:
            n = (cell[0] + dx, cell[1] + dy)
            if not dem.in_bounds(*n) or n in seen:
                continue
            seen.add(n)
            path.append(n)
            dfs(n, cost + edge(cell, n))
            path.pop()
            seen.discard(n)

    dfs(start, 0.0)
    cells = best[1]
    pts = [(x, y, float(z[y, x])) for x, y in cells]
    return path_objective(pts, model, scale), cells
