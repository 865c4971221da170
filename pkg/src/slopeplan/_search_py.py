"""Pure-Python best-first search over the 8-connected elevation grid.

Mirrors ``_search_ext.pyx`` operation for operation so both backends expand
nodes in the same order and return the same path.
"""

from __future__ import annotations

import heapq
import math

from .moves import MOVES

_QUARTER_PI = math.pi / 4.0


def grid_search(elev, scale, eta_us, eta_ds, weight, sx, sy, gx, gy, h_dist, h_energy):
    """Search from ``(sx, sy)`` to ``(gx, gy)``.

    Edge weight is distance plus ``weight`` times slope energy, both in
    meters of ``scale``. ``h_dist``/``h_energy`` scale the admissible
    heuristic terms; zero for both gives Dijkstra.

    Returns ``(cells, expanded)`` where ``cells`` is the list of ``(x, y)``
    from start to goal, or ``None`` if the goal is unreachable.
    """
    height, width = elev.shape
    z = elev.tolist()
    n = width * height
    inf = math.inf
    g = [inf] * n
    parent = [-1] * n
    closed = [False] * n
    c_up = eta_us / _QUARTER_PI
    c_down = 1.0 - 2.0 * eta_ds
    zg = z[gy][gx]
    use_h = h_dist != 0.0 or h_energy != 0.0

    def heuristic(x, y):
        if not use_h:
            return 0.0
        dx = x - gx
        dy = y - gy
        dz = z[y][x] - zg
        d = math.sqrt(dx * dx + dy * dy + dz * dz) * scale
        if dz < 0.0:
            e = c_up * (-dz) * scale
        else:
            e = c_down * dz * scale
        return h_dist * d + h_energy * weight * e

    start = sy * width + sx
    goal = gy * width + gx
    g[start] = 0.0
    heap = [(heuristic(sx, sy), 0, start)]
    counter = 1
    expanded = 0
    while heap:
        f, _, node = heapq.heappop(heap)
        if closed[node]:
            continue
        closed[node] = True
        expanded += 1
        if node == goal:
            break
        y, x = divmod(node, width)
        zn = z[y][x]
        gn = g[node]
        for dx, dy in MOVES:
            nx = x + dx
            ny = y + dy
            if nx < 0 or ny < 0 or nx >= width or ny >= height:
                continue
            m = ny * width + nx
            dz = z[ny][nx] - zn
            horiz = math.sqrt(dx * dx + dy * dy)
            dist = math.sqrt(dx * dx + dy * dy + dz * dz) * scale
            beta = math.atan2(abs(dz), horiz)
            if dz > 0.0:
                energy = dist * (beta / _QUARTER_PI * eta_us)
            else:
                energy = dist * (1.0 - beta / _QUARTER_PI * eta_ds)
            cand = gn + (dist + weight * energy)
            if cand < g[m]:
                g[m] = cand
                parent[m] = node
                closed[m] = False
                heapq.heappush(heap, (cand + heuristic(nx, ny), counter, m))
                counter += 1
    if not closed[goal]:
        return None, expanded
    cells = []
    node = goal
    while node != -1:
        y, x = divmod(node, width)
        cells.append((x, y))
        node = parent[node]
    cells.reverse()
    return cells, expanded
