"""Compare the compiled and pure-Python grid search kernels.

Runs Dijkstra and A* on generated maps of several sizes with both backends,
checks they return the same objective, and writes a CSV of median times.

    python benchmarks/bench_kernels.py --sizes 50 100 200 --reps 5 --out kernels.csv
"""

import argparse
import csv
import statistics
import sys
import time

from slopeplan import planners, search, terrain
from slopeplan.cost import DEFAULT_MODEL


def median_time(fn, reps):
    times = []
    result = None
    for _ in range(reps):
        t0 = time.perf_counter()
        result = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), result


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[50, 100, 200])
    ap.add_argument("--reps", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="kernels.csv")
    args = ap.parse_args(argv)

    if "compiled" not in search.BACKENDS:
        print("compiled extension not built; only the Python backend is available", file=sys.stderr)
    backends = [b for b in ("compiled", "python") if b in search.BACKENDS]
    rows = []
    for size in args.sizes:
        dem = terrain.generate(args.seed, size, size)
        start, goal = (0, 0), (size - 1, size - 1)
        for planner in (planners.dijkstra, planners.astar):
            sums = {}
            for backend in backends:
                t, res = median_time(lambda: planner(dem, DEFAULT_MODEL, start, goal, backend=backend),
                                     args.reps)
                sums[backend] = res.objective_sum
                rows.append({"size": size, "planner": planner.__name__, "backend": backend,
                             "time_s": t, "expanded": res.expanded, "sum": res.objective_sum})
                print(f"{size:4d} {planner.__name__:8s} {backend:8s} {t * 1e3:9.2f} ms "
                      f"expanded={res.expanded}")
            if len(set(sums.values())) != 1:
                print(f"backends disagree on {planner.__name__} at size {size}: {sums}",
                      file=sys.stderr)
                return 1
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    for size in args.sizes:
        for name in ("dijkstra", "astar"):
            t = {r["backend"]: r["time_s"] for r in rows if r["size"] == size and r["planner"] == name}
            if len(t) == 2:
                print(f"{size:4d} {name:8s} speedup {t['python'] / t['compiled']:.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
