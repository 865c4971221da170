"""``slopeplan`` command line: map generation, training, planning, enhancement,
benchmarking and rendering.

Exit codes: 0 success, 1 usage error, 2 I/O error, 3 numeric divergence or
planner failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from . import bench, enhance, planners, qnet, terrain, trainer
from .cost import CostModel, GridPath, PathError
from .gridworld import render_observation
from .pathio import read_path_csv, write_path_csv

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_FAILURE = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _cell(text: str) -> tuple[int, int]:
    try:
        x, y = (int(v) for v in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected x,y integers, got {text!r}") from None
    return x, y


def _roughness(text: str) -> float:
    v = float(text)
    if not 0.0 < v <= 1.0:
        raise argparse.ArgumentTypeError("roughness must lie in (0, 1]")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _load_map(path) -> terrain.DemGrid:
    return terrain.load(path)


def _model(args) -> CostModel:
    return CostModel(args.eta_us, args.eta_ds, args.weight)


def _add_cost_flags(p):
    p.add_argument("--weight", type=float, default=1.0, help="energy weight in the objective")
    p.add_argument("--eta-us", type=float, default=25.0)
    p.add_argument("--eta-ds", type=float, default=0.25)


def cmd_gen_map(args) -> int:
    dem = terrain.generate(args.seed, args.size, args.size, args.roughness, args.scale)
    terrain.save(dem, args.out)
    print(dem.digest())
    return EXIT_OK


def cmd_train(args) -> int:
    dem = _load_map(args.map)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.episodes is not None:
        overrides["max_episodes"] = args.episodes
    try:
        pairs = {}
        for kv in args.set:
            if "=" not in kv:
                raise ValueError(f"--set expects KEY=VALUE, got {kv!r}")
            key, value = kv.split("=", 1)
            pairs[key] = value
        overrides.update(trainer.parse_overrides(pairs))
        config = trainer.load_config(args.config, overrides)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from None

    def progress(row):
        if args.verbose and (row["episode"] + 1) % 100 == 0:
            print(f"episode {row['episode'] + 1}: reward {row['total_reward']:.2f} "
                  f"reached {int(row['reached'])}", file=sys.stderr)

    try:
        trainer.train(dem, config, checkpoint_path=args.out_checkpoint, log_path=args.log,
                      progress=progress)
    except trainer.TrainingDiverged as exc:
        print(f"training diverged: {exc}", file=sys.stderr)
        return EXIT_FAILURE
    return EXIT_OK


def _load_params(path):
    params, _ = qnet.load_checkpoint(path)
    return params


def cmd_plan(args) -> int:
    if args.planner == "dmop" and args.checkpoint is None:
        raise UsageError("--planner dmop requires --checkpoint")
    if args.start == args.goal:
        raise UsageError("start and goal must differ")
    dem = _load_map(args.map)
    for name, c in (("start", args.start), ("goal", args.goal)):
        if not dem.in_bounds(*c):
            raise UsageError(f"{name} {c} outside the {dem.width}x{dem.height} map")
    params = _load_params(args.checkpoint) if args.checkpoint else None
    try:
        res = planners.run_planner(args.planner, dem, _model(args), args.start, args.goal,
                                   params=params, max_steps=args.max_steps, backend=args.backend,
                                   rrt_config=planners.RRTConfig(seed=args.seed),
                                   enhance_path=args.enhance)
    except planners.PlannerError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_FAILURE
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    if res.path is not None and args.out:
        write_path_csv(res.path, args.out)
    print(f"planner={res.planner_name} success={int(res.success)} distance_m={res.distance_m!r} "
          f"energy_u={res.energy_u!r} sum={res.objective_sum!r} time_s={res.wall_time_s:.6f} "
          f"expanded={res.expanded}")
    return EXIT_OK if res.success else EXIT_FAILURE


def cmd_enhance(args) -> int:
    path = read_path_csv(args.path)
    dem = _load_map(args.map_highres)
    if len(path) < 2:
        raise PathError("cannot enhance a path with fewer than 2 points")
    out = enhance.enhance(path, args.factor, dem, args.samples)
    write_path_csv(out, args.out)
    return EXIT_OK


def cmd_bench(args) -> int:
    cases = bench.read_cases(args.cases)
    names = [n for n in args.planners.split(",") if n]
    for n in names:
        if n not in (*planners.PLANNERS, "dmop+enhance"):
            raise UsageError(f"unknown planner {n!r}")
    params = _load_params(args.checkpoint) if args.checkpoint else None
    if any(n.startswith("dmop") for n in names) and params is None:
        raise UsageError("dmop planners require --checkpoint")
    external = {}
    for spec in args.external:
        try:
            label, name, file = spec.split(":", 2)
        except ValueError:
            raise UsageError(f"--external expects case:name:file, got {spec!r}") from None
        external[(label, name)] = read_path_csv(file)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = _model(args)
    report = bench.run_suite(cases, names, model, args.reps, params=params,
                             rrt_config=planners.RRTConfig(seed=args.seed),
                             external_paths=external, backend=args.backend)
    csv_path = out_dir / "report.csv"
    bench.export_csv(report, csv_path, include_timing=not args.no_timing)
    artifacts = [csv_path]
    if not args.no_render:
        for case in cases:
            paths = {r.planner: r.path for r in report.rows if r.case == case.label}
            artifacts.append(bench.render_case(case.dem, paths, out_dir / f"{case.label}.ppm",
                                               args.pixel_scale))
    config = {"cases": [(c.label, c.map_ref, list(c.start), list(c.goal)) for c in cases],
              "planners": names, "reps": args.reps, "seed": args.seed,
              "cost_model": [model.eta_us, model.eta_ds, model.energy_weight],
              "checkpoint": bench.file_hash(args.checkpoint) if args.checkpoint else None}
    bench.write_manifest(out_dir, artifacts, config, report)
    failed = [f"{r.case}/{r.planner}" for r in report.rows if not r.success]
    if failed:
        print("unsuccessful: " + " ".join(failed), file=sys.stderr)
    return EXIT_OK


def cmd_render(args) -> int:
    dem = _load_map(args.map)
    paths = {}
    for i, spec in enumerate(args.paths):
        name, _, file = spec.rpartition("=")
        paths[name or f"path{i}"] = read_path_csv(file)
    bench.render_case(dem, paths, args.out, args.pixel_scale)
    return EXIT_OK


def cmd_observe(args) -> int:
    dem = _load_map(args.map)
    obs = render_observation(dem, args.agent, args.goal)
    img = (obs.transpose(1, 2, 0) * 255).round().astype("uint8")
    img = img.repeat(args.pixel_scale, axis=0).repeat(args.pixel_scale, axis=1)
    bench.write_ppm(img, args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="slopeplan", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-map", help="generate a fractal elevation map")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--size", type=_positive_int, default=50)
    g.add_argument("--roughness", type=_roughness, default=0.5)
    g.add_argument("--scale", type=float, default=100.0, help="meters per cell")
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_map)

    t = sub.add_parser("train", help="train a Q-network on one map")
    t.add_argument("--map", required=True)
    t.add_argument("--config", help="key = value file of training settings")
    t.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                   help="override one training setting")
    t.add_argument("--seed", type=int)
    t.add_argument("--episodes", type=int)
    t.add_argument("--out-checkpoint", required=True)
    t.add_argument("--log", help="episode CSV")
    t.add_argument("-v", "--verbose", action="store_true")
    t.set_defaults(func=cmd_train)

    pl = sub.add_parser("plan", help="plan one path")
    pl.add_argument("--map", required=True)
    pl.add_argument("--planner", choices=planners.PLANNERS, required=True)
    pl.add_argument("--checkpoint")
    pl.add_argument("--start", type=_cell, required=True)
    pl.add_argument("--goal", type=_cell, required=True)
    pl.add_argument("--out", help="path CSV")
    pl.add_argument("--enhance", action="store_true", help="spline-enhance a dmop path")
    pl.add_argument("--max-steps", type=_positive_int, default=150)
    pl.add_argument("--seed", type=int, default=0, help="RRT seed")
    pl.add_argument("--backend", choices=("compiled", "python"))
    _add_cost_flags(pl)
    pl.set_defaults(func=cmd_plan)

    e = sub.add_parser("enhance", help="lift a coarse path and smooth it")
    e.add_argument("--path", required=True)
    e.add_argument("--map-highres", required=True)
    e.add_argument("--factor", type=_positive_int, required=True)
    e.add_argument("--samples", type=_positive_int, default=enhance.DEFAULT_SAMPLES)
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_enhance)

    b = sub.add_parser("bench", help="run planners over a case list")
    b.add_argument("--cases", required=True, help="CSV case,map,sx,sy,gx,gy")
    b.add_argument("--planners", default="dijkstra,astar,rrt")
    b.add_argument("--reps", type=_positive_int, default=1)
    b.add_argument("--out-dir", required=True)
    b.add_argument("--checkpoint")
    b.add_argument("--external", action="append", default=[], metavar="CASE:NAME:FILE",
                   help="inject a path file as an extra row")
    b.add_argument("--seed", type=int, default=0, help="RRT seed")
    b.add_argument("--backend", choices=("compiled", "python"))
    b.add_argument("--pixel-scale", type=_positive_int, default=4)
    b.add_argument("--no-render", action="store_true")
    b.add_argument("--no-timing", action="store_true",
                   help="leave time_s blank so reports are byte-reproducible")
    _add_cost_flags(b)
    b.set_defaults(func=cmd_bench)

    r = sub.add_parser("render", help="draw paths over a map")
    r.add_argument("--map", required=True)
    r.add_argument("--paths", nargs="+", default=[], metavar="[NAME=]FILE")
    r.add_argument("--pixel-scale", type=_positive_int, default=4)
    r.add_argument("--out", required=True, help=".ppm or .png")
    r.set_defaults(func=cmd_render)

    o = sub.add_parser("observe", help="write the network input image for a state")
    o.add_argument("--map", required=True)
    o.add_argument("--agent", type=_cell, required=True)
    o.add_argument("--goal", type=_cell, required=True)
    o.add_argument("--pixel-scale", type=_positive_int, default=4)
    o.add_argument("--out", required=True)
    o.set_defaults(func=cmd_observe)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors by exiting
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"slopeplan {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, terrain.DemFormatError, qnet.CheckpointError, PathError) as exc:
        print(f"slopeplan {args.command}: {exc}", file=sys.stderr)
        return EXIT_IO
    except (qnet.DivergenceError, FloatingPointError) as exc:
        print(f"slopeplan {args.command}: {exc}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
