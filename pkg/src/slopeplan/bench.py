"""Benchmark harness: run planners on shared cases, tabulate, render.

Rows report metrics recomputed from each planner's path. Wall time is the
median over repetitions; failures become unsuccessful rows.
"""

from __future__ import annotations

import csv
import hashlib
import json
import math
import platform
import statistics
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import terrain
from .cost import CostModel, DEFAULT_MODEL, GridPath
from .planners import PlannerResult, RRTConfig, run_planner

REPORT_COLUMNS = ("case", "planner", "distance_m", "energy_u", "sum", "time_s", "expanded", "success")
CASE_COLUMNS = ("case", "map", "sx", "sy", "gx", "gy")

PALETTE = {
    "dijkstra": (230, 40, 40),
    "astar": (40, 200, 60),
    "rrt": (40, 90, 230),
    "dmop": (250, 200, 20),
    "dmop+enhance": (230, 60, 220),
}
EXTRA_COLORS = ((20, 220, 220), (255, 140, 0), (150, 90, 40), (255, 255, 255))
EXPANDED_COLOR = (90, 140, 170)


@dataclass(frozen=True)
class BenchCase:
    label: str
    dem: terrain.DemGrid
    start: tuple[int, int]
    goal: tuple[int, int]
    map_ref: str = ""

    def __post_init__(self):
        if tuple(self.start) == tuple(self.goal):
            raise ValueError(f"case {self.label}: start and goal must differ")
        for name, c in (("start", self.start), ("goal", self.goal)):
            if not self.dem.in_bounds(*c):
                raise ValueError(f"case {self.label}: {name} {c} out of bounds")


@dataclass
class BenchRow:
    case: str
    planner: str
    distance_m: float
    energy_u: float
    sum: float
    time_s: float
    expanded: int
    success: bool
    path: GridPath | None = None


@dataclass
class BenchReport:
    rows: list[BenchRow] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def row(self, case: str, planner: str) -> BenchRow:
        for r in self.rows:
            if r.case == case and r.planner == planner:
                return r
        raise KeyError((case, planner))


def host_info() -> dict:
    return {"python": platform.python_version(), "numpy": np.__version__,
            "machine": platform.machine(), "system": platform.system()}


def _row_from_result(case: BenchCase, name: str, res: PlannerResult, time_s: float,
                     model: CostModel) -> BenchRow:
    if not res.success or res.path is None:
        return BenchRow(case.label, name, math.nan, math.nan, math.nan, time_s, res.expanded, False,
                        res.path)
    d, e, s = res.path.metrics(model, case.dem.world_scale_m)
    return BenchRow(case.label, name, d, e, s, time_s, res.expanded, True, res.path)


def run_suite(cases, planners, cost_model: CostModel = DEFAULT_MODEL, repetitions: int = 1, *,
              params=None, rrt_config: RRTConfig = RRTConfig(), external_paths: dict | None = None,
              backend: str | None = None, max_steps: int = 150) -> BenchReport:
    """Run every planner on every case ``repetitions`` times.

    ``external_paths`` maps ``(case_label, name)`` to a :class:`GridPath`
    produced elsewhere; each becomes a row named ``name`` with zero time.
    Planner exceptions are recorded as unsuccessful rows.
    """
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    report = BenchReport(metadata={"repetitions": repetitions, "host": host_info(), "maps": {}})
    for case in cases:
        report.metadata["maps"][case.label] = case.dem.digest()
        for name in planners:
            times = []
            result = None
            try:
                for _ in range(repetitions):
                    res = run_planner(name, case.dem, cost_model, case.start, case.goal,
                                      params=params, rrt_config=rrt_config, max_steps=max_steps,
                                      backend=backend)
                    times.append(res.wall_time_s)
                    if result is None:
                        result = res
            except Exception as exc:  # recorded, never aborts the suite
                report.rows.append(BenchRow(case.label, name, math.nan, math.nan, math.nan,
                                            math.nan, 0, False))
                report.metadata.setdefault("errors", []).append(f"{case.label}/{name}: {exc}")
                continue
            report.rows.append(_row_from_result(case, name, result, statistics.median(times),
                                                cost_model))
        for (label, name), path in (external_paths or {}).items():
            if label != case.label:
                continue
            d, e, s = path.metrics(cost_model, case.dem.world_scale_m)
            report.rows.append(BenchRow(label, name, d, e, s, 0.0, 0, True, path))
    return report


def _fmt(v) -> str:
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return "" if math.isnan(v) else repr(v)
    return str(v)


def export_csv(report: BenchReport, out_path, include_timing: bool = True) -> None:
    """One row per (case, planner). Without timing the time column is left blank."""
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in report.rows:
            t = r.time_s if include_timing else math.nan
            w.writerow([r.case, r.planner, _fmt(r.distance_m), _fmt(r.energy_u), _fmt(r.sum),
                        _fmt(t), r.expanded, _fmt(r.success)])


def read_csv(path) -> list[dict]:
    def num(v):
        return math.nan if v == "" else float(v)

    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != REPORT_COLUMNS:
            raise ValueError(f"{path}: unexpected columns {reader.fieldnames}")
        rows = []
        for rec in reader:
            rows.append({"case": rec["case"], "planner": rec["planner"],
                         "distance_m": num(rec["distance_m"]), "energy_u": num(rec["energy_u"]),
                         "sum": num(rec["sum"]), "time_s": num(rec["time_s"]),
                         "expanded": int(rec["expanded"]), "success": rec["success"] == "1"})
    return rows


def read_cases(path) -> list[BenchCase]:
    """Cases CSV ``case,map,sx,sy,gx,gy``; map paths are relative to the file."""
    path = Path(path)
    maps: dict[str, terrain.DemGrid] = {}
    cases = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CASE_COLUMNS:
            raise ValueError(f"{path}: expected columns {','.join(CASE_COLUMNS)}")
        for rec in reader:
            ref = rec["map"]
            if ref not in maps:
                maps[ref] = terrain.load(path.parent / ref)
            cases.append(BenchCase(rec["case"], maps[ref], (int(rec["sx"]), int(rec["sy"])),
                                   (int(rec["gx"]), int(rec["gy"])), ref))
    return cases


def planner_color(name: str, index: int = 0) -> tuple[int, int, int]:
    return PALETTE.get(name, EXTRA_COLORS[index % len(EXTRA_COLORS)])


def _paint(img, x, y, scale, color):
    img[y * scale:(y + 1) * scale, x * scale:(x + 1) * scale] = color


def _trace(xy: np.ndarray) -> np.ndarray:
    """Cells visited by the polyline, sampled densely enough to be gap-free."""
    pts = [np.rint(xy[:1])]
    for a, b in zip(xy[:-1], xy[1:]):
        n = int(math.ceil(np.max(np.abs(b - a)) * 2)) + 1
        t = np.linspace(0.0, 1.0, n + 1)[1:, None]
        pts.append(np.rint(a + (b - a) * t))
    return np.concatenate(pts).astype(np.int64)


def render_image(dem: terrain.DemGrid, paths: dict, pixel_scale: int = 4,
                 expanded: dict | None = None) -> np.ndarray:
    """``(H*s, W*s, 3)`` uint8 top-down render.

    Elevation is grey (black at the map minimum), each path is drawn in its
    planner colour and ``expanded`` cells, if given, are tinted underneath.
    """
    if pixel_scale < 1:
        raise ValueError("pixel_scale must be >= 1")
    z = dem.elevations
    lo, hi = float(z.min()), float(z.max())
    grey = np.zeros_like(z) if hi == lo else (z - lo) / (hi - lo)
    base = np.rint(grey * 200 + 30).astype(np.uint8)
    img = np.repeat(np.repeat(base, pixel_scale, axis=0), pixel_scale, axis=1)
    img = np.stack([img] * 3, axis=-1)
    for cells in (expanded or {}).values():
        for x, y in cells:
            _paint(img, int(x), int(y), pixel_scale, EXPANDED_COLOR)
    for i, (name, path) in enumerate(paths.items()):
        if path is None:
            continue
        color = planner_color(name, i)
        cells = _trace(np.asarray(path.xy if isinstance(path, GridPath) else path, dtype=float))
        cells[:, 0] = np.clip(cells[:, 0], 0, dem.width - 1)
        cells[:, 1] = np.clip(cells[:, 1], 0, dem.height - 1)
        for x, y in cells:
            _paint(img, x, y, pixel_scale, color)
    return img


def write_ppm(img: np.ndarray, out_path) -> None:
    h, w, _ = img.shape
    with open(out_path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.ascontiguousarray(img, dtype=np.uint8).tobytes())


def read_ppm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P6" or int(parts[3]) != 255:
        raise ValueError(f"{path}: not an 8-bit P6 image")
    w, h = int(parts[1]), int(parts[2])
    return np.frombuffer(parts[4], dtype=np.uint8)[:w * h * 3].reshape(h, w, 3)


def render_case(dem: terrain.DemGrid, results, out_path, pixel_scale: int = 4,
                show_expanded: bool = False) -> Path:
    """Render ``results`` (PlannerResults or ``{name: path}``) to PPM, or PNG by suffix.

    PNG output needs Pillow.
    """
    if isinstance(results, dict):
        paths = dict(results)
        expanded = None
    else:
        paths = {r.planner_name: r.path for r in results}
        expanded = None
        if show_expanded:
            expanded = {r.planner_name: r.info["tree"] for r in results if "tree" in r.info}
    img = render_image(dem, paths, pixel_scale, expanded)
    out_path = Path(out_path)
    if out_path.suffix.lower() == ".png":
        from PIL import Image

        Image.fromarray(img, "RGB").save(out_path, optimize=False)
    else:
        write_ppm(img, out_path)
    return out_path


def config_hash(config: dict) -> str:
    blob = json.dumps(config, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def file_hash(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir, artifacts, config: dict, report: BenchReport | None = None) -> Path:
    """``manifest.json`` listing artifacts with their hashes and the config hash."""
    out_dir = Path(out_dir)
    entries = [{"file": str(Path(a).relative_to(out_dir) if Path(a).is_relative_to(out_dir) else a),
                "sha256": file_hash(a)} for a in artifacts]
    manifest = {"config": config, "config_sha256": config_hash(config), "artifacts": entries}
    if report is not None:
        manifest["maps"] = report.metadata.get("maps", {})
        manifest["errors"] = report.metadata.get("errors", [])
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")
    return path
