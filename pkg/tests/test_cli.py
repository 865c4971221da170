import re

import numpy as np
import pytest

from slopeplan import bench, qnet, terrain
from slopeplan.cli import main
from slopeplan.pathio import read_path_csv, write_path_csv
from slopeplan.cost import GridPath


@pytest.fixture
def map16(tmp_path):
    out = tmp_path / "m16.dem"
    assert main(["gen-map", "--seed", "3", "--size", "16", "--out", str(out)]) == 0
    return out


def _sum(text):
    return float(re.search(r"sum=(\S+)", text).group(1))


def test_gen_map_hash_is_deterministic(tmp_path, capsys):
    for name in ("a.dem", "b.dem"):
        assert main(["gen-map", "--seed", "7", "--size", "20", "--out", str(tmp_path / name)]) == 0
    a, b = capsys.readouterr().out.split()
    assert a == b == terrain.load(tmp_path / "a.dem").digest()


def test_gen_map_size(tmp_path):
    assert main(["gen-map", "--size", "100", "--out", str(tmp_path / "m.dem")]) == 0
    assert terrain.load(tmp_path / "m.dem").elevations.shape == (100, 100)


def test_gen_map_bad_roughness(tmp_path):
    assert main(["gen-map", "--roughness", "1.5", "--out", str(tmp_path / "m.dem")]) == 1


def test_missing_flag_is_usage_error():
    assert main(["plan", "--planner", "dijkstra"]) == 1


def test_plan_dijkstra_and_astar_agree(map16, tmp_path, capsys):
    sums = []
    for name in ("dijkstra", "astar"):
        out = tmp_path / f"{name}.csv"
        code = main(["plan", "--map", str(map16), "--planner", name, "--start", "1,1",
                     "--goal", "14,12", "--out", str(out)])
        assert code == 0
        sums.append(_sum(capsys.readouterr().out))
        assert read_path_csv(out).cells()[0] == (1, 1)
    assert sums[0] == sums[1]


def test_plan_usage_errors(map16):
    assert main(["plan", "--map", str(map16), "--planner", "dmop", "--start", "1,1",
                 "--goal", "5,5"]) == 1
    assert main(["plan", "--map", str(map16), "--planner", "dijkstra", "--start", "2,2",
                 "--goal", "2,2"]) == 1
    assert main(["plan", "--map", str(map16), "--planner", "dijkstra", "--start", "2;2",
                 "--goal", "3,3"]) == 1
    assert main(["plan", "--map", str(map16), "--planner", "dijkstra", "--start", "0,0",
                 "--goal", "30,3"]) == 1


def test_plan_missing_map_is_io_error(tmp_path):
    assert main(["plan", "--map", str(tmp_path / "none.dem"), "--planner", "dijkstra",
                 "--start", "0,0", "--goal", "1,1"]) == 2


def test_train_fresh_and_deterministic(map16, tmp_path):
    cfg = tmp_path / "t.cfg"
    cfg.write_text("max_episodes = 0\nfc_widths = 16, 16\n")
    ck = tmp_path / "fresh.ckpt"
    assert main(["train", "--map", str(map16), "--config", str(cfg), "--out-checkpoint", str(ck)]) == 0
    params, meta = qnet.load_checkpoint(ck)
    assert meta["episodes"] == 0
    fresh = qnet.init_network(int(np.random.default_rng(0).integers(2**31)), params.arch)
    assert params.equals(fresh)

    runs = []
    for i in range(2):
        ck = tmp_path / f"r{i}.ckpt"
        log = tmp_path / f"r{i}.csv"
        argv = ["train", "--map", str(map16), "--config", str(cfg), "--episodes", "3",
                "--set", "max_steps=10", "--set", "batch_size=4", "--set", "training_interval=1",
                "--set", "batches_per_training=1", "--seed", "5",
                "--out-checkpoint", str(ck), "--log", str(log)]
        assert main(argv) == 0
        runs.append((ck.read_bytes(), log.read_bytes()))
    assert runs[0] == runs[1]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_train_errors(map16, tmp_path):
    ck = str(tmp_path / "x.ckpt")
    assert main(["train", "--map", str(tmp_path / "none.dem"), "--out-checkpoint", ck]) == 2
    assert main(["train", "--map", str(map16), "--set", "nope=1", "--out-checkpoint", ck]) == 1
    assert main(["train", "--map", str(map16), "--set", "max_episodes", "--out-checkpoint", ck]) == 1
    assert main(["train", "--map", str(map16), "--episodes", "2", "--set", "learning_rate=1e30",
                 "--set", "clip_norm=1e300", "--set", "max_steps=10", "--set", "batch_size=4",
                 "--set", "training_interval=1", "--set", "fc_widths=16,16",
                 "--out-checkpoint", ck]) == 3


def test_plan_dmop_with_checkpoint(map16, tmp_path, capsys):
    dem = terrain.load(map16)
    ck = tmp_path / "n.ckpt"
    qnet.save_checkpoint(qnet.init_network(0, qnet.Architecture.for_grid(16, 16)), ck)
    code = main(["plan", "--map", str(map16), "--planner", "dmop", "--checkpoint", str(ck),
                 "--start", "1,1", "--goal", "12,12", "--max-steps", "20"])
    out = capsys.readouterr().out
    assert "planner=dmop" in out
    assert code in (0, 3) and (code == 0) == ("success=1" in out)
    assert dem.width == 16


def test_enhance_subcommand(tmp_path):
    z = np.zeros((20, 20))
    hi = tmp_path / "hi.dem"
    terrain.save(terrain.DemGrid(z), hi)
    lo = terrain.DemGrid(np.zeros((10, 10)))
    src = tmp_path / "p.csv"
    write_path_csv(GridPath.on_surface(lo, [(x, 3) for x in range(1, 8)]), src)
    out = tmp_path / "e.csv"
    assert main(["enhance", "--path", str(src), "--map-highres", str(hi), "--factor", "2",
                 "--out", str(out)]) == 0
    res = read_path_csv(out)
    assert np.allclose(res.xy[:, 1], 6.0, atol=1e-12)
    assert tuple(res.xy[0]) == (2.0, 6.0) and tuple(res.xy[-1]) == (14.0, 6.0)

    same = tmp_path / "same.dem"
    terrain.save(lo, same)
    assert main(["enhance", "--path", str(src), "--map-highres", str(same), "--factor", "1",
                 "--out", str(out)]) == 0
    res = read_path_csv(out)
    assert tuple(res.xy[0]) == (1.0, 3.0) and tuple(res.xy[-1]) == (7.0, 3.0)

    single = tmp_path / "one.csv"
    single.write_text("idx,x,y,z\n0,1,1,0\n")
    assert main(["enhance", "--path", str(single), "--map-highres", str(same), "--factor", "1",
                 "--out", str(out)]) != 0


def _cases(tmp_path, map16):
    cases = tmp_path / "cases.csv"
    cases.write_text(f"case,map,sx,sy,gx,gy\nc1,{map16.name},1,1,14,12\nc2,{map16.name},14,0,0,15\n")
    return cases


def test_bench_subcommand(map16, tmp_path):
    cases = _cases(tmp_path, map16)
    out = tmp_path / "out"
    assert main(["bench", "--cases", str(cases), "--planners", "dijkstra,astar,rrt",
                 "--out-dir", str(out), "--reps", "2"]) == 0
    rows = bench.read_csv(out / "report.csv")
    assert len(rows) == 6
    for c in ("c1", "c2"):
        s = {r["planner"]: r["sum"] for r in rows if r["case"] == c}
        assert s["dijkstra"] == s["astar"] <= s["rrt"]
    assert (out / "c1.ppm").exists() and (out / "manifest.json").exists()


def test_bench_is_deterministic_without_timing(map16, tmp_path):
    cases = _cases(tmp_path, map16)
    blobs = []
    for i in range(2):
        out = tmp_path / f"o{i}"
        assert main(["bench", "--cases", str(cases), "--out-dir", str(out), "--no-timing"]) == 0
        blobs.append([(out / f).read_bytes() for f in ("report.csv", "c1.ppm", "c2.ppm", "manifest.json")])
    assert blobs[0] == blobs[1]


def test_bench_usage_errors(map16, tmp_path):
    cases = _cases(tmp_path, map16)
    out = str(tmp_path / "o")
    assert main(["bench", "--cases", str(cases), "--planners", "bogus", "--out-dir", out]) == 1
    assert main(["bench", "--cases", str(cases), "--planners", "dmop", "--out-dir", out]) == 1
    assert main(["bench", "--cases", str(tmp_path / "none.csv"), "--out-dir", out]) == 2


def test_bench_external_rows(map16, tmp_path):
    cases = _cases(tmp_path, map16)
    dem = terrain.load(map16)
    ext = tmp_path / "h.csv"
    write_path_csv(GridPath.on_surface(dem, [(1, 1), (2, 2), (3, 3)]), ext)
    out = tmp_path / "o"
    assert main(["bench", "--cases", str(cases), "--planners", "dijkstra", "--out-dir", str(out),
                 "--external", f"c1:h3dm:{ext}", "--no-render"]) == 0
    rows = bench.read_csv(out / "report.csv")
    assert [r["planner"] for r in rows if r["case"] == "c1"] == ["dijkstra", "h3dm"]


def test_render_and_observe(map16, tmp_path):
    dem = terrain.load(map16)
    p = tmp_path / "p.csv"
    write_path_csv(GridPath.on_surface(dem, [(0, 0), (1, 1)]), p)
    out = tmp_path / "r.ppm"
    assert main(["render", "--map", str(map16), "--paths", f"dijkstra={p}", "--pixel-scale", "2",
                 "--out", str(out)]) == 0
    img = bench.read_ppm(out)
    assert img.shape == (32, 32, 3) and tuple(img[0, 0]) == bench.PALETTE["dijkstra"]
    obs = tmp_path / "o.ppm"
    assert main(["observe", "--map", str(map16), "--agent", "3,4", "--goal", "10,10",
                 "--pixel-scale", "1", "--out", str(obs)]) == 0
    assert bench.read_ppm(obs).shape == (16, 16, 3)
