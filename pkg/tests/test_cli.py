import json

import numpy as np
import pytest

from fogclear.cli import main
from fogclear.dataio import read_shard
from fogclear.gamestate import downsample_sum_8x8
from fogclear.render import grid_csv, pgm_bytes, read_pgm, render_heatmap, to_gray, triptych
from fogclear.errors import InvalidArgument

GEN = ["--replays", "3", "--frames-per-replay", "12"]


# --- rendering -------------------------------------------------------------

def test_zero_channel_is_black():
    img, grid = render_heatmap(np.zeros((66, 32, 32)), 3)
    assert img.shape == (32, 32) and not img.any() and not grid.any()


def test_single_max_cell_is_white():
    fmap = np.zeros((66, 32, 32))
    fmap[7, 4, 9] = 3
    fmap[7, 0, 0] = 1
    img, _ = render_heatmap(fmap, 7)
    assert img[4, 9] == 255 and img[0, 0] == 85 and img.sum() == 255 + 85


def test_sum8_grid_matches_downsample():
    fmap = np.random.default_rng(0).integers(0, 5, (66, 32, 32)).astype(np.float32)
    img, grid = render_heatmap(fmap, 40, "sum8")
    assert img.shape == (8, 8)
    assert np.array_equal(grid, downsample_sum_8x8(fmap, 40))


def test_render_rejects_bad_channel_and_mode():
    with pytest.raises(InvalidArgument):
        render_heatmap(np.zeros((66, 32, 32)), 66)
    with pytest.raises(InvalidArgument):
        render_heatmap(np.zeros((66, 32, 32)), 0, "raw16")


def test_pgm_layout_and_csv(tmp_path):
    img = to_gray(np.arange(6).reshape(2, 3))
    data = pgm_bytes(img)
    assert data.startswith(b"P5\n3 2\n255\n") and len(data) == 11 + 6
    path = tmp_path / "a.pgm"
    path.write_bytes(data)
    assert np.array_equal(read_pgm(path), img)
    assert grid_csv(np.array([[1.0, 2.5], [0.0, 3.0]])) == "1,2.5\n0,3\n"
    assert triptych([img, img, img]).shape == (2, 3 * 3 + 2 * 2)


# --- command dispatch ------------------------------------------------------

@pytest.fixture
def shard(tmp_path):
    assert main(["gen", "--seed", "7", *GEN, "--out-dir", str(tmp_path), "--out", "d.fogd"]) == 0
    return tmp_path / "d.fogd"


def test_gen_byte_reproducible(tmp_path, shard):
    assert main(["gen", "--seed", "7", *GEN, "--out-dir", str(tmp_path), "--out", "e.fogd"]) == 0
    assert (tmp_path / "e.fogd").read_bytes() == shard.read_bytes()
    assert main(["gen", "--seed", "8", *GEN, "--out-dir", str(tmp_path), "--out", "f.fogd"]) == 0
    assert (tmp_path / "f.fogd").read_bytes() != shard.read_bytes()
    assert len(read_shard(shard)) == 3 * 8


def test_manifest_written(tmp_path, shard):
    manifest = json.loads((tmp_path / "gen.manifest.json").read_text())
    assert manifest["command"] == "gen" and manifest["seed"] == 7
    assert manifest["config"]["replays"] == 3
    (path, digest), = manifest["sha256"].items()
    import hashlib
    assert hashlib.sha256(shard.read_bytes()).hexdigest() == digest


@pytest.mark.parametrize("argv", [["gen", "--bogus"], ["nope"], [], ["render", "--channel", "3"]])
def test_usage_errors_exit_1(argv, capsys):
    assert main(argv) == 1
    assert "usage" in capsys.readouterr().err


def test_retrieved_without_ed_checkpoint(tmp_path, shard, capsys):
    code = main(["eval-clf", "--data", str(shard), "--checkpoint", "x.fogc", "--variant", "retrieved",
                 "--out-dir", str(tmp_path)])
    assert code == 1
    assert "--ed-checkpoint" in capsys.readouterr().err


def test_io_and_format_errors_exit_2(tmp_path):
    assert main(["render", "--data", str(tmp_path / "missing.fogd"), "--channel", "1",
                 "--out-dir", str(tmp_path)]) == 2
    bad = tmp_path / "bad.fogd"
    bad.write_bytes(b"NOPE" + bytes(20))
    assert main(["render", "--data", str(bad), "--channel", "1", "--out-dir", str(tmp_path)]) == 2


def test_validation_before_output(tmp_path, shard):
    out = tmp_path / "out"
    assert main(["render", "--data", str(shard), "--channel", "99", "--out-dir", str(out)]) == 1
    assert not out.exists()
    assert main(["gen", "--replays", "0", "--out-dir", str(out)]) == 1
    assert not out.exists()


def test_gradcheck_command(tmp_path, capsys):
    assert main(["gradcheck", "--base-filters", "2", "--out-dir", str(tmp_path)]) == 0
    assert "max relative error" in capsys.readouterr().out
    assert "passed,1" in (tmp_path / "gradcheck.csv").read_text()


def test_config_file_overrides(tmp_path, shard):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"replays": 2, "frames_per_replay": 10}))
    assert main(["gen", "--config", str(cfg), "--out-dir", str(tmp_path), "--out", "g.fogd"]) == 0
    assert len(read_shard(tmp_path / "g.fogd")) == 2 * 6
    # explicit flags win over the file
    assert main(["gen", "--config", str(cfg), "--replays", "1", "--out-dir", str(tmp_path), "--out", "h.fogd"]) == 0
    assert len(read_shard(tmp_path / "h.fogd")) == 6
    cfg.write_text(json.dumps({"no_such_flag": 1}))
    assert main(["gen", "--config", str(cfg), "--out-dir", str(tmp_path)]) == 1


def test_thread_env_validation(tmp_path, monkeypatch):
    monkeypatch.setenv("FOGCLEAR_THREADS", "many")
    assert main(["gen", *GEN, "--out-dir", str(tmp_path)]) == 1
    monkeypatch.setenv("FOGCLEAR_THREADS", "2")
    assert main(["gen", *GEN, "--out-dir", str(tmp_path)]) == 0


def _snapshot(directory):
    return {p.name: p.read_bytes() for p in sorted(directory.iterdir()) if not p.name.endswith(".manifest.json")}


def run_pipeline(out, shard):
    common = ["--out-dir", str(out), "--seed", "3"]
    data = ["--data", str(shard), "--train-fraction", "0.5"]
    assert main(["train-ed", *common, *data, "--epochs", "2", "--base-filters", "2"]) == 0
    assert main(["train-clf", *common, *data, "--epochs", "2", "--variant", "retrieved",
                 "--ed-checkpoint", str(out / "ed.fogc"), "--widths", "2,2,2,2,2"]) == 0
    assert main(["eval-clf", *common, "--data", str(shard), "--train-fraction", "0.5",
                 "--checkpoint", str(out / "clf_retrieved.fogc"), "--variant", "retrieved",
                 "--ed-checkpoint", str(out / "ed.fogc")]) == 0
    assert main(["render", *common, "--data", str(shard), "--index", "4", "--channel", "35",
                 "--ed-checkpoint", str(out / "ed.fogc")]) == 0
    assert main(["bench-policies", *common, "--trials", "3", "--frames-per-replay", "18",
                 "--ed-checkpoint", str(out / "ed.fogc"),
                 "--clf-checkpoint", str(out / "clf_retrieved.fogc")]) == 0
    return _snapshot(out)


def test_pipeline_byte_reproducible(tmp_path, shard):
    first = run_pipeline(tmp_path / "a", shard)
    second = run_pipeline(tmp_path / "b", shard)
    assert first == second
    assert {"ed.fogc", "clf_retrieved.fogc", "metrics.csv", "bench.csv",
            "heatmap_triptych_c35_raw32.pgm"} <= set(first)
    rows = first["metrics.csv"].decode().splitlines()
    assert rows[0] == "metric,value" and rows[1].startswith("accuracy,")
