import json
import subprocess
import sys

import numpy as np
import pytest

from lumenforge.cli import main
from lumenforge.imaging import HdrImage, read_pfm, write_binary_mask, write_pfm, write_png
from lumenforge.lighting import SgEnvironment, sg_to_grid
from lumenforge.matmap import build_conditional, write_table
from lumenforge.renderlayer import GBuffer, LightingGrid
from lumenforge.scene import write_gbuffer, write_lighting

from conftest import overhead_env


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def scene(tmp_path):
    h, w = 12, 16
    normal = np.zeros((h, w, 3))
    normal[..., 1], normal[..., 2] = 0.8, 0.6
    g = GBuffer(np.full((h, w, 3), 0.5), normal, np.full((h, w), 0.4), np.full((h, w), 3.0))
    write_gbuffer(g, tmp_path / "gb")
    write_lighting(LightingGrid.uniform(overhead_env()), tmp_path / "gb" / "lights.txt")
    write_pfm(HdrImage(np.full((h, w, 3), 0.4, np.float32)), tmp_path / "photo.pfm")
    region = np.zeros((h, w), bool)
    region[4:8, 4:10] = True
    write_binary_mask(region, tmp_path / "region.png")
    return tmp_path


def test_help_and_version():
    r = subprocess.run([sys.executable, "-m", "lumenforge", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "compare-sh-sg" in r.stdout
    r = subprocess.run([sys.executable, "-m", "lumenforge", "--version"], capture_output=True, text=True)
    assert r.returncode == 0 and "0.1.0" in r.stdout


@pytest.mark.parametrize("argv,token", [
    (["render", "--gbuffer", "x", "--lights", "y", "--out-diffuse", "a", "--out-specular", "b", "--bogus"], "--bogus"),
    (["frobnicate"], "frobnicate"),
    (["insert", "--image", "a", "--gbuffer", "b", "--lights", "c", "--out", "d", "--at", "1,2", "--object", "cube:1"],
     "cube:1"),
    (["insert", "--image", "a", "--gbuffer", "b", "--lights", "c", "--out", "d", "--at", "1.5,2", "--object",
      "sphere:1"], "1.5,2"),
])
def test_usage_errors_exit_one(capsys, argv, token):
    code, _, err = run(capsys, *argv)
    assert code == 1 and token in err


def test_missing_inputs_exit_one(capsys, tmp_path):
    code, _, err = run(capsys, "fit-sg", "--input", tmp_path / "nope.pfm", "--out", tmp_path / "o.txt")
    assert code == 1 and "nope.pfm" in err
    code, _, err = run(capsys, "render", "--gbuffer", tmp_path, "--lights", tmp_path,
                       "--out-diffuse", tmp_path / "d.pfm", "--out-specular", tmp_path / "s.pfm")
    assert code == 1 and "lights.txt" in err


def test_compare_default_map(capsys):
    code, out, _ = run(capsys, "compare-sh-sg", "--json")
    assert code == 0
    rep = json.loads(out)
    assert rep["sg_log_loss"] < rep["sh_log_loss"]
    assert rep["sg_render_mse"] < rep["sh_render_mse"]
    assert rep["sg_parameters"] == 72 and rep["sh_parameters"] == 75


def test_fit_sg_round_trip(capsys, tmp_path):
    env = SgEnvironment([[0.3, 0.2, np.sqrt(0.87)], [0, 0, 1]], [30.0, 0.01], [[6, 5, 4], [0.3] * 3])
    write_pfm(HdrImage(sg_to_grid(env).radiance.astype(np.float32)), tmp_path / "env.pfm")
    code, out, _ = run(capsys, "fit-sg", "--input", tmp_path / "env.pfm", "--out", tmp_path / "sg.txt",
                       "--trace", tmp_path / "trace.csv")
    assert code == 0
    assert float(out.split("loss = ")[1].split()[0]) < 1e-2
    assert len((tmp_path / "sg.txt").read_text().splitlines()) == 12
    assert (tmp_path / "trace.csv").read_text().startswith("iteration,loss,gradient_norm")
    code, _, err = run(capsys, "fit-sg", "--input", tmp_path / "env.pfm", "--out", tmp_path / "x.txt",
                       "--lobes", 8)
    assert code == 1 and "--lobes 12" in err


def test_render(capsys, scene):
    code, out, _ = run(capsys, "render", "--gbuffer", scene / "gb", "--lights", scene / "gb",
                       "--out-diffuse", scene / "d.pfm", "--out-specular", scene / "s.pfm")
    assert code == 0 and "diffuse_mean" in out
    d = read_pfm(scene / "d.pfm").data
    assert d.shape == (12, 16, 3) and np.all(d > 0)


def test_insert_and_determinism(capsys, scene):
    args = ["insert", "--image", scene / "photo.pfm", "--gbuffer", scene / "gb", "--lights", scene / "gb",
            "--at", "8,6", "--object", "sphere:0.3", "--env-resolution", "32x64", "--json"]
    code, out, _ = run(capsys, *args, "--out", scene / "a.pfm")
    assert code == 0 and json.loads(out)["object_pixels"] > 0
    assert run(capsys, *args, "--out", scene / "b.pfm")[0] == 0
    assert np.array_equal(read_pfm(scene / "a.pfm").data, read_pfm(scene / "b.pfm").data)
    assert run(capsys, *args, "--out", scene / "c.png")[0] == 0
    code, _, err = run(capsys, *[("99,6" if a == "8,6" else a) for a in args], "--out", scene / "d.pfm")
    assert code == 2 and "outside" in err


def test_edits(capsys, scene):
    base = ["--image", scene / "photo.pfm", "--gbuffer", scene / "gb", "--lights", scene / "gb",
            "--region", scene / "region.png"]
    assert run(capsys, "edit-material", *base, "--albedo", "0.9,0.1,0.1", "--out", scene / "m.pfm")[0] == 0
    m = read_pfm(scene / "m.pfm").data
    assert m[5, 5, 0] > m[5, 5, 1] and m[0, 0, 0] == pytest.approx(0.4)
    assert run(capsys, "edit-specular", *base, "--rough", "0.1", "--out", scene / "s.pfm")[0] == 0
    assert read_pfm(scene / "s.pfm").data[0, 0, 0] == pytest.approx(0.4)


def test_tile(capsys, tmp_path):
    rng = np.random.default_rng(0)
    write_png(rng.random((40, 40, 3)), tmp_path / "a.png")
    write_png(np.dstack([np.full((40, 40), 0.5), np.full((40, 40), 0.5), np.ones((40, 40))]), tmp_path / "n.png")
    write_png(np.repeat(rng.random((40, 40, 1)), 3, 2), tmp_path / "r.png")
    code, out, _ = run(capsys, "tile", "--albedo", tmp_path / "a.png", "--normal", tmp_path / "n.png",
                       "--rough", tmp_path / "r.png", "--patch", 16, "--out", tmp_path / "out")
    assert code == 0 and "tiling_energy" in out
    for name in ("albedo.png", "normal.png", "roughness.png", "preview.png"):
        assert (tmp_path / "out" / name).is_file()
    code, _, err = run(capsys, "tile", "--albedo", tmp_path / "a.png", "--normal", tmp_path / "n.png",
                       "--rough", tmp_path / "r.png", "--out", tmp_path / "out")
    assert code == 1 and "--patch" in err


def test_eval_loss_identical_scenes(capsys, scene):
    write_pfm(HdrImage(np.full((12, 16, 3), 0.3, np.float32)), scene / "gb" / "image.pfm")
    code, out, _ = run(capsys, "eval-loss", "--gt", scene / "gb", "--pred", scene / "gb", "--json")
    assert code == 0
    rep = json.loads(out)
    for k in ("albedo", "normal", "roughness", "depth", "lighting", "sg_direction"):
        assert rep[k] == pytest.approx(0.0, abs=1e-10)
    assert rep["depth_scale"] == pytest.approx(1.0, rel=1e-5)
    (scene / "w.txt").write_text("render = 0\nbogus = 1\n")
    code, _, err = run(capsys, "eval-loss", "--gt", scene / "gb", "--pred", scene / "gb", "--weights", scene / "w.txt")
    assert code == 1 and "bogus" not in err.split("error:")[0]


def test_matmap_sample(capsys, tmp_path):
    write_table(build_conditional([((2, 3), 0.42)] * 4), tmp_path / "t.txt")
    code, out, _ = run(capsys, "matmap-sample", "--table", tmp_path / "t.txt", "--key", "2,3", "--count", 5)
    vals = [float(v) for v in out.split()]
    assert code == 0 and len(vals) == 5 and all(0.4 <= v < 0.45 for v in vals)
    assert run(capsys, "matmap-sample", "--table", tmp_path / "t.txt", "--key", "2,3", "--count", 5)[1] == out
    code, _, err = run(capsys, "matmap-sample", "--table", tmp_path / "t.txt", "--key", "9,9")
    assert code == 2 and "(2, 3)" in err
    code, _, _ = run(capsys, "matmap-sample", "--key", "2,3")
    assert code == 1
    (tmp_path / "obs.csv").write_text("".join(f"{e},{i},{r}\n" for e, i, r in np.random.default_rng(1).random((300, 3))))
    code, out, _ = run(capsys, "matmap-sample", "--observations", tmp_path / "obs.csv", "--phong", "0.5,0.5",
                       "--save-table", tmp_path / "saved.txt", "--json")
    assert code == 0 and len(json.loads(out)["samples"]) == 1 and (tmp_path / "saved.txt").is_file()
