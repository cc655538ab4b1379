import json

import numpy as np
import pytest

from depthrefine.cli import run_cli, run_demo
from depthrefine.config import Config
from depthrefine.core_depth import DepthMap
from depthrefine.geom3d import read_ply
from depthrefine.io import read_depth, write_pfm


@pytest.fixture
def maps(tmp_path):
    rng = np.random.default_rng(0)
    gt = rng.uniform(1, 4, (24, 32))
    gt[8:16, 10:20] = 0.8
    write_pfm(DepthMap(gt), tmp_path / "gt.pfm")
    write_pfm(DepthMap(gt * 1.1), tmp_path / "pred.pfm")
    write_pfm(DepthMap(0.5 * gt + 2.0, None, "affine_invariant"), tmp_path / "rel.pfm")
    return tmp_path


def test_align(maps, capsys):
    assert run_cli(["align", "--source", str(maps / "rel.pfm"), "--target", str(maps / "gt.pfm")]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["scale"] == pytest.approx(2.0, abs=1e-5)
    assert out["shift"] == pytest.approx(-4.0, abs=1e-5)


def test_eval_json(maps):
    out = maps / "r.json"
    code = run_cli(["eval", "--pred", str(maps / "pred.pfm"), "--gt", str(maps / "gt.pfm"), "-o", str(out)])
    assert code == 0
    data = json.loads(out.read_text())
    assert data["images"][0]["a_rel"] == pytest.approx(0.1, abs=1e-6)
    assert data["aggregate"]["delta1"] == 1.0


def test_eval_manifest_threads(maps):
    man = maps / "m.jsonl"
    rec = {"pred": str(maps / "pred.pfm"), "gt": str(maps / "gt.pfm")}
    man.write_text("\n".join(json.dumps(dict(rec, name=f"im{i}")) for i in range(3)))
    out = maps / "r.json"
    assert run_cli(["eval", "--manifest", str(man), "--threads", "3", "-o", str(out)]) == 0
    assert [r["name"] for r in json.loads(out.read_text())["images"]] == ["im0", "im1", "im2"]


def test_diffmap_edges_unproject(maps):
    assert run_cli(["diffmap", "--relative", str(maps / "rel.pfm"), "--metric", str(maps / "gt.pfm"),
                    "-o", str(maps / "e.png")]) == 0
    assert run_cli(["edges", "--input", str(maps / "gt.pfm"), "-o", str(maps / "edges.png")]) == 0
    assert run_cli(["unproject", "--depth", str(maps / "gt.pfm"), "--intrinsics", "50", "50", "16", "12",
                    "-o", str(maps / "c.ply")]) == 0
    assert len(read_ply(maps / "c.ply")) == 24 * 32


def test_refine_files(maps):
    out = maps / "refined.pfm"
    code = run_cli(["refine", "--metric", str(maps / "gt.pfm"), "--relative", str(maps / "rel.pfm"),
                    "-o", str(out), "--config", str(_cfg(maps, "refine:\n  steps: 10\n"))])
    assert code == 0
    assert read_depth(str(out)).shape == (24, 32)


def test_fuse(maps):
    man = maps / "f.jsonl"
    man.write_text(json.dumps({"depth": str(maps / "gt.pfm"), "intrinsics": [50, 50, 16, 12]}))
    assert run_cli(["fuse", "--manifest", str(man), "-o", str(maps / "f.ply")]) == 0
    assert len(read_ply(maps / "f.ply")) > 0


def _cfg(path, text):
    p = path / "c.yaml"
    p.write_text(text)
    return p


def test_exit_codes(maps):
    assert run_cli([]) == 2
    assert run_cli(["refine"]) == 2
    assert run_cli(["eval", "--pred", str(maps / "missing.pfm"), "--gt", str(maps / "gt.pfm")]) == 3
    bad = maps / "bad.pfm"
    bad.write_bytes(b"P5\n")
    assert run_cli(["eval", "--pred", str(bad), "--gt", str(maps / "gt.pfm")]) == 3
    assert run_cli(["config", "--config", str(_cfg(maps, "nope: 1\n"))]) == 3
    small = maps / "small.pfm"
    write_pfm(DepthMap(np.full((4, 4), 2.0), None, "affine_invariant"), small)
    assert run_cli(["align", "--source", str(small), "--target", str(maps / "gt.pfm")]) == 3


def test_numerical_exit_code(maps):
    flat = maps / "flat.pfm"
    write_pfm(DepthMap(np.full((24, 32), 2.0), None, "affine_invariant"), flat)
    assert run_cli(["align", "--source", str(flat), "--target", str(maps / "gt.pfm")]) == 4


def test_config_echo(capsys):
    assert run_cli(["config"]) == 0
    assert "lambda_recons: 0.3" in capsys.readouterr().out


def test_demo_small():
    out = run_demo(0, Config(), 32)
    assert set(out["metrics"]) == {"input", "refined"}
