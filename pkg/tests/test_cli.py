import json

import pytest

from prunekit.cli import main
from prunekit.treemodel import (
    SynthParams,
    load_cuts,
    save_cloud_csv,
    save_skeleton,
    synth_tree,
)


@pytest.fixture(scope="module")
def tree_file(tmp_path_factory):
    d = tmp_path_factory.mktemp("trees")
    graph, cloud = synth_tree(0, SynthParams())
    path = d / "tree.json"
    save_skeleton(graph, path)
    cloud_path = d / "tree.csv"
    save_cloud_csv(cloud, cloud_path)
    return path, cloud_path


def test_cuts_command(tree_file, tmp_path, capsys):
    skel, cloud = tree_file
    out = tmp_path / "cuts.json"
    rc = main(["cuts", "--skeleton", str(skel), "--out", str(out), "--diagnose"])
    assert rc == 0
    cuts = load_cuts(out)
    assert len(cuts) > 0
    assert "wrote" in capsys.readouterr().out

def test_cuts_with_cloud_transfer(tree_file, tmp_path):
    skel, cloud = tree_file
    out = tmp_path / "cuts.json"
    rc = main(["cuts", "--skeleton", str(skel), "--cloud", str(cloud), "--out", str(out)])
    assert rc == 0
    assert len(load_cuts(out)) > 0


def test_synth_command(tmp_path, capsys):
    rc = main(["synth", "--out", str(tmp_path / "t"), "--count", "2", "--clouds"])
    assert rc == 0
    files = sorted((tmp_path / "t").iterdir())
    names = {f.name for f in files}
    assert {"tree_00.json", "tree_00.ply", "tree_01.json", "tree_01.ply"} <= names


def test_rings_command(tree_file, tmp_path):
    skel, _ = tree_file
    out = tmp_path / "rings.json"
    rc = main(["rings", "--skeleton", str(skel), "--cut-index", "0",
               "--out", str(out), "--angles", "8"])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert len(doc["rings"]) == 2
    assert len(doc["rings"][0]["poses"]) == 8

def test_rings_bad_index_exits_one(tree_file, tmp_path, capsys):
    skel, _ = tree_file
    rc = main(["rings", "--skeleton", str(skel), "--cut-index", "99",
               "--out", str(tmp_path / "r.json")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err


def test_plan_then_simulate(tree_file, tmp_path, capsys):
    skel, _ = tree_file
    plan_path = tmp_path / "plan.json"
    rc = main(["plan", "--skeleton", str(skel), "--cut-index", "0",
               "--out", str(plan_path), "--base-index", "1",
               "--angles", "12", "--ik-count", "4", "--timeout", "20", "--seed", "0"])
    assert rc == 0
    doc = json.loads(plan_path.read_text())
    assert doc["format"] == "prunekit-plan"
    out = capsys.readouterr().out
    assert "cut 0:" in out

    log_path = tmp_path / "exec.json"
    rc = main(["simulate", "--plan", str(plan_path), "--out", str(log_path)])
    assert rc == 0
    msg = capsys.readouterr().out
    if doc["status"] == "planned":
        assert log_path.exists()
        assert "execution:" in msg
    else:
        assert "nothing to simulate" in msg


def test_plan_explicit_base(tree_file, tmp_path):
    skel, _ = tree_file
    plan_path = tmp_path / "plan2.json"
    rc = main(["plan", "--skeleton", str(skel), "--cut-index", "0",
               "--out", str(plan_path), "--base", "2.0,0,1.0,3.14159",
               "--angles", "8", "--ik-count", "2", "--timeout", "10"])
    assert rc == 0
    assert json.loads(plan_path.read_text())["context"]["base_index"] is None


def test_bench_command(tmp_path, capsys):
    tdir = tmp_path / "trees"
    tdir.mkdir()
    graph, _ = synth_tree(1, SynthParams(branch_count=6, twig_count=3))
    save_skeleton(graph, tdir / "mini.json")
    out = tmp_path / "bench"
    rc = main(["bench", "--trees", str(tdir), "--method", "elementary",
               "--out", str(out), "--angles", "8", "--ik-count", "2",
               "--timeout", "10"])
    assert rc == 0
    report = json.loads((out / "report.json").read_text())
    assert report["format"] == "prunekit-report"
    assert "elementary" in report["methods"]
    assert (out / "timing.json").exists() and (out / "trials.csv").exists()
    assert "planning" in capsys.readouterr().out


def test_bench_missing_trees_dir_exits_one(tmp_path, capsys):
    rc = main(["bench", "--trees", str(tmp_path / "nothing"), "--out", str(tmp_path / "o")])
    assert rc == 1
    assert "error:" in capsys.readouterr().err
