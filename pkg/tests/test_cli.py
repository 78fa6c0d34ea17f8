"""Exit codes and file side effects of the command line front end."""

import json
import shutil

import pytest

from porosim.cli import main
from porosim.errors import SolverError


def test_demo_then_validate_then_replay(tmp_path):
    out = tmp_path / "scene"
    assert main(["demo", "--out", str(out)]) == 0
    scene = out / "scene.json"
    script = out / "script.json"
    assert scene.exists() and script.exists()

    assert main(["validate", "--scene", str(scene)]) == 0

    replay_dir = tmp_path / "replay"
    assert main(["-v", "replay", "--scene", str(scene), "--script", str(script),
                 "--out", str(replay_dir), "--duration", "0.1"]) == 0
    force = (replay_dir / "force.csv").read_text().splitlines()
    assert force[0] == "time_s,fx,fy,fz,mode,contact_count"
    assert len(force) == 101        # header plus one row per millisecond tick
    summary = json.loads((replay_dir / "summary.json").read_text())
    assert summary["steps"] == 10


def test_creature_demo_validates(tmp_path):
    out = tmp_path / "creature"
    assert main(["demo", "--out", str(out), "--kind", "creature"]) == 0
    assert main(["validate", "--scene", str(out / "scene.json")]) == 0


def test_validate_flags_a_broken_scene(tmp_path, bar_scene_dir):
    shutil.copytree(bar_scene_dir, tmp_path / "copy")
    scene = tmp_path / "copy" / "scene.json"
    doc = json.loads(scene.read_text())
    doc["material"]["poisson_ratio"] = 0.5
    scene.write_text(json.dumps(doc))
    assert main(["validate", "--scene", str(scene)]) == 2


def test_missing_scene_file_is_invalid_input(tmp_path):
    assert main(["validate", "--scene", str(tmp_path / "nope.json")]) == 2


def test_solver_collapse_gets_its_own_exit_code(bar_scene_dir, tmp_path, monkeypatch):
    def explode(*args, **kwargs):
        raise SolverError("no convergence", residual=1.0, iterations=200)

    monkeypatch.setattr("porosim.fem.step", explode)
    code = main(["replay", "--scene", str(bar_scene_dir / "scene.json"),
                 "--script", str(bar_scene_dir / "script.json"),
                 "--out", str(tmp_path / "replay"), "--duration", "0.05"])
    assert code == 3


def test_unknown_subcommand_fails_argparse():
    with pytest.raises(SystemExit) as info:
        main(["juggle"])
    assert info.value.code == 2
