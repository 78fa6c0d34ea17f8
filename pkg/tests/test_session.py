"""Scene/script parsing and the full simulation session lifecycle."""

import copy
import json

import numpy as np
import pytest

from porosim.errors import SceneError
from porosim.haptics import IDENTITY_POSE, Pose
from porosim.session import (
    Session,
    ToolPathScript,
    build_summary,
    export_state,
    import_state,
    load_scene,
    load_script,
    parse_scene,
    parse_script,
    run_replay,
)


@pytest.fixture()
def scene_payload(bar_scene_dir):
    with open(bar_scene_dir / "scene.json", encoding="utf-8") as fh:
        return json.load(fh)


def field_of(err):
    return err.value.field


# -- scene parsing --------------------------------------------------------


def test_demo_scene_loads(bar_scene_dir):
    session = load_scene(bar_scene_dir / "scene.json")
    assert session.mesh.n_tets == 960
    assert session.surface.n_vertices > 0
    assert len(session.sim_params.fixed_vertices) > 0
    assert session.tool_radius == pytest.approx(0.12 * 0.08, rel=1e-6)


def test_wrong_schema_version(scene_payload, bar_scene_dir):
    scene_payload["schema_version"] = 99
    with pytest.raises(SceneError) as err:
        parse_scene(scene_payload, bar_scene_dir)
    assert field_of(err) == "schema_version"


def test_missing_mesh_file(scene_payload, bar_scene_dir):
    scene_payload["proxy_mesh"] = "nope.obj"
    with pytest.raises(SceneError) as err:
        parse_scene(scene_payload, bar_scene_dir)
    assert field_of(err) == "proxy_mesh"


def test_wetting_porosity_must_match_material(scene_payload, bar_scene_dir):
    scene_payload["wetting"]["porosity"] = 0.25
    with pytest.raises(SceneError) as err:
        parse_scene(scene_payload, bar_scene_dir)
    assert field_of(err) == "wetting.porosity"


def test_simulation_density_must_match_material(scene_payload, bar_scene_dir):
    scene_payload["simulation"]["density"] = 999.0
    with pytest.raises(SceneError) as err:
        parse_scene(scene_payload, bar_scene_dir)
    assert field_of(err) == "simulation.density"


def test_poisson_ratio_upper_bound(scene_payload, bar_scene_dir):
    scene_payload["material"]["poisson_ratio"] = 0.5
    with pytest.raises(SceneError) as err:
        parse_scene(scene_payload, bar_scene_dir)
    assert field_of(err) == "material.poisson_ratio"


def test_plastic_cap_below_yield(scene_payload, bar_scene_dir):
    scene_payload["simulation"]["plasticity"]["max_strain"] = 0.01
    with pytest.raises(SceneError) as err:
        parse_scene(scene_payload, bar_scene_dir)
    assert field_of(err) == "simulation.plasticity.max_strain"


def test_kernel_radius_must_be_positive(scene_payload, bar_scene_dir):
    scene_payload["contact"]["kernel"]["radius"] = 0.0
    with pytest.raises(SceneError) as err:
        parse_scene(scene_payload, bar_scene_dir)
    assert field_of(err) == "contact.kernel.radius"


def test_unstable_diffusion_is_refused_at_load(scene_payload, bar_scene_dir):
    scene_payload["wetting"]["diffusivity"] = 50.0
    config = parse_scene(scene_payload, bar_scene_dir)
    with pytest.raises(SceneError) as err:
        Session(config)
    assert field_of(err) == "wetting.diffusivity"


def test_missing_field_names_its_path(scene_payload, bar_scene_dir):
    del scene_payload["contact"]["stiffness"]
    with pytest.raises(SceneError) as err:
        parse_scene(scene_payload, bar_scene_dir)
    assert field_of(err) == "contact.stiffness"


# -- script parsing -------------------------------------------------------


def script_doc(*frames):
    return {"schema_version": 1, "keyframes": list(frames)}


def frame(t, pos, **kw):
    out = {"time": t, "position": list(pos)}
    out.update(kw)
    return out


def test_demo_script_parses(bar_scene_dir):
    script = load_script(bar_scene_dir / "script.json")
    assert script.duration == pytest.approx(1.7)
    assert script.keyframes[0].time == 0.0


def test_first_keyframe_must_start_at_zero():
    with pytest.raises(SceneError) as err:
        parse_script(script_doc(frame(0.5, (0, 0, 0))))
    assert field_of(err) == "keyframes[0].time"


def test_keyframe_times_strictly_increase():
    with pytest.raises(SceneError) as err:
        parse_script(script_doc(frame(0.0, (0, 0, 0)), frame(0.0, (1, 0, 0))))
    assert field_of(err) == "keyframes[1].time"


def test_position_must_have_three_numbers():
    with pytest.raises(SceneError) as err:
        parse_script(script_doc(frame(0.0, (0, 0))))
    assert field_of(err) == "keyframes[0].position"


def test_orientation_must_have_four_numbers():
    with pytest.raises(SceneError) as err:
        parse_script(script_doc(frame(0.0, (0, 0, 0), orientation=[1, 0, 0])))
    assert field_of(err) == "keyframes[0].orientation"


def test_unknown_mode_is_rejected():
    with pytest.raises(SceneError) as err:
        parse_script(script_doc(frame(0.0, (0, 0, 0), mode="scrub")))
    assert field_of(err) == "keyframes[0].mode"


def test_script_interpolation_and_mode_holding():
    script = parse_script(script_doc(
        frame(0.0, (0.0, 0.0, 0.0), mode="push"),
        frame(1.0, (1.0, 0.0, 0.0), mode="wet"),
        frame(2.0, (1.0, 1.0, 0.0), mode="dry"),
    ))
    pose, mode = script.at(-5.0)
    assert np.allclose(pose.position, [0.0, 0.0, 0.0]) and mode == "push"
    pose, mode = script.at(0.5)
    assert np.allclose(pose.position, [0.5, 0.0, 0.0])
    assert mode == "push"              # a span keeps its starting mode
    pose, mode = script.at(1.5)
    assert np.allclose(pose.position, [1.0, 0.5, 0.0]) and mode == "wet"
    pose, mode = script.at(99.0)
    assert np.allclose(pose.position, [1.0, 1.0, 0.0]) and mode == "dry"


def test_empty_script_holds_no_pose():
    script = ToolPathScript(keyframes=[])
    assert script.duration == 0.0
    assert script.at(0.3) == (None, "push")


# -- session stepping -----------------------------------------------------


def touching_pose(session):
    """Tool centered on the top face so the sphere penetrates halfway."""
    top = session.mesh.rest_positions[:, 2].max()
    center = session.mesh.rest_positions.mean(axis=0)
    return Pose(position=(center[0], center[1], top),
                orientation=(1.0, 0.0, 0.0, 0.0))


def test_step_without_tool_keeps_rest(bar_scene_dir):
    session = load_scene(bar_scene_dir / "scene.json")
    sample = session.step(None)
    assert session.step_index == 1
    assert session.sim_time == pytest.approx(session.config.dt)
    assert np.array_equal(session.mesh.current_positions, session.mesh.rest_positions)
    assert np.array_equal(sample.force, np.zeros(3))
    assert sample.contact_count == 0


def test_pressing_generates_contacts_and_motion(bar_scene_dir):
    session = load_scene(bar_scene_dir / "scene.json")
    pose = touching_pose(session)
    samples = [session.step(pose) for _ in range(5)]
    assert any(s.contact_count > 0 for s in samples)
    assert np.linalg.norm(samples[-1].force) > 0.0
    moved = np.abs(session.mesh.current_positions - session.mesh.rest_positions)
    assert moved.max() > 1e-6
    assert session.surface.highlight.max() > 0.0
    row = session.stats_rows[-1]
    assert row.contact_count == samples[-1].contact_count
    assert row.candidates_vf > 0


def test_wet_mode_adds_water_and_dry_removes_it(bar_scene_dir):
    session = load_scene(bar_scene_dir / "scene.json")
    pose = touching_pose(session)
    for _ in range(4):
        session.step(pose, mode="wet")
    wet_mass = session.saturation.total_water_mass
    assert wet_mass > 0.0
    assert session.surface.wetness.max() > 0.0
    # wetting must not have displaced anything by itself
    for _ in range(30):
        session.step(pose, mode="dry")
    assert session.saturation.total_water_mass < wet_mass


def test_wet_steps_soften_and_refresh_elements(bar_scene_dir):
    session = load_scene(bar_scene_dir / "scene.json")
    pose = touching_pose(session)
    refreshed = 0
    for _ in range(10):
        session.step(pose, mode="wet")
        refreshed += session.stats_rows[-1].refreshed_tets
    assert refreshed > 0
    assert session.state.phi_applied.max() > 0.0


def test_two_sessions_replay_bitwise_identically(bar_scene_dir):
    script = load_script(bar_scene_dir / "script.json")
    ends = []
    forces = []
    for _ in range(2):
        session = load_scene(bar_scene_dir / "scene.json")
        trace = []
        for k in range(70):
            pose, mode = script.at((k + 1) * session.config.dt)
            sample = session.step(pose, mode)
            trace.append(tuple(sample.force))
        ends.append(session.mesh.current_positions.copy())
        forces.append(trace)
    assert np.array_equal(ends[0], ends[1])
    assert forces[0] == forces[1]


def test_state_round_trip_resumes_bitwise(bar_scene_dir, tmp_path):
    script = load_script(bar_scene_dir / "script.json")
    first = load_scene(bar_scene_dir / "scene.json")
    for k in range(60):
        pose, mode = script.at((k + 1) * first.config.dt)
        first.step(pose, mode)
    path = export_state(first, tmp_path / "dump")
    assert (tmp_path / "dump" / "surface.obj").is_file()
    assert (tmp_path / "dump" / "saturation.csv").is_file()

    second = load_scene(bar_scene_dir / "scene.json")
    import_state(second, path)
    assert second.step_index == first.step_index
    assert np.array_equal(second.mesh.current_positions, first.mesh.current_positions)

    for session in (first, second):
        for k in range(60, 75):
            pose, mode = script.at((k + 1) * session.config.dt)
            session.step(pose, mode)
    assert np.array_equal(first.mesh.current_positions, second.mesh.current_positions)
    assert np.array_equal(first.mesh.velocities, second.mesh.velocities)
    assert np.array_equal(first.saturation.water_mass, second.saturation.water_mass)
    assert np.array_equal(first.state.phi_applied, second.state.phi_applied)


def test_reset_returns_to_pristine_rest(bar_scene_dir):
    session = load_scene(bar_scene_dir / "scene.json")
    pose = touching_pose(session)
    for _ in range(5):
        session.step(pose, mode="wet")
    for _ in range(5):
        session.step(pose, mode="push")
    session.reset()
    assert session.step_index == 0
    assert session.sim_time == 0.0
    assert np.array_equal(session.mesh.current_positions, session.mesh.rest_positions)
    assert np.array_equal(session.mesh.velocities, np.zeros_like(session.mesh.velocities))
    assert session.saturation.total_water_mass == 0.0
    assert session.stats_rows == []
    assert np.array_equal(session.state.phi_applied, np.zeros(session.mesh.n_tets))
    _, sample = session.force_mailbox.read()
    assert np.array_equal(sample.force, np.zeros(3))


# -- replay logs ----------------------------------------------------------


def test_replay_writes_the_whole_log_set(bar_scene_dir, tmp_path):
    session = load_scene(bar_scene_dir / "scene.json")
    script = load_script(bar_scene_dir / "script.json")
    out = tmp_path / "run"
    summary = run_replay(session, script, out, duration=0.3, debug_contacts=True)

    for name in ("force.csv", "stats.csv", "surface.obj", "state.json",
                 "jitter.json", "summary.json", "contacts.jsonl"):
        assert (out / name).is_file(), name

    force_lines = (out / "force.csv").read_text().strip().splitlines()
    assert force_lines[0] == "time_s,fx,fy,fz,mode,contact_count"
    assert len(force_lines) - 1 == 300    # 1 kHz ticks over 0.3 s

    stats_lines = (out / "stats.csv").read_text().strip().splitlines()
    assert len(stats_lines) - 1 == 30
    assert stats_lines[0].startswith("step,time_s,mode,contact_count")

    assert summary["steps"] == 30
    assert summary["sim_time_s"] == pytest.approx(0.3)
    assert "push" in summary["frame_rate_mean_by_mode"]
    assert summary["schema_version"] == 1
    with open(out / "summary.json", encoding="utf-8") as fh:
        assert json.load(fh) == json.loads(json.dumps(summary))


def test_summary_aggregates_modes(bar_scene_dir):
    session = load_scene(bar_scene_dir / "scene.json")
    pose = touching_pose(session)
    for _ in range(3):
        session.step(pose, mode="push")
    for _ in range(3):
        session.step(pose, mode="wet")
    summary = build_summary(session)
    assert set(summary["frame_rate_mean_by_mode"]) == {"push", "wet"}
    assert summary["steps"] == 6
    assert summary["contact_steps"] > 0
    assert summary["saturation"]["water_mass_total"] > 0.0
    assert "outside_count" in summary["embedding"]


def test_restore_rejects_wrong_shapes(bar_scene_dir):
    session = load_scene(bar_scene_dir / "scene.json")
    doc = session.state_document()
    bad = copy.deepcopy(doc)
    bad["water_mass"] = [0.0, 1.0]
    with pytest.raises(SceneError):
        session.restore_state(bad)
    bad = copy.deepcopy(doc)
    bad["schema_version"] = 7
    with pytest.raises(SceneError):
        session.restore_state(bad)
