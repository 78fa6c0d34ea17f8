"""Scene loading, the per-step pipeline, headless replay, and exports.

A scene file wires together the meshes and all physical parameters; a
script file replaces the human operator with a deterministic tool path.
Replay advances a virtual clock in fixed steps and resamples the force
stream at the haptic rate, so force logs and final states are
bit-identical across runs of the same inputs.
"""

from __future__ import annotations

import dataclasses
import json
import math
import pathlib
import time

import numpy as np

from . import fem, haptics, wetting
from .collision import ContactDiagnostics, PrimitiveSet, find_contacts
from .errors import SceneError, SolverError
from .haptics import (ForceSample, Mailbox, Pose, ToolProxy,
                      accumulate_impulses, interpolate_pose, jitter_histogram)
from .materials import IsotropicElastic, PorousMaterial
from .mesh import (SurfaceMesh, TetMesh, apply_embedding, build_embedding,
                   load_obj, load_tet_mesh, paint_highlight, save_obj)

SCHEMA_VERSION = 1

#: Haptic loop nominal period in seconds (1 kHz).
HAPTIC_PERIOD = 1e-3

_MISSING = object()


# -- config parsing -------------------------------------------------------


def _get(block, path, key, kind, default=_MISSING):
    field = f"{path}.{key}" if path else key
    if key not in block:
        if default is not _MISSING:
            return default
        raise SceneError(f"missing required field", field=field)
    value = block[key]
    if kind is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SceneError("expected a number", field=field)
        return float(value)
    if kind is bool and not isinstance(value, bool):
        raise SceneError("expected true or false", field=field)
    if kind is str and not isinstance(value, str):
        raise SceneError("expected a string", field=field)
    if kind is dict and not isinstance(value, dict):
        raise SceneError("expected an object", field=field)
    if kind is list and not isinstance(value, list):
        raise SceneError("expected a list", field=field)
    return value


def _get_range(block, path, key, lo=None, hi=None, lo_open=False, hi_open=False,
               default=_MISSING):
    value = _get(block, path, key, float, default)
    field = f"{path}.{key}" if path else key
    if lo is not None and (value <= lo if lo_open else value < lo):
        raise SceneError(f"value {value!r} below allowed range", field=field)
    if hi is not None and (value >= hi if hi_open else value > hi):
        raise SceneError(f"value {value!r} above allowed range", field=field)
    return value


@dataclasses.dataclass
class SceneConfig:
    """Validated scene description with all paths resolved."""

    base_dir: pathlib.Path
    tet_node: pathlib.Path
    tet_ele: pathlib.Path
    surface_obj: pathlib.Path
    proxy_obj: pathlib.Path
    material: PorousMaterial
    diffusion: wetting.DiffusionParams
    dt: float
    alpha: float
    beta: float
    density: float
    fixed_region: dict | None
    stiffness_warping: bool
    plasticity: fem.PlasticityParams | None
    contact_stiffness: float
    kernel: fem.DampingKernelParams


def parse_scene(payload: dict, base_dir) -> SceneConfig:
    """Validate a scene document; errors carry the offending field path."""
    if not isinstance(payload, dict):
        raise SceneError("scene document must be an object")
    base = pathlib.Path(base_dir)
    version = _get(payload, "", "schema_version", float)
    if int(version) != SCHEMA_VERSION:
        raise SceneError(f"unsupported schema_version {version!r}", field="schema_version")

    meshes = _get(payload, "", "tet_mesh", dict)
    node = base / _get(meshes, "tet_mesh", "node", str)
    ele = base / _get(meshes, "tet_mesh", "ele", str)
    surface = base / _get(payload, "", "surface_mesh", str)
    proxy = base / _get(payload, "", "proxy_mesh", str)
    for field, p in (("tet_mesh.node", node), ("tet_mesh.ele", ele),
                     ("surface_mesh", surface), ("proxy_mesh", proxy)):
        if not p.is_file():
            raise SceneError(f"referenced file not found: {p}", field=field)

    mat = _get(payload, "", "material", dict)
    young = _get_range(mat, "material", "young_modulus", lo=0.0, lo_open=True)
    nu = _get_range(mat, "material", "poisson_ratio", lo=-1.0, hi=0.5,
                    lo_open=True, hi_open=True)
    density = _get_range(mat, "material", "density", lo=0.0, lo_open=True)
    k_water = _get_range(mat, "material", "water_bulk_modulus", lo=0.0, lo_open=True)
    porosity = _get_range(mat, "material", "porosity", lo=0.0, hi=1.0, hi_open=True)
    eps_mu = _get_range(mat, "material", "shear_regulariser", lo=0.0, hi=1e-2,
                        lo_open=True, default=1e-6)
    material = PorousMaterial(solid=IsotropicElastic(young, nu), density=density,
                              porosity=porosity, water_bulk_modulus=k_water,
                              shear_regulariser=eps_mu)

    wet = _get(payload, "", "wetting", dict)
    diffusivity = _get_range(wet, "wetting", "diffusivity", lo=0.0)
    wet_dt = _get_range(wet, "wetting", "dt", lo=0.0, lo_open=True)
    delta_s = _get_range(wet, "wetting", "delta_s", lo=0.0, hi=1.0, lo_open=True)
    wet_porosity = _get_range(wet, "wetting", "porosity", lo=0.0, hi=1.0,
                              hi_open=True, default=porosity)
    if wet_porosity != porosity:
        raise SceneError(
            f"wetting porosity {wet_porosity!r} disagrees with material porosity "
            f"{porosity!r}; one porous volume fraction drives both behaviors",
            field="wetting.porosity")
    diffusion = wetting.DiffusionParams(diffusivity=diffusivity, dt=wet_dt,
                                        delta_s=delta_s)

    sim = _get(payload, "", "simulation", dict)
    dt = _get_range(sim, "simulation", "dt", lo=0.0, lo_open=True)
    alpha = _get_range(sim, "simulation", "alpha", lo=0.0, default=0.1)
    beta = _get_range(sim, "simulation", "beta", lo=0.0, default=0.01)
    sim_density = _get_range(sim, "simulation", "density", lo=0.0, lo_open=True,
                             default=density)
    if sim_density != density:
        raise SceneError(
            f"simulation density {sim_density!r} disagrees with material density "
            f"{density!r}", field="simulation.density")
    warping = _get(sim, "simulation", "stiffness_warping", bool, default=False)
    fixed_region = _get(sim, "simulation", "fixed_region", dict, default=None)
    if fixed_region is not None:
        axis = _get(fixed_region, "simulation.fixed_region", "axis", str)
        if axis not in ("x", "y", "z"):
            raise SceneError(f"axis must be x, y, or z, got {axis!r}",
                             field="simulation.fixed_region.axis")
        end = _get(fixed_region, "simulation.fixed_region", "end", str)
        if end not in ("min", "max"):
            raise SceneError(f"end must be min or max, got {end!r}",
                             field="simulation.fixed_region.end")
        _get_range(fixed_region, "simulation.fixed_region", "depth", lo=0.0)
    plastic_block = _get(sim, "simulation", "plasticity", dict, default=None)
    plasticity = None
    if plastic_block is not None:
        yield_strain = _get_range(plastic_block, "simulation.plasticity",
                                  "yield_strain", lo=0.0)
        creep = _get_range(plastic_block, "simulation.plasticity", "creep",
                           lo=0.0, hi=1.0)
        max_strain = _get_range(plastic_block, "simulation.plasticity", "max_strain",
                                lo=0.0)
        if max_strain < yield_strain:
            raise SceneError("max_strain must be at least yield_strain",
                             field="simulation.plasticity.max_strain")
        plasticity = fem.PlasticityParams(yield_strain=yield_strain, creep=creep,
                                          max_strain=max_strain)

    contact = _get(payload, "", "contact", dict)
    stiffness = _get_range(contact, "contact", "stiffness", lo=0.0, lo_open=True)
    kern = _get(contact, "contact", "kernel", dict)
    k1 = _get_range(kern, "contact.kernel", "k1", lo=0.0)
    k2 = _get_range(kern, "contact.kernel", "k2", lo=0.0)
    radius = _get_range(kern, "contact.kernel", "radius", lo=0.0, lo_open=True)
    kernel = fem.DampingKernelParams(k1=k1, k2=k2, radius=radius)

    return SceneConfig(base_dir=base, tet_node=node, tet_ele=ele,
                       surface_obj=surface, proxy_obj=proxy, material=material,
                       diffusion=diffusion, dt=dt, alpha=alpha, beta=beta,
                       density=density, fixed_region=fixed_region,
                       stiffness_warping=warping, plasticity=plasticity,
                       contact_stiffness=stiffness, kernel=kernel)


def _read_json(path, what):
    path = pathlib.Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SceneError(f"cannot read {what} file {path}: {exc}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise SceneError(f"{what} file {path} is not valid JSON: {exc}") from exc


@dataclasses.dataclass(frozen=True)
class Keyframe:
    time: float
    pose: Pose
    mode: str


@dataclasses.dataclass
class ToolPathScript:
    """Timed tool poses; position interpolates linearly, orientation
    spherically, and the mode of a span is its starting keyframe's."""

    keyframes: list

    @property
    def duration(self) -> float:
        return self.keyframes[-1].time if self.keyframes else 0.0

    def at(self, t: float):
        """(pose, mode) at time t, holding the last pose afterwards;
        None before any keyframe exists."""
        frames = self.keyframes
        if not frames:
            return None, "push"
        if t <= frames[0].time:
            return frames[0].pose, frames[0].mode
        if t >= frames[-1].time:
            return frames[-1].pose, frames[-1].mode
        lo = 0
        hi = len(frames) - 1
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if frames[mid].time <= t:
                lo = mid
            else:
                hi = mid
        a, b = frames[lo], frames[hi]
        u = (t - a.time) / (b.time - a.time)
        return interpolate_pose(a.pose, b.pose, u), a.mode


def parse_script(payload: dict) -> ToolPathScript:
    if not isinstance(payload, dict):
        raise SceneError("script document must be an object")
    version = _get(payload, "", "schema_version", float)
    if int(version) != SCHEMA_VERSION:
        raise SceneError(f"unsupported schema_version {version!r}", field="schema_version")
    raw = _get(payload, "", "keyframes", list)
    frames = []
    prev_time = None
    for i, entry in enumerate(raw):
        path = f"keyframes[{i}]"
        if not isinstance(entry, dict):
            raise SceneError("keyframe must be an object", field=path)
        t = _get_range(entry, path, "time", lo=0.0)
        if i == 0 and t != 0.0:
            raise SceneError("first keyframe must be at time 0", field=f"{path}.time")
        if prev_time is not None and t <= prev_time:
            raise SceneError("keyframe times must strictly increase", field=f"{path}.time")
        prev_time = t
        pos = _get(entry, path, "position", list)
        quat = _get(entry, path, "orientation", list, default=[1.0, 0.0, 0.0, 0.0])
        if len(pos) != 3 or not all(isinstance(x, (int, float)) for x in pos):
            raise SceneError("position must be 3 numbers", field=f"{path}.position")
        if len(quat) != 4 or not all(isinstance(x, (int, float)) for x in quat):
            raise SceneError("orientation must be 4 numbers", field=f"{path}.orientation")
        mode = _get(entry, path, "mode", str, default="push")
        if mode not in haptics.MODES:
            raise SceneError(f"unknown tool mode {mode!r}", field=f"{path}.mode")
        try:
            pose = Pose(position=np.array(pos, dtype=np.float64),
                        orientation=np.array(quat, dtype=np.float64))
        except Exception as exc:
            raise SceneError(str(exc), field=f"{path}.orientation") from exc
        frames.append(Keyframe(time=t, pose=pose, mode=mode))
    return ToolPathScript(keyframes=frames)


def load_script(path) -> ToolPathScript:
    return parse_script(_read_json(path, "script"))


# -- session --------------------------------------------------------------


@dataclasses.dataclass
class StepRecord:
    """Per-step diagnostics row for the stats log."""

    step: int
    time_s: float
    mode: str
    contact_count: int
    candidates_vf: int
    candidates_ee: int
    cg_iterations: int
    cg_residual: float
    kinetic_energy: float
    elastic_energy: float
    plastic_tets: int
    refreshed_tets: int
    saturation_min: float
    saturation_mean: float
    saturation_max: float
    water_mass_total: float
    wall_s: float


class Session:
    """One loaded scene with all live simulation state.

    The per-step pipeline is fixed: sweep the tool, find contacts,
    convert them to impulses or wetness changes, advance the implicit
    solve, diffuse water at its own cadence, refresh softened elements,
    flow plasticity, damp velocities around the tool, and finally push
    the deformation and wetness onto the render surface.
    """

    def __init__(self, config: SceneConfig):
        self.config = config
        self.mesh = load_tet_mesh(config.tet_node, config.tet_ele)
        self.surface = load_obj(config.surface_obj)
        proxy_surface = load_obj(config.proxy_obj)
        self.embedding = build_embedding(self.mesh, self.surface)
        fixed = self._resolve_fixed(config.fixed_region)
        self.sim_params = fem.SimParams(
            dt=config.dt, density=config.density, alpha=config.alpha,
            beta=config.beta, fixed_vertices=fixed,
            stiffness_warping=config.stiffness_warping)
        self.state = fem.build_state(self.mesh, config.material, self.sim_params)
        self.adjacency = wetting.TetAdjacency(self.mesh)
        self.saturation = wetting.SaturationField.dry(self.mesh, config.material.porosity)
        ratio = wetting.stability_ratio(self.adjacency, config.diffusion)
        if ratio >= 0.5:
            raise SceneError(
                f"diffusion settings are unstable on this mesh "
                f"(stability ratio {ratio:.3f} >= 0.5)", field="wetting.diffusivity")
        self.proxy = ToolProxy(surface=proxy_surface,
                               stiffness=config.contact_stiffness)
        self.force_mailbox = Mailbox(ForceSample(0.0, np.zeros(3)))
        self.step_index = 0
        self.sim_time = 0.0
        self.prev_pose: Pose | None = None
        self._diffusion_accum = 0.0
        self.stats_rows: list[StepRecord] = []
        self._scale = float(self.mesh.extent())
        # broadphase inflation: a pair can stay interpenetrated for a whole
        # step without its swept boxes touching, so pad by the deepest
        # overlap the tool can produce, its own bounding radius
        centered = proxy_surface.vertices - proxy_surface.vertices.mean(axis=0)
        self._contact_pad = float(np.linalg.norm(centered, axis=1).max())
        apply_embedding(self.embedding, self.mesh, self.surface)
        wetting.transfer_wetness(self.saturation, self.embedding, self.surface)

    @property
    def tool_radius(self) -> float:
        """Bounding radius of the tool proxy mesh, handy for display."""
        return self._contact_pad

    def _resolve_fixed(self, region):
        if region is None:
            return ()
        axis = {"x": 0, "y": 1, "z": 2}[region["axis"]]
        coords = self.mesh.rest_positions[:, axis]
        depth = float(region["depth"])
        if region["end"] == "min":
            picked = coords <= coords.min() + depth
        else:
            picked = coords >= coords.max() - depth
        return tuple(int(i) for i in np.flatnonzero(picked))

    # -- contact bookkeeping ----------------------------------------------

    def _object_primitives(self) -> PrimitiveSet:
        pos = self.mesh.current_positions
        predicted = pos + self.config.dt * self.mesh.velocities
        return PrimitiveSet.from_arrays(
            start=pos, end=predicted,
            faces=self.mesh.boundary_faces, edges=self.mesh.boundary_edges,
            vertex_ids=self.mesh.boundary_vertices)

    def _contact_tets(self, events) -> np.ndarray:
        """Tets owning any boundary primitive involved in a contact."""
        tets = set()
        for ev in events:
            if ev.object_kind == "face":
                tets.add(int(self.mesh.boundary_face_tet[ev.object_index]))
            elif ev.object_kind == "edge":
                for f in self.mesh.boundary_edge_faces[ev.object_index]:
                    tets.add(int(self.mesh.boundary_face_tet[f]))
            else:
                vid = int(ev.object_node_ids[0])
                for f in self.mesh.faces_of_boundary_vertex(vid):
                    tets.add(int(self.mesh.boundary_face_tet[f]))
        return np.array(sorted(tets), dtype=np.int64)

    # -- the pipeline ------------------------------------------------------

    def step(self, pose: Pose | None, mode: str = "push", collect_events: bool = False):
        """Advance one simulation step with the tool moving to ``pose``."""
        t_start = time.perf_counter()
        cfg = self.config
        dt = cfg.dt
        n = self.mesh.n_vertices

        events = []
        diag_contacts = ContactDiagnostics()
        if pose is not None:
            pose_start = self.prev_pose if self.prev_pose is not None else pose
            proxy_prims = self.proxy.primitives(pose_start, pose)
            events, diag_contacts = find_contacts(proxy_prims,
                                                  self._object_primitives(),
                                                  scale=self._scale,
                                                  pad=self._contact_pad)

        result = accumulate_impulses(events, mode, cfg.contact_stiffness, dt, n)
        if mode in ("wet", "dry") and events:
            touched = self._contact_tets(events)
            if mode == "wet":
                wetting.absorb(self.saturation, touched, cfg.diffusion)
            else:
                wetting.dry(self.saturation, touched, cfg.diffusion)

        external = (result.nodal / dt).reshape(-1)
        solve = fem.step(self.state, self.sim_params, external)

        self._diffusion_accum += dt
        while self._diffusion_accum >= cfg.diffusion.dt - 1e-12:
            wetting.diffuse_step(self.saturation, self.adjacency, cfg.diffusion)
            self._diffusion_accum -= cfg.diffusion.dt

        refreshed = fem.refresh_element_material(self.state, self.saturation,
                                                 cfg.material)
        plastic_tets = 0
        if cfg.plasticity is not None:
            plastic_tets = fem.apply_plastic_flow(self.state, cfg.plasticity)

        if pose is not None:
            kernel = dataclasses.replace(cfg.kernel, center=tuple(pose.position))
            fem.apply_damping_kernel(self.state, kernel)

        apply_embedding(self.embedding, self.mesh, self.surface)
        wetting.transfer_wetness(self.saturation, self.embedding, self.surface)
        if pose is not None:
            paint_highlight(self.surface, pose.position, cfg.kernel.radius)
        else:
            self.surface.highlight[:] = 0.0

        self.sim_time += dt
        self.step_index += 1
        self.prev_pose = pose if pose is not None else self.prev_pose
        sample = ForceSample(time_s=self.sim_time, force=result.reaction,
                             mode=mode, contact_count=result.contact_count)
        self.force_mailbox.publish(sample)

        sat = self.saturation.stats()
        self.stats_rows.append(StepRecord(
            step=self.step_index, time_s=self.sim_time, mode=mode,
            contact_count=result.contact_count,
            candidates_vf=diag_contacts.candidates_vf,
            candidates_ee=diag_contacts.candidates_ee,
            cg_iterations=solve.cg_iterations, cg_residual=solve.residual,
            kinetic_energy=solve.kinetic_energy,
            elastic_energy=solve.elastic_energy,
            plastic_tets=plastic_tets, refreshed_tets=refreshed,
            saturation_min=sat["saturation_min"],
            saturation_mean=sat["saturation_mean"],
            saturation_max=sat["saturation_max"],
            water_mass_total=sat["water_mass_total"],
            wall_s=time.perf_counter() - t_start))
        if collect_events:
            return sample, events
        return sample

    # -- persistence -------------------------------------------------------

    def state_document(self) -> dict:
        """Full dynamic state as a JSON-ready document."""
        return {
            "schema_version": SCHEMA_VERSION,
            "step_index": self.step_index,
            "sim_time": self.sim_time,
            "diffusion_accum": self._diffusion_accum,
            "positions": self.mesh.current_positions.tolist(),
            "velocities": self.mesh.velocities.tolist(),
            "plastic_strain": self.state.plastic_strain.tolist(),
            "water_mass": self.saturation.water_mass.tolist(),
            "phi_applied": self.state.phi_applied.tolist(),
            "prev_pose": None if self.prev_pose is None else {
                "position": self.prev_pose.position.tolist(),
                "orientation": self.prev_pose.orientation.tolist(),
            },
        }

    def restore_state(self, doc: dict):
        """Resume from a document produced by ``state_document``."""
        if int(doc.get("schema_version", -1)) != SCHEMA_VERSION:
            raise SceneError("unsupported state schema_version", field="schema_version")

        def arr(key, shape):
            a = np.asarray(doc[key], dtype=np.float64)
            if a.shape != shape:
                raise SceneError(f"state field {key} has shape {a.shape}, "
                                 f"expected {shape}", field=key)
            return a

        n, m = self.mesh.n_vertices, self.mesh.n_tets
        self.mesh.current_positions[:] = arr("positions", (n, 3))
        self.mesh.velocities[:] = arr("velocities", (n, 3))
        self.state.plastic_strain[:] = arr("plastic_strain", (m, 6))
        self.saturation.water_mass[:] = arr("water_mass", (m,))
        self.step_index = int(doc["step_index"])
        self.sim_time = float(doc["sim_time"])
        self._diffusion_accum = float(doc["diffusion_accum"])
        pp = doc.get("prev_pose")
        self.prev_pose = None if pp is None else Pose(
            position=np.array(pp["position"]), orientation=np.array(pp["orientation"]))
        # restore the exact stiffness the run had applied; recomputing from
        # saturation would be off by the refresh threshold's hysteresis
        fem.set_element_phi(self.state, self.config.material, arr("phi_applied", (m,)))
        self.state.refresh_plastic_forces()
        apply_embedding(self.embedding, self.mesh, self.surface)
        wetting.transfer_wetness(self.saturation, self.embedding, self.surface)

    def reset(self):
        """Return to the rest configuration with dry material."""
        self.mesh.current_positions[:] = self.mesh.rest_positions
        self.mesh.velocities[:] = 0.0
        self.state.plastic_strain[:] = 0.0
        self.state.refresh_plastic_forces()
        self.saturation.water_mass[:] = 0.0
        fem.set_element_phi(self.state, self.config.material,
                            np.zeros(self.mesh.n_tets))
        self.step_index = 0
        self.sim_time = 0.0
        self._diffusion_accum = 0.0
        self.prev_pose = None
        self.stats_rows.clear()
        self.force_mailbox.publish(ForceSample(0.0, np.zeros(3)))
        apply_embedding(self.embedding, self.mesh, self.surface)
        wetting.transfer_wetness(self.saturation, self.embedding, self.surface)


def load_scene(path) -> Session:
    path = pathlib.Path(path)
    config = parse_scene(_read_json(path, "scene"), path.parent)
    return Session(config)


# -- replay ---------------------------------------------------------------


def _fmt(x: float) -> str:
    return repr(float(x))


def run_replay(session: Session, script: ToolPathScript, out_dir,
               duration: float | None = None, debug_contacts: bool = False) -> dict:
    """Drive the session along the script and write all logs.

    The force CSV is resampled on a virtual 1 kHz clock, ten-ish ticks
    per step, each reading the mailbox exactly as the live haptic loop
    would. Returns the summary document (also written as JSON).
    """
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    total = script.duration if duration is None else float(duration)
    if total < 0.0 or not math.isfinite(total):
        raise SceneError("replay duration must be finite and nonnegative")
    n_steps = int(round(total / session.config.dt))

    force_rows = []
    tick_times = []
    debug_fh = open(out / "contacts.jsonl", "w", encoding="utf-8") if debug_contacts else None
    next_tick = math.floor(session.sim_time / HAPTIC_PERIOD) + 1
    try:
        for _ in range(n_steps):
            target = session.sim_time + session.config.dt
            pose, mode = script.at(target)
            try:
                _, events = session.step(pose, mode, collect_events=True)
            except SolverError as exc:
                raise SolverError(
                    f"step {session.step_index + 1}: {exc}",
                    residual=exc.residual, iterations=exc.iterations) from exc
            if debug_fh is not None:
                for ev in events:
                    debug_fh.write(json.dumps({
                        "step": session.step_index,
                        "kind": ev.kind,
                        "face_owner": ev.face_owner,
                        "proxy_index": ev.proxy_index,
                        "object_index": ev.object_index,
                        "object_nodes": [int(i) for i in ev.object_node_ids],
                        "intervals": [[iv.t_a, iv.t_b] for iv in ev.intervals],
                        "max_depth": ev.max_depth,
                    }, sort_keys=True) + "\n")
            # virtual haptic resampler: every 1 ms tick inside this step
            # reads the freshly published sample
            while next_tick * HAPTIC_PERIOD <= session.sim_time + 1e-12:
                t = next_tick * HAPTIC_PERIOD
                _, sample = session.force_mailbox.read()
                force_rows.append((t, sample.force[0], sample.force[1],
                                   sample.force[2], sample.mode, sample.contact_count))
                tick_times.append(t)
                next_tick += 1
    finally:
        if debug_fh is not None:
            debug_fh.close()

    with open(out / "force.csv", "w", encoding="utf-8") as fh:
        fh.write("time_s,fx,fy,fz,mode,contact_count\n")
        for t, fx, fy, fz, mode, count in force_rows:
            fh.write(f"{_fmt(t)},{_fmt(fx)},{_fmt(fy)},{_fmt(fz)},{mode},{count}\n")

    with open(out / "stats.csv", "w", encoding="utf-8") as fh:
        names = [f.name for f in dataclasses.fields(StepRecord)]
        fh.write(",".join(names) + "\n")
        for row in session.stats_rows:
            values = []
            for name in names:
                v = getattr(row, name)
                values.append(_fmt(v) if isinstance(v, float) else str(v))
            fh.write(",".join(values) + "\n")

    save_obj(out / "surface.obj", session.surface)
    with open(out / "state.json", "w", encoding="utf-8") as fh:
        json.dump(session.state_document(), fh, sort_keys=True)
        fh.write("\n")

    jitter = jitter_histogram(tick_times)
    with open(out / "jitter.json", "w", encoding="utf-8") as fh:
        json.dump(jitter, fh, sort_keys=True)
        fh.write("\n")

    summary = build_summary(session, force_rows)
    with open(out / "summary.json", "w", encoding="utf-8") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
    return summary


def build_summary(session: Session, force_rows=None) -> dict:
    """Aggregate rates and extrema, grouped by tool mode."""
    by_mode: dict[str, list[float]] = {}
    for row in session.stats_rows:
        by_mode.setdefault(row.mode, []).append(row.wall_s)
    frame_rates = {mode: float(1.0 / np.mean(walls))
                   for mode, walls in by_mode.items() if np.mean(walls) > 0.0}
    peak_force = 0.0
    if force_rows:
        peak_force = max(math.sqrt(fx * fx + fy * fy + fz * fz)
                         for _, fx, fy, fz, _, _ in force_rows)
    return {
        "schema_version": SCHEMA_VERSION,
        "steps": session.step_index,
        "sim_time_s": session.sim_time,
        "frame_rate_mean_by_mode": frame_rates,
        "step_wall_mean_s": (float(np.mean([r.wall_s for r in session.stats_rows]))
                             if session.stats_rows else 0.0),
        "peak_force_n": peak_force,
        "contact_steps": sum(1 for r in session.stats_rows if r.contact_count > 0),
        "embedding": dict(session.embedding.report),
        "saturation": session.saturation.stats(),
    }


def export_state(session: Session, out_dir):
    """Write the surface, tet state, and saturation stats for later resume."""
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_obj(out / "surface.obj", session.surface)
    with open(out / "state.json", "w", encoding="utf-8") as fh:
        json.dump(session.state_document(), fh, sort_keys=True)
        fh.write("\n")
    with open(out / "saturation.csv", "w", encoding="utf-8") as fh:
        fh.write("tet,saturation,water_mass_kg\n")
        sat = session.saturation.saturation
        for i in range(session.mesh.n_tets):
            fh.write(f"{i},{_fmt(sat[i])},{_fmt(session.saturation.water_mass[i])}\n")
    return out / "state.json"


def import_state(session: Session, path):
    session.restore_state(_read_json(path, "state"))
