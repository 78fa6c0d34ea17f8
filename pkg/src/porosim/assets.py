"""Procedural meshes and bundled demo scenes.

Everything here is deterministic: repeated calls with the same arguments
produce identical vertex arrays, so scene files regenerated on different
machines stay byte-for-byte comparable.
"""

from __future__ import annotations

import json
import pathlib

import numpy as np

from .mesh import SurfaceMesh, TetMesh, save_obj, save_tet_mesh

#: Six-tetrahedra subdivision of a cube around the 0-7 main diagonal.
#: Corner b sits at offset (b & 1, (b >> 1) & 1, (b >> 2) & 1); sharing the
#: diagonal makes neighboring cubes' face triangulations line up.
KUHN_TETS = (
    (0, 1, 3, 7),
    (0, 1, 7, 5),
    (0, 5, 7, 4),
    (0, 3, 2, 7),
    (0, 2, 6, 7),
    (0, 6, 4, 7),
)


def bar_mesh(divisions=(10, 4, 4), size=(0.2, 0.08, 0.08), origin=(0.0, 0.0, 0.0)):
    """Axis-aligned box of tetrahedra on a regular grid.

    ``divisions`` counts cubes per axis; each cube becomes six tets.
    """
    nx, ny, nz = (int(d) for d in divisions)
    if min(nx, ny, nz) < 1:
        raise ValueError("need at least one cube per axis")
    size = np.asarray(size, dtype=np.float64)
    origin = np.asarray(origin, dtype=np.float64)
    xs = origin[0] + size[0] * np.arange(nx + 1) / nx
    ys = origin[1] + size[1] * np.arange(ny + 1) / ny
    zs = origin[2] + size[2] * np.arange(nz + 1) / nz
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    points = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)

    def vid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    tets = []
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                corner = [vid(i + (b & 1), j + ((b >> 1) & 1), k + ((b >> 2) & 1))
                          for b in range(8)]
                for a, b, c, d in KUHN_TETS:
                    tets.append((corner[a], corner[b], corner[c], corner[d]))
    return TetMesh(points, np.array(tets, dtype=np.int64))


# -- triangle surfaces ----------------------------------------------------

_ICO_T = (1.0 + np.sqrt(5.0)) / 2.0

_ICO_VERTS = np.array([
    [-1, _ICO_T, 0], [1, _ICO_T, 0], [-1, -_ICO_T, 0], [1, -_ICO_T, 0],
    [0, -1, _ICO_T], [0, 1, _ICO_T], [0, -1, -_ICO_T], [0, 1, -_ICO_T],
    [_ICO_T, 0, -1], [_ICO_T, 0, 1], [-_ICO_T, 0, -1], [-_ICO_T, 0, 1],
], dtype=np.float64)

_ICO_FACES = np.array([
    [0, 11, 5], [0, 5, 1], [0, 1, 7], [0, 7, 10], [0, 10, 11],
    [1, 5, 9], [5, 11, 4], [11, 10, 2], [10, 7, 6], [7, 1, 8],
    [3, 9, 4], [3, 4, 2], [3, 2, 6], [3, 6, 8], [3, 8, 9],
    [4, 9, 5], [2, 4, 11], [6, 2, 10], [8, 6, 7], [9, 8, 1],
], dtype=np.int64)


def icosphere(radius=1.0, center=(0.0, 0.0, 0.0), subdivisions=1) -> SurfaceMesh:
    """Geodesic sphere with outward-wound faces."""
    verts = [v / np.linalg.norm(v) for v in _ICO_VERTS]
    faces = [tuple(f) for f in _ICO_FACES]
    for _ in range(subdivisions):
        midpoint = {}

        def mid(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in midpoint:
                m = verts[a] + verts[b]
                verts.append(m / np.linalg.norm(m))
                midpoint[key] = len(verts) - 1
            return midpoint[key]

        split = []
        for a, b, c in faces:
            ab, bc, ca = mid(a, b), mid(b, c), mid(c, a)
            split += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        faces = split
    verts = np.asarray(verts) * radius + np.asarray(center, dtype=np.float64)
    return SurfaceMesh(vertices=verts, triangles=np.array(faces, dtype=np.int64))


def box_surface(bounds_min, bounds_max, divisions=(8, 4, 4)) -> SurfaceMesh:
    """Closed triangulated box with subdivided, welded faces."""
    lo = np.asarray(bounds_min, dtype=np.float64)
    hi = np.asarray(bounds_max, dtype=np.float64)
    div = [int(d) for d in divisions]
    if np.any(hi <= lo) or min(div) < 1:
        raise ValueError("box bounds must be increasing and divisions positive")
    # exact per-axis grid lines so shared edges weld by float equality
    grids = [lo[a] + (hi[a] - lo[a]) * np.arange(div[a] + 1) / div[a] for a in range(3)]

    verts = []
    index = {}

    def vid(p):
        key = (p[0], p[1], p[2])
        if key not in index:
            index[key] = len(verts)
            verts.append(key)
        return index[key]

    tris = []
    # each face: fixed axis at lo/hi, (u, v) axes chosen so u x v points out
    for axis in range(3):
        u_axis, v_axis = (axis + 1) % 3, (axis + 2) % 3
        for side, fixed in ((0, lo[axis]), (1, hi[axis])):
            us, vs = grids[u_axis], grids[v_axis]
            for iu in range(len(us) - 1):
                for iv in range(len(vs) - 1):
                    corner = np.empty((2, 2, 3))
                    for du in range(2):
                        for dv in range(2):
                            p = np.empty(3)
                            p[axis] = fixed
                            p[u_axis] = us[iu + du]
                            p[v_axis] = vs[iv + dv]
                            corner[du, dv] = p
                    a = vid(corner[0, 0])
                    b = vid(corner[1, 0])
                    c = vid(corner[1, 1])
                    d = vid(corner[0, 1])
                    if side == 1:
                        tris += [(a, b, c), (a, c, d)]
                    else:
                        tris += [(a, c, b), (a, d, c)]
    return SurfaceMesh(vertices=np.array(verts, dtype=np.float64),
                       triangles=np.array(tris, dtype=np.int64))


def blob_surface(radius=0.06, center=(0.0, 0.0, 0.0), subdivisions=3) -> SurfaceMesh:
    """Lumpy creature-like closed surface built from a perturbed sphere.

    The bump field is a fixed sum of sinusoids of the unit direction, so
    the shape is fully reproducible without any random state.
    """
    sphere = icosphere(radius=1.0, subdivisions=subdivisions)
    d = sphere.vertices
    bump = (0.16 * np.sin(2.9 * d[:, 0] + 1.3 * d[:, 1])
            + 0.11 * np.sin(2.2 * d[:, 1] - 1.7 * d[:, 2] + 0.8)
            + 0.07 * np.sin(3.6 * d[:, 2] + 2.1 * d[:, 0] + 2.4))
    r = radius * (1.0 + bump)[:, None]
    stretched = d * r * np.array([1.45, 0.85, 1.0])
    return SurfaceMesh(vertices=stretched + np.asarray(center, dtype=np.float64),
                       triangles=sphere.triangles.copy())


def cage_for_surface(surface: SurfaceMesh, divisions=(6, 5, 5),
                     padding=0.12) -> TetMesh:
    """Tet grid enclosing the surface with a margin on every side.

    ``padding`` is a fraction of the largest bounding-box span, applied
    to each face, guaranteeing every surface vertex lands strictly
    inside some tetrahedron.
    """
    lo = surface.vertices.min(axis=0)
    hi = surface.vertices.max(axis=0)
    pad = padding * float((hi - lo).max())
    return bar_mesh(divisions=divisions, size=tuple(hi - lo + 2 * pad),
                    origin=tuple(lo - pad))


# -- demo scenes ----------------------------------------------------------


def _write_json(path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def make_demo_scene(out_dir, kind="bar"):
    """Write a runnable scene (meshes + scene.json + script.json).

    ``kind`` picks the geometry: "bar" gives a clamped soft bar with a
    box skin; "creature" gives a lumpy blob inside a padded cage. Returns
    the path of the scene file.
    """
    out = pathlib.Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    if kind == "bar":
        body = bar_mesh(divisions=(10, 4, 4), size=(0.2, 0.08, 0.08))
        lo = body.rest_positions.min(axis=0)
        hi = body.rest_positions.max(axis=0)
        inset = 0.02 * (hi - lo)
        skin = box_surface(lo + inset, hi - inset, divisions=(14, 6, 6))
        fixed = {"axis": "x", "end": "min", "depth": 1e-6}
    elif kind == "creature":
        skin = blob_surface(radius=0.06, subdivisions=3)
        body = cage_for_surface(skin, divisions=(7, 5, 5), padding=0.1)
        fixed = {"axis": "z", "end": "min", "depth": 0.015}
    else:
        raise ValueError(f"unknown demo scene kind: {kind!r}")

    lo = body.rest_positions.min(axis=0)
    hi = body.rest_positions.max(axis=0)
    span = hi - lo
    tool_radius = 0.12 * float(span.min())
    proxy = icosphere(radius=tool_radius, subdivisions=1)

    save_tet_mesh(out / "body.node", out / "body.ele", body)
    save_obj(out / "skin.obj", skin)
    save_obj(out / "proxy.obj", proxy)

    scene = {
        "schema_version": 1,
        "tet_mesh": {"node": "body.node", "ele": "body.ele"},
        "surface_mesh": "skin.obj",
        "proxy_mesh": "proxy.obj",
        "material": {
            "young_modulus": 1.0e4,
            "poisson_ratio": 0.4,
            "density": 1050.0,
            "water_bulk_modulus": 2.2e9,
            "porosity": 0.3,
            "shear_regulariser": 1e-6,
        },
        "wetting": {
            "diffusivity": 1e-3,
            "dt": 0.02,
            "delta_s": 0.4,
            "porosity": 0.3,
        },
        "simulation": {
            "dt": 0.01,
            "alpha": 0.5,
            "beta": 0.004,
            "fixed_region": fixed,
            "stiffness_warping": False,
            "plasticity": {"yield_strain": 0.08, "creep": 0.05, "max_strain": 0.5},
        },
        "contact": {
            "stiffness": 100.0,
            "kernel": {"k1": 30.0, "k2": 60.0, "radius": 2.5 * tool_radius},
        },
    }
    _write_json(out / "scene.json", scene)

    # press into the top face, stroke sideways, then retract
    top = np.array([lo[0] + 0.55 * span[0], lo[1] + 0.5 * span[1], hi[2]])
    hover = top + [0.0, 0.0, 2.5 * tool_radius]
    pressed = top + [0.0, 0.0, 0.45 * tool_radius]
    stroked = pressed + [0.12 * span[0], 0.0, 0.0]
    lifted = stroked + [0.0, 0.0, 3.0 * tool_radius]

    def pose(t, p, mode):
        return {"time": t, "position": [float(x) for x in p],
                "orientation": [1.0, 0.0, 0.0, 0.0], "mode": mode}

    script = {
        "schema_version": 1,
        "keyframes": [
            pose(0.0, hover, "push"),
            pose(0.5, pressed, "push"),
            pose(1.2, stroked, "push"),
            pose(1.7, lifted, "push"),
        ],
    }
    _write_json(out / "script.json", script)
    return out / "scene.json"
