"""Tetrahedral volume meshes, triangle surface meshes, and the cage embedding.

The simulation runs on a coarse tet mesh while rendering uses a detail
surface mesh bound to it by barycentric weights. Loaders accept a TetGen
style ``.node``/``.ele`` pair and a minimal OBJ subset (``v`` and
triangular ``f`` records). All loaders normalise tet orientation so that
every cell has positive signed volume; downstream code relies on that.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import MeshError

# Outward faces of a positively oriented tet (v0, v1, v2, v3). Each triple
# is wound so its normal points away from the remaining vertex.
TET_FACES = np.array([[1, 2, 3], [0, 3, 2], [0, 1, 3], [0, 2, 1]], dtype=np.int64)

_FACE_EDGES = np.array([[0, 1], [1, 2], [2, 0]], dtype=np.int64)


def tet_volumes(points: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Signed volume of each tet; positive for the canonical orientation."""
    p = points[tets]
    e = p[:, 1:] - p[:, :1]
    return np.linalg.det(e) / 6.0


def orient_tets(points: np.ndarray, tets: np.ndarray) -> np.ndarray:
    """Return a copy of ``tets`` with negative cells flipped to positive.

    Flipping swaps the last two vertices, which negates the signed volume
    and nothing else. Applying the function twice is a no-op.
    """
    tets = np.array(tets, dtype=np.int64, copy=True)
    flip = tet_volumes(points, tets) < 0.0
    tets[flip, 2], tets[flip, 3] = tets[flip, 3], tets[flip, 2]
    return tets


def _unique_rows(rows: np.ndarray):
    """Lexicographic row sort; returns (order, group starts, group counts)."""
    order = np.lexsort(rows.T[::-1])
    ordered = rows[order]
    new = np.ones(len(rows), dtype=bool)
    new[1:] = np.any(ordered[1:] != ordered[:-1], axis=1)
    starts = np.flatnonzero(new)
    counts = np.diff(np.append(starts, len(rows)))
    return order, starts, counts


class TetMesh:
    """Tetrahedral mesh with rest geometry, kinematic state, and boundary data.

    Attributes of interest:

    rest_positions, current_positions : (n, 3) float arrays
    velocities : (n, 3) float array, initially zero
    tets : (m, 4) int array, positively oriented
    rest_volumes : (m,) float array, strictly positive
    boundary_faces : (b, 3) int array, outward wound
    boundary_face_tet : (b,) owning tet per boundary face
    boundary_edges : (e, 2) sorted vertex pairs on the boundary
    boundary_edge_faces : (e, 2) incident boundary faces per edge
    boundary_vertices : sorted unique vertex ids on the boundary
    interior_faces : (k, 3) one representative triple per shared face
    interior_face_tets : (k, 2) the tet pair sharing each interior face
    """

    def __init__(self, points: np.ndarray, tets: np.ndarray):
        points = np.asarray(points, dtype=np.float64)
        tets = np.asarray(tets, dtype=np.int64)
        if points.ndim != 2 or points.shape[1] != 3:
            raise MeshError(f"expected (n, 3) vertex array, got {points.shape}")
        if tets.ndim != 2 or tets.shape[1] != 4:
            raise MeshError(f"expected (m, 4) tet array, got {tets.shape}")
        if len(tets) == 0:
            raise MeshError("mesh has no tetrahedra")
        if tets.min() < 0 or tets.max() >= len(points):
            raise MeshError("tet vertex index out of range")
        same = (tets[:, :, None] == tets[:, None, :]).sum(axis=(1, 2))
        if np.any(same != 4):
            raise MeshError("tet with repeated vertex")

        tets = orient_tets(points, tets)
        volumes = tet_volumes(points, tets)
        scale = max(float((points.max(axis=0) - points.min(axis=0)).max()), 1e-30)
        if np.any(volumes <= 1e-14 * scale**3):
            worst = int(np.argmin(volumes))
            raise MeshError(f"degenerate tet {worst}: volume {volumes[worst]:.3e}")

        self.rest_positions = points.copy()
        self.current_positions = points.copy()
        self.velocities = np.zeros_like(points)
        self.tets = tets
        self.rest_volumes = volumes
        self._build_boundary()

    # -- topology ---------------------------------------------------------

    def _build_boundary(self):
        m = len(self.tets)
        faces = self.tets[:, TET_FACES].reshape(-1, 3)
        owners = np.repeat(np.arange(m, dtype=np.int64), 4)
        keys = np.sort(faces, axis=1)
        order, starts, counts = _unique_rows(keys)
        if counts.max(initial=0) > 2:
            raise MeshError("non-manifold interior face (shared by > 2 tets)")
        single = starts[counts == 1]
        picked = order[single]
        self.boundary_faces = faces[picked]
        self.boundary_face_tet = owners[picked]

        paired = starts[counts == 2]
        self.interior_faces = faces[order[paired]]
        pair = np.stack([owners[order[paired]], owners[order[paired + 1]]], axis=1)
        pair.sort(axis=1)
        self.interior_face_tets = pair

        edges = np.sort(self.boundary_faces[:, _FACE_EDGES].reshape(-1, 2), axis=1)
        edge_owner = np.repeat(np.arange(len(self.boundary_faces), dtype=np.int64), 3)
        order, starts, counts = _unique_rows(edges)
        if len(counts) and (counts.min() != 2 or counts.max() != 2):
            raise MeshError("boundary surface is not a closed 2-manifold")
        self.boundary_edges = edges[order[starts]]
        self.boundary_edge_faces = edge_owner[order].reshape(-1, 2)

        self.boundary_vertices = np.unique(self.boundary_faces)
        # vertex -> incident boundary faces, CSR over boundary_vertices
        v = self.boundary_faces.reshape(-1)
        f = np.repeat(np.arange(len(self.boundary_faces), dtype=np.int64), 3)
        perm = np.lexsort((f, v))
        self._bv_faces = f[perm]
        self._bv_offsets = np.searchsorted(v[perm], self.boundary_vertices)
        self._bv_offsets = np.append(self._bv_offsets, len(self._bv_faces))

    def faces_of_boundary_vertex(self, vertex_id: int) -> np.ndarray:
        """Boundary face indices incident to a boundary vertex."""
        i = np.searchsorted(self.boundary_vertices, vertex_id)
        if i >= len(self.boundary_vertices) or self.boundary_vertices[i] != vertex_id:
            raise MeshError(f"vertex {vertex_id} is not on the boundary")
        return self._bv_faces[self._bv_offsets[i]:self._bv_offsets[i + 1]]

    @property
    def n_vertices(self) -> int:
        return len(self.rest_positions)

    @property
    def n_tets(self) -> int:
        return len(self.tets)

    @property
    def total_volume(self) -> float:
        return float(self.rest_volumes.sum())

    @property
    def displacements(self) -> np.ndarray:
        return self.current_positions - self.rest_positions

    def extent(self) -> float:
        """Diagonal of the rest bounding box, used to scale tolerances."""
        span = self.rest_positions.max(axis=0) - self.rest_positions.min(axis=0)
        return float(np.linalg.norm(span))


@dataclasses.dataclass
class SurfaceMesh:
    """Triangle mesh with per-vertex wetness and highlight channels."""

    vertices: np.ndarray
    triangles: np.ndarray
    wetness: np.ndarray = None
    highlight: np.ndarray = None

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64)
        self.triangles = np.asarray(self.triangles, dtype=np.int64)
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise MeshError(f"expected (n, 3) vertex array, got {self.vertices.shape}")
        if self.triangles.ndim != 2 or self.triangles.shape[1] != 3:
            raise MeshError(f"expected (m, 3) triangle array, got {self.triangles.shape}")
        if len(self.triangles) and (
            self.triangles.min() < 0 or self.triangles.max() >= len(self.vertices)
        ):
            raise MeshError("triangle vertex index out of range")
        if self.wetness is None:
            self.wetness = np.zeros(len(self.vertices))
        if self.highlight is None:
            self.highlight = np.zeros(len(self.vertices))

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def edges(self) -> np.ndarray:
        """Unique sorted vertex pairs over all triangles."""
        e = np.sort(self.triangles[:, _FACE_EDGES].reshape(-1, 2), axis=1)
        order, starts, _ = _unique_rows(e)
        return e[order[starts]]


# -- file formats ---------------------------------------------------------


def _data_lines(path):
    with open(path, "r", encoding="utf-8") as fh:
        for raw in fh:
            line = raw.split("#", 1)[0].strip()
            if line:
                yield line


def load_tet_mesh(node_path, ele_path) -> TetMesh:
    """Read a TetGen style ``.node``/``.ele`` pair.

    Node and element ids may start at 0 or 1; the offset is detected from
    the node file and must be used consistently by both files.
    """
    lines = _data_lines(node_path)
    try:
        header = next(lines).split()
        n_points = int(header[0])
        dim = int(header[1]) if len(header) > 1 else 3
    except (StopIteration, ValueError) as exc:
        raise MeshError(f"{node_path}: bad node header") from exc
    if dim != 3:
        raise MeshError(f"{node_path}: expected dimension 3, got {dim}")
    ids = np.empty(n_points, dtype=np.int64)
    points = np.empty((n_points, 3))
    for i in range(n_points):
        try:
            parts = next(lines).split()
            ids[i] = int(parts[0])
            points[i] = [float(x) for x in parts[1:4]]
        except (StopIteration, ValueError, IndexError) as exc:
            raise MeshError(f"{node_path}: bad or missing node record {i}") from exc
    offset = int(ids[0])
    if offset not in (0, 1) or np.any(ids != np.arange(n_points) + offset):
        raise MeshError(f"{node_path}: node ids must be consecutive from 0 or 1")

    lines = _data_lines(ele_path)
    try:
        header = next(lines).split()
        n_tets = int(header[0])
        per_cell = int(header[1]) if len(header) > 1 else 4
    except (StopIteration, ValueError) as exc:
        raise MeshError(f"{ele_path}: bad element header") from exc
    if per_cell != 4:
        raise MeshError(f"{ele_path}: expected 4 nodes per tet, got {per_cell}")
    tets = np.empty((n_tets, 4), dtype=np.int64)
    for i in range(n_tets):
        try:
            parts = next(lines).split()
            tets[i] = [int(x) for x in parts[1:5]]
        except (StopIteration, ValueError, IndexError) as exc:
            raise MeshError(f"{ele_path}: bad or missing element record {i}") from exc
    tets -= offset
    if tets.min(initial=0) < 0 or tets.max(initial=0) >= n_points:
        raise MeshError(f"{ele_path}: element vertex id out of range")
    return TetMesh(points, tets)


def save_tet_mesh(node_path, ele_path, mesh: TetMesh):
    """Write ``.node``/``.ele`` files (0-based ids, full float precision)."""
    with open(node_path, "w", encoding="utf-8") as fh:
        fh.write(f"{mesh.n_vertices} 3 0 0\n")
        for i, p in enumerate(mesh.rest_positions):
            fh.write(f"{i} {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
    with open(ele_path, "w", encoding="utf-8") as fh:
        fh.write(f"{mesh.n_tets} 4 0\n")
        for i, t in enumerate(mesh.tets):
            fh.write(f"{i} {t[0]} {t[1]} {t[2]} {t[3]}\n")


def load_obj(path) -> SurfaceMesh:
    """Read the ``v``/``f`` subset of Wavefront OBJ with triangular faces."""
    vertices = []
    faces = []
    with open(path, "r", encoding="utf-8") as fh:
        for ln, raw in enumerate(fh, start=1):
            parts = raw.split("#", 1)[0].split()
            if not parts:
                continue
            if parts[0] == "v":
                if len(parts) < 4:
                    raise MeshError(f"{path}:{ln}: vertex needs 3 coordinates")
                try:
                    vertices.append([float(x) for x in parts[1:4]])
                except ValueError as exc:
                    raise MeshError(f"{path}:{ln}: bad vertex coordinate") from exc
            elif parts[0] == "f":
                if len(parts) != 4:
                    raise MeshError(f"{path}:{ln}: only triangular faces supported")
                try:
                    idx = [int(p.split("/", 1)[0]) for p in parts[1:]]
                except ValueError as exc:
                    raise MeshError(f"{path}:{ln}: bad face index") from exc
                if min(idx) < 1:
                    raise MeshError(f"{path}:{ln}: face indices must be positive")
                faces.append([i - 1 for i in idx])
            # other record types (vn, vt, o, ...) are ignored
    if not vertices:
        raise MeshError(f"{path}: no vertices")
    return SurfaceMesh(np.array(vertices), np.array(faces, dtype=np.int64).reshape(-1, 3))


def save_obj(path, surface: SurfaceMesh):
    """Write vertices and faces; floats use shortest round-trip form."""
    with open(path, "w", encoding="utf-8") as fh:
        for p in surface.vertices:
            fh.write(f"v {float(p[0])!r} {float(p[1])!r} {float(p[2])!r}\n")
        for t in surface.triangles:
            fh.write(f"f {t[0] + 1} {t[1] + 1} {t[2] + 1}\n")


# -- cage embedding -------------------------------------------------------


@dataclasses.dataclass
class CageEmbedding:
    """Fixed barycentric binding of surface vertices to cage tets.

    ``report`` carries ``outside_count`` (vertices not contained by any tet
    at bind time) and ``max_negative_weight`` (magnitude of the worst
    weight over those vertices, 0.0 when everything is inside).
    """

    tet_ids: np.ndarray
    weights: np.ndarray
    report: dict


def barycentric_weights(tet_points: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of ``x`` in one tet; sums to 1 exactly."""
    t = np.stack([tet_points[1] - tet_points[0],
                  tet_points[2] - tet_points[0],
                  tet_points[3] - tet_points[0]], axis=-1)
    w123 = np.linalg.solve(t, np.asarray(x, dtype=np.float64) - tet_points[0])
    return np.array([1.0 - w123.sum(), w123[0], w123[1], w123[2]])


def build_embedding(mesh: TetMesh, surface: SurfaceMesh, tol: float = 1e-9) -> CageEmbedding:
    """Bind every surface vertex to a cage tet by rest-pose barycentrics.

    A vertex goes to the lowest-index tet that contains it (all weights
    >= -tol). Vertices outside the cage bind to the tet whose worst
    barycentric weight is least negative, which extrapolates linearly.
    """
    p = mesh.rest_positions[mesh.tets]
    t = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]], axis=-1)
    t_inv = np.linalg.inv(t)
    p0 = p[:, 0]

    n = surface.n_vertices
    m = mesh.n_tets
    tet_ids = np.empty(n, dtype=np.int64)
    weights = np.empty((n, 4))
    outside = 0
    worst = 0.0
    chunk = max(1, int(8e6 / max(m, 1)))
    for lo in range(0, n, chunk):
        x = surface.vertices[lo:lo + chunk]
        d = x[:, None, :] - p0[None, :, :]
        w123 = np.einsum("mij,cmj->cmi", t_inv, d)
        w0 = 1.0 - w123.sum(axis=2)
        min_w = np.minimum(w0, w123.min(axis=2))
        inside = min_w >= -tol
        has = inside.any(axis=1)
        pick = np.where(has, np.argmax(inside, axis=1), np.argmax(min_w, axis=1))
        rows = np.arange(len(x))
        tet_ids[lo:lo + chunk] = pick
        weights[lo:lo + chunk, 0] = w0[rows, pick]
        weights[lo:lo + chunk, 1:] = w123[rows, pick]
        outside += int((~has).sum())
        if not has.all():
            worst = max(worst, float(-min_w[rows, pick][~has].min()))
    report = {"outside_count": outside, "max_negative_weight": worst}
    return CageEmbedding(tet_ids=tet_ids, weights=weights, report=report)


def apply_embedding(embedding: CageEmbedding, mesh: TetMesh, surface: SurfaceMesh):
    """Move surface vertices with the deformed cage using the fixed weights."""
    corners = mesh.current_positions[mesh.tets[embedding.tet_ids]]
    surface.vertices = np.einsum("ni,nij->nj", embedding.weights, corners)


def paint_highlight(surface: SurfaceMesh, center: np.ndarray, radius: float):
    """Per-vertex highlight 1 - r/R inside the radius, 0 outside."""
    r = np.linalg.norm(surface.vertices - np.asarray(center, dtype=np.float64), axis=1)
    surface.highlight = np.clip(1.0 - r / radius, 0.0, 1.0)
    return surface.highlight
