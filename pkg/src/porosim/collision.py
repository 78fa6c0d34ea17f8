"""Continuous collision detection between a moving tool and the body surface.

Every primitive moves linearly over the normalized step t in [0, 1].
Vertex-face and edge-edge coplanarity are cubic polynomials in t; their
real roots, validated by containment, are the contact times. Between
contact times the sign of the penetration depth decides which spans of
the step count as penetration intervals, including a leading span when
the step starts already overlapping and a trailing one when it ends
overlapping.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .errors import PorosimError

#: Containment slack for barycentric and segment parameters.
EPS_INSIDE = 1e-9

#: Penetrations shallower than this fraction of scene scale are grazing.
GRAZING_DEPTH = 1e-12


@dataclasses.dataclass(frozen=True)
class MovingVertex:
    start: np.ndarray
    end: np.ndarray


@dataclasses.dataclass(frozen=True)
class MovingEdge:
    start: np.ndarray  # (2, 3)
    end: np.ndarray


@dataclasses.dataclass(frozen=True)
class MovingTriangle:
    start: np.ndarray  # (3, 3)
    end: np.ndarray


@dataclasses.dataclass(frozen=True)
class PenetrationInterval:
    t_a: float
    t_b: float
    index: int


# -- cubic root finding ---------------------------------------------------


def _real_cubic_roots(c3, c2, c1, c0):
    """All real roots of the cubic, unbounded, via the depressed form."""
    # shift x = t + c2 / (3 c3) to kill the quadratic term
    b = c2 / c3
    c = c1 / c3
    d = c0 / c3
    p = c - b * b / 3.0
    q = 2.0 * b**3 / 27.0 - b * c / 3.0 + d
    shift = -b / 3.0
    disc = (q / 2.0) ** 2 + (p / 3.0) ** 3
    if disc > 0.0:
        s = np.sqrt(disc)
        root = np.cbrt(-q / 2.0 + s) + np.cbrt(-q / 2.0 - s)
        return [root + shift]
    if p >= 0.0:
        # p can only be ~0 here (disc <= 0 forces p <= 0 up to rounding)
        return [np.cbrt(-q) + shift]
    m = 2.0 * np.sqrt(-p / 3.0)
    arg = 3.0 * q / (p * m)
    theta = np.arccos(np.clip(arg, -1.0, 1.0)) / 3.0
    return [m * np.cos(theta - 2.0 * np.pi * k / 3.0) + shift for k in range(3)]


def cubic_roots(c3, c2, c1, c0):
    """Real roots of c3 t^3 + c2 t^2 + c1 t + c0 inside [0, 1].

    Returns (roots, always_zero). Roots are sorted, deduplicated, and
    polished by two Newton iterations; each satisfies |p(t)| below
    1e-10 times the largest coefficient. The degree degrades gracefully
    as leading coefficients vanish; the all-zero polynomial reports
    ``always_zero`` instead of roots.
    """
    coeffs = np.array([c3, c2, c1, c0], dtype=np.float64)
    if not np.all(np.isfinite(coeffs)):
        raise PorosimError("cubic coefficients must be finite")
    scale = float(np.abs(coeffs).max())
    if scale == 0.0:
        return [], True
    c3, c2, c1, c0 = coeffs / scale
    drop = 1e-13
    if abs(c3) > drop:
        roots = _real_cubic_roots(c3, c2, c1, c0)
    elif abs(c2) > drop:
        disc = c1 * c1 - 4.0 * c2 * c0
        if disc < 0.0:
            roots = []
        else:
            s = np.sqrt(disc)
            qq = -(c1 + np.copysign(s, c1)) / 2.0
            roots = [qq / c2] + ([c0 / qq] if qq != 0.0 else [-c1 / (2.0 * c2)])
    elif abs(c1) > drop:
        roots = [-c0 / c1]
    else:
        return [], False

    def poly(t):
        return ((c3 * t + c2) * t + c1) * t + c0

    def dpoly(t):
        return (3.0 * c3 * t + 2.0 * c2) * t + c1

    polished = []
    for t in roots:
        for _ in range(2):
            slope = dpoly(t)
            if abs(slope) > 1e-30:
                t -= poly(t) / slope
        if -1e-9 <= t <= 1.0 + 1e-9 and abs(poly(t)) < 1e-10:
            polished.append(min(max(t, 0.0), 1.0))
    polished.sort()
    out = []
    for t in polished:
        if not out or t - out[-1] > 1e-9:
            out.append(t)
    return out, False


def coplanarity_filter(c3, c2, c1, c0) -> bool:
    """True when the cubic provably has no acceptable root in [0, 1].

    The Bernstein coefficients on [0, 1] bracket the polynomial, so if
    all four sit beyond the root-residual tolerance on one side, no time
    in the step can pass the |p(t)| acceptance test. Purely a fast
    reject: with the filter disabled, detected contacts are identical.
    """
    b0 = c0
    b1 = c0 + c1 / 3.0
    b2 = c0 + 2.0 * c1 / 3.0 + c2 / 3.0
    b3 = c0 + c1 + c2 + c3
    margin = 1e-10 * max(abs(c3), abs(c2), abs(c1), abs(c0))
    lo = min(b0, b1, b2, b3)
    hi = max(b0, b1, b2, b3)
    return lo > margin or hi < -margin


# -- narrow phase ---------------------------------------------------------


@dataclasses.dataclass
class _Hit:
    t: float
    weights: np.ndarray


def _cross_poly(u0, du, w0, dw):
    """Coefficients of cross(u(t), w(t)) as quadratic vector polynomial."""
    return (np.cross(u0, w0),
            np.cross(u0, dw) + np.cross(du, w0),
            np.cross(du, dw))


def _vf_cubic(vertex: MovingVertex, tri: MovingTriangle):
    a0, da = tri.start[0], tri.end[0] - tri.start[0]
    u0 = tri.start[1] - tri.start[0]
    du = (tri.end[1] - tri.end[0]) - u0
    w0 = tri.start[2] - tri.start[0]
    dw = (tri.end[2] - tri.end[0]) - w0
    r0 = vertex.start - a0
    dr = (vertex.end - vertex.start) - da
    n0, n1, n2 = _cross_poly(u0, du, w0, dw)
    return ((n0, n1, n2),
            (float(n2 @ dr),
             float(n1 @ dr + n2 @ r0),
             float(n0 @ dr + n1 @ r0),
             float(n0 @ r0)))


def _triangle_weights(a, b, c, p):
    """Barycentric weights of p projected onto triangle (a, b, c)."""
    v0 = b - a
    v1 = c - a
    v2 = p - a
    d00 = float(v0 @ v0)
    d01 = float(v0 @ v1)
    d11 = float(v1 @ v1)
    d20 = float(v2 @ v0)
    d21 = float(v2 @ v1)
    denom = d00 * d11 - d01 * d01
    if denom <= 0.0:
        return None
    wb = (d11 * d20 - d01 * d21) / denom
    wc = (d00 * d21 - d01 * d20) / denom
    return np.array([1.0 - wb - wc, wb, wc])


def _clean_weights(w):
    w = np.clip(w, 0.0, None)
    return w / w.sum()


def _lerp(start, end, t):
    return start + t * (end - start)


def points_inside(points, vertices, faces):
    """Which query points lie inside a closed triangulated surface.

    Sums the signed solid angle each outward-wound face subtends at the
    query point; the total is (close to) 4 pi inside and 0 outside, so
    the cut is made at 2 pi. Robust to the query sitting slightly off
    the surface, which is all contact pruning needs.
    """
    points = np.asarray(points, dtype=np.float64)
    corners = np.asarray(vertices, dtype=np.float64)[faces]
    a = corners[None, :, 0, :] - points[:, None, :]
    b = corners[None, :, 1, :] - points[:, None, :]
    c = corners[None, :, 2, :] - points[:, None, :]
    la = np.linalg.norm(a, axis=-1)
    lb = np.linalg.norm(b, axis=-1)
    lc = np.linalg.norm(c, axis=-1)
    numer = np.einsum("qfi,qfi->qf", a, np.cross(b, c))
    denom = (la * lb * lc + np.einsum("qfi,qfi->qf", a, b) * lc
             + np.einsum("qfi,qfi->qf", b, c) * la
             + np.einsum("qfi,qfi->qf", c, a) * lb)
    omega = 2.0 * np.arctan2(numer, denom)
    return np.abs(omega.sum(axis=1)) > 2.0 * np.pi


def ccd_vertex_face(vertex: MovingVertex, tri: MovingTriangle,
                    scale: float = 1.0, use_filter: bool = False):
    """Contact times where the vertex crosses the moving triangle's plane
    inside the triangle. Returns (hits, degenerate_count)."""
    _, cubic = _vf_cubic(vertex, tri)
    if use_filter and coplanarity_filter(*cubic):
        return [], 0
    roots, always = cubic_roots(*cubic)
    if always:
        # motion keeps the four points coplanar for the whole step; there
        # is no crossing event to anchor a contact time to
        return [], 0
    hits = []
    degenerate = 0
    for t in roots:
        a, b, c = _lerp(tri.start, tri.end, t)
        p = _lerp(vertex.start, vertex.end, t)
        n = np.cross(b - a, c - a)
        if np.linalg.norm(n) <= 1e-12 * scale * scale:
            degenerate += 1
            continue
        w = _triangle_weights(a, b, c, p)
        if w is None:
            degenerate += 1
            continue
        if w.min() >= -EPS_INSIDE:
            hits.append(_Hit(t=t, weights=_clean_weights(w)))
    return hits, degenerate


def _ee_geometry(e1_a, e1_b, e2_a, e2_b, scale):
    """Closest-point parameters (s on edge 1, u on edge 2) at one time.

    Returns (s, u, parallel flag) or None when the configuration is too
    degenerate to define parameters.
    """
    u = e1_b - e1_a
    v = e2_b - e2_a
    w0 = e1_a - e2_a
    a = float(u @ u)
    b = float(u @ v)
    c = float(v @ v)
    d = float(u @ w0)
    e = float(v @ w0)
    denom = a * c - b * b
    if a <= 0.0 or c <= 0.0:
        return None
    if denom > 1e-12 * a * c:
        s = (b * e - c * d) / denom
        t2 = (a * e - b * d) / denom
        return s, t2, False
    # parallel lines: take the midpoint of the param overlap on edge 1
    s_a = float(-d / a)
    s_b = s_a + b / a  # parameter of e2_b on edge 1
    lo = max(0.0, min(s_a, s_b))
    hi = min(1.0, max(s_a, s_b))
    if lo > hi:
        return None
    s = 0.5 * (lo + hi)
    point = e1_a + s * u
    t2 = float((point - e2_a) @ v) / c
    return s, t2, True


def ccd_edge_edge(edge1: MovingEdge, edge2: MovingEdge,
                  scale: float = 1.0, use_filter: bool = False):
    """Contact times where the two moving edges become coplanar with
    crossing closest points. Returns (hits, degenerate_count); hit
    weights stack as ((w_a, w_b), (w_c, w_d))."""
    u0 = edge1.start[1] - edge1.start[0]
    du = (edge1.end[1] - edge1.end[0]) - u0
    v0 = edge2.start[1] - edge2.start[0]
    dv = (edge2.end[1] - edge2.end[0]) - v0
    r0 = edge2.start[0] - edge1.start[0]
    dr = (edge2.end[0] - edge1.end[0]) - r0
    n0, n1, n2 = _cross_poly(u0, du, v0, dv)
    cubic = (float(n2 @ dr),
             float(n1 @ dr + n2 @ r0),
             float(n0 @ dr + n1 @ r0),
             float(n0 @ r0))
    if use_filter and coplanarity_filter(*cubic):
        return [], 0
    roots, always = cubic_roots(*cubic)
    if always:
        return [], 0
    hits = []
    degenerate = 0
    for t in roots:
        p1 = _lerp(edge1.start, edge1.end, t)
        p2 = _lerp(edge2.start, edge2.end, t)
        geo = _ee_geometry(p1[0], p1[1], p2[0], p2[1], scale)
        if geo is None:
            degenerate += 1
            continue
        s, u2, parallel = geo
        if parallel:
            # a coplanarity root with parallel edges is only a contact if
            # the supporting lines actually touch, otherwise the root is
            # an artifact of the vanishing cross product
            u = p1[1] - p1[0]
            off = (p2[0] + u2 * (p2[1] - p2[0])) - p1[0]
            u_hat = u / np.linalg.norm(u)
            dist = np.linalg.norm(off - (off @ u_hat) * u_hat)
            if dist > 1e-9 * scale:
                continue
        if -EPS_INSIDE <= s <= 1.0 + EPS_INSIDE and -EPS_INSIDE <= u2 <= 1.0 + EPS_INSIDE:
            w1 = _clean_weights(np.array([1.0 - s, s]))
            w2 = _clean_weights(np.array([1.0 - u2, u2]))
            hits.append(_Hit(t=t, weights=np.stack([w1, w2])))
    return hits, degenerate


def penetration_intervals(contact_times, depth_fn, grazing=0.0):
    """Split [0, 1] at the contact times and keep the penetrating spans.

    ``depth_fn`` gives the signed separation at a time; negative means
    overlapping. Spans whose midpoint depth is not below ``-grazing``
    are dropped. With no contact times the whole step is one span, which
    covers pairs that stay overlapped from start to end.
    """
    cuts = [0.0]
    for t in contact_times:
        if t - cuts[-1] > 1e-12:
            cuts.append(float(t))
    if 1.0 - cuts[-1] > 1e-12:
        cuts.append(1.0)
    out = []
    for a, b in zip(cuts[:-1], cuts[1:]):
        if depth_fn(0.5 * (a + b)) < -grazing:
            out.append(PenetrationInterval(t_a=a, t_b=b, index=len(out)))
    return out


# -- events ---------------------------------------------------------------


@dataclasses.dataclass
class ContactEvent:
    """One proxy/object primitive pair with its penetration spans.

    ``object_node_ids`` are vertex indices into the object mesh that
    receive this event's impulse; the face owner gets +I and the lone
    vertex owner -I, which is what makes the pairwise bookkeeping satisfy
    Newton's third law. ``interval_weights`` holds one weight set per
    interval, fixed at the interval's defining contact time.
    """

    kind: str                      # "vertex_face" | "edge_edge"
    face_owner: str                # "object" | "proxy" (VF only, else "")
    proxy_index: int
    object_index: int
    object_kind: str               # "face" | "edge" | "vertex"
    object_node_ids: np.ndarray
    p_start: np.ndarray
    p_end: np.ndarray
    q_start: np.ndarray            # (3,3) triangle or (2,3) edge corners
    q_end: np.ndarray
    normal_poly: tuple             # quadratic vector coefficients
    normal_sign: float
    intervals: list
    interval_weights: list
    max_depth: float = 0.0
    #: callable t -> support weights at that time, or None when the
    #: closest-point configuration there is invalid; used to distribute
    #: an interval's impulse at its midpoint time
    weights_at: object = None
    #: validated surface-crossing times; empty for a pair that stayed
    #: interpenetrated for the whole step
    crossing_times: tuple = ()

    def normal(self, t: float) -> np.ndarray:
        n0, n1, n2 = self.normal_poly
        n = n0 + t * (n1 + t * n2)
        norm = math.sqrt(n @ n)
        if norm == 0.0:
            return np.zeros(3)
        return self.normal_sign * n / norm

    def support_points(self, t: float, weights) -> tuple:
        """(p, q) with p on the lone-vertex/proxy side and q on the
        weighted side, both at time t for the given fixed weights."""
        p = _lerp(self.p_start, self.p_end, t)
        q_corners = _lerp(self.q_start, self.q_end, t)
        if self.kind == "vertex_face":
            q = weights @ q_corners
        else:
            q = weights[1] @ q_corners
            p = weights[0] @ p.reshape(2, 3)
        return p, q

    def depth(self, t: float, weights) -> float:
        p, q = self.support_points(t, weights)
        return float(self.normal(t) @ (p - q))


def _assemble_event(kind, face_owner, proxy_index, object_index, object_kind,
                    object_node_ids, p_start, p_end, q_start, q_end,
                    normal_poly, hits, scale, midpoint_weights_fn):
    """Build the event if any span of the step actually penetrates."""
    event = ContactEvent(kind=kind, face_owner=face_owner, proxy_index=proxy_index,
                         object_index=object_index, object_kind=object_kind,
                         object_node_ids=object_node_ids, p_start=p_start, p_end=p_end,
                         q_start=q_start, q_end=q_end, normal_poly=normal_poly,
                         normal_sign=1.0, intervals=[], interval_weights=[],
                         weights_at=midpoint_weights_fn)
    times = [h.t for h in hits]
    if kind == "edge_edge":
        # Faces carry their orientation; edge crossings do not, so pick
        # the sign that points the normal from the object edge toward the
        # bulk of the proxy edge at the first crossing. Without a crossing
        # in this step the orientation is undecidable and the pair is
        # dropped; persistent overlap still shows up through the
        # vertex-face events on the same region.
        if not times:
            return None
        t0 = times[0]
        mid_p = _lerp(p_start.reshape(2, 3).mean(axis=0),
                      p_end.reshape(2, 3).mean(axis=0), t0)
        mid_q = _lerp(q_start.mean(axis=0), q_end.mean(axis=0), t0)
        d_mid = float(event.normal(t0) @ (mid_p - mid_q))
        if d_mid == 0.0:
            # midpoints coincide along the normal; assume the first root
            # is an entry, where the depth must be decreasing
            w0 = hits[0].weights
            d_mid = (event.depth(max(t0 - 1e-6, 0.0), w0)
                     - event.depth(min(t0 + 1e-6, 1.0), w0))
        if d_mid < 0.0:
            event.normal_sign = -1.0
        elif d_mid == 0.0:
            return None

    cuts = [0.0] + times + [1.0]
    spans = []
    span_weights = []
    max_depth = 0.0
    k = 0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b - a <= 1e-12:
            continue
        if a in times:
            weights = hits[times.index(a)].weights
        elif b in times:
            weights = hits[times.index(b)].weights
        else:
            weights = midpoint_weights_fn(0.5 * (a + b))
            if weights is None:
                continue
        d_mid = event.depth(0.5 * (a + b), weights)
        if d_mid < -GRAZING_DEPTH * scale:
            spans.append(PenetrationInterval(t_a=a, t_b=b, index=k))
            span_weights.append(weights)
            max_depth = max(max_depth, -d_mid)
            k += 1
    if not spans:
        return None
    event.intervals = spans
    event.interval_weights = span_weights
    event.max_depth = max_depth
    event.crossing_times = tuple(times)
    return event


@dataclasses.dataclass
class PrimitiveSet:
    """Start/end vertex positions with the faces and edges built on them."""

    positions_start: np.ndarray
    positions_end: np.ndarray
    faces: np.ndarray
    edges: np.ndarray
    vertex_ids: np.ndarray

    @classmethod
    def from_arrays(cls, start, end, faces, edges, vertex_ids=None):
        start = np.asarray(start, dtype=np.float64)
        end = np.asarray(end, dtype=np.float64)
        if vertex_ids is None:
            vertex_ids = np.arange(len(start), dtype=np.int64)
        return cls(positions_start=start, positions_end=end,
                   faces=np.asarray(faces, dtype=np.int64),
                   edges=np.asarray(edges, dtype=np.int64),
                   vertex_ids=np.asarray(vertex_ids, dtype=np.int64))


def _swept_boxes(start, end, groups, pad):
    """Min/max corners of the swept motion of each vertex group."""
    pts = np.concatenate([start[groups], end[groups]], axis=1)
    return pts.min(axis=1) - pad, pts.max(axis=1) + pad


@dataclasses.dataclass
class ContactDiagnostics:
    candidates_vf: int = 0
    candidates_ee: int = 0
    degenerate_discards: int = 0


def _flat_pairs(a_min, a_max, b_min, b_max):
    """Overlapping box index pairs, flattened in (a, b) lexicographic order.

    One axis is tested on the full cross product and the survivors are
    refined per axis, which keeps the big boolean table to a single
    component instead of three.
    """
    hit = a_min[:, None, 0] <= b_max[None, :, 0]
    hit &= b_min[None, :, 0] <= a_max[:, None, 0]
    i, j = np.nonzero(hit)
    for k in (1, 2):
        ok = (a_min[i, k] <= b_max[j, k]) & (b_min[j, k] <= a_max[i, k])
        i, j = i[ok], j[ok]
    return i, j


def _dot_rows(a, b):
    return np.einsum("ij,ij->i", a, b)


def _vf_coeffs_batch(p0, p1, t0, t1):
    """Coplanarity cubics for many vertex/triangle pairs at once."""
    a0 = t0[:, 0]
    da = t1[:, 0] - a0
    u0 = t0[:, 1] - t0[:, 0]
    du = (t1[:, 1] - t1[:, 0]) - u0
    w0 = t0[:, 2] - t0[:, 0]
    dw = (t1[:, 2] - t1[:, 0]) - w0
    r0 = p0 - a0
    dr = (p1 - p0) - da
    n0 = np.cross(u0, w0)
    n1 = np.cross(u0, dw) + np.cross(du, w0)
    n2 = np.cross(du, dw)
    cubic = (_dot_rows(n2, dr),
             _dot_rows(n1, dr) + _dot_rows(n2, r0),
             _dot_rows(n0, dr) + _dot_rows(n1, r0),
             _dot_rows(n0, r0))
    return (n0, n1, n2), cubic


def _ee_coeffs_batch(a0s, a1s, b0s, b1s):
    """Coplanarity cubics for many edge/edge pairs; normals object-first."""
    u0 = a0s[:, 1] - a0s[:, 0]
    du = (a1s[:, 1] - a1s[:, 0]) - u0
    v0 = b0s[:, 1] - b0s[:, 0]
    dv = (b1s[:, 1] - b1s[:, 0]) - v0
    r0 = b0s[:, 0] - a0s[:, 0]
    dr = (b1s[:, 0] - a1s[:, 0]) - r0
    n0 = np.cross(u0, v0)
    n1 = np.cross(u0, dv) + np.cross(du, v0)
    n2 = np.cross(du, dv)
    cubic = (_dot_rows(n2, dr),
             _dot_rows(n1, dr) + _dot_rows(n2, r0),
             _dot_rows(n0, dr) + _dot_rows(n1, r0),
             _dot_rows(n0, r0))
    # the conventional normal direction is object cross proxy
    return (-n0, -n1, -n2), cubic


def _bernstein_sides(cubic):
    """(provably above, provably below) masks for each candidate cubic.

    Above/below mean the polynomial stays outside the root-acceptance
    band on [0, 1], using the Bernstein bracket. Either side implies no
    acceptable root; staying below additionally means the vertex-face
    depth is negative for the whole step.
    """
    c3, c2, c1, c0 = cubic
    b0 = c0
    b1 = c0 + c1 / 3.0
    b2 = c0 + 2.0 * c1 / 3.0 + c2 / 3.0
    b3 = c0 + c1 + c2 + c3
    lo = np.minimum(np.minimum(b0, b1), np.minimum(b2, b3))
    hi = np.maximum(np.maximum(b0, b1), np.maximum(b2, b3))
    margin = 1e-10 * np.maximum.reduce([np.abs(c) for c in cubic])
    return lo > margin, hi < -margin


def _prune_persistent(events, container: PrimitiveSet):
    """Validate whole-step penetration events from one vertex-face phase.

    A pair with a surface crossing is trusted as-is. A pair without one
    only knows it sits on the back side of a face plane, which is also
    true of points entirely outside the body (below a sphere, say, every
    bottom face plane has them behind it). Two extra checks fix that:
    the vertex at mid-step must be inside the container's closed
    surface, and of the faces still claiming the same vertex only the
    nearest is its real contact partner.
    """
    held = [e for e in events if not e.crossing_times]
    if not held:
        return events
    mid_body = 0.5 * (container.positions_start + container.positions_end)
    queries = np.array([0.5 * (e.p_start + e.p_end) for e in held])
    inside = points_inside(queries, mid_body, container.faces)
    best = {}
    for e, ok in zip(held, inside):
        if not ok:
            continue
        key = e.proxy_index if e.face_owner == "object" else e.object_index
        if key not in best or e.max_depth < best[key].max_depth:
            best[key] = e
    kept = set(map(id, best.values()))
    return [e for e in events if e.crossing_times or id(e) in kept]


def find_contacts(proxy: PrimitiveSet, obj: PrimitiveSet, scale: float,
                  use_filter: bool = True, pad: float = 0.0):
    """All contact events between the moving proxy and object primitives.

    Checks proxy vertices against object faces, object vertices against
    proxy faces, and proxy edges against object edges, in that order.
    Within each vertex-face phase the crossing events come first and the
    whole-step penetration events after, each group in (proxy, object)
    candidate order, so the event list order is reproducible run to run.

    Swept boxes alone cover every crossing event, since touching
    primitives overlap at the contact instant. A pair that stays
    interpenetrated for the whole step never needs to touch box-wise, so
    ``pad`` inflates the vertex-face boxes by the deepest persistent
    overlap the caller wants caught; a tool's bounding radius is a
    natural choice. Edge pairs only ever report crossings, so they get
    by without the inflation.

    The fast-reject filter only skips work that provably cannot produce
    an event, so the event list with ``use_filter`` off is identical.
    """
    pad_ee = 1e-9 * scale
    pad = pad + pad_ee
    events = []
    diag = ContactDiagnostics()

    # proxy vertex vs object face
    pv_min, pv_max = _swept_boxes(proxy.positions_start, proxy.positions_end,
                                  proxy.vertex_ids[:, None], pad)
    of_min, of_max = _swept_boxes(obj.positions_start, obj.positions_end,
                                  obj.faces, pad)
    vi, fj = _flat_pairs(pv_min, pv_max, of_min, of_max)
    diag.candidates_vf += len(vi)
    if len(vi):
        vids = proxy.vertex_ids[vi]
        tri_ids = obj.faces[fj]
        events.extend(_vf_phase(
            proxy.positions_start[vids], proxy.positions_end[vids],
            obj.positions_start[tri_ids], obj.positions_end[tri_ids],
            vi, fj, lambda k: tri_ids[k], "object",
            scale, use_filter, diag, obj))

    # object vertex vs proxy face
    ov_min, ov_max = _swept_boxes(obj.positions_start, obj.positions_end,
                                  obj.vertex_ids[:, None], pad)
    pf_min, pf_max = _swept_boxes(proxy.positions_start, proxy.positions_end,
                                  proxy.faces, pad)
    fi, vj = _flat_pairs(pf_min, pf_max, ov_min, ov_max)
    diag.candidates_vf += len(fi)
    if len(fi):
        vids = obj.vertex_ids[vj]
        tri_ids = proxy.faces[fi]
        events.extend(_vf_phase(
            obj.positions_start[vids], obj.positions_end[vids],
            proxy.positions_start[tri_ids], proxy.positions_end[tri_ids],
            fi, vj, lambda k: np.array([vids[k]], dtype=np.int64), "proxy",
            scale, use_filter, diag, proxy))

    # proxy edge vs object edge
    pe_min, pe_max = _swept_boxes(proxy.positions_start, proxy.positions_end,
                                  proxy.edges, pad_ee)
    oe_min, oe_max = _swept_boxes(obj.positions_start, obj.positions_end,
                                  obj.edges, pad_ee)
    ei, ej = _flat_pairs(pe_min, pe_max, oe_min, oe_max)
    diag.candidates_ee += len(ei)
    if len(ei):
        e1_ids = proxy.edges[ei]
        e2_ids = obj.edges[ej]
        polys, cubic = _ee_coeffs_batch(
            proxy.positions_start[e1_ids], proxy.positions_end[e1_ids],
            obj.positions_start[e2_ids], obj.positions_end[e2_ids])
        above, below = _bernstein_sides(cubic)
        # an edge-edge event needs a crossing, so either side rejects
        keep = ~(above | below) if use_filter else np.ones(len(ei), dtype=bool)
        for k in np.flatnonzero(keep):
            e1 = MovingEdge(proxy.positions_start[e1_ids[k]],
                            proxy.positions_end[e1_ids[k]])
            e2 = MovingEdge(obj.positions_start[e2_ids[k]],
                            obj.positions_end[e2_ids[k]])
            event = _ee_event(
                e1, e2, int(ei[k]), int(ej[k]), e2_ids[k],
                (polys[0][k], polys[1][k], polys[2][k]),
                tuple(float(c[k]) for c in cubic), scale=scale, diag=diag)
            if event is not None:
                events.append(event)
    return events, diag


def _vf_midpoint_weights_fn(v, tri):
    def midpoint_weights(t):
        a, b, c = _lerp(tri.start, tri.end, t)
        p = _lerp(v.start, v.end, t)
        w = _triangle_weights(a, b, c, p)
        if w is None or w.min() < -EPS_INSIDE:
            return None
        return _clean_weights(w)
    return midpoint_weights


def _vf_event(v, tri, proxy_index, object_index, face_owner, object_node_ids,
              normal_poly, cubic, scale, diag):
    """Crossing-rooted vertex-face event.

    Returns (event, held); ``held`` flags a pair with no validated
    crossing, which the caller then evaluates in the whole-step batch.
    """
    roots, always = cubic_roots(*cubic)
    if always:
        return None, False
    hits = []
    for t in roots:
        a, b, c = _lerp(tri.start, tri.end, t)
        p = _lerp(v.start, v.end, t)
        if np.linalg.norm(np.cross(b - a, c - a)) <= 1e-12 * scale * scale:
            diag.degenerate_discards += 1
            continue
        w = _triangle_weights(a, b, c, p)
        if w is None:
            diag.degenerate_discards += 1
            continue
        if w.min() >= -EPS_INSIDE:
            hits.append(_Hit(t=t, weights=_clean_weights(w)))
    if not hits:
        return None, True
    kind_object = "face" if face_owner == "object" else "vertex"
    event = _assemble_event("vertex_face", face_owner, proxy_index, object_index,
                            kind_object, object_node_ids, v.start, v.end,
                            tri.start, tri.end, normal_poly, hits, scale,
                            _vf_midpoint_weights_fn(v, tri))
    return event, False


def _dot3(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def _held_vf_weights(rows, pv0, pv1, tc0, tc1, n0, n1, n2, scale):
    """Whole-step penetration test for crossing-free vertex-face pairs.

    Mirrors the single-pair logic on arrays: project the mid-step vertex
    onto the mid-step face, demand the footprint contain it and the
    signed distance be a real penetration. Returns the surviving row
    indices with their support weights and depths.
    """
    p = pv0[rows] + 0.5 * (pv1[rows] - pv0[rows])
    cor = tc0[rows] + 0.5 * (tc1[rows] - tc0[rows])
    a, b, c = cor[:, 0], cor[:, 1], cor[:, 2]
    u0 = b - a
    u1 = c - a
    u2 = p - a
    d00 = _dot3(u0, u0)
    d01 = _dot3(u0, u1)
    d11 = _dot3(u1, u1)
    d20 = _dot3(u2, u0)
    d21 = _dot3(u2, u1)
    denom = d00 * d11 - d01 * d01
    ok = denom > 0.0
    safe = np.where(ok, denom, 1.0)
    wb = (d11 * d20 - d01 * d21) / safe
    wc = (d00 * d21 - d01 * d20) / safe
    w = np.stack([1.0 - wb - wc, wb, wc], axis=1)
    ok &= w.min(axis=1) >= -EPS_INSIDE
    w = np.clip(w, 0.0, None)
    w /= w.sum(axis=1)[:, None]
    n = n0[rows] + 0.5 * (n1[rows] + 0.5 * n2[rows])
    norm = np.sqrt(_dot3(n, n))
    ok &= norm > 0.0
    n /= np.where(norm > 0.0, norm, 1.0)[:, None]
    q = w[:, 0, None] * a + w[:, 1, None] * b + w[:, 2, None] * c
    depth = _dot3(n, p - q)
    ok &= depth < -GRAZING_DEPTH * scale
    keep = np.flatnonzero(ok)
    return rows[keep], w[keep], -depth[keep]


def _vf_phase(v_s, v_e, t_s, t_e, pidx, oidx, node_ids, face_owner,
              scale, use_filter, diag, container):
    """One vertex-face narrow-phase pass over candidate arrays.

    Pairs whose coplanarity polynomial can change sign get the root
    solver one by one; everything else rides the vectorised whole-step
    path, since a polynomial pinned to one side of zero cannot have a
    crossing. Crossing events come first in candidate order, then the
    surviving whole-step events in candidate order.
    """
    polys, cubic = _vf_coeffs_batch(v_s, v_e, t_s, t_e)
    above, below = _bernstein_sides(cubic)
    if use_filter:
        solve_rows = np.flatnonzero(~(above | below))
        held = list(np.flatnonzero(below))
    else:
        solve_rows = np.arange(len(pidx))
        held = []
    phase = []
    for k in solve_rows:
        v = MovingVertex(v_s[k], v_e[k])
        tri = MovingTriangle(t_s[k], t_e[k])
        event, held_k = _vf_event(
            v, tri, int(pidx[k]), int(oidx[k]), face_owner, node_ids(k),
            (polys[0][k], polys[1][k], polys[2][k]),
            tuple(float(c[k]) for c in cubic), scale, diag)
        if event is not None:
            phase.append(event)
        elif held_k:
            held.append(int(k))
    rows = np.array(sorted(held), dtype=np.int64)
    if len(rows):
        rows, w_held, d_held = _held_vf_weights(rows, v_s, v_e, t_s, t_e,
                                                *polys, scale)
        kind_object = "face" if face_owner == "object" else "vertex"
        for r, wr, dr in zip(rows, w_held, d_held):
            r = int(r)
            v = MovingVertex(v_s[r], v_e[r])
            tri = MovingTriangle(t_s[r], t_e[r])
            phase.append(ContactEvent(
                kind="vertex_face", face_owner=face_owner,
                proxy_index=int(pidx[r]), object_index=int(oidx[r]),
                object_kind=kind_object, object_node_ids=node_ids(r),
                p_start=v_s[r], p_end=v_e[r], q_start=t_s[r], q_end=t_e[r],
                normal_poly=(polys[0][r], polys[1][r], polys[2][r]),
                normal_sign=1.0,
                intervals=[PenetrationInterval(t_a=0.0, t_b=1.0, index=0)],
                interval_weights=[wr], max_depth=float(dr),
                weights_at=_vf_midpoint_weights_fn(v, tri),
                crossing_times=()))
    return _prune_persistent(phase, container)


def _ee_event(e1, e2, proxy_index, object_index, object_node_ids,
              normal_poly, cubic, scale, diag):
    roots, always = cubic_roots(*cubic)
    if always:
        return None
    hits = []
    for t in roots:
        p1 = _lerp(e1.start, e1.end, t)
        p2 = _lerp(e2.start, e2.end, t)
        geo = _ee_geometry(p1[0], p1[1], p2[0], p2[1], scale)
        if geo is None:
            diag.degenerate_discards += 1
            continue
        s, u2, parallel = geo
        if parallel:
            u = p1[1] - p1[0]
            off = (p2[0] + u2 * (p2[1] - p2[0])) - p1[0]
            u_hat = u / np.linalg.norm(u)
            if np.linalg.norm(off - (off @ u_hat) * u_hat) > 1e-9 * scale:
                continue
        if -EPS_INSIDE <= s <= 1.0 + EPS_INSIDE and -EPS_INSIDE <= u2 <= 1.0 + EPS_INSIDE:
            hits.append(_Hit(t=t, weights=np.stack([
                _clean_weights(np.array([1.0 - s, s])),
                _clean_weights(np.array([1.0 - u2, u2]))])))

    def midpoint_weights(t):
        p1 = _lerp(e1.start, e1.end, t)
        p2 = _lerp(e2.start, e2.end, t)
        geo = _ee_geometry(p1[0], p1[1], p2[0], p2[1], scale)
        if geo is None:
            return None
        s, u2, _ = geo
        if not (-EPS_INSIDE <= s <= 1.0 + EPS_INSIDE
                and -EPS_INSIDE <= u2 <= 1.0 + EPS_INSIDE):
            return None
        return np.stack([_clean_weights(np.array([1.0 - s, s])),
                         _clean_weights(np.array([1.0 - u2, u2]))])

    return _assemble_event("edge_edge", "", proxy_index, object_index, "edge",
                           object_node_ids, e1.start.reshape(-1), e1.end.reshape(-1),
                           e2.start, e2.end, normal_poly, hits, scale,
                           midpoint_weights)
