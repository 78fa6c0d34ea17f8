"""Penalty impulses, force samples, and the loop-to-loop mailboxes.

Forces come from integrating penetration depth over the penetration
intervals of each contact event, with the contact normal re-normalized
at every quadrature point. The simulation loop converts the integral to
an impulse on mesh nodes and publishes the matching reaction force; the
haptic loop just reads the latest published sample, never blocking.
"""

from __future__ import annotations

import dataclasses

import numpy as np
from scipy.spatial.transform import Rotation, Slerp

from .collision import ContactEvent, PenetrationInterval, PrimitiveSet
from .errors import PorosimError
from .mesh import SurfaceMesh

MODES = ("push", "pull", "wet", "dry")

#: Fixed-order Gauss-Legendre rule used on every penetration interval.
#: Eight points integrate the polynomial part of the integrand exactly
#: for linear endpoint motion; renormalizing the normal introduces the
#: only quadrature error.
GAUSS_POINTS, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(8)


def interval_integral(event: ContactEvent, interval: PenetrationInterval,
                      weights, order_points=None, order_weights=None) -> np.ndarray:
    """Integral of depth(t) * normal(t) over one penetration interval.

    Time is the normalized step parameter, so the result has units of
    length; the caller scales by stiffness and the step duration to get
    an impulse. ``weights`` are the interval's fixed support weights.
    """
    if order_points is None:
        order_points = GAUSS_POINTS
        order_weights = GAUSS_WEIGHTS
    half = 0.5 * (interval.t_b - interval.t_a)
    mid = 0.5 * (interval.t_b + interval.t_a)
    out = np.zeros(3)
    for x, w in zip(order_points, order_weights):
        t = mid + half * x
        n = event.normal(t)
        p, q = event.support_points(t, weights)
        out += w * float(n @ (p - q)) * n
    return half * out


@dataclasses.dataclass(frozen=True)
class ForceSample:
    """One published force reading; torque is reserved and stays zero."""

    time_s: float
    force: np.ndarray
    torque: np.ndarray = dataclasses.field(default_factory=lambda: np.zeros(3))
    mode: str = "push"
    contact_count: int = 0


class Mailbox:
    """Single-writer, many-reader slot exchanging immutable payloads.

    The writer swaps in a fresh ``(seq, payload)`` tuple with one
    assignment; readers grab the current tuple with one attribute load.
    Neither side waits, and a reader can never observe a sequence number
    from one publish paired with the payload of another.
    """

    def __init__(self, payload):
        self._slot = (0, payload)

    def publish(self, payload):
        seq = self._slot[0] + 1
        self._slot = (seq, payload)
        return seq

    def read(self):
        return self._slot


@dataclasses.dataclass(frozen=True)
class Pose:
    position: np.ndarray
    orientation: np.ndarray  # unit quaternion, scalar first (w, x, y, z)

    def __post_init__(self):
        object.__setattr__(self, "position",
                           np.asarray(self.position, dtype=np.float64).reshape(3))
        q = np.asarray(self.orientation, dtype=np.float64).reshape(4)
        norm = float(np.linalg.norm(q))
        if not np.isfinite(norm) or norm < 1e-12:
            raise PorosimError("pose orientation must be a nonzero quaternion")
        object.__setattr__(self, "orientation", q / norm)

    def rotation(self) -> Rotation:
        w, x, y, z = self.orientation
        return Rotation.from_quat([x, y, z, w])

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.rotation().apply(points) + self.position


IDENTITY_POSE = Pose(position=np.zeros(3), orientation=np.array([1.0, 0.0, 0.0, 0.0]))


def interpolate_pose(a: Pose, b: Pose, u: float) -> Pose:
    """Linear position, spherical orientation blend at parameter u."""
    u = float(u)
    pos = (1.0 - u) * a.position + u * b.position
    slerp = Slerp([0.0, 1.0], Rotation.concatenate([a.rotation(), b.rotation()]))
    x, y, z, w = slerp(u).as_quat()
    return Pose(position=pos, orientation=np.array([w, x, y, z]))


@dataclasses.dataclass
class ToolProxy:
    """The user-driven tool: a rigid surface mesh plus contact stiffness."""

    surface: SurfaceMesh
    stiffness: float
    mode: str = "push"

    def __post_init__(self):
        if self.stiffness <= 0.0:
            raise PorosimError("contact stiffness must be positive")
        if self.mode not in MODES:
            raise PorosimError(f"unknown tool mode: {self.mode!r}")
        self._edges = self.surface.edges()

    def primitives(self, pose_start: Pose, pose_end: Pose) -> PrimitiveSet:
        return PrimitiveSet.from_arrays(
            start=pose_start.apply(self.surface.vertices),
            end=pose_end.apply(self.surface.vertices),
            faces=self.surface.triangles,
            edges=self._edges)


@dataclasses.dataclass
class ImpulseResult:
    """Outcome of one step's penalty pass.

    ``nodal`` is the per-vertex impulse applied to the object mesh;
    ``object_total`` is the same impulses summed in event order, and the
    reaction force on the tool is its exact negation divided by the step
    duration, so action plus reaction cancels bit for bit.
    """

    nodal: np.ndarray
    object_total: np.ndarray
    reaction: np.ndarray
    contact_count: int


def accumulate_impulses(events, mode: str, stiffness: float, dt: float,
                        n_vertices: int) -> ImpulseResult:
    """Turn contact events into nodal impulses and the tool reaction.

    Push presses material inward, pull flips every sign, and the wetting
    modes report contact force without moving anything. The face-owning
    side of each vertex-face event receives the raw impulse and the lone
    vertex its negation, which keeps each event internally balanced.
    """
    if mode not in MODES:
        raise PorosimError(f"unknown tool mode: {mode!r}")
    sign = -1.0 if mode == "pull" else 1.0
    apply_to_mesh = mode in ("push", "pull")
    nodal = np.zeros((n_vertices, 3))
    total = np.zeros(3)
    count = 0
    for event in events:
        for interval, weights in zip(event.intervals, event.interval_weights):
            impulse = sign * stiffness * dt * interval_integral(event, interval, weights)
            count += 1
            t_mid = 0.5 * (interval.t_a + interval.t_b)
            dist = event.weights_at(t_mid)
            if dist is None:
                dist = weights
            if event.kind == "vertex_face" and event.face_owner == "proxy":
                applied = -impulse
                if apply_to_mesh:
                    nodal[event.object_node_ids[0]] += applied
                total += applied
            elif event.kind == "vertex_face":
                if apply_to_mesh:
                    nodal[event.object_node_ids] += dist[:, None] * impulse
                total += impulse
            else:
                if apply_to_mesh:
                    nodal[event.object_node_ids] += dist[1][:, None] * impulse
                total += impulse
    if not apply_to_mesh:
        nodal[:] = 0.0
    return ImpulseResult(nodal=nodal, object_total=total,
                         reaction=-total / dt, contact_count=count)


def jitter_histogram(tick_times, bin_width_s=1e-4, max_interval_s=5e-3) -> dict:
    """Histogram of intervals between haptic ticks, JSON-serializable."""
    times = np.asarray(tick_times, dtype=np.float64)
    if len(times) < 2:
        return {"bin_width_s": bin_width_s, "counts": [], "tick_count": int(len(times))}
    gaps = np.diff(times)
    edges = np.arange(0.0, max_interval_s + bin_width_s, bin_width_s)
    counts, _ = np.histogram(np.clip(gaps, 0.0, max_interval_s), bins=edges)
    return {
        "bin_width_s": bin_width_s,
        "counts": [int(c) for c in counts],
        "tick_count": int(len(times)),
        "interval_mean_s": float(gaps.mean()),
        "interval_max_s": float(gaps.max()),
    }
