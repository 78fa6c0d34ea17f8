"""Per-tet water bookkeeping: absorption, drying, and neighbor diffusion.

Saturation is a true [0, 1] fraction, S = m / (rho_w * porosity * V) with
rho_w = 1000 kg/m^3, so "full" means the pore space holds its capacity in
water. Diffusion is an explicit graph-Laplacian exchange across interior
faces; the pairwise transfer is written in mass, which makes conservation
exact instead of approximate.
"""

from __future__ import annotations

import dataclasses

import numpy as np

from .errors import MaterialError, StabilityError
from .mesh import CageEmbedding, SurfaceMesh, TetMesh

WATER_DENSITY = 1000.0  # kg/m^3


@dataclasses.dataclass(frozen=True)
class DiffusionParams:
    """Diffusivity k_d (1/s), diffusion step dt (s), absorb increment per step."""

    diffusivity: float
    dt: float
    delta_s: float

    def __post_init__(self):
        if self.diffusivity < 0.0:
            raise MaterialError(f"diffusivity must be nonnegative, got {self.diffusivity}")
        if self.dt <= 0.0:
            raise MaterialError(f"diffusion step must be positive, got {self.dt}")
        if not (0.0 < self.delta_s <= 1.0):
            raise MaterialError(f"absorb increment must lie in (0, 1], got {self.delta_s}")


class TetAdjacency:
    """Face neighborhood of a tet mesh with shared-face areas.

    ``pairs`` lists each interior face once as a sorted (i, j) tet pair
    with the face area in ``areas``. ``area_over_volume`` holds the per
    tet ratio sum(A_ij) / V_i entering the explicit stability bound.
    """

    def __init__(self, mesh: TetMesh):
        self.pairs = mesh.interior_face_tets
        tri = mesh.rest_positions[mesh.interior_faces]
        cross = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        self.areas = 0.5 * np.linalg.norm(cross, axis=1)
        area_sum = np.zeros(mesh.n_tets)
        np.add.at(area_sum, self.pairs[:, 0], self.areas)
        np.add.at(area_sum, self.pairs[:, 1], self.areas)
        self.area_over_volume = area_sum / mesh.rest_volumes
        counts = np.bincount(self.pairs.reshape(-1), minlength=mesh.n_tets)
        if counts.max(initial=0) > 4:
            raise MaterialError("tet with more than 4 face neighbors")

    def neighbors(self, tet_id: int) -> np.ndarray:
        mask = np.any(self.pairs == tet_id, axis=1)
        both = self.pairs[mask]
        return both[both != tet_id]


@dataclasses.dataclass
class SaturationField:
    """Water mass per tet plus the capacity that defines saturation.

    ``capacity`` is rho_w * porosity * V per tet, the mass held at full
    saturation. Saturation is always derived from mass, so the two can
    never drift apart. A zero-porosity material has zero capacity and a
    permanently dry field.
    """

    water_mass: np.ndarray
    capacity: np.ndarray
    porosity: float

    @classmethod
    def dry(cls, mesh: TetMesh, porosity: float) -> "SaturationField":
        if not (0.0 <= porosity <= 1.0):
            raise MaterialError(f"porosity must lie in [0, 1], got {porosity}")
        capacity = WATER_DENSITY * porosity * mesh.rest_volumes
        return cls(water_mass=np.zeros(mesh.n_tets), capacity=capacity, porosity=porosity)

    @property
    def saturation(self) -> np.ndarray:
        out = np.zeros_like(self.water_mass)
        np.divide(self.water_mass, self.capacity, out=out, where=self.capacity > 0.0)
        return out

    @property
    def total_water_mass(self) -> float:
        return float(self.water_mass.sum())

    def set_saturation(self, values):
        values = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
        self.water_mass = values * self.capacity

    def stats(self) -> dict:
        s = self.saturation
        return {
            "saturation_min": float(s.min()),
            "saturation_mean": float(s.mean()),
            "saturation_max": float(s.max()),
            "water_mass_total": self.total_water_mass,
        }


def absorb(field: SaturationField, contact_tets, params: DiffusionParams):
    """Raise saturation of the contacted tets by one increment, capped at 1."""
    ids = np.asarray(contact_tets, dtype=np.int64)
    if len(ids) == 0:
        return field
    gain = params.delta_s * field.capacity[ids]
    field.water_mass[ids] = np.minimum(field.water_mass[ids] + gain, field.capacity[ids])
    return field


def dry(field: SaturationField, contact_tets, params: DiffusionParams):
    """Lower saturation of the contacted tets by one increment, floored at 0."""
    ids = np.asarray(contact_tets, dtype=np.int64)
    if len(ids) == 0:
        return field
    loss = params.delta_s * field.capacity[ids]
    field.water_mass[ids] = np.maximum(field.water_mass[ids] - loss, 0.0)
    return field


def stability_ratio(adjacency: TetAdjacency, params: DiffusionParams) -> float:
    """Largest k_d * dt * sum(A)/V over the mesh; must stay below 0.5."""
    if len(adjacency.area_over_volume) == 0:
        return 0.0
    return float(params.diffusivity * params.dt * adjacency.area_over_volume.max())


def diffuse_step(field: SaturationField, adjacency: TetAdjacency,
                 params: DiffusionParams):
    """One explicit exchange step across all interior faces.

    Each face moves mass rho_w * porosity * k_d * dt * A * (S_i - S_j)
    from the wetter to the drier side. Written this way the i -> j and
    j -> i updates are the same number with opposite sign, so total mass
    is conserved to the last bit unless the [0, 1] clamp engages.
    """
    ratio = stability_ratio(adjacency, params)
    if ratio >= 0.5:
        raise StabilityError(
            f"diffusion step unstable: k_d*dt*area/volume reaches {ratio:.3g} >= 0.5"
        )
    if len(adjacency.pairs) == 0 or params.diffusivity == 0.0:
        return field
    s = field.saturation
    i, j = adjacency.pairs[:, 0], adjacency.pairs[:, 1]
    flux = (WATER_DENSITY * field.porosity * params.diffusivity * params.dt
            * adjacency.areas * (s[i] - s[j]))
    np.subtract.at(field.water_mass, i, flux)
    np.add.at(field.water_mass, j, flux)
    np.clip(field.water_mass, 0.0, field.capacity, out=field.water_mass)
    return field


def saturation_to_phi(saturation, porosity: float):
    """Water volume fraction of the mixture: porosity times saturation."""
    if not (0.0 < porosity <= 1.0):
        raise MaterialError(f"porosity must lie in (0, 1], got {porosity}")
    return porosity * np.asarray(saturation, dtype=np.float64)


def transfer_wetness(field: SaturationField, embedding: CageEmbedding,
                     surface: SurfaceMesh):
    """Copy each surface vertex's containing-tet saturation into its wetness."""
    surface.wetness = field.saturation[embedding.tet_ids]
    return surface.wetness
