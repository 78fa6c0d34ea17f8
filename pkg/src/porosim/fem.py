"""Linear finite elements on tets with wet-dependent stiffness.

Constant-strain tetrahedra under Cauchy (small) strain, lumped masses,
and an implicit Euler velocity update solved by preconditioned conjugate
gradients against the cached sparse stiffness. Element stiffness varies
per tet with water content; only tets whose water fraction moved past a
threshold get reassembled. Plastic flow follows the creep-toward-excess
rule, and the tool-locality damping kernel scales node velocities by a
two-branch weight of distance to the tool.
"""

from __future__ import annotations

import dataclasses

import numpy as np
import scipy.sparse as sp

from . import materials, wetting
from .errors import MaterialError, MeshError, SolverError
from .mesh import TetMesh

#: Water-fraction change below which a tet keeps its old stiffness.
PHI_REFRESH_THRESHOLD = 1e-4


@dataclasses.dataclass(frozen=True)
class SimParams:
    """Integrator settings: step, density, Rayleigh damping, pinned set."""

    dt: float
    density: float
    alpha: float = 0.1
    beta: float = 0.01
    fixed_vertices: tuple = ()
    cg_tol: float = 1e-6
    cg_max_iter: int = 200
    stiffness_warping: bool = False

    def __post_init__(self):
        if self.dt <= 0.0:
            raise MaterialError(f"time step must be positive, got {self.dt}")
        if self.density <= 0.0:
            raise MaterialError(f"density must be positive, got {self.density}")
        if self.alpha < 0.0 or self.beta < 0.0:
            raise MaterialError("Rayleigh coefficients must be nonnegative")
        object.__setattr__(self, "fixed_vertices",
                           tuple(int(v) for v in self.fixed_vertices))


@dataclasses.dataclass(frozen=True)
class PlasticityParams:
    """Creep-to-excess plasticity: threshold, per-step rate, strain cap."""

    yield_strain: float
    creep: float
    max_strain: float

    def __post_init__(self):
        if self.yield_strain < 0.0:
            raise MaterialError(f"yield strain must be nonnegative, got {self.yield_strain}")
        if not (0.0 <= self.creep <= 1.0):
            raise MaterialError(f"creep must lie in [0, 1], got {self.creep}")
        if self.max_strain < self.yield_strain:
            raise MaterialError("plastic strain cap must be at least the yield strain")


@dataclasses.dataclass(frozen=True)
class DampingKernelParams:
    """Locality damping weight around the tool.

    Inside the influence radius the weight is 1/(1 + k1*r); outside it an
    extra exp(k2*r) joins the denominator. The formula is intentionally
    discontinuous at r = R: the outer branch adds at least 1 to the
    denominator, so weights drop sharply past the radius.
    """

    k1: float
    k2: float
    radius: float
    center: tuple = (0.0, 0.0, 0.0)

    def __post_init__(self):
        if self.k1 < 0.0 or self.k2 < 0.0:
            raise MaterialError("kernel coefficients must be nonnegative")
        if self.radius <= 0.0:
            raise MaterialError(f"kernel radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclasses.dataclass
class StepDiagnostics:
    cg_iterations: int
    residual: float
    kinetic_energy: float
    elastic_energy: float


def strain_norm(strain: np.ndarray) -> np.ndarray:
    """Frobenius norm of the strain tensor given in engineering form.

    Shear entries hold gamma = 2 * eps, so they contribute gamma^2 / 2.
    """
    strain = np.asarray(strain, dtype=np.float64)
    normal = (strain[..., :3] ** 2).sum(axis=-1)
    shear = (strain[..., 3:] ** 2).sum(axis=-1)
    return np.sqrt(normal + 0.5 * shear)


def _shape_gradients(points: np.ndarray) -> tuple:
    d = np.stack([points[1] - points[0], points[2] - points[0],
                  points[3] - points[0]], axis=-1)
    volume = float(np.linalg.det(d)) / 6.0
    grads = np.empty((4, 3))
    grads[1:] = np.linalg.inv(d)
    grads[0] = -grads[1:].sum(axis=0)
    return grads, volume


def _strain_matrix(grads: np.ndarray) -> np.ndarray:
    b = np.zeros((6, 12))
    for a in range(4):
        gx, gy, gz = grads[a]
        c = 3 * a
        b[0, c] = gx
        b[1, c + 1] = gy
        b[2, c + 2] = gz
        b[3, c + 1] = gz
        b[3, c + 2] = gy
        b[4, c] = gz
        b[4, c + 2] = gx
        b[5, c] = gy
        b[5, c + 1] = gx
    return b


def element_stiffness(points: np.ndarray, stiffness: np.ndarray) -> np.ndarray:
    """12x12 stiffness V * B^T C B of one tet from its rest corners."""
    points = np.asarray(points, dtype=np.float64)
    edge = max(float(np.linalg.norm(points[i] - points[j]))
               for i in range(4) for j in range(i + 1, 4))
    try:
        grads, volume = _shape_gradients(points)
    except np.linalg.LinAlgError:
        raise MeshError(f"degenerate tet: coplanar corners for edge scale {edge:.3e}") from None
    if volume <= 1e-12 * edge**3:
        raise MeshError(f"degenerate tet: volume {volume:.3e} for edge scale {edge:.3e}")
    b = _strain_matrix(grads)
    return volume * b.T @ np.asarray(stiffness, dtype=np.float64) @ b


def _batched_geometry(mesh: TetMesh):
    """Strain matrices (m, 6, 12) for all tets at the rest pose."""
    p = mesh.rest_positions[mesh.tets]
    d = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]], axis=-1)
    d_inv = np.linalg.inv(d)
    grads = np.empty((mesh.n_tets, 4, 3))
    grads[:, 1:] = d_inv
    grads[:, 0] = -grads[:, 1:].sum(axis=1)
    b = np.zeros((mesh.n_tets, 6, 12))
    for a in range(4):
        g = grads[:, a]
        c = 3 * a
        b[:, 0, c] = g[:, 0]
        b[:, 1, c + 1] = g[:, 1]
        b[:, 2, c + 2] = g[:, 2]
        b[:, 3, c + 1] = g[:, 2]
        b[:, 3, c + 2] = g[:, 1]
        b[:, 4, c] = g[:, 2]
        b[:, 4, c + 2] = g[:, 0]
        b[:, 5, c] = g[:, 1]
        b[:, 5, c + 1] = g[:, 0]
    return b, d


class SystemState:
    """Everything the integrator owns besides the mesh kinematics.

    The mesh keeps positions and velocities (single source of truth);
    this object adds lumped masses, per-tet stiffness, plastic strain,
    and the assembled-stiffness cache with its scatter map.
    """

    def __init__(self, mesh: TetMesh, material: materials.PorousMaterial,
                 params: SimParams):
        self.mesh = mesh
        self.material = material
        self.params = params

        node_mass = np.zeros(mesh.n_vertices)
        np.add.at(node_mass, mesh.tets.reshape(-1),
                  np.repeat(params.density * mesh.rest_volumes / 4.0, 4))
        if np.any(node_mass <= 0.0):
            raise MeshError("isolated vertex with zero lumped mass")
        total = float(node_mass.sum())
        expected = params.density * mesh.total_volume
        if abs(total - expected) > 1e-9 * expected:
            raise MeshError("lumped mass does not match density * volume")
        self.node_mass = node_mass
        self.dof_mass = np.repeat(node_mass, 3)

        self.strain_matrices, self._rest_edges = _batched_geometry(mesh)
        solid_c = materials.isotropic_stiffness(material.solid).matrix
        self.element_c = np.broadcast_to(solid_c, (mesh.n_tets, 6, 6)).copy()
        self.phi_applied = np.zeros(mesh.n_tets)
        self._c_by_phi = {0.0: solid_c}
        self.plastic_strain = np.zeros((mesh.n_tets, 6))
        self.f_plastic = np.zeros(3 * mesh.n_vertices)

        dofs = (3 * mesh.tets[:, :, None] + np.arange(3)).reshape(mesh.n_tets, 12)
        self.element_dofs = dofs
        rows = np.repeat(dofs, 12, axis=1).reshape(-1)
        cols = np.tile(dofs, (1, 12)).reshape(-1)
        order = np.lexsort((cols, rows))
        first = np.ones(len(order), dtype=bool)
        first[1:] = (rows[order][1:] != rows[order][:-1]) | (cols[order][1:] != cols[order][:-1])
        slots = np.cumsum(first) - 1
        self.entry_slot = np.empty(len(order), dtype=np.int64)
        self.entry_slot[order] = slots
        nnz = int(slots[-1]) + 1
        n_dof = 3 * mesh.n_vertices
        indices = cols[order][first]
        indptr = np.concatenate([[0], np.cumsum(
            np.bincount(rows[order][first], minlength=n_dof))])
        self.element_k = self._element_stiffnesses(np.arange(mesh.n_tets))
        data = np.bincount(self.entry_slot, weights=self.element_k.reshape(-1),
                           minlength=nnz)
        self.stiffness = sp.csr_matrix((data, indices, indptr), shape=(n_dof, n_dof))

        fixed = np.asarray(params.fixed_vertices, dtype=np.int64)
        if len(fixed) and (fixed.min() < 0 or fixed.max() >= mesh.n_vertices):
            raise MeshError("fixed vertex index out of range")
        self.fixed_dofs = (3 * fixed[:, None] + np.arange(3)).reshape(-1) if len(fixed) \
            else np.empty(0, dtype=np.int64)

    def _element_stiffnesses(self, tet_ids: np.ndarray) -> np.ndarray:
        b = self.strain_matrices[tet_ids]
        c = self.element_c[tet_ids]
        v = self.mesh.rest_volumes[tet_ids]
        return np.einsum("e,eki,ekl,elj->eij", v, b, c, b, optimize=True)

    def _update_stiffness(self, tet_ids: np.ndarray):
        new_k = self._element_stiffnesses(tet_ids)
        delta = (new_k - self.element_k[tet_ids]).reshape(-1)
        slots = self.entry_slot.reshape(self.mesh.n_tets, 144)[tet_ids].reshape(-1)
        self.stiffness.data += np.bincount(slots, weights=delta,
                                           minlength=len(self.stiffness.data))
        self.element_k[tet_ids] = new_k

    def refresh_plastic_forces(self):
        f = np.einsum("e,eki,ekl,el->ei", self.mesh.rest_volumes,
                      self.strain_matrices, self.element_c, self.plastic_strain,
                      optimize=True)
        out = np.zeros(3 * self.mesh.n_vertices)
        np.add.at(out, self.element_dofs.reshape(-1), f.reshape(-1))
        self.f_plastic = out

    # -- measurements -----------------------------------------------------

    def element_strains(self) -> np.ndarray:
        """Total engineering strain per tet from current displacements."""
        u = (self.mesh.current_positions - self.mesh.rest_positions).reshape(-1)
        u_e = u[self.element_dofs]
        return np.einsum("ekj,ej->ek", self.strain_matrices, u_e)

    def internal_forces(self) -> np.ndarray:
        if self.params.stiffness_warping:
            return self._warped_internal_forces()
        u = (self.mesh.current_positions - self.mesh.rest_positions).reshape(-1)
        return self.stiffness @ u - self.f_plastic

    def _element_rotations(self) -> np.ndarray:
        p = self.mesh.current_positions[self.mesh.tets]
        d = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0], p[:, 3] - p[:, 0]], axis=-1)
        f = d @ np.linalg.inv(self._rest_edges)
        u, _, vt = np.linalg.svd(f)
        det = np.linalg.det(u @ vt)
        u[det < 0.0, :, -1] *= -1.0
        return u @ vt

    def _warped_internal_forces(self) -> np.ndarray:
        """Rotate each element to its unrotated frame, evaluate, rotate back.

        The implicit solve keeps the unwarped stiffness as its
        linearization; the warped force only replaces the residual, which
        is the usual quasi-static approximation for this correction.
        """
        r = self._element_rotations()
        x = self.mesh.current_positions[self.mesh.tets]
        x0 = self.mesh.rest_positions[self.mesh.tets]
        back = np.einsum("eji,enj->eni", r, x)
        u_loc = (back - x0).reshape(self.mesh.n_tets, 12)
        eps_e = np.einsum("ekj,ej->ek", self.strain_matrices, u_loc) - self.plastic_strain
        f_loc = np.einsum("e,eki,ekl,el->ei", self.mesh.rest_volumes,
                          self.strain_matrices, self.element_c, eps_e, optimize=True)
        f_rot = np.einsum("eij,enj->eni", r, f_loc.reshape(self.mesh.n_tets, 4, 3))
        out = np.zeros(3 * self.mesh.n_vertices)
        np.add.at(out, self.element_dofs.reshape(-1), f_rot.reshape(-1))
        return out

    def elastic_energy(self) -> float:
        eps = self.element_strains() - self.plastic_strain
        per_tet = np.einsum("ek,ekl,el->e", eps, self.element_c, eps)
        return 0.5 * float((self.mesh.rest_volumes * per_tet).sum())

    def kinetic_energy(self) -> float:
        v2 = (self.mesh.velocities**2).sum(axis=1)
        return 0.5 * float((self.node_mass * v2).sum())


def build_state(mesh: TetMesh, material: materials.PorousMaterial,
                params: SimParams) -> SystemState:
    return SystemState(mesh, material, params)


def _pcg(matvec, b, x0, diag, tol, max_iter):
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros_like(b), 0, 0.0
    x = x0.copy()
    r = b - matvec(x)
    z = r / diag
    p = z.copy()
    rz = float(r @ z)
    for it in range(max_iter + 1):
        r_norm = float(np.linalg.norm(r))
        if r_norm <= tol * b_norm:
            return x, it, r_norm / b_norm
        if it == max_iter:
            break
        ap = matvec(p)
        p_ap = float(p @ ap)
        if p_ap <= 0.0:
            raise SolverError("conjugate gradient breakdown: operator not positive definite",
                              residual=r_norm / b_norm, iterations=it)
        alpha = rz / p_ap
        x += alpha * p
        r -= alpha * ap
        z = r / diag
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverError(
        f"conjugate gradient did not converge in {max_iter} iterations "
        f"(relative residual {r_norm / b_norm:.3e})",
        residual=r_norm / b_norm, iterations=max_iter)


def step(state: SystemState, params: SimParams, external_forces: np.ndarray) -> StepDiagnostics:
    """Advance one implicit Euler step.

    Solves (M + dt D + dt^2 K) v' = M v + dt (f_ext - f_int) with
    D = alpha M + beta K, then moves positions by dt v'. Pinned vertices
    stay put exactly: their rows act as identity and their right side is
    zero.
    """
    mesh = state.mesh
    dt = params.dt
    f_ext = np.asarray(external_forces, dtype=np.float64).reshape(-1)
    if f_ext.shape != (3 * mesh.n_vertices,):
        raise MaterialError("external force array has the wrong shape")

    m = state.dof_mass
    k = state.stiffness
    fixed = state.fixed_dofs
    mass_coef = 1.0 + dt * params.alpha
    stiff_coef = dt * params.beta + dt * dt

    def matvec(x):
        y = mass_coef * (m * x) + stiff_coef * (k @ x)
        if len(fixed):
            y[fixed] = m[fixed] * x[fixed]
        return y

    diag = mass_coef * m + stiff_coef * k.diagonal()
    if len(fixed):
        diag = diag.copy()
        diag[fixed] = m[fixed]

    v = mesh.velocities.reshape(-1)
    b = m * v + dt * (f_ext - state.internal_forces())
    if len(fixed):
        b[fixed] = 0.0
    x0 = v.copy()
    if len(fixed):
        x0[fixed] = 0.0

    v_new, iters, residual = _pcg(matvec, b, x0, diag, params.cg_tol, params.cg_max_iter)
    if len(fixed):
        v_new[fixed] = 0.0
    mesh.velocities = v_new.reshape(-1, 3)
    mesh.current_positions = mesh.current_positions + dt * mesh.velocities
    return StepDiagnostics(cg_iterations=iters, residual=residual,
                           kinetic_energy=state.kinetic_energy(),
                           elastic_energy=state.elastic_energy())


def apply_plastic_flow(state: SystemState, plasticity: PlasticityParams) -> int:
    """Creep a fraction of the over-yield strain into plastic strain.

    Returns the number of tets whose plastic strain changed. The cap
    rescales the plastic strain vector so its norm never exceeds the
    configured maximum.
    """
    if plasticity.creep == 0.0:
        return 0
    eps_elastic = state.element_strains() - state.plastic_strain
    norms = strain_norm(eps_elastic)
    over = norms > max(plasticity.yield_strain, 1e-300)
    if not np.any(over):
        return 0
    scale = plasticity.creep * (1.0 - plasticity.yield_strain / norms[over])
    state.plastic_strain[over] += scale[:, None] * eps_elastic[over]
    p_norms = strain_norm(state.plastic_strain[over])
    too_big = p_norms > plasticity.max_strain
    if np.any(too_big):
        idx = np.flatnonzero(over)[too_big]
        state.plastic_strain[idx] *= (plasticity.max_strain / p_norms[too_big])[:, None]
    state.refresh_plastic_forces()
    return int(over.sum())


def damping_weights(distances: np.ndarray, kernel: DampingKernelParams) -> np.ndarray:
    """Two-branch locality weight; discontinuous at the influence radius."""
    r = np.asarray(distances, dtype=np.float64)
    inner = 1.0 / (1.0 + kernel.k1 * r)
    # far from the tool the exponential overflows; the weight is 0 there
    # either way, so let inf fall through quietly
    with np.errstate(over="ignore"):
        outer = 1.0 / (1.0 + kernel.k1 * r + np.exp(kernel.k2 * r))
    return np.where(r < kernel.radius, inner, outer)


def apply_damping_kernel(state: SystemState, kernel: DampingKernelParams):
    """Scale node velocities by their kernel weight around the tool center."""
    center = np.asarray(kernel.center, dtype=np.float64)
    r = np.linalg.norm(state.mesh.current_positions - center, axis=1)
    state.mesh.velocities = state.mesh.velocities * damping_weights(r, kernel)[:, None]


def refresh_element_material(state: SystemState, field: wetting.SaturationField,
                             material: materials.PorousMaterial) -> int:
    """Recompute stiffness for tets whose water fraction moved enough.

    Effective tensors are cached by exact water fraction, so a uniformly
    wet mesh computes one tensor no matter how many tets share it.
    Returns the number of refreshed tets.
    """
    porosity = material.porosity
    if porosity == 0.0:
        return 0
    phi = wetting.saturation_to_phi(field.saturation, porosity)
    changed = np.abs(phi - state.phi_applied) > PHI_REFRESH_THRESHOLD
    if not np.any(changed):
        return 0
    ids = np.flatnonzero(changed)
    unique, inverse = np.unique(phi[ids], return_inverse=True)
    for value in unique:
        key = float(value)
        if key not in state._c_by_phi:
            state._c_by_phi[key] = materials.effective_stiffness(material, key).matrix
    state.element_c[ids] = np.stack([state._c_by_phi[float(v)] for v in unique])[inverse]
    state._update_stiffness(ids)
    state.phi_applied[ids] = phi[ids]
    if np.any(state.plastic_strain):
        state.refresh_plastic_forces()
    return len(ids)


def set_element_phi(state: SystemState, material: materials.PorousMaterial,
                    phi: np.ndarray):
    """Force every element to an exact water fraction, bypassing the
    refresh threshold. Used when restoring a saved run, where the applied
    fractions must round-trip exactly for the continuation to be
    bit-identical."""
    phi = np.asarray(phi, dtype=np.float64)
    unique, inverse = np.unique(phi, return_inverse=True)
    for value in unique:
        key = float(value)
        if key not in state._c_by_phi:
            state._c_by_phi[key] = materials.effective_stiffness(material, key).matrix
    state.element_c[:] = np.stack([state._c_by_phi[float(v)] for v in unique])[inverse]
    state._update_stiffness(np.arange(state.mesh.n_tets))
    state.phi_applied[:] = phi
    if np.any(state.plastic_strain):
        state.refresh_plastic_forces()
