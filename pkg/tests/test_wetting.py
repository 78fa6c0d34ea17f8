"""Saturation bookkeeping and explicit inter-tet water diffusion."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from porosim.errors import MaterialError, StabilityError
from porosim.mesh import CageEmbedding, SurfaceMesh, TetMesh
from porosim.wetting import (
    WATER_DENSITY,
    DiffusionParams,
    SaturationField,
    TetAdjacency,
    absorb,
    diffuse_step,
    dry,
    saturation_to_phi,
    stability_ratio,
    transfer_wetness,
)

PARAMS = DiffusionParams(diffusivity=1e-3, dt=10.0, delta_s=0.1)


def chain_mesh():
    """Four tets glued face to face in a path.

    Vertices sit on the curve (t, t^2/10, t^3/100) scaled so consecutive
    windows of four are affinely independent; tet k uses vertices k..k+3,
    so tets k and k+1 share a face and nothing else touches.
    """
    t = np.arange(7, dtype=np.float64)
    points = np.column_stack([10.0 * t, t**2, t**3 / 10.0])
    tets = np.array([[k, k + 1, k + 2, k + 3] for k in range(4)])
    return TetMesh(points, tets)


def test_chain_adjacency_is_a_path():
    mesh = chain_mesh()
    adj = TetAdjacency(mesh)
    pairs = {tuple(sorted(p)) for p in adj.pairs}
    assert pairs == {(0, 1), (1, 2), (2, 3)}
    assert list(adj.neighbors(0)) == [1]
    assert sorted(adj.neighbors(1)) == [0, 2]


def test_capacity_is_water_mass_at_full_saturation(two_tets):
    porosity = 0.3
    field = SaturationField.dry(two_tets, porosity)
    assert np.allclose(field.capacity,
                       WATER_DENSITY * porosity * two_tets.rest_volumes)
    field.water_mass[:] = 0.5 * field.capacity
    assert np.allclose(field.saturation, 0.5)
    assert field.total_water_mass == pytest.approx(field.capacity.sum() / 2)


def test_absorb_increments_and_clamps(unit_tet):
    field = SaturationField.dry(unit_tet, 0.3)
    absorb(field, [0], PARAMS)
    assert field.saturation[0] == pytest.approx(0.1, rel=1e-12)
    field.set_saturation([0.95])
    absorb(field, [0], PARAMS)
    assert field.saturation[0] == 1.0


def test_absorb_reaches_full_in_finitely_many_steps(unit_tet):
    field = SaturationField.dry(unit_tet, 0.3)
    for _ in range(15):
        absorb(field, [0], PARAMS)
    assert field.saturation[0] == 1.0


def test_dry_decrements_and_floors(unit_tet):
    field = SaturationField.dry(unit_tet, 0.3)
    field.set_saturation([0.1])
    dry(field, [0], PARAMS)
    assert field.saturation[0] == pytest.approx(0.0, abs=1e-15)
    dry(field, [0], PARAMS)
    assert field.saturation[0] == 0.0


def test_dry_undoes_absorb_away_from_clamps(unit_tet):
    field = SaturationField.dry(unit_tet, 0.3)
    field.set_saturation([0.5])
    absorb(field, [0], PARAMS)
    dry(field, [0], PARAMS)
    assert field.saturation[0] == pytest.approx(0.5, rel=1e-12)


def test_absorb_ignores_empty_selection(unit_tet):
    field = SaturationField.dry(unit_tet, 0.3)
    before = field.water_mass.copy()
    absorb(field, [], PARAMS)
    dry(field, np.empty(0, dtype=int), PARAMS)
    assert np.array_equal(field.water_mass, before)


def test_set_saturation_clips(unit_tet):
    field = SaturationField.dry(unit_tet, 0.3)
    field.set_saturation([1.7])
    assert field.saturation[0] == 1.0
    field.set_saturation([-0.2])
    assert field.saturation[0] == 0.0


# -- diffusion ------------------------------------------------------------


def test_uniform_field_is_a_fixed_point(two_tets):
    field = SaturationField.dry(two_tets, 0.3)
    field.set_saturation([0.37, 0.37])
    adj = TetAdjacency(two_tets)
    before = field.water_mass.copy()
    for _ in range(50):
        diffuse_step(field, adj, PARAMS)
    assert np.array_equal(field.water_mass, before)


def test_two_equal_tets_settle_at_the_mean(two_tets):
    # both tets have volume 1/6 and share a face of area 1/2
    assert np.allclose(two_tets.rest_volumes, 1.0 / 6.0)
    field = SaturationField.dry(two_tets, 0.3)
    field.set_saturation([1.0, 0.0])
    adj = TetAdjacency(two_tets)
    params = DiffusionParams(diffusivity=1e-3, dt=50.0, delta_s=0.1)
    assert stability_ratio(adj, params) < 0.5
    for _ in range(100):
        diffuse_step(field, adj, params)
    assert np.allclose(field.saturation, 0.5, atol=1e-12)


def test_chain_matches_scalar_recurrence_oracle():
    """The vectorised update must equal the per-tet exchange rule.

    The oracle recomputes face areas and volumes from raw coordinates and
    applies s_i <- s_i - k_d dt sum_j A_ij (s_i - s_j) / V_i in plain
    Python, so it shares no code with the mesh adjacency machinery.
    """
    mesh = chain_mesh()
    porosity = 0.3
    params = DiffusionParams(diffusivity=1e-3, dt=10.0, delta_s=0.1)
    adj = TetAdjacency(mesh)
    assert stability_ratio(adj, params) < 0.5

    # geometry, from scratch: tets k and k+1 share vertices k+1, k+2, k+3
    volumes = []
    for tet in mesh.tets:
        a, b, c, d = mesh.rest_positions[tet]
        volumes.append(abs(np.linalg.det(np.array([b - a, c - a, d - a]))) / 6.0)
    areas = []
    for k in range(3):
        a, b, c = mesh.rest_positions[[k + 1, k + 2, k + 3]]
        areas.append(0.5 * np.linalg.norm(np.cross(b - a, c - a)))

    s = [1.0, 0.0, 0.0, 0.0]
    kd_dt = params.diffusivity * params.dt
    for _ in range(100):
        delta = [0.0] * 4
        for k in range(3):
            ex = kd_dt * areas[k] * (s[k] - s[k + 1])
            delta[k] -= ex / volumes[k]
            delta[k + 1] += ex / volumes[k + 1]
        s = [si + di for si, di in zip(s, delta)]

    field = SaturationField.dry(mesh, porosity)
    field.set_saturation([1.0, 0.0, 0.0, 0.0])
    for _ in range(100):
        diffuse_step(field, adj, params)
    assert np.abs(field.saturation - np.array(s)).max() < 1e-10


def test_diffusion_conserves_mass_exactly(two_tets):
    field = SaturationField.dry(two_tets, 0.3)
    field.set_saturation([0.9, 0.1])
    adj = TetAdjacency(two_tets)
    start = field.total_water_mass
    for _ in range(200):
        diffuse_step(field, adj, PARAMS)
    assert abs(field.total_water_mass - start) <= 1e-13 * start


def test_diffusion_is_a_contraction():
    mesh = chain_mesh()
    field = SaturationField.dry(mesh, 0.3)
    rng = np.random.default_rng(5)
    field.set_saturation(rng.uniform(0.0, 1.0, mesh.n_tets))
    adj = TetAdjacency(mesh)
    lo, hi = field.saturation.min(), field.saturation.max()
    for _ in range(50):
        diffuse_step(field, adj, PARAMS)
        s = field.saturation
        assert s.min() >= lo - 1e-12 and s.max() <= hi + 1e-12
        lo, hi = s.min(), s.max()


def test_long_run_reaches_uniform_steady_state():
    mesh = chain_mesh()
    field = SaturationField.dry(mesh, 0.3)
    field.set_saturation([1.0, 0.0, 0.0, 0.0])
    adj = TetAdjacency(mesh)
    assert stability_ratio(adj, PARAMS) < 0.5
    for _ in range(4000):
        diffuse_step(field, adj, PARAMS)
    mean = field.water_mass.sum() / field.capacity.sum()
    assert np.abs(field.saturation - mean).max() < 1e-6


def test_unstable_step_is_refused(two_tets):
    field = SaturationField.dry(two_tets, 0.3)
    adj = TetAdjacency(two_tets)
    params = DiffusionParams(diffusivity=1.0, dt=1.0, delta_s=0.1)
    assert stability_ratio(adj, params) >= 0.5
    with pytest.raises(StabilityError):
        diffuse_step(field, adj, params)


def test_stability_ratio_formula(two_tets):
    adj = TetAdjacency(two_tets)
    params = DiffusionParams(diffusivity=2e-3, dt=5.0, delta_s=0.1)
    # lone interior face: area 1/2 against volume 1/6 on either side
    assert stability_ratio(adj, params) == pytest.approx(2e-3 * 5.0 * 3.0, rel=1e-12)


def test_isolated_tet_has_zero_ratio(unit_tet):
    adj = TetAdjacency(unit_tet)
    assert stability_ratio(adj, PARAMS) == 0.0
    field = SaturationField.dry(unit_tet, 0.3)
    field.set_saturation([0.8])
    diffuse_step(field, adj, PARAMS)
    assert field.saturation[0] == pytest.approx(0.8, rel=1e-15)


@settings(deadline=None, max_examples=40)
@given(st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4))
def test_mass_conserved_for_arbitrary_initial_state(values):
    mesh = chain_mesh()
    field = SaturationField.dry(mesh, 0.3)
    field.set_saturation(values)
    adj = TetAdjacency(mesh)
    start = field.total_water_mass
    for _ in range(10):
        diffuse_step(field, adj, PARAMS)
    scale = max(start, field.capacity.sum() * 1e-6)
    assert abs(field.total_water_mass - start) <= 1e-12 * scale
    assert field.saturation.min() >= 0.0 and field.saturation.max() <= 1.0


# -- coupling helpers -----------------------------------------------------


def test_saturation_to_phi_scales_by_porosity():
    assert saturation_to_phi(1.0, 0.3) == pytest.approx(0.3)
    assert saturation_to_phi(0.5, 0.4) == pytest.approx(0.2)
    out = saturation_to_phi(np.array([0.0, 0.25, 1.0]), 0.2)
    assert np.allclose(out, [0.0, 0.05, 0.2])


def test_saturation_to_phi_rejects_bad_porosity():
    with pytest.raises(MaterialError):
        saturation_to_phi(0.5, 0.0)
    with pytest.raises(MaterialError):
        saturation_to_phi(0.5, 1.2)


def test_transfer_wetness_copies_containing_tet_value(two_tets):
    field = SaturationField.dry(two_tets, 0.3)
    field.set_saturation([0.25, 0.75])
    verts = np.zeros((3, 3))
    surface = SurfaceMesh(verts, np.empty((0, 3), dtype=np.int64))
    embedding = CageEmbedding(
        tet_ids=np.array([1, 0, 1]),
        weights=np.full((3, 4), 0.25),
        report={"outside_count": 0, "max_negative_weight": 0.0},
    )
    transfer_wetness(field, embedding, surface)
    assert np.array_equal(surface.wetness, [0.75, 0.25, 0.75])


def test_diffusion_params_validation():
    with pytest.raises(Exception):
        DiffusionParams(diffusivity=-1.0, dt=1.0, delta_s=0.1)
    with pytest.raises(Exception):
        DiffusionParams(diffusivity=1e-3, dt=0.0, delta_s=0.1)
    with pytest.raises(Exception):
        DiffusionParams(diffusivity=1e-3, dt=1.0, delta_s=1.5)
