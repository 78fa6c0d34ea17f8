"""Element stiffness, the implicit integrator, plasticity, and damping."""

import numpy as np
import pytest

from porosim import materials
from porosim.assets import bar_mesh
from porosim.errors import MaterialError, MeshError, SolverError
from porosim.fem import (
    DampingKernelParams,
    PlasticityParams,
    SimParams,
    apply_damping_kernel,
    apply_plastic_flow,
    build_state,
    damping_weights,
    element_stiffness,
    refresh_element_material,
    set_element_phi,
    step,
    strain_norm,
)
from porosim.wetting import SaturationField

SOLID = materials.IsotropicElastic(young_modulus=1e4, poisson_ratio=0.4)
MATERIAL = materials.PorousMaterial(solid=SOLID, density=1050.0, porosity=0.3)
C_SOLID = materials.isotropic_stiffness(SOLID).matrix


def small_bar():
    return bar_mesh(divisions=(3, 2, 2), size=(0.3, 0.1, 0.1))


def params_for(mesh, **overrides):
    base = dict(dt=0.01, density=1050.0, alpha=0.5, beta=0.004)
    base.update(overrides)
    return SimParams(**base)


def test_strain_norm_engineering_convention():
    assert strain_norm(np.array([0.3, 0.0, 0.0, 0.0, 0.0, 0.0])) == pytest.approx(0.3)
    gamma = 0.2
    assert strain_norm(np.array([0.0, 0.0, 0.0, gamma, 0.0, 0.0])) == pytest.approx(
        gamma / np.sqrt(2.0), rel=1e-12)


def test_unit_tet_stiffness_entries(unit_tet):
    k = element_stiffness(unit_tet.rest_positions, C_SOLID)
    assert k.shape == (12, 12)
    assert np.allclose(k, k.T, atol=1e-12)
    lam, mu = SOLID.lame_lambda, SOLID.lame_mu
    # node 0 x-dof couples rows 0 (gx), 4 (gz), 5 (gy), all with gradient -1
    assert k[0, 0] == pytest.approx((lam + 4.0 * mu) / 6.0, rel=1e-12)
    # node 1 x-dof sees only the xx row: gradient (1, 0, 0)
    assert k[3, 3] == pytest.approx((lam + 2.0 * mu) / 6.0, rel=1e-12)
    eig = np.linalg.eigvalsh(k)
    assert np.all(eig[:6] < 1e-9 * eig[-1])    # 3 translations + 3 rotations
    assert np.all(eig[6:] > 0.0)


def test_element_stiffness_scales_linearly_with_size(unit_tet):
    k1 = element_stiffness(unit_tet.rest_positions, C_SOLID)
    k2 = element_stiffness(2.0 * unit_tet.rest_positions, C_SOLID)
    assert np.allclose(k2, 2.0 * k1, rtol=1e-12)


def test_batched_assembly_matches_single_tet_route():
    """The vectorised per-tet stiffness must equal the scalar reference."""
    rng = np.random.default_rng(21)
    points = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                       [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]])
    points += 0.3 * rng.standard_normal((4, 3))
    from porosim.mesh import TetMesh
    mesh = TetMesh(points, np.array([[0, 1, 2, 3]]))
    state = build_state(mesh, MATERIAL, params_for(mesh))
    reference = element_stiffness(mesh.rest_positions[mesh.tets[0]], C_SOLID)
    assert np.allclose(state.element_k[0], reference, rtol=1e-12, atol=1e-9)


def test_element_stiffness_rejects_flat_tet():
    flat = np.array([[0.0, 0.0, 0.0], [1.0, 0.0, 0.0],
                     [0.0, 1.0, 0.0], [0.7, 0.3, 0.0]])
    with pytest.raises(MeshError):
        element_stiffness(flat, C_SOLID)


def test_uniform_stretch_gives_uniform_strain():
    mesh = small_bar()
    state = build_state(mesh, MATERIAL, params_for(mesh))
    delta = 0.02
    mesh.current_positions = mesh.rest_positions * np.array([1.0 + delta, 1.0, 1.0])
    strains = state.element_strains()
    assert np.allclose(strains[:, 0], delta, atol=1e-12)
    assert np.abs(strains[:, 1:]).max() < 1e-12
    expect = 0.5 * C_SOLID[0, 0] * delta**2 * mesh.total_volume
    assert state.elastic_energy() == pytest.approx(expect, rel=1e-9)


def test_rigid_translation_has_no_internal_force():
    mesh = small_bar()
    state = build_state(mesh, MATERIAL, params_for(mesh))
    mesh.current_positions = mesh.rest_positions + np.array([0.4, -0.2, 0.9])
    f = state.internal_forces()
    assert np.abs(f).max() < 1e-8
    assert state.elastic_energy() < 1e-12


def test_warped_force_vanishes_under_rigid_rotation():
    mesh = small_bar()
    angle = 0.7
    c, s = np.cos(angle), np.sin(angle)
    rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])

    plain = build_state(mesh, MATERIAL, params_for(mesh))
    mesh.current_positions = mesh.rest_positions @ rot.T
    f_plain = np.abs(plain.internal_forces()).max()

    warped = build_state(mesh, MATERIAL, params_for(mesh, stiffness_warping=True))
    mesh.current_positions = mesh.rest_positions @ rot.T
    f_warped = np.abs(warped.internal_forces()).max()

    assert f_warped < 1e-6
    assert f_warped < 1e-4 * f_plain   # the linear model objects loudly


def test_rest_state_stays_exactly_at_rest():
    mesh = small_bar()
    state = build_state(mesh, MATERIAL, params_for(mesh))
    before = mesh.rest_positions.copy()
    diag = step(state, state.params, np.zeros(3 * mesh.n_vertices))
    assert diag.cg_iterations == 0
    assert np.array_equal(mesh.current_positions, before)
    assert np.array_equal(mesh.velocities, np.zeros_like(mesh.velocities))


def test_free_fall_matches_point_mass_recurrence(unit_tet):
    """A force-driven rigid translation obeys the scalar damped update.

    Uniform translation lies in the stiffness null space, so each
    velocity component follows v' = (v + dt f/m) / (1 + dt alpha) and
    x' = x + dt v', which the loop below reproduces with plain floats.
    """
    params = SimParams(dt=0.01, density=1050.0, alpha=0.3, beta=0.02,
                       cg_tol=1e-12, cg_max_iter=400)
    state = build_state(unit_tet, MATERIAL, params)
    m_node = 1050.0 * unit_tet.rest_volumes[0] / 4.0
    fz = -9.8 * m_node
    forces = np.zeros((4, 3))
    forces[:, 2] = fz

    v, x = 0.0, 0.0
    for _ in range(50):
        v = (v + params.dt * fz / m_node) / (1.0 + params.dt * params.alpha)
        x += params.dt * v
        step(state, params, forces.reshape(-1))

    drop = unit_tet.current_positions[:, 2] - unit_tet.rest_positions[:, 2]
    assert np.allclose(drop, x, rtol=1e-9)
    assert np.allclose(unit_tet.velocities[:, 2], v, rtol=1e-9)
    assert np.abs(unit_tet.velocities[:, :2]).max() < 1e-12


def test_pinned_vertices_never_move():
    mesh = small_bar()
    fixed = [int(i) for i in np.flatnonzero(
        mesh.rest_positions[:, 0] < 1e-9)]
    params = params_for(mesh, fixed_vertices=fixed)
    state = build_state(mesh, MATERIAL, params)
    rng = np.random.default_rng(2)
    for _ in range(5):
        f = 0.5 * rng.standard_normal(3 * mesh.n_vertices)
        step(state, params, f)
    assert np.array_equal(mesh.current_positions[fixed], mesh.rest_positions[fixed])
    assert np.array_equal(mesh.velocities[fixed], np.zeros((len(fixed), 3)))
    moved = np.setdiff1d(np.arange(mesh.n_vertices), fixed)
    assert np.abs(mesh.current_positions[moved] - mesh.rest_positions[moved]).max() > 0.0


def test_internal_force_is_energy_gradient():
    mesh = small_bar()
    state = build_state(mesh, MATERIAL, params_for(mesh))
    rng = np.random.default_rng(9)
    h = 1e-6
    for trial in range(5):
        u = 0.005 * rng.standard_normal((mesh.n_vertices, 3))
        if trial == 2:   # the gradient must see plastic offsets too
            state.plastic_strain = 0.01 * rng.standard_normal((mesh.n_tets, 6))
            state.refresh_plastic_forces()
        mesh.current_positions = mesh.rest_positions + u
        f = state.internal_forces()
        flat = mesh.current_positions.reshape(-1)
        fd = np.empty_like(f)
        for dof in range(len(flat)):
            keep = flat[dof]
            flat[dof] = keep + h
            e_plus = state.elastic_energy()
            flat[dof] = keep - h
            e_minus = state.elastic_energy()
            flat[dof] = keep
            fd[dof] = (e_plus - e_minus) / (2.0 * h)
        assert np.linalg.norm(fd - f) <= 1e-5 * np.linalg.norm(f)
    state.plastic_strain[:] = 0.0
    state.refresh_plastic_forces()


def test_energy_never_increases_without_forcing():
    mesh = small_bar()
    state = build_state(mesh, MATERIAL, params_for(mesh))
    rng = np.random.default_rng(4)
    mesh.current_positions = mesh.rest_positions + 0.003 * rng.standard_normal(
        (mesh.n_vertices, 3))
    zero = np.zeros(3 * mesh.n_vertices)
    diag = step(state, state.params, zero)
    total = diag.kinetic_energy + diag.elastic_energy
    floor = 1e-9 * max(total, 1.0)
    for _ in range(60):
        diag = step(state, state.params, zero)
        now = diag.kinetic_energy + diag.elastic_energy
        assert now <= total + floor
        total = now


def test_solver_reports_failure_to_converge():
    mesh = small_bar()
    params = params_for(mesh, cg_max_iter=0)
    state = build_state(mesh, MATERIAL, params)
    f = np.ones(3 * mesh.n_vertices)
    with pytest.raises(SolverError) as info:
        step(state, params, f)
    assert info.value.iterations == 0
    assert info.value.residual > 0.0


def test_sim_params_validation():
    with pytest.raises(MaterialError):
        SimParams(dt=0.0, density=1050.0)
    with pytest.raises(MaterialError):
        SimParams(dt=0.01, density=-1.0)
    with pytest.raises(MaterialError):
        SimParams(dt=0.01, density=1050.0, alpha=-0.1)


# -- plasticity -----------------------------------------------------------


def stretched_state(delta):
    mesh = small_bar()
    state = build_state(mesh, MATERIAL, params_for(mesh))
    mesh.current_positions = mesh.rest_positions * np.array([1.0 + delta, 1.0, 1.0])
    return state


def test_below_yield_nothing_flows():
    state = stretched_state(0.05)
    rules = PlasticityParams(yield_strain=0.08, creep=0.1, max_strain=0.5)
    assert apply_plastic_flow(state, rules) == 0
    assert np.array_equal(state.plastic_strain, np.zeros_like(state.plastic_strain))


def test_full_creep_lands_exactly_on_the_yield_surface():
    state = stretched_state(0.2)
    rules = PlasticityParams(yield_strain=0.08, creep=1.0, max_strain=0.5)
    n = apply_plastic_flow(state, rules)
    assert n == state.mesh.n_tets
    residual = strain_norm(state.element_strains() - state.plastic_strain)
    assert np.allclose(residual, rules.yield_strain, rtol=1e-12)


def test_partial_creep_shrinks_excess_geometrically():
    state = stretched_state(0.2)
    rules = PlasticityParams(yield_strain=0.08, creep=0.1, max_strain=0.5)
    excess = strain_norm(state.element_strains()) - rules.yield_strain
    for k in range(1, 6):
        apply_plastic_flow(state, rules)
        now = strain_norm(state.element_strains() - state.plastic_strain) \
            - rules.yield_strain
        assert np.allclose(now, (1.0 - rules.creep) ** k * excess, rtol=1e-9)


def test_plastic_strain_respects_the_cap():
    state = stretched_state(0.4)
    rules = PlasticityParams(yield_strain=0.05, creep=1.0, max_strain=0.1)
    before = state.element_strains()
    apply_plastic_flow(state, rules)
    norms = strain_norm(state.plastic_strain)
    assert norms.max() <= rules.max_strain * (1.0 + 1e-12)
    # capping rescales: direction still follows the elastic strain
    unit_p = state.plastic_strain[0] / norms[0]
    unit_e = before[0] / strain_norm(before[0])
    assert np.allclose(unit_p, unit_e, atol=1e-9)


def test_zero_creep_is_inert():
    state = stretched_state(0.4)
    rules = PlasticityParams(yield_strain=0.05, creep=0.0, max_strain=0.5)
    assert apply_plastic_flow(state, rules) == 0


def test_plasticity_params_validation():
    with pytest.raises(MaterialError):
        PlasticityParams(yield_strain=-0.1, creep=0.5, max_strain=0.5)
    with pytest.raises(MaterialError):
        PlasticityParams(yield_strain=0.1, creep=1.5, max_strain=0.5)
    with pytest.raises(MaterialError):
        PlasticityParams(yield_strain=0.1, creep=0.5, max_strain=0.05)


# -- damping kernel -------------------------------------------------------


def test_kernel_pinned_values():
    k = DampingKernelParams(k1=10.0, k2=5.0, radius=0.1)
    w = damping_weights(np.array([0.0, 0.05, 0.2]), k)
    assert w[0] == 1.0
    assert w[1] == pytest.approx(1.0 / 1.5, abs=1e-12)
    assert w[2] == pytest.approx(1.0 / (3.0 + np.e), abs=1e-12)


def test_kernel_monotone_within_each_branch():
    k = DampingKernelParams(k1=10.0, k2=5.0, radius=0.1)
    inner = damping_weights(np.linspace(0.0, 0.0999, 60), k)
    assert np.all(np.diff(inner) < 0.0)
    outer = damping_weights(np.linspace(0.1, 2.0, 60), k)
    assert np.all(np.diff(outer) < 0.0)
    assert np.all(outer > 0.0)


def test_kernel_drops_at_the_radius():
    k = DampingKernelParams(k1=10.0, k2=5.0, radius=0.1)
    just_in, at = damping_weights(np.array([0.1 - 1e-12, 0.1]), k)
    assert at < just_in - 0.2


def test_kernel_far_field_underflows_to_zero():
    k = DampingKernelParams(k1=30.0, k2=60.0, radius=0.05)
    assert damping_weights(np.array([50.0]), k)[0] == 0.0


def test_kernel_scales_velocities_in_place():
    mesh = small_bar()
    state = build_state(mesh, MATERIAL, params_for(mesh))
    rng = np.random.default_rng(6)
    v = rng.standard_normal((mesh.n_vertices, 3))
    mesh.velocities = v.copy()
    center = (0.15, 0.05, 0.05)
    kernel = DampingKernelParams(k1=30.0, k2=60.0, radius=0.06, center=center)
    apply_damping_kernel(state, kernel)
    r = np.linalg.norm(mesh.current_positions - np.asarray(center), axis=1)
    assert np.allclose(mesh.velocities, v * damping_weights(r, kernel)[:, None],
                       atol=1e-15)


def test_kernel_params_validation():
    with pytest.raises(MaterialError):
        DampingKernelParams(k1=-1.0, k2=5.0, radius=0.1)
    with pytest.raises(MaterialError):
        DampingKernelParams(k1=1.0, k2=5.0, radius=0.0)


# -- wet stiffness refresh ------------------------------------------------


def test_dry_field_needs_no_refresh():
    mesh = small_bar()
    state = build_state(mesh, MATERIAL, params_for(mesh))
    field = SaturationField.dry(mesh, MATERIAL.porosity)
    assert refresh_element_material(state, field, MATERIAL) == 0
    assert np.allclose(state.element_c[0], C_SOLID)


def test_uniformly_wet_mesh_computes_one_tensor():
    mesh = small_bar()
    state = build_state(mesh, MATERIAL, params_for(mesh))
    field = SaturationField.dry(mesh, MATERIAL.porosity)
    field.set_saturation(np.full(mesh.n_tets, 0.5))
    n = refresh_element_material(state, field, MATERIAL)
    assert n == mesh.n_tets
    phi = MATERIAL.porosity * 0.5
    expect = materials.effective_stiffness(MATERIAL, phi).matrix
    assert np.allclose(state.element_c, expect[None, :, :], rtol=1e-12)
    assert set(state._c_by_phi) == {0.0, phi}
    assert np.allclose(state.phi_applied, phi)


def test_small_phi_changes_are_ignored():
    mesh = small_bar()
    state = build_state(mesh, MATERIAL, params_for(mesh))
    field = SaturationField.dry(mesh, MATERIAL.porosity)
    field.set_saturation(np.full(mesh.n_tets, 5e-5 / MATERIAL.porosity))
    assert refresh_element_material(state, field, MATERIAL) == 0
    assert np.array_equal(state.phi_applied, np.zeros(mesh.n_tets))


def test_half_wet_mesh_refreshes_only_the_wet_half():
    mesh = small_bar()
    state = build_state(mesh, MATERIAL, params_for(mesh))
    field = SaturationField.dry(mesh, MATERIAL.porosity)
    wet = np.zeros(mesh.n_tets)
    wet[: mesh.n_tets // 2] = 0.8
    field.set_saturation(wet)
    n = refresh_element_material(state, field, MATERIAL)
    assert n == mesh.n_tets // 2
    assert np.allclose(state.element_c[mesh.n_tets // 2:], C_SOLID[None])
    # incremental sparse update equals a from-scratch assembly
    fresh = build_state(bar_mesh(divisions=(3, 2, 2), size=(0.3, 0.1, 0.1)),
                        MATERIAL, params_for(mesh))
    set_element_phi(fresh, MATERIAL, state.phi_applied)
    assert np.allclose(state.stiffness.toarray(), fresh.stiffness.toarray(),
                       rtol=1e-9, atol=1e-9)


def test_set_element_phi_is_reproducible():
    mesh_a = small_bar()
    mesh_b = small_bar()
    rng = np.random.default_rng(13)
    phi = 0.3 * np.round(rng.uniform(0.0, 1.0, mesh_a.n_tets), 3)
    a = build_state(mesh_a, MATERIAL, params_for(mesh_a))
    b = build_state(mesh_b, MATERIAL, params_for(mesh_b))
    set_element_phi(a, MATERIAL, phi)
    set_element_phi(b, MATERIAL, phi)
    assert np.array_equal(a.stiffness.data, b.stiffness.data)
    assert np.array_equal(a.element_c, b.element_c)


def test_wetting_softens_the_step_response():
    """Same load, same mesh: the saturated body gives more ground."""
    results = {}
    for label, saturation in (("dry", 0.0), ("wet", 1.0)):
        mesh = small_bar()
        fixed = [int(i) for i in np.flatnonzero(mesh.rest_positions[:, 0] < 1e-9)]
        params = params_for(mesh, fixed_vertices=fixed)
        state = build_state(mesh, MATERIAL, params)
        field = SaturationField.dry(mesh, MATERIAL.porosity)
        field.set_saturation(np.full(mesh.n_tets, saturation))
        refresh_element_material(state, field, MATERIAL)
        tip = int(np.argmax(mesh.rest_positions[:, 0]))
        f = np.zeros((mesh.n_vertices, 3))
        f[tip, 2] = -2.0
        for _ in range(200):
            step(state, params, f.reshape(-1))
        results[label] = mesh.rest_positions[tip, 2] - mesh.current_positions[tip, 2]
    assert results["wet"] > results["dry"] > 0.0
