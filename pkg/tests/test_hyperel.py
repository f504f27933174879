import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.transform import Rotation

from vcmass.errors import InvalidArgumentError
from vcmass.femcore import DiscreteSpace, assemble_mass, interpolate
from vcmass.meshkit import DIRICHLET, NEUMANN, ElementKind, build_mesh, generate_grid_mesh
from vcmass.hyperel import (
    BeamConfig,
    HyperelasticMaterial,
    assemble_internal_force,
    assemble_linearized_stiffness,
    assemble_scaled_mass_linearized,
    assemble_traction_jump_mass,
    beam_initial_displacement,
    beam_mesh,
    blackman_window,
    build_beam,
    dft_blackman,
    linear_strain,
    run_beam,
    strain_energy,
    stress_state,
    tangent_modulus,
    twist_angle,
)

UNIT = HyperelasticMaterial(1.0, 1.0, 1.0)
rotations = st.integers(0, 2**31 - 1).map(lambda s: Rotation.random(random_state=s).as_matrix())


def _hex_space(P, tag=NEUMANN, n=2):
    mesh = generate_grid_mesh((1.0, 0.7, 0.5), (n, n, n), ElementKind.HEX, tag)
    x = mesh.nodes.copy()
    x[:, 0] += 0.2 * x[:, 1]  # sheared, still affine
    return DiscreteSpace(build_mesh(x, mesh.kind, mesh.elements, tag), P, components=3)


def _smooth_field(x, scale=0.05):
    return scale * np.stack([np.sin(x[:, 1] + x[:, 2]), x[:, 0] * x[:, 2], np.cos(2 * x[:, 0]) * x[:, 1]], axis=1)


def test_zero_gradient_is_stress_free():
    st_ = stress_state(np.zeros((3, 3)), UNIT)
    for A in (st_.E, st_.S, st_.P):
        assert not A.any()


@settings(max_examples=30, deadline=None)
@given(Q=rotations)
def test_rotations_are_strain_free(Q):
    st_ = stress_state(Q - np.eye(3), UNIT)
    np.testing.assert_allclose(st_.E, 0, atol=1e-14)
    np.testing.assert_allclose(st_.P, 0, atol=1e-14)


def test_hand_evaluated_stress():
    st_ = stress_state(np.diag([0.1, 0.0, 0.0]), UNIT)
    assert st_.E[0, 0] == pytest.approx(0.105)
    np.testing.assert_allclose(np.diag(st_.S), [0.315, 0.105, 0.105])
    assert st_.P[0, 0] == pytest.approx(0.3465)


def test_material_from_young():
    m = HyperelasticMaterial.from_young(2700.0, 73e9, 0.33)
    assert m.mu == pytest.approx(73e9 / 2.66)
    assert m.lam == pytest.approx(73e9 * 0.33 / (1.33 * 0.34))
    assert m.modulus == max(m.mu, m.bulk)
    with pytest.raises(InvalidArgumentError):
        HyperelasticMaterial(1.0, 1.0, -1.0)


def test_linear_strain_cases():
    W = np.array([[0, 1, 2], [-1, 0, 3], [-2, -3, 0.0]])
    assert not linear_strain(W).any()
    S = np.array([[1, 2, 0], [2, 1, 0], [0, 0, 3.0]])
    np.testing.assert_array_equal(linear_strain(S), S)
    Q = Rotation.from_euler("z", 90, degrees=True).as_matrix()
    assert np.abs(linear_strain(Q - np.eye(3))).max() > 0.5


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 2**31 - 1))
def test_tangent_modulus_matches_stress_derivative(seed):
    rng = np.random.default_rng(seed)
    G = 0.2 * rng.standard_normal((3, 3))
    mat = HyperelasticMaterial(1.0, 1.3, 0.7)
    A = tangent_modulus(stress_state(G, mat), mat)
    h = 1e-6
    for k, L in [(0, 0), (1, 2), (2, 1)]:
        dG = np.zeros((3, 3))
        dG[k, L] = h
        fd = (stress_state(G + dG, mat).P - stress_state(G - dG, mat).P) / (2 * h)
        np.testing.assert_allclose(A[:, :, k, L], fd, atol=1e-8)


@pytest.mark.parametrize("P", [1, 2])
def test_internal_force_is_energy_gradient(P):
    space = _hex_space(P)
    mat = HyperelasticMaterial(1.0, 1.5, 1.0)
    u = interpolate(space, _smooth_field)
    rng = np.random.default_rng(P)
    v = rng.standard_normal(space.ndofs)
    h = 1e-6
    fd = (strain_energy(space, u + h * v, mat) - strain_energy(space, u - h * v, mat)) / (2 * h)
    f = assemble_internal_force(space, u, mat)
    assert f @ v == pytest.approx(fd, rel=1e-6)


@pytest.mark.parametrize("P", [1, 2])
def test_linearized_stiffness_is_force_derivative(P):
    space = _hex_space(P)
    mat = HyperelasticMaterial(1.0, 1.5, 1.0)
    u = interpolate(space, _smooth_field)
    K = assemble_linearized_stiffness(space, u, mat)
    assert abs(K - K.T).max() == 0.0
    v = np.random.default_rng(5).standard_normal(space.ndofs)
    h = 1e-6
    fd = (assemble_internal_force(space, u + h * v, mat) - assemble_internal_force(space, u - h * v, mat)) / (2 * h)
    assert np.linalg.norm(K @ v - fd) <= 1e-6 * np.linalg.norm(fd)


def test_zero_field_gives_small_strain_stiffness():
    space = _hex_space(1)
    mat = HyperelasticMaterial(1.0, 2.0, 0.5)
    K = assemble_linearized_stiffness(space, np.zeros(space.ndofs), mat)
    # the quadratic form of a linear field is the linear-elastic energy times two
    G = np.array([[0.1, 0.02, 0], [0.0, -0.05, 0.03], [0.01, 0, 0.02]])
    u = interpolate(space, lambda x: x @ G.T)
    eps = linear_strain(G)
    vol = 1.0 * 0.7 * 0.5
    w = 0.5 * mat.lam * np.trace(eps) ** 2 + mat.mu * np.sum(eps * eps)
    assert 0.5 * u @ (K @ u) == pytest.approx(w * vol, rel=1e-12)
    assert not assemble_internal_force(space, np.zeros(space.ndofs), mat).any()


@pytest.mark.parametrize("P", [1, 2])
@settings(max_examples=10, deadline=None)
@given(Q=rotations, shift=st.lists(st.floats(-1, 1), min_size=3, max_size=3))
def test_rigid_motions_produce_no_force(P, Q, shift):
    space = _hex_space(P)
    mat = HyperelasticMaterial(1.0, 1.5, 1.0)
    u = interpolate(space, lambda x: x @ Q.T - x + np.asarray(shift))
    f = assemble_internal_force(space, u, mat)
    ref = np.linalg.norm(assemble_internal_force(space, interpolate(space, _smooth_field), mat))
    assert np.linalg.norm(f) <= 1e-10 * ref


def test_traction_mass_without_scaling_is_consistent_mass():
    space = _hex_space(2, DIRICHLET)
    M = assemble_scaled_mass_linearized(space, UNIT, c=0.0)
    ref = assemble_mass(space, rho=UNIT.rho0)
    assert abs(M - ref).max() == 0.0


@pytest.mark.parametrize("P", [1, 2])
def test_traction_mass_kernel_contains_linear_fields(P):
    space = _hex_space(P, DIRICHLET)
    G = assemble_traction_jump_mass(space, HyperelasticMaterial(2.0, 1.5, 1.0))
    A = np.random.default_rng(2).standard_normal((3, 3))
    q = interpolate(space, lambda x: x @ A.T + 1.0)
    import scipy.sparse.linalg as spla

    assert np.linalg.norm(G @ q) <= 1e-10 * spla.norm(G) * np.linalg.norm(q)
    r = np.random.default_rng(3).standard_normal(space.ndofs)
    assert r @ (G @ r) >= 0


def test_beam_initial_displacement_values():
    np.testing.assert_allclose(beam_initial_displacement([0.0, 0.01, 0.005]), 0.0, atol=1e-16)
    R = 0.15
    u = beam_initial_displacement([math.pi * R / 2, 0.0, 0.0], R)
    np.testing.assert_allclose(u, [R * (1 - math.pi / 2), 0, R], atol=1e-14)
    for x in (0.01, 0.1, 0.2):
        np.testing.assert_allclose(beam_initial_displacement([x, 0.007, R], R), [-x, 0, 0], atol=1e-15)


def test_beam_config_validation():
    with pytest.raises(InvalidArgumentError):
        BeamConfig(P=3)
    with pytest.raises(InvalidArgumentError):
        BeamConfig(chamfer=0.02)
    with pytest.raises(InvalidArgumentError):
        BeamConfig(R=0.05)


def test_beam_mesh_clamp_and_chamfer():
    cfg = BeamConfig(counts=(4, 4, 2))
    mesh = beam_mesh(cfg)
    assert set(mesh.boundary_tags) == {DIRICHLET, NEUMANN}
    cen = mesh.element_vertices().mean(axis=1)
    clamp = mesh.boundary_facets[mesh.boundary_mask(DIRICHLET), 0]
    assert np.all(cen[clamp, 0] < cfg.length / 4)
    # the chamfered corner is gone: no node near (y, z) = (W, H)
    yz = mesh.nodes[:, 1:]
    assert np.min(np.linalg.norm(yz - [cfg.width, cfg.height], axis=1)) > 0.5 * cfg.chamfer


def test_twist_angle_measures_rotation_about_axis():
    a, b, c = np.zeros(3), np.array([0, 0.02, 0]), np.array([0, 0, 0.01])
    assert twist_angle(a, b, c) == pytest.approx(0.0, abs=1e-15)
    Q = Rotation.from_rotvec([0.3, 0, 0]).as_matrix()
    assert twist_angle(a, Q @ b, Q @ c) == pytest.approx(0.3, rel=1e-12)
    # rigid translations and rotations of the section about its own normal are what matter
    Q2 = Rotation.from_rotvec([0, 0.4, 0]).as_matrix()
    assert twist_angle(Q2 @ a + 1, Q2 @ b + 1, Q2 @ c + 1) == pytest.approx(0.0, abs=1e-12)


def test_zero_initial_bend_stays_at_rest():
    cfg = BeamConfig(counts=(6, 4, 1), amplitude=0.0, t_end=2e-6)
    hist = run_beam(cfg)
    assert np.all(hist.probe("tip") == 0.0)
    assert np.all(hist.probe("twist") == 0.0)


def test_short_run_conserves_energy():
    cfg = BeamConfig(counts=(8, 4, 1), amplitude=0.1)
    model = build_beam(cfg)
    dt = 0.2 * model.tcrit()
    hist = run_beam(BeamConfig(counts=(8, 4, 1), amplitude=0.1, dt=dt, t_end=400 * dt, sample_every=50), model, energy=True)
    e = hist.probe("energy")
    assert np.max(np.abs(e - e[0])) / e[0] < 1e-2
    assert hist.metadata["steps"] == 400


def test_blackman_identities():
    for n in (9, 101, 1001):
        w = blackman_window(n)
        assert w[0] == 0.0 and w[-1] == 0.0
        assert w[n // 2] == 1.0
        np.testing.assert_allclose(w, w[::-1], atol=1e-16)
    k = np.arange(64)
    a = 2 * np.pi * k / 63
    np.testing.assert_allclose(blackman_window(64), 0.42 - 0.5 * np.cos(a) + 0.08 * np.cos(2 * a), atol=1e-15)


@settings(max_examples=25, deadline=None)
@given(n=st.integers(64, 600), k=st.integers(5, 25), phase=st.floats(0, 6.28))
def test_sinusoid_peak_and_leakage(n, k, phase):
    dt = 1e-4
    t = np.arange(n) * dt
    f0 = k / (n * dt)
    freq, mag = dft_blackman(t, np.sin(2 * np.pi * f0 * t + phase))
    assert int(np.argmax(mag)) == k
    assert freq[k] == pytest.approx(f0)
    far = np.r_[mag[: k - 3 + 1][:-1], mag[k + 3 :]] if k >= 3 else mag[k + 3 :]
    assert 20 * np.log10(far.max() / mag[k]) < -50


def test_dft_rejects_bad_sampling():
    t = np.linspace(0, 1, 20)
    with pytest.raises(InvalidArgumentError):
        dft_blackman(t[:5], np.ones(5))
    t2 = t.copy()
    t2[7] += 0.01
    with pytest.raises(InvalidArgumentError):
        dft_blackman(t2, np.ones(20))
