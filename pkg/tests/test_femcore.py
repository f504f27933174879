import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from vcmass.errors import EmptySystemError, LoadEvaluationError, UnsupportedConfigurationError
from vcmass.femcore import (
    DiscreteSpace,
    LoadAssembler,
    MaterialScalar,
    apply_dirichlet,
    assemble_interface_mass,
    assemble_load,
    assemble_mass,
    assemble_stiffness,
    export_coo,
    face_rule,
    interpolate,
    shape_eval,
    volume_rule,
)
from vcmass.dynamics import l2_error
from vcmass.meshkit import DIRICHLET, NEUMANN, ElementKind, build_mesh, generate_grid_mesh, generate_interval_mesh

KINDS_2D = [ElementKind.QUAD, ElementKind.TRIANGLE]


def _dense(A):
    return A.toarray() if sp.issparse(A) else np.asarray(A)


def test_hat_functions_at_midpoint():
    vals, _ = shape_eval(ElementKind.INTERVAL, 1, [0.5])
    np.testing.assert_allclose(vals, [0.5, 0.5])


def test_quad_p2_nodal_kronecker():
    space = DiscreteSpace(generate_grid_mesh((1, 1), (1, 1), ElementKind.QUAD), 2)
    vals, _ = shape_eval(ElementKind.QUAD, 2, space.basis.nodes)
    np.testing.assert_allclose(vals, np.eye(9), atol=1e-12)


@pytest.mark.parametrize("kind, P", [(ElementKind.TRIANGLE, 3), (ElementKind.QUAD, 4), (ElementKind.HEX, 2)])
def test_partition_of_unity(kind, P):
    centroid = kind.vertices.mean(axis=0)
    vals, grads = shape_eval(kind, P, centroid)
    assert vals.sum() == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(grads.sum(axis=-2), 0.0, atol=1e-10)


@pytest.mark.parametrize("kind, P", [(ElementKind.HEX, 3), (ElementKind.QUAD, 5)])
def test_unsupported_orders(kind, P):
    with pytest.raises(UnsupportedConfigurationError):
        shape_eval(kind, P, kind.vertices.mean(axis=0))


@pytest.mark.parametrize("kind", [ElementKind.INTERVAL, ElementKind.QUAD, ElementKind.TRIANGLE, ElementKind.HEX])
@pytest.mark.parametrize("degree", [1, 2, 4, 6])
def test_volume_rule_integrates_monomials(kind, degree):
    pts, w = volume_rule(kind, degree)
    d = kind.dim
    rng = np.random.default_rng(degree)
    for _ in range(5):
        a = rng.multinomial(degree, np.ones(d + 1) / (d + 1))[:d]
        num = np.sum(w * np.prod(pts ** a, axis=1))
        if kind is ElementKind.TRIANGLE:
            from math import factorial

            exact = factorial(a[0]) * factorial(a[1]) / factorial(a[0] + a[1] + 2)
        else:
            exact = np.prod(1.0 / (a + 1.0))
        assert num == pytest.approx(exact, rel=1e-12, abs=1e-15)


def test_face_rule_weights_sum_to_reference_measure():
    for nverts, area in [(1, 1.0), (2, 1.0), (4, 1.0)]:
        _, w = face_rule(nverts, 4)
        assert w.sum() == pytest.approx(area)


def test_1d_element_mass_and_stiffness():
    h = 0.25
    space = DiscreteSpace(generate_interval_mesh(h, 1, NEUMANN), 1)
    np.testing.assert_allclose(_dense(assemble_mass(space)), h / 6 * np.array([[2, 1], [1, 2]]), rtol=1e-14)
    np.testing.assert_allclose(_dense(assemble_stiffness(space)), np.array([[1, -1], [-1, 1]]) / h, rtol=1e-14)


def test_linearity_in_material():
    space = DiscreteSpace(generate_grid_mesh((1, 1), (3, 2), ElementKind.TRIANGLE), 2)
    M1, M2 = assemble_mass(space), assemble_mass(space, MaterialScalar(rho=2.0))
    np.testing.assert_allclose(_dense(M2), 2 * _dense(M1), rtol=1e-14, atol=1e-15)
    K1, K3 = assemble_stiffness(space), assemble_stiffness(space, MaterialScalar(T=3.0))
    np.testing.assert_allclose(_dense(K3), 3 * _dense(K1), rtol=1e-14, atol=1e-14 * np.abs(_dense(K3)).max())


@pytest.mark.parametrize("kind", KINDS_2D)
@pytest.mark.parametrize("P", [1, 2, 3])
def test_constants_in_stiffness_kernel(kind, P):
    space = DiscreteSpace(generate_grid_mesh((1, 1), (3, 3), kind, NEUMANN), P)
    K = assemble_stiffness(space)
    assert np.abs(K @ np.ones(space.ndofs)).max() < 1e-11


def test_two_element_interface_mass():
    space = DiscreteSpace(generate_interval_mesh(2.0, 2), 1)
    G = _dense(assemble_interface_mass(space))
    np.testing.assert_allclose(G, [[1, -2, 1], [-2, 4, -2], [1, -2, 1]], atol=1e-14)


def test_1d_interface_blocks_are_rank_one():
    space = DiscreteSpace(generate_interval_mesh(1.0, 5), 2)
    G = _dense(assemble_interface_mass(space))
    ranks = np.linalg.matrix_rank(G, tol=1e-9 * np.abs(G).max())
    assert ranks == len(space.mesh.interior_facets)


def _polynomial(P, d, seed):
    rng = np.random.default_rng(seed)
    exps = [e for e in np.ndindex(*(P + 1,) * d) if sum(e) <= P]
    coef = rng.standard_normal(len(exps))

    def f(x):
        return sum(c * np.prod(x ** np.array(e), axis=1) for c, e in zip(coef, exps))

    return f


def _tilted_mesh(kind, n):
    mesh = generate_grid_mesh((1.0,) * kind.dim, (n,) * kind.dim, kind)
    x = mesh.nodes.copy()
    x[:, 0] += 0.1 * x[:, -1]  # affine shear keeps elements affine
    return build_mesh(x, kind, mesh.elements, DIRICHLET)


@pytest.mark.parametrize("kind, P", [(ElementKind.INTERVAL, 3), (ElementKind.TRIANGLE, 3), (ElementKind.QUAD, 2),
                                     (ElementKind.TRIANGLE, 4), (ElementKind.HEX, 2)])
def test_interface_mass_kernel_contains_polynomials(kind, P):
    mesh = generate_interval_mesh(1.0, 5) if kind is ElementKind.INTERVAL else _tilted_mesh(kind, 3)
    space = DiscreteSpace(mesh, P)
    G = assemble_interface_mass(space)
    q = interpolate(space, _polynomial(P, mesh.dim, P))
    assert np.linalg.norm(G @ q) <= 1e-10 * sp.linalg.norm(G) * np.linalg.norm(q)


def test_interface_mass_sign_invariance():
    mesh = generate_grid_mesh((1, 1), (3, 3), ElementKind.TRIANGLE, NEUMANN)
    perm = np.random.default_rng(1).permutation(mesh.n_elements)
    swapped = build_mesh(mesh.nodes, mesh.kind, mesh.elements[perm], NEUMANN)
    A = DiscreteSpace(mesh, 2)
    B = DiscreteSpace(swapped, 2)
    # the meshes share node numbering, so compare through a nodal interpolant
    f = _polynomial(3, 2, 7)
    qa, qb = interpolate(A, f), interpolate(B, f)
    ea = qa @ (assemble_interface_mass(A) @ qa)
    eb = qb @ (assemble_interface_mass(B) @ qb)
    assert ea == pytest.approx(eb, rel=1e-12)


@settings(max_examples=15, deadline=None)
@given(kind=st.sampled_from(KINDS_2D), P=st.integers(1, 3), seed=st.integers(0, 2**16))
def test_symmetry_and_definiteness(kind, P, seed):
    rng = np.random.default_rng(seed)
    mesh = generate_grid_mesh((1, 1), (2, 3), kind, NEUMANN)
    space = DiscreteSpace(mesh, P)
    rho = rng.uniform(0.5, 2.0, mesh.n_elements)
    T = rng.uniform(0.5, 2.0, mesh.n_elements)
    mat = MaterialScalar(rho, T)
    M, K, G = assemble_mass(space, mat), assemble_stiffness(space, mat), assemble_interface_mass(space, mat)
    for A in (M, K, G):
        assert abs(A - A.T).max() == 0.0
    q = rng.standard_normal((space.ndofs, 50))
    gnorm = sp.linalg.norm(G, 2) if space.ndofs < 3 else np.linalg.norm(G.toarray(), 2)
    assert np.all(np.einsum("ik,ik->k", q, M @ q) > 0)
    assert np.all(np.einsum("ik,ik->k", q, K @ q) >= -1e-12 * np.sum(q * q, axis=0))
    assert np.all(np.einsum("ik,ik->k", q, G @ q) >= -1e-12 * np.sum(q * q, axis=0) * gnorm)


def test_mass_entries_match_rational_values():
    # P=2 interval element on [0, 1]: (1/30) [[4, 2, -1], [2, 16, 2], [-1, 2, 4]] in (end, mid, end) order
    space = DiscreteSpace(generate_interval_mesh(1.0, 1, NEUMANN), 2)
    M = _dense(assemble_mass(space))
    dofs = space.dof_map[0]
    x = space.node_coords[dofs, 0]
    order = dofs[np.argsort(x)]
    ref = np.array([[4, 2, -1], [2, 16, 2], [-1, 2, 4]]) / 30.0
    np.testing.assert_allclose(M[np.ix_(order, order)], ref, atol=1e-14)


def test_zero_load():
    space = DiscreteSpace(generate_grid_mesh((1, 1), (2, 2), ElementKind.QUAD, NEUMANN), 2)
    zero = lambda t, x, n: np.zeros(len(x))
    assert not assemble_load(space, LoadAssembler(zero, zero, 0.3), 0.0).any()


def test_right_end_unit_neumann_load():
    mesh = generate_interval_mesh(1.0, 3, lambda c, n: NEUMANN if n[0] > 0 else DIRICHLET)
    space = DiscreteSpace(mesh, 1)
    F = assemble_load(space, LoadAssembler(lambda t, x, n: np.ones(len(x)), None, 0.0), 0.0)
    end = int(np.argmax(space.node_coords[:, 0]))
    assert F[end] == pytest.approx(-1.0)
    assert np.count_nonzero(F) == 1


def test_penalty_load_vanishes_without_beta():
    mesh = generate_grid_mesh((1, 1), (2, 2), ElementKind.QUAD, NEUMANN)
    space = DiscreteSpace(mesh, 2)
    g = lambda t, x, n: np.full(len(x), 2.0)
    gdd = lambda t, x, n: x[:, 0] ** 2
    plain = assemble_load(space, LoadAssembler(g, None, 0.0), 0.0)
    with_gdd = assemble_load(space, LoadAssembler(g, gdd, 0.0), 0.0)
    np.testing.assert_array_equal(plain, with_gdd)
    # total classical load equals -g times the boundary length
    assert plain.sum() == pytest.approx(-8.0)


def test_load_evaluator_failure_is_reported():
    space = DiscreteSpace(generate_interval_mesh(1.0, 2, NEUMANN), 1)

    def broken(t, x, n):
        raise RuntimeError("boom")

    with pytest.raises(LoadEvaluationError):
        assemble_load(space, LoadAssembler(broken, None, 0.0), 0.0)


def test_variationally_consistent_penalty_load():
    # u = x^3/6 + (T/rho) x t^2 / 2 solves rho u_tt = T u_xx on [0, 1]
    T, rho, beta, P = 2.0, 3.0, 0.1, 3
    mat = MaterialScalar(rho, T)
    mesh = generate_interval_mesh(1.0, 4, NEUMANN)
    space = DiscreteSpace(mesh, P)
    t = 0.7
    u = lambda x: x[:, 0] ** 3 / 6 + T / rho * x[:, 0] * t**2 / 2
    utt = lambda x: T / rho * x[:, 0]
    ux = lambda x: x[:, 0] ** 2 / 2 + T / rho * t**2 / 2
    uxtt = lambda x: np.full(len(x), T / rho)
    g = lambda tt, x, n: -T * ux(x) * n[:, 0]
    gdd = lambda tt, x, n: -T * uxtt(x) * n[:, 0]
    M, K, G = assemble_mass(space, mat), assemble_stiffness(space, mat), assemble_interface_mass(space, mat)
    F = assemble_load(space, LoadAssembler(g, gdd, beta, mat), t)
    q, a = interpolate(space, u), interpolate(space, utt)
    residual = (M + beta * G) @ a + K @ q - F
    assert np.abs(residual).max() < 1e-12 * np.abs(F).max()


def test_dirichlet_reduction():
    space = DiscreteSpace(generate_interval_mesh(1.0, 4), 1)
    red = apply_dirichlet(space, assemble_stiffness(space), np.arange(5.0))
    assert red.operands[0].shape == (3, 3)
    np.testing.assert_array_equal(red.operands[1], [1, 2, 3])
    np.testing.assert_array_equal(red.expand(red.operands[1]), [0, 1, 2, 3, 0])
    assert space.n_free == space.ndofs - int(space.dirichlet_mask.sum())


def test_pure_neumann_reduction_is_identity():
    space = DiscreteSpace(generate_interval_mesh(1.0, 4, NEUMANN), 1)
    K = assemble_stiffness(space)
    np.testing.assert_array_equal(_dense(apply_dirichlet(space, K).operands[0]), _dense(K))


def test_fully_constrained_system():
    space = DiscreteSpace(generate_interval_mesh(1.0, 1), 1)
    with pytest.raises(EmptySystemError):
        apply_dirichlet(space, assemble_mass(space))


def test_continuity_of_shared_dofs():
    space = DiscreteSpace(generate_grid_mesh((1, 1), (3, 3), ElementKind.TRIANGLE), 3)
    f = _polynomial(3, 2, 3)
    q = interpolate(space, f)
    # each global DOF sits at one physical point, so a P3 polynomial is reproduced exactly
    assert l2_error(space, q, f) < 1e-12


def test_interpolation_basics():
    space = DiscreteSpace(generate_grid_mesh((1, 1), (2, 2), ElementKind.QUAD), 2)
    np.testing.assert_allclose(interpolate(space, lambda x: np.full(len(x), 3.0)), 3.0)
    assert l2_error(space, np.zeros(space.ndofs), lambda x: np.ones(len(x))) == pytest.approx(1.0)


@pytest.mark.parametrize("P", [1, 2, 3])
def test_interpolation_rate(P):
    errs = []
    for n in (4, 8, 16):
        space = DiscreteSpace(generate_interval_mesh(1.0, n), P)
        f = lambda x: np.sin(np.pi * x[:, 0])
        errs.append(l2_error(space, interpolate(space, f), f))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates > P + 1 - 0.15)


def test_export_coo(tmp_path):
    space = DiscreteSpace(generate_interval_mesh(1.0, 2), 1)
    path = tmp_path / "m.mtx"
    export_coo(assemble_mass(space), path)
    rows = [line.split() for line in path.read_text().splitlines() if line and not line.startswith("%")]
    assert len(rows) >= 7
