"""Assembly of the semi-discrete wave system.

All matrices are returned as ``scipy.sparse.csr_matrix`` in full (not
triangular) storage.  :func:`scatter` symmetrises the assembled result, so
the matrices equal their transposes bit for bit.

The interface mass ``M_Gamma`` is returned without the scaling factor; the
mass-scaled system matrix is ``M + M_Gamma(weights=beta)``, or
``M + beta * M_Gamma`` when ``beta`` is uniform.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from ..errors import EmptySystemError, InvalidArgumentError, LoadEvaluationError
from ..meshkit import NEUMANN
from .space import DiscreteSpace


@dataclass(frozen=True)
class MaterialScalar:
    """Density ``rho`` and tension ``T`` of the scalar wave equation.

    Either may be a scalar or a per-element array.  ``T`` may also be a
    constant ``(d, d)`` tensor or a per-element ``(E, d, d)`` array; its
    magnitude ``|T|`` is then the largest eigenvalue.
    """

    rho: float | np.ndarray = 1.0
    T: float | np.ndarray = 1.0

    def __post_init__(self):
        if np.any(np.asarray(self.rho) <= 0):
            raise InvalidArgumentError("rho must be positive")
        T = np.asarray(self.T, dtype=float)
        if T.ndim >= 2:
            if np.any(np.linalg.eigvalsh(T) <= 0):
                raise InvalidArgumentError("tensor T must be positive definite")
        elif np.any(T <= 0):
            raise InvalidArgumentError("T must be positive")

    def element_rho(self, n_elements: int) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.rho, dtype=float), (n_elements,)).copy()

    def element_tension(self, n_elements: int, d: int) -> np.ndarray:
        T = np.asarray(self.T, dtype=float)
        if T.ndim <= 1:
            return np.broadcast_to(T, (n_elements,))[:, None, None] * np.eye(d)
        return np.broadcast_to(T, (n_elements, d, d)).copy()

    def element_tension_norm(self, n_elements: int, d: int) -> np.ndarray:
        return np.linalg.eigvalsh(self.element_tension(n_elements, d))[:, -1]


def scatter(dofs: np.ndarray, blocks: np.ndarray, n: int) -> sp.csr_matrix:
    """Sum dense local ``blocks`` (k, m, m) into an exactly symmetric ``n x n`` matrix."""
    if len(dofs) == 0:
        return sp.csr_matrix((n, n))
    m = dofs.shape[1]
    rows = np.repeat(dofs, m, axis=1).ravel()
    cols = np.tile(dofs, (1, m)).ravel()
    A = sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n)).tocsr()
    # duplicate summation order is not guaranteed to mirror across the diagonal
    return ((A + A.T) * 0.5).tocsr()


def scatter_vector(dofs: np.ndarray, blocks: np.ndarray, n: int) -> np.ndarray:
    out = np.zeros(n)
    np.add.at(out, dofs.ravel(), blocks.ravel())
    return out


def _expand_components(blocks: np.ndarray, c: int) -> np.ndarray:
    if c == 1:
        return blocks
    return np.einsum("eab,ij->eaibj", blocks, np.eye(c)).reshape(
        blocks.shape[0], blocks.shape[1] * c, blocks.shape[2] * c
    )


def assemble_mass(space: DiscreteSpace, material: MaterialScalar | None = None, rho=None) -> sp.csr_matrix:
    """Consistent mass matrix ``int rho N_i N_j``.

    For vector spaces the scalar mass is repeated on every component.
    ``rho`` overrides ``material.rho`` (used by the elasticity code).
    """
    E = space.mesh.n_elements
    if rho is None:
        rho = (material or MaterialScalar()).element_rho(E)
    else:
        rho = np.broadcast_to(np.asarray(rho, dtype=float), (E,))
    vd = space.volume_data()
    blocks = np.einsum("qa,qb,eq->eab", vd.values, vd.values, vd.wdet * rho[:, None])
    blocks = _expand_components(blocks, space.components)
    return scatter(space.dof_map, blocks, space.ndofs)


def assemble_stiffness(space: DiscreteSpace, material: MaterialScalar | None = None) -> sp.csr_matrix:
    """Stiffness matrix ``int grad N_i . T grad N_j`` of a scalar space."""
    if space.components != 1:
        raise InvalidArgumentError("scalar stiffness needs a scalar space")
    material = material or MaterialScalar()
    E, d = space.mesh.n_elements, space.mesh.dim
    T = material.element_tension(E, d)
    vd = space.volume_data()
    blocks = np.einsum("eqai,eij,eqbj,eq->eab", vd.grads, T, vd.grads, vd.wdet)
    return scatter(space.dof_map, blocks, space.ndofs)


def _weights(weights, n: int) -> np.ndarray:
    if weights is None:
        return np.ones(n)
    return np.broadcast_to(np.asarray(weights, dtype=float), (n,)).copy()


def assemble_interface_mass(
    space: DiscreteSpace,
    material: MaterialScalar | None = None,
    weights_interior=None,
    weights_boundary=None,
) -> sp.csr_matrix:
    """Unscaled traction-jump mass ``M_Gamma`` of a scalar space.

    Interior facets contribute
    ``<rho/|T|^2> [[T d_n N_i]] [[T d_n N_j]]`` and Neumann boundary facets
    ``rho/|T|^2 (T d_n N_i)(T d_n N_j)``.  Dirichlet facets contribute
    nothing.  Optional per-facet weights (e.g. a facet-wise scaling factor)
    multiply each facet's contribution.
    """
    if space.components != 1:
        raise InvalidArgumentError("scalar interface mass needs a scalar space")
    material = material or MaterialScalar()
    mesh = space.mesh
    E, d = mesh.n_elements, mesh.dim
    T = material.element_tension(E, d)
    coef_e = material.element_rho(E) / material.element_tension_norm(E, d) ** 2
    n = space.ndofs
    M = sp.csr_matrix((n, n))

    nint = len(mesh.interior_facets)
    if nint:
        fd = space.facet_data("interior")
        L, R = fd.left.elements, fd.right.elements
        coef = 0.5 * (coef_e[L] + coef_e[R]) * _weights(weights_interior, nint)
        fl = np.einsum("fqbi,fij,fqj->fqb", fd.left.grads, T[L], fd.normals)
        fr = np.einsum("fqbi,fij,fqj->fqb", fd.right.grads, T[R], fd.normals)
        jump = np.concatenate([fl, -fr], axis=2)
        blocks = np.einsum("fqa,fqb,fq->fab", jump, jump, fd.wds * coef[:, None])
        dofs = np.concatenate([space.dof_map[L], space.dof_map[R]], axis=1)
        M = M + scatter(dofs, blocks, n)

    neu = mesh.boundary_mask(NEUMANN)
    if np.any(neu):
        wb = _weights(weights_boundary, len(mesh.boundary_facets))[neu]
        fd = space.facet_data("boundary", neu)
        L = fd.left.elements
        flux = np.einsum("fqbi,fij,fqj->fqb", fd.left.grads, T[L], fd.normals)
        blocks = np.einsum("fqa,fqb,fq->fab", flux, flux, fd.wds * (coef_e[L] * wb)[:, None])
        M = M + scatter(space.dof_map[L], blocks, n)
    return M.tocsr()


@dataclass
class LoadAssembler:
    """Neumann data for the right-hand side.

    ``g(t, x, n)`` and ``g_ddot(t, x, n)`` are evaluated at arrays of facet
    quadrature points ``x`` (npts, d) with outward normals ``n``.  ``beta`` is
    a scalar or an array over *all* boundary facets of the mesh.
    """

    g: Callable | None = None
    g_ddot: Callable | None = None
    beta: float | np.ndarray = 0.0
    material: MaterialScalar = field(default_factory=MaterialScalar)


def _evaluate(fn, t, x, n, name):
    try:
        out = np.asarray(fn(t, x, n), dtype=float)
    except Exception as exc:
        raise LoadEvaluationError(f"evaluating {name} at t={t}: {exc}") from exc
    return np.broadcast_to(out, x.shape[:1]).astype(float)


def assemble_load(space: DiscreteSpace, loads: LoadAssembler, t: float) -> np.ndarray:
    """Right-hand side ``-int g N_i - int beta rho/|T|^2 g_ddot (T d_n N_i)`` on Neumann facets."""
    mesh = space.mesh
    F = np.zeros(space.ndofs)
    neu = mesh.boundary_mask(NEUMANN)
    if not np.any(neu) or (loads.g is None and loads.g_ddot is None):
        return F
    fd = space.facet_data("boundary", neu)
    L = fd.left.elements
    nf, nq, d = fd.x.shape
    xf = fd.x.reshape(-1, d)
    nrm = fd.normals.reshape(-1, d)
    dofs = space.dof_map[L]
    if loads.g is not None:
        g = _evaluate(loads.g, t, xf, nrm, "g").reshape(nf, nq)
        F -= scatter_vector(dofs, np.einsum("fqb,fq->fb", fd.left.values, g * fd.wds), space.ndofs)
    beta = np.broadcast_to(np.asarray(loads.beta, dtype=float), (len(mesh.boundary_facets),))[neu]
    if loads.g_ddot is not None and np.any(beta != 0):
        E = mesh.n_elements
        material = loads.material
        T = material.element_tension(E, d)
        coef = material.element_rho(E)[L] / material.element_tension_norm(E, d)[L] ** 2 * beta
        gdd = _evaluate(loads.g_ddot, t, xf, nrm, "g_ddot").reshape(nf, nq)
        flux = np.einsum("fqbi,fij,fqj->fqb", fd.left.grads, T[L], fd.normals)
        F -= scatter_vector(dofs, np.einsum("fqb,fq->fb", flux, gdd * fd.wds * coef[:, None]), space.ndofs)
    return F


@dataclass(frozen=True)
class DirichletReduction:
    """Operands restricted to the free DOFs, with the map back to full numbering."""

    free: np.ndarray
    ndofs: int
    operands: tuple

    def expand(self, reduced: np.ndarray) -> np.ndarray:
        reduced = np.asarray(reduced)
        out = np.zeros((self.ndofs,) + reduced.shape[1:], dtype=reduced.dtype)
        out[self.free] = reduced
        return out

    def restrict(self, full: np.ndarray) -> np.ndarray:
        return np.asarray(full)[self.free]


def apply_dirichlet(space: DiscreteSpace, *operands) -> DirichletReduction:
    """Eliminate Dirichlet DOFs (homogeneous data) from matrices and vectors."""
    free = space.free_dofs
    if free.size == 0:
        raise EmptySystemError("every DOF is constrained; nothing left to solve")
    out = []
    for op in operands:
        if sp.issparse(op):
            out.append(op.tocsr()[free][:, free])
        else:
            a = np.asarray(op)
            out.append(a[np.ix_(free, free)] if a.ndim == 2 else a[free])
    return DirichletReduction(free=free, ndofs=space.ndofs, operands=tuple(out))


def interpolate(space: DiscreteSpace, field_fn: Callable) -> np.ndarray:
    """Nodal interpolation: coefficients are ``field_fn`` at the DOF nodes.

    ``field_fn(x)`` receives ``(N, d)`` points and returns ``(N,)`` values
    (scalar spaces) or ``(N, components)`` values.
    """
    vals = np.asarray(field_fn(space.node_coords), dtype=float)
    c = space.components
    if c == 1:
        return np.broadcast_to(vals, (len(space.node_coords),)).astype(float).copy()
    return np.broadcast_to(vals, (len(space.node_coords), c)).reshape(-1).copy()


def evaluate(space: DiscreteSpace, coeffs: np.ndarray, degree: int | None = None) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Discrete field at volume quadrature points.

    Returns ``(values, x, wdet)`` with values ``(E, nq)`` for scalar spaces or
    ``(E, nq, c)`` for vector spaces.
    """
    vd = space.volume_data(degree)
    c = space.components
    local = np.asarray(coeffs)[space.dof_map]
    if c == 1:
        vals = np.einsum("qb,eb->eq", vd.values, local)
    else:
        local = local.reshape(local.shape[0], -1, c)
        vals = np.einsum("qb,ebi->eqi", vd.values, local)
    return vals, vd.x, vd.wdet


def export_coo(matrix, path) -> None:
    """Write a sparse matrix in Matrix Market coordinate format."""
    from scipy.io import mmwrite

    mmwrite(str(path), sp.coo_matrix(matrix), symmetry="general")
