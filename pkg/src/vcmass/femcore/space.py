"""Continuous Lagrange spaces over a :class:`~vcmass.meshkit.Mesh`."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from scipy.spatial import cKDTree

from ..errors import InvalidArgumentError
from ..meshkit import DIRICHLET, ElementKind, Mesh, face_corner_basis, face_corner_basis_grad, geometry_basis, outward_normals
from .basis import lagrange_basis
from .quadrature import face_rule, volume_rule


@dataclass(frozen=True)
class VolumeData:
    """Basis data at the volume quadrature points of every element."""

    points: np.ndarray  # (nq, d) reference points
    values: np.ndarray  # (nq, nb)
    grads: np.ndarray  # (E, nq, nb, d) physical gradients
    wdet: np.ndarray  # (E, nq) weight times |det J|
    x: np.ndarray  # (E, nq, d) physical points


@dataclass(frozen=True)
class FacetSide:
    elements: np.ndarray  # (nf,)
    values: np.ndarray  # (nf, nq, nb)
    grads: np.ndarray  # (nf, nq, nb, d) physical gradients
    nodes: np.ndarray  # (nf, nb) global node indices


@dataclass(frozen=True)
class FacetData:
    """Quadrature data on a set of facets; normals point out of ``left``."""

    left: FacetSide
    right: FacetSide | None
    normals: np.ndarray  # (nf, nq, d)
    wds: np.ndarray  # (nf, nq) weight times surface measure
    x: np.ndarray  # (nf, nq, d)


class DiscreteSpace:
    """C0 Lagrange space of degree ``order`` with ``components`` field components.

    Vector DOFs are interleaved: global DOF ``node * components + i``.
    DOFs on faces tagged ``dirichlet`` are flagged in :attr:`dirichlet_mask`.
    """

    def __init__(self, mesh: Mesh, order: int, components: int = 1):
        if components not in (1, mesh.dim):
            raise InvalidArgumentError("components must be 1 or the mesh dimension")
        self.mesh = mesh
        self.order = int(order)
        self.components = int(components)
        self.basis = lagrange_basis(mesh.kind, self.order)
        self._volume_cache: dict[int, VolumeData] = {}

        phi, _ = geometry_basis(mesh.kind, self.basis.nodes)
        X = mesh.element_vertices()
        pts = np.einsum("bv,evi->ebi", phi, X)
        self.node_map, self.node_coords = _merge_points(pts, mesh.diameters().min())
        self.face_nodes = _reference_face_nodes(mesh.kind, self.basis.nodes)

        c = self.components
        nb = self.basis.size
        self.dof_map = (self.node_map[:, :, None] * c + np.arange(c)).reshape(len(pts), nb * c)
        self.ndofs = len(self.node_coords) * c

        mask = np.zeros(len(self.node_coords), dtype=bool)
        for (e, lf), tag in zip(mesh.boundary_facets, mesh.boundary_tags):
            if tag == DIRICHLET:
                mask[self.node_map[e, self.face_nodes[lf]]] = True
        self.dirichlet_nodes = mask
        self.dirichlet_mask = np.repeat(mask, c)
        self.free_dofs = np.flatnonzero(~self.dirichlet_mask)
        for a in (self.node_map, self.node_coords, self.dof_map, self.dirichlet_mask, self.free_dofs):
            a.setflags(write=False)

    @property
    def n_free(self) -> int:
        return len(self.free_dofs)

    def __repr__(self):
        return (
            f"DiscreteSpace({self.mesh.kind.value}, P={self.order}, "
            f"components={self.components}, ndofs={self.ndofs})"
        )

    # -- quadrature data -----------------------------------------------------

    def volume_data(self, degree: int | None = None) -> VolumeData:
        degree = 2 * self.order if degree is None else int(degree)
        if degree not in self._volume_cache:
            kind = self.mesh.kind
            xi, w = volume_rule(kind, degree)
            vals, dref = self.basis.eval(xi)
            gphi, gG = geometry_basis(kind, xi)
            X = self.mesh.element_vertices()
            J = np.einsum("evi,qvj->eqij", X, gG)
            det = np.linalg.det(J)
            Jinv = np.linalg.inv(J)
            grads = np.einsum("eqji,qbj->eqbi", Jinv, dref)
            x = np.einsum("qv,evi->eqi", gphi, X)
            self._volume_cache[degree] = VolumeData(xi, vals, grads, w[None, :] * np.abs(det), x)
        return self._volume_cache[degree]

    def _side(self, elems: np.ndarray, xi: np.ndarray) -> tuple[FacetSide, np.ndarray]:
        nf, nq, d = xi.shape
        flat = xi.reshape(-1, d)
        vals, dref = self.basis.eval(flat)
        _, gG = geometry_basis(self.mesh.kind, flat)
        X = self.mesh.element_vertices()[elems]
        gG = gG.reshape(nf, nq, -1, d)
        J = np.einsum("fvi,fqvj->fqij", X, gG)
        Jinv = np.linalg.inv(J)
        dref = dref.reshape(nf, nq, -1, d)
        grads = np.einsum("fqji,fqbj->fqbi", Jinv, dref)
        side = FacetSide(elems, vals.reshape(nf, nq, -1), grads, self.node_map[elems])
        return side, J

    def facet_data(self, which: str, select=None, degree: int | None = None) -> FacetData:
        """Quadrature data on ``"interior"`` or ``"boundary"`` facets.

        ``select`` is an optional boolean mask or index array into the chosen
        facet table.
        """
        mesh = self.mesh
        kind = mesh.kind
        degree = 2 * self.order if degree is None else int(degree)
        if which == "interior":
            table = mesh.interior_facets
        elif which == "boundary":
            table = mesh.boundary_facets
        else:
            raise InvalidArgumentError("which must be 'interior' or 'boundary'")
        if select is not None:
            table = table[select]
        faces = np.array(kind.faces)
        nvf = faces.shape[1]
        q, w = face_rule(nvf, degree)
        phi = face_corner_basis(nvf, q)
        dphi = face_corner_basis_grad(nvf, q)

        L = table[:, 0]
        lf = table[:, 2] if which == "interior" else table[:, 1]
        refv = kind.vertices
        FL = refv[faces[lf]]  # (nf, nvf, d)
        xiL = np.einsum("qk,fkd->fqd", phi, FL)
        left, JL = self._side(L, xiL)

        right = None
        if which == "interior":
            R = table[:, 1]
            gv = mesh.elements[L[:, None], faces[lf]]  # global ids, left face order
            loc = np.argmax(mesh.elements[R][:, None, :] == gv[:, :, None], axis=2)
            xiR = np.einsum("qk,fkd->fqd", phi, refv[loc])
            right, _ = self._side(R, xiR)

        gphi, _ = geometry_basis(kind, xiL.reshape(-1, kind.dim))
        X = mesh.element_vertices()[L]
        x = np.einsum("fqv,fvi->fqi", gphi.reshape(len(L), len(q), -1), X)
        dxi = np.einsum("qkm,fkd->fqdm", dphi, FL)
        tangents = JL @ dxi
        if kind.dim == 1:
            ds = np.ones(x.shape[:2])
        elif kind.dim == 2:
            ds = np.linalg.norm(tangents[..., 0], axis=-1)
        else:
            ds = np.linalg.norm(np.cross(tangents[..., 0], tangents[..., 1]), axis=-1)
        centroid = X.mean(axis=1)
        normals = outward_normals(tangents, x - centroid[:, None, :])
        return FacetData(left, right, normals, w[None, :] * ds, x)


def _merge_points(pts: np.ndarray, hmin: float) -> tuple[np.ndarray, np.ndarray]:
    """Identify coincident element nodes; returns (node_map, coordinates)."""
    E, nb, d = pts.shape
    flat = pts.reshape(-1, d)
    tol = 1e-8 * max(hmin, np.finfo(float).tiny)
    pairs = cKDTree(flat).query_pairs(tol, output_type="ndarray")
    n = len(flat)
    graph = coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
    _, labels = connected_components(graph, directed=False)
    # number merged nodes in order of first appearance
    _, first = np.unique(labels, return_index=True)
    order = np.argsort(first)
    renumber = np.empty(len(order), dtype=int)
    renumber[order] = np.arange(len(order))
    ids = renumber[labels]
    coords = flat[first[order]]
    return ids.reshape(E, nb), coords


def _reference_face_nodes(kind: ElementKind, nodes: np.ndarray) -> list[np.ndarray]:
    out = []
    for fv in kind.faces:
        V = kind.vertices[list(fv)]
        rel = nodes - V[0]
        if kind.dim == 1:
            dist = np.abs(rel[:, 0])
        elif kind.dim == 2:
            t = V[1] - V[0]
            dist = np.abs(rel[:, 0] * t[1] - rel[:, 1] * t[0])
        else:
            n = np.cross(V[1] - V[0], V[-1] - V[0])
            dist = np.abs(rel @ n)
        out.append(np.flatnonzero(dist < 1e-12))
    return out
