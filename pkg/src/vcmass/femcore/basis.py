"""Nodal Lagrange bases on the reference elements.

Nodes are equispaced.  Tensor-product elements (interval, quad, hex) span
Q_P; triangles span P_P.  Basis functions are obtained by inverting the
monomial Vandermonde matrix at the nodes, which is well conditioned for the
orders supported here.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..errors import UnsupportedConfigurationError
from ..meshkit import ElementKind

MAX_ORDER = {
    ElementKind.INTERVAL: 4,
    ElementKind.QUAD: 4,
    ElementKind.TRIANGLE: 4,
    ElementKind.HEX: 2,
}


@dataclass(frozen=True)
class LagrangeBasis:
    kind: ElementKind
    order: int
    nodes: np.ndarray  # (nb, d) reference nodal points
    exponents: np.ndarray  # (nb, d) monomial exponents
    coeffs: np.ndarray  # (nb_monomials, nb)

    @property
    def size(self) -> int:
        return len(self.nodes)

    def eval(self, xi) -> tuple[np.ndarray, np.ndarray]:
        """Values ``(npts, nb)`` and reference gradients ``(npts, nb, d)``."""
        xi = np.atleast_2d(np.asarray(xi, dtype=float))
        e = self.exponents
        pw = xi[:, None, :] ** e[None, :, :]  # (npts, nmono, d)
        mono = np.prod(pw, axis=2)
        d = xi.shape[1]
        dmono = np.empty(mono.shape + (d,))
        for j in range(d):
            ej = e[:, j]
            lower = np.where(ej > 0, ej - 1, 0)
            dj = ej * xi[:, None, j] ** lower[None, :]
            others = np.prod(np.delete(pw, j, axis=2), axis=2) if d > 1 else 1.0
            dmono[:, :, j] = dj * others
        vals = mono @ self.coeffs
        grads = np.einsum("pmj,mb->pbj", dmono, self.coeffs)
        return vals, grads


def _nodes_and_exponents(kind: ElementKind, P: int):
    if kind is ElementKind.TRIANGLE:
        ij = [(i, j) for j in range(P + 1) for i in range(P + 1 - j)]
        nodes = np.array(ij, dtype=float) / P
        exps = np.array(ij, dtype=int)
        return nodes, exps
    d = kind.dim
    # first coordinate varies fastest
    idx = [tuple(reversed(t)) for t in itertools.product(range(P + 1), repeat=d)]
    nodes = np.array(idx, dtype=float) / P
    exps = np.array(idx, dtype=int)
    return nodes, exps


@lru_cache(maxsize=None)
def lagrange_basis(kind, order: int) -> LagrangeBasis:
    kind = ElementKind(kind)
    if order not in range(1, MAX_ORDER[kind] + 1):
        raise UnsupportedConfigurationError(
            f"{kind.value} elements support orders 1..{MAX_ORDER[kind]}, got {order}"
        )
    nodes, exps = _nodes_and_exponents(kind, order)
    V = np.prod(nodes[:, None, :] ** exps[None, :, :], axis=2)
    coeffs = np.linalg.inv(V)
    for a in (nodes, exps, coeffs):
        a.setflags(write=False)
    return LagrangeBasis(kind, order, nodes, exps, coeffs)


def shape_eval(kind, P: int, point) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the degree-``P`` Lagrange basis of ``kind`` at reference ``point``.

    ``point`` is a single coordinate vector (returns ``(nb,)`` values and
    ``(nb, d)`` gradients) or an array of points (adds a leading axis).
    """
    basis = lagrange_basis(kind, P)
    pt = np.asarray(point, dtype=float)
    single = pt.ndim <= 1
    if pt.ndim == 0:
        pt = pt[None]
    vals, grads = basis.eval(pt.reshape(-1, basis.nodes.shape[1]))
    if single:
        return vals[0], grads[0]
    return vals, grads
