"""Quadrature rules on the reference elements and their faces."""

from __future__ import annotations

from functools import lru_cache

import numpy as np

from ..errors import InvalidArgumentError
from ..meshkit import ElementKind


@lru_cache(maxsize=None)
def gauss_01(npts: int) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre rule on [0, 1]; exact for degree ``2*npts - 1``."""
    x, w = np.polynomial.legendre.leggauss(npts)
    return 0.5 * (x + 1.0), 0.5 * w


def _tensor(npts: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = gauss_01(npts)
    grids = np.meshgrid(*([x] * d), indexing="ij")
    wgrids = np.meshgrid(*([w] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
    return pts, wts


def _collapsed_triangle(npts: int) -> tuple[np.ndarray, np.ndarray]:
    # Duffy collapse of the unit square; the (1 - u) Jacobian adds a degree in u
    xu, wu = gauss_01(npts + 1)
    xv, wv = gauss_01(npts)
    U, V = np.meshgrid(xu, xv, indexing="ij")
    WU, WV = np.meshgrid(wu, wv, indexing="ij")
    x = U.ravel()
    y = (V * (1.0 - U)).ravel()
    w = (WU * WV * (1.0 - U)).ravel()
    return np.stack([x, y], axis=1), w


def volume_rule(kind: ElementKind, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Points ``(nq, d)`` and weights exact for polynomials of total ``degree``.

    Tensor-product elements use Gauss-Legendre per direction (exact for
    ``degree`` in each variable); triangles use a collapsed Gauss rule.
    """
    if degree < 0:
        raise InvalidArgumentError("quadrature degree must be non-negative")
    n = degree // 2 + 1
    kind = ElementKind(kind)
    if kind is ElementKind.INTERVAL:
        x, w = gauss_01(n)
        return x[:, None], w
    if kind is ElementKind.QUAD:
        return _tensor(n, 2)
    if kind is ElementKind.HEX:
        return _tensor(n, 3)
    return _collapsed_triangle(n)


def face_rule(nverts: int, degree: int) -> tuple[np.ndarray, np.ndarray]:
    """Rule on a reference face parameterised over ``[0, 1]^(dim_f)``.

    ``nverts`` is the number of face corners (1: point, 2: segment,
    4: quadrilateral).
    """
    n = max(degree, 0) // 2 + 1
    if nverts == 1:
        return np.zeros((1, 0)), np.ones(1)
    if nverts == 2:
        x, w = gauss_01(n)
        return x[:, None], w
    if nverts == 4:
        return _tensor(n, 2)
    raise InvalidArgumentError(f"unsupported face with {nverts} vertices")
