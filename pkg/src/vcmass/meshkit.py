"""Meshes with explicit facet topology.

A :class:`Mesh` holds one element kind, the element-to-vertex connectivity and
two facet tables: interior facets (pairs of elements sharing a face) and
boundary facets (single element, tagged ``dirichlet`` or ``neumann``).  The
stored normal of an interior facet is the outward normal of its *left*
element; the jump of a quantity across the facet is left minus right.

Reference elements live on ``[0, 1]^d`` (interval, quad, hex) and on the unit
simplex (triangle).  Geometry is always the vertex-based (P1/Q1) map.
"""

from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Union

import numpy as np

from .errors import InvalidArgumentError, MeshFormatError

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
BOUNDARY_TAGS = (DIRICHLET, NEUMANN)


class ElementKind(str, enum.Enum):
    INTERVAL = "interval"
    QUAD = "quad"
    TRIANGLE = "triangle"
    HEX = "hex"

    @property
    def dim(self) -> int:
        return _DIM[self]

    @property
    def vertices(self) -> np.ndarray:
        """Reference coordinates of the element vertices, shape (nv, d)."""
        return _REF_VERTICES[self]

    @property
    def faces(self) -> tuple[tuple[int, ...], ...]:
        """Local vertex indices of each face, cyclically ordered."""
        return _FACES[self]

    @property
    def nvertices(self) -> int:
        return len(_REF_VERTICES[self])


_DIM = {
    ElementKind.INTERVAL: 1,
    ElementKind.QUAD: 2,
    ElementKind.TRIANGLE: 2,
    ElementKind.HEX: 3,
}

_REF_VERTICES = {
    ElementKind.INTERVAL: np.array([[0.0], [1.0]]),
    ElementKind.QUAD: np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]),
    ElementKind.TRIANGLE: np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]),
    ElementKind.HEX: np.array(
        [
            [0.0, 0.0, 0.0],
            [1.0, 0.0, 0.0],
            [1.0, 1.0, 0.0],
            [0.0, 1.0, 0.0],
            [0.0, 0.0, 1.0],
            [1.0, 0.0, 1.0],
            [1.0, 1.0, 1.0],
            [0.0, 1.0, 1.0],
        ]
    ),
}

_FACES = {
    ElementKind.INTERVAL: ((0,), (1,)),
    ElementKind.QUAD: ((0, 1), (1, 2), (2, 3), (3, 0)),
    ElementKind.TRIANGLE: ((0, 1), (1, 2), (2, 0)),
    ElementKind.HEX: (
        (0, 3, 2, 1),
        (4, 5, 6, 7),
        (0, 1, 5, 4),
        (1, 2, 6, 5),
        (2, 3, 7, 6),
        (3, 0, 4, 7),
    ),
}

for _v in _REF_VERTICES.values():
    _v.setflags(write=False)


def geometry_basis(kind: ElementKind, xi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vertex shape functions of the geometric map.

    Returns values ``(npts, nv)`` and reference gradients ``(npts, nv, d)``.
    """
    xi = np.atleast_2d(np.asarray(xi, dtype=float))
    if kind is ElementKind.INTERVAL:
        x = xi[:, 0]
        vals = np.stack([1 - x, x], axis=1)
        grads = np.broadcast_to(np.array([[-1.0], [1.0]]), (len(x), 2, 1)).copy()
    elif kind is ElementKind.TRIANGLE:
        x, y = xi[:, 0], xi[:, 1]
        vals = np.stack([1 - x - y, x, y], axis=1)
        g = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
        grads = np.broadcast_to(g, (len(x), 3, 2)).copy()
    else:
        # tensor-product vertices: local vertex k sits at _REF_VERTICES[kind][k]
        corners = _REF_VERTICES[kind]
        d = corners.shape[1]
        one_d = [np.stack([1 - xi[:, j], xi[:, j]], axis=1) for j in range(d)]
        one_d_grad = np.array([-1.0, 1.0])
        npts = xi.shape[0]
        vals = np.ones((npts, len(corners)))
        grads = np.ones((npts, len(corners), d))
        for k, c in enumerate(corners.astype(int)):
            for j in range(d):
                vals[:, k] *= one_d[j][:, c[j]]
                for m in range(d):
                    if m == j:
                        grads[:, k, m] *= one_d_grad[c[j]]
                    else:
                        grads[:, k, m] *= one_d[j][:, c[j]]
    return vals, grads


def face_corner_basis(nverts: int, q: np.ndarray) -> np.ndarray:
    """Interpolation weights of a face's corners at face parameters ``q``.

    ``nverts`` is 1 (point face), 2 (segment) or 4 (quadrilateral face).
    Returns ``(npts, nverts)``.
    """
    q = np.atleast_2d(np.asarray(q, dtype=float))
    if nverts == 1:
        return np.ones((q.shape[0], 1))
    if nverts == 2:
        s = q[:, 0]
        return np.stack([1 - s, s], axis=1)
    if nverts == 4:
        s, t = q[:, 0], q[:, 1]
        return np.stack([(1 - s) * (1 - t), s * (1 - t), s * t, (1 - s) * t], axis=1)
    raise InvalidArgumentError(f"unsupported face with {nverts} vertices")


def face_corner_basis_grad(nverts: int, q: np.ndarray) -> np.ndarray:
    """Derivatives of :func:`face_corner_basis` w.r.t. face parameters, ``(npts, nverts, dim_f)``."""
    q = np.atleast_2d(np.asarray(q, dtype=float))
    n = q.shape[0]
    if nverts == 1:
        return np.zeros((n, 1, 0))
    if nverts == 2:
        return np.broadcast_to(np.array([[-1.0], [1.0]]), (n, 2, 1)).copy()
    s, t = q[:, 0], q[:, 1]
    g = np.empty((n, 4, 2))
    g[:, 0] = np.stack([-(1 - t), -(1 - s)], axis=1)
    g[:, 1] = np.stack([1 - t, -s], axis=1)
    g[:, 2] = np.stack([t, s], axis=1)
    g[:, 3] = np.stack([-t, 1 - s], axis=1)
    return g


def outward_normals(tangents: np.ndarray, outward_hint: np.ndarray) -> np.ndarray:
    """Unit normals from facet tangents, oriented along ``outward_hint``.

    ``tangents`` has shape ``(..., d, d-1)`` (columns are tangent vectors).
    """
    d = outward_hint.shape[-1]
    if d == 1:
        n = np.ones(outward_hint.shape)
    elif d == 2:
        t = tangents[..., :, 0]
        n = np.stack([t[..., 1], -t[..., 0]], axis=-1)
    else:
        n = np.cross(tangents[..., :, 0], tangents[..., :, 1])
    n = n / np.linalg.norm(n, axis=-1, keepdims=True)
    sign = np.sign(np.sum(n * outward_hint, axis=-1, keepdims=True))
    sign[sign == 0] = 1.0
    return n * sign


BoundaryTagger = Union[str, Callable[[np.ndarray, np.ndarray], str], Mapping]


@dataclass(frozen=True)
class Mesh:
    """Immutable single-kind mesh with facet tables.

    Attributes
    ----------
    nodes : (N, d) float array of vertex coordinates.
    kind : element kind shared by all elements.
    elements : (E, nv) int array of vertex indices.
    interior_facets : (F, 4) int array ``[left, right, left_face, right_face]``.
    interior_normals : (F, d) outward unit normal of the left element at the facet centre.
    boundary_facets : (B, 2) int array ``[element, local_face]``.
    boundary_tags : (B,) array of ``"dirichlet"`` / ``"neumann"``.
    boundary_normals : (B, d) outward unit normals.
    """

    nodes: np.ndarray
    kind: ElementKind
    elements: np.ndarray
    interior_facets: np.ndarray
    interior_normals: np.ndarray
    boundary_facets: np.ndarray
    boundary_tags: np.ndarray
    boundary_normals: np.ndarray
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def dim(self) -> int:
        return self.kind.dim

    @property
    def n_elements(self) -> int:
        return len(self.elements)

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    def element_vertices(self) -> np.ndarray:
        """Vertex coordinates per element, ``(E, nv, d)``."""
        return self.nodes[self.elements]

    def diameters(self) -> np.ndarray:
        X = self.element_vertices()
        diff = X[:, :, None, :] - X[:, None, :, :]
        return np.sqrt(np.max(np.sum(diff**2, axis=-1), axis=(1, 2)))

    def facet_diameters(self) -> tuple[np.ndarray, np.ndarray]:
        """Facet-level mesh size for interior and boundary facets.

        Interior facets take the mean of the two neighbouring element
        diameters; boundary facets take their element's diameter.
        """
        h = self.diameters()
        fi = self.interior_facets
        fb = self.boundary_facets
        hi = 0.5 * (h[fi[:, 0]] + h[fi[:, 1]]) if len(fi) else np.zeros(0)
        hb = h[fb[:, 0]] if len(fb) else np.zeros(0)
        return hi, hb

    def boundary_mask(self, tag: str) -> np.ndarray:
        return self.boundary_tags == tag

    def subset(self, keep: np.ndarray, new_boundary_tag: str = NEUMANN) -> "Mesh":
        """Mesh made of the elements flagged in ``keep``.

        Facets that were boundary facets keep their tags; faces newly exposed
        by the removal get ``new_boundary_tag``.  Unused nodes are dropped.
        """
        keep = np.asarray(keep, dtype=bool)
        old_index = np.flatnonzero(keep)
        old_tags = {
            (int(e), int(f)): str(t)
            for (e, f), t in zip(self.boundary_facets, self.boundary_tags)
        }
        used = np.unique(self.elements[keep])
        renumber = -np.ones(self.n_nodes, dtype=int)
        renumber[used] = np.arange(len(used))
        tags = {}
        for new_e, old_e in enumerate(old_index):
            for lf in range(len(self.kind.faces)):
                tags[(new_e, lf)] = old_tags.get((int(old_e), lf), new_boundary_tag)
        return build_mesh(
            self.nodes[used], self.kind, renumber[self.elements[keep]], tags,
            strict_tags=False, metadata=dict(self.metadata),
        )


def _validate_tag(tag, where: str) -> str:
    if tag not in BOUNDARY_TAGS:
        raise InvalidArgumentError(f"invalid boundary tag {tag!r} for {where}")
    return tag


def build_mesh(
    nodes,
    kind,
    elements,
    boundary: BoundaryTagger = DIRICHLET,
    *,
    strict_tags: bool = True,
    metadata: dict | None = None,
) -> Mesh:
    """Construct a :class:`Mesh` and derive its facet topology.

    ``boundary`` is either a single tag applied everywhere, a callable
    ``tagger(centroid, normal) -> tag`` or a mapping
    ``{(element, local_face): tag}``.  With a mapping and ``strict_tags``,
    untagged boundary facets and tags on non-boundary faces are errors.
    """
    kind = ElementKind(kind)
    nodes = np.array(nodes, dtype=float)
    if nodes.ndim == 1:
        nodes = nodes[:, None]
    elements = np.array(elements, dtype=int)
    d = kind.dim
    if nodes.shape[1] != d:
        raise InvalidArgumentError(
            f"{kind.value} elements need {d}-dimensional nodes, got {nodes.shape[1]}"
        )
    if elements.ndim != 2 or elements.shape[1] != kind.nvertices:
        raise InvalidArgumentError(
            f"{kind.value} elements need {kind.nvertices} vertices each"
        )
    if elements.size and (elements.min() < 0 or elements.max() >= len(nodes)):
        raise InvalidArgumentError("element references a node index out of range")

    X = nodes[elements]
    _check_orientation(kind, X)
    centroids = X.mean(axis=1)

    owners: dict[tuple[int, ...], list[tuple[int, int]]] = {}
    for e, conn in enumerate(elements):
        for lf, fv in enumerate(kind.faces):
            key = tuple(sorted(int(conn[v]) for v in fv))
            owners.setdefault(key, []).append((e, lf))

    interior, boundary_list = [], []
    for key, own in owners.items():
        if len(own) == 2:
            (l, lf), (r, rf) = own
            interior.append((l, r, lf, rf))
        elif len(own) == 1:
            boundary_list.append(own[0])
        else:
            raise InvalidArgumentError(f"face {key} is shared by {len(own)} elements")

    interior = np.array(interior, dtype=int).reshape(-1, 4)
    bfacets = np.array(boundary_list, dtype=int).reshape(-1, 2)
    ni = _facet_normals(kind, X, centroids, interior[:, 0], interior[:, 2])
    nb = _facet_normals(kind, X, centroids, bfacets[:, 0], bfacets[:, 1])

    tags = []
    if isinstance(boundary, str):
        _validate_tag(boundary, "mesh boundary")
        tags = [boundary] * len(bfacets)
    elif callable(boundary):
        for (e, lf), n in zip(bfacets, nb):
            c = X[e, list(kind.faces[lf])].mean(axis=0)
            tags.append(_validate_tag(boundary(c, n), f"facet ({e}, {lf})"))
    else:
        mapping = {(int(e), int(f)): t for (e, f), t in dict(boundary).items()}
        bset = {(int(e), int(f)) for e, f in bfacets}
        if strict_tags:
            extra = set(mapping) - bset
            if extra:
                e, f = sorted(extra)[0]
                raise InvalidArgumentError(f"tag given for non-boundary face ({e}, {f})")
        for e, lf in bfacets:
            key = (int(e), int(lf))
            if key not in mapping:
                raise InvalidArgumentError(f"boundary facet ({e}, {lf}) has no tag")
            tags.append(_validate_tag(mapping[key], f"facet ({e}, {lf})"))

    arrays = [nodes, elements, interior, ni, bfacets, nb]
    for a in arrays:
        a.setflags(write=False)
    tag_arr = np.array(tags, dtype=object).reshape(-1)
    tag_arr.setflags(write=False)
    return Mesh(
        nodes=nodes,
        kind=kind,
        elements=elements,
        interior_facets=interior,
        interior_normals=ni,
        boundary_facets=bfacets,
        boundary_tags=tag_arr,
        boundary_normals=nb,
        metadata=dict(metadata or {}),
    )


def _check_orientation(kind: ElementKind, X: np.ndarray) -> None:
    if len(X) == 0:
        return
    # Q1 maps can fold only at the vertices, so checking there suffices
    pts = kind.vertices if kind in (ElementKind.QUAD, ElementKind.HEX) else kind.vertices.mean(axis=0, keepdims=True)
    _, G = geometry_basis(kind, pts)
    J = np.einsum("evi,pvj->epij", X, G)
    det = np.linalg.det(J)
    bad = np.flatnonzero(np.any(det <= 0, axis=1))
    if bad.size:
        raise InvalidArgumentError(
            f"element {int(bad[0])} has non-positive Jacobian determinant"
        )


def _facet_normals(kind, X, centroids, elems, lfaces) -> np.ndarray:
    d = kind.dim
    out = np.zeros((len(elems), d))
    for lf in range(len(kind.faces)):
        sel = np.flatnonzero(lfaces == lf)
        if sel.size == 0:
            continue
        fv = list(kind.faces[lf])
        nvf = len(fv)
        qc = np.full((1, max(nvf // 2, 1) if nvf > 1 else 0), 0.5)
        phi = face_corner_basis(nvf, qc)[0]
        dphi = face_corner_basis_grad(nvf, qc)[0]
        xi = phi @ kind.vertices[fv]
        dxi = kind.vertices[fv].T @ dphi  # (d, dim_f)
        _, G = geometry_basis(kind, xi[None])
        Xe = X[elems[sel]]
        J = np.einsum("evi,vj->eij", Xe, G[0])
        tangents = J @ dxi
        xf = np.einsum("v,evi->ei", phi, Xe[:, fv])
        out[sel] = outward_normals(tangents, xf - centroids[elems[sel]])
    return out


def generate_interval_mesh(length: float, n_elements: int, boundary: BoundaryTagger = DIRICHLET) -> Mesh:
    """Uniform mesh of ``[0, length]``.

    ``boundary`` may also be a pair ``(left_tag, right_tag)``.
    """
    if not length > 0:
        raise InvalidArgumentError("length must be positive")
    if int(n_elements) < 1 or int(n_elements) != n_elements:
        raise InvalidArgumentError("n_elements must be a positive integer")
    n = int(n_elements)
    nodes = np.linspace(0.0, length, n + 1)[:, None]
    elements = np.stack([np.arange(n), np.arange(1, n + 1)], axis=1)
    if isinstance(boundary, tuple) and len(boundary) == 2 and all(isinstance(b, str) for b in boundary):
        left, right = boundary
        boundary = {(0, 0): left, (n - 1, 1): right}
    return build_mesh(nodes, ElementKind.INTERVAL, elements, boundary,
                      metadata={"generator": "interval", "length": float(length), "n_elements": n})


def generate_grid_mesh(lengths, counts, kind, boundary: BoundaryTagger = DIRICHLET) -> Mesh:
    """Structured tensor-product mesh of ``[0, L1] x ... x [0, Ld]``.

    ``kind="triangle"`` splits every quad along its lower-left to upper-right
    diagonal.
    """
    lengths = np.asarray(lengths, dtype=float).ravel()
    counts = np.asarray(counts).ravel()
    kind = ElementKind(kind)
    d = len(lengths)
    if d not in (2, 3) or len(counts) != d:
        raise InvalidArgumentError("grid meshes need 2 or 3 matching lengths and counts")
    if kind.dim != d or kind is ElementKind.INTERVAL:
        raise InvalidArgumentError(f"{kind.value} elements do not fit a {d}D grid")
    if np.any(lengths <= 0) or np.any(counts < 1) or np.any(counts != np.round(counts)):
        raise InvalidArgumentError("lengths must be positive and counts positive integers")
    counts = counts.astype(int)

    axes = [np.linspace(0.0, L, n + 1) for L, n in zip(lengths, counts)]
    grid = np.meshgrid(*axes, indexing="ij")
    # x varies fastest in the node numbering
    nodes = np.stack([g.transpose(tuple(range(d))[::-1]).ravel() for g in grid], axis=1)
    shape = tuple(counts + 1)

    def nid(*ijk):
        idx = 0
        stride = 1
        for a, i in enumerate(ijk):
            idx = idx + i * stride
            stride *= shape[a]
        return idx

    elements = []
    if d == 2:
        for j, i in itertools.product(range(counts[1]), range(counts[0])):
            v0, v1, v2, v3 = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            if kind is ElementKind.QUAD:
                elements.append((v0, v1, v2, v3))
            else:
                elements.append((v0, v1, v2))
                elements.append((v0, v2, v3))
    else:
        for k, j, i in itertools.product(range(counts[2]), range(counts[1]), range(counts[0])):
            elements.append(tuple(
                nid(i + a, j + b, k + c)
                for a, b, c in ElementKind.HEX.vertices.astype(int)
            ))
    meta = {"generator": "grid", "lengths": lengths.tolist(), "counts": counts.tolist(), "kind": kind.value}
    return build_mesh(nodes, kind, elements, boundary, metadata=meta)


def element_diameter(mesh: Mesh, element: int) -> float:
    """Largest distance between two vertices of ``element``."""
    if not 0 <= element < mesh.n_elements:
        raise InvalidArgumentError(f"element index {element} out of range")
    X = mesh.nodes[mesh.elements[element]]
    diff = X[:, None, :] - X[None, :, :]
    return float(np.sqrt(np.max(np.sum(diff**2, axis=-1))))


# -- mesh documents ---------------------------------------------------------

def load_mesh(document: str) -> Mesh:
    """Parse a mesh document.

    Format (one record per line, ``%`` starts a comment)::

        #nodes
        x [y [z]]
        #elements
        kind i0 i1 ...
        #boundary
        element localface tag
    """
    section = None
    nodes, elements, tags = [], [], {}
    kind = None
    elem_lines = []
    for lineno, raw in enumerate(document.splitlines(), start=1):
        line = raw.split("%", 1)[0].strip()
        if not line:
            continue
        if line.startswith("#"):
            section = line[1:].strip().lower()
            if section not in ("nodes", "elements", "boundary"):
                raise MeshFormatError(f"unknown section header {line!r}", lineno)
            continue
        parts = line.split()
        if section is None:
            raise MeshFormatError("record before any section header", lineno)
        if section == "nodes":
            try:
                coords = [float(p) for p in parts]
            except ValueError:
                raise MeshFormatError(f"bad node coordinates {line!r}", lineno) from None
            if nodes and len(coords) != len(nodes[0]):
                raise MeshFormatError("node dimension differs from previous nodes", lineno)
            nodes.append(coords)
        elif section == "elements":
            try:
                ekind = ElementKind(parts[0])
            except ValueError:
                raise MeshFormatError(f"unknown element kind {parts[0]!r}", lineno) from None
            if kind is None:
                kind = ekind
            elif ekind is not kind:
                raise MeshFormatError(
                    f"inconsistent element kind {ekind.value!r} (mesh uses {kind.value!r})", lineno
                )
            try:
                conn = [int(p) for p in parts[1:]]
            except ValueError:
                raise MeshFormatError(f"bad node index in {line!r}", lineno) from None
            if len(conn) != ekind.nvertices:
                raise MeshFormatError(
                    f"{ekind.value} needs {ekind.nvertices} node indices, got {len(conn)}", lineno
                )
            elements.append(conn)
            elem_lines.append(lineno)
        else:
            if len(parts) != 3:
                raise MeshFormatError("boundary records are 'element localface tag'", lineno)
            try:
                e, f = int(parts[0]), int(parts[1])
            except ValueError:
                raise MeshFormatError(f"bad boundary record {line!r}", lineno) from None
            if parts[2] not in BOUNDARY_TAGS:
                raise MeshFormatError(f"unknown boundary tag {parts[2]!r}", lineno)
            if not 0 <= e < len(elements):
                raise MeshFormatError(f"boundary record references element {e}", lineno)
            if kind is not None and not 0 <= f < len(kind.faces):
                raise MeshFormatError(f"local face {f} out of range", lineno)
            tags[(e, f)] = (parts[2], lineno)

    if not nodes:
        raise MeshFormatError("document has no nodes")
    if not elements:
        raise MeshFormatError("document has no elements")
    for conn, lineno in zip(elements, elem_lines):
        bad = [i for i in conn if not 0 <= i < len(nodes)]
        if bad:
            raise MeshFormatError(f"dangling node index {bad[0]}", lineno)

    try:
        probe = build_mesh(nodes, kind, elements, NEUMANN)
    except InvalidArgumentError as exc:
        raise MeshFormatError(str(exc)) from None
    bset = {(int(e), int(f)) for e, f in probe.boundary_facets}
    for key, (_, lineno) in tags.items():
        if key not in bset:
            raise MeshFormatError(f"face {key} is not a boundary facet", lineno)
    for e, f in probe.boundary_facets:
        if (int(e), int(f)) not in tags:
            raise MeshFormatError(f"untagged boundary facet (element {e}, face {f})")
    return build_mesh(nodes, kind, elements, {k: t for k, (t, _) in tags.items()},
                      metadata={"source": "document"})


def read_mesh(path) -> Mesh:
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    try:
        return load_mesh(text)
    except MeshFormatError as exc:
        raise MeshFormatError(f"{path}: {exc}") from None


def dump_mesh(mesh: Mesh) -> str:
    """Serialise ``mesh`` in the format read by :func:`load_mesh`."""
    out = ["#nodes"]
    out += [" ".join(repr(float(c)) for c in x) for x in mesh.nodes]
    out.append("#elements")
    out += [mesh.kind.value + " " + " ".join(str(int(i)) for i in conn) for conn in mesh.elements]
    out.append("#boundary")
    out += [f"{int(e)} {int(f)} {t}" for (e, f), t in zip(mesh.boundary_facets, mesh.boundary_tags)]
    return "\n".join(out) + "\n"
