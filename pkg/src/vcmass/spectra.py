"""Generalised eigenproblems, analytic reference modes and mode matching."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp

from .errors import DefinitenessError, InvalidArgumentError
from .femcore import DiscreteSpace, MaterialScalar
from .meshkit import DIRICHLET, NEUMANN, ElementKind, generate_grid_mesh, generate_interval_mesh


@dataclass
class Spectrum:
    """Ascending eigenpairs of ``K xi = lambda M xi``.

    ``eigenvectors[:, k]`` is mass-orthonormal.  When the problem was reduced
    by Dirichlet elimination, ``free``/``ndofs`` map vectors back to the full
    DOF numbering.
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray | None = None
    matched_indices: np.ndarray | None = None
    free: np.ndarray | None = None
    ndofs: int | None = None
    metadata: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def frequencies(self) -> np.ndarray:
        return np.sqrt(np.clip(self.eigenvalues, 0.0, None))

    def full_eigenvectors(self) -> np.ndarray:
        if self.eigenvectors is None:
            raise InvalidArgumentError("spectrum was computed without eigenvectors")
        if self.free is None:
            return self.eigenvectors
        out = np.zeros((self.ndofs, self.eigenvectors.shape[1]))
        out[self.free] = self.eigenvectors
        return out

    def drop(self, index) -> "Spectrum":
        keep = np.setdiff1d(np.arange(len(self)), np.atleast_1d(index))
        vecs = None if self.eigenvectors is None else self.eigenvectors[:, keep]
        return Spectrum(self.eigenvalues[keep], vecs, None, self.free, self.ndofs, dict(self.metadata))


def _dense(A) -> np.ndarray:
    return A.toarray() if sp.issparse(A) else np.array(A, dtype=float)


def solve_generalized_eigen(K, M, eigenvectors: bool = True) -> Spectrum:
    """Full eigendecomposition of ``K xi = lambda M xi`` with SPD ``M``.

    ``M = L L^T`` is factorised, the standard problem ``L^-1 K L^-T`` is solved
    densely and the eigenvectors are mapped back, which makes them
    ``M``-orthonormal.
    """
    K = _dense(K)
    M = _dense(M)
    if K.shape != M.shape or K.shape[0] != K.shape[1]:
        raise InvalidArgumentError("K and M must be square and of equal size")
    L, info = la.lapack.dpotrf(M, lower=1, clean=1)
    if info > 0:
        raise DefinitenessError(pivot=info - 1)
    if info < 0:
        raise InvalidArgumentError("invalid argument passed to the Cholesky factorisation")
    A = la.solve_triangular(L, K, lower=True)
    A = la.solve_triangular(L, A.T, lower=True)
    A = 0.5 * (A + A.T)
    if not eigenvectors:
        return Spectrum(la.eigvalsh(A))
    w, Y = la.eigh(A)
    X = la.solve_triangular(L, Y, lower=True, trans="T")
    return Spectrum(w, X)


# -- analytic reference modes -----------------------------------------------

INTERVAL_DIRICHLET = "interval-dirichlet"
SQUARE_DIRICHLET = "square-dirichlet"
SQUARE_NEUMANN = "square-neumann"
FAMILIES = (INTERVAL_DIRICHLET, SQUARE_DIRICHLET, SQUARE_NEUMANN)


@dataclass(frozen=True)
class AnalyticEigenFamily:
    """Eigenmodes of the wave operator on a line or square of side ``L``.

    Dirichlet modes are products of ``sin``, Neumann modes products of
    ``cos``; the Neumann constant mode is excluded.
    """

    domain: str
    rho: float = 1.0
    T: float = 1.0
    L: float = 1.0

    def __post_init__(self):
        if self.domain not in FAMILIES:
            raise InvalidArgumentError(f"unknown family {self.domain!r}; choose from {FAMILIES}")

    @property
    def dim(self) -> int:
        return 1 if self.domain == INTERVAL_DIRICHLET else 2

    @property
    def has_null_mode(self) -> bool:
        return self.domain == SQUARE_NEUMANN


@dataclass(frozen=True)
class AnalyticModes:
    family: AnalyticEigenFamily
    indices: np.ndarray  # (N, d) mode numbers
    eigenvalues: np.ndarray  # (N,)

    def __len__(self):
        return len(self.eigenvalues)

    def evaluate(self, x: np.ndarray, select=slice(None)) -> np.ndarray:
        """Eigenfunction values ``(n_modes, npts)`` at points ``x`` (npts, d)."""
        fam = self.family
        k = self.indices[select] * (math.pi / fam.L)
        trig = np.cos if fam.domain == SQUARE_NEUMANN else np.sin
        out = np.ones((len(k), len(x)))
        for j in range(fam.dim):
            out *= trig(k[:, j, None] * x[None, :, j])
        return out


def analytic_eigenpairs(family: AnalyticEigenFamily, count: int) -> AnalyticModes:
    """The ``count`` lowest analytic modes, ascending.

    Degenerate eigenvalues are ordered lexicographically by mode index.
    """
    if count < 1:
        raise InvalidArgumentError("count must be at least 1")
    scale = family.T / family.rho * (math.pi / family.L) ** 2
    if family.dim == 1:
        idx = np.arange(1, count + 1)[:, None]
        s = idx[:, 0] ** 2
        return AnalyticModes(family, idx, scale * s.astype(float))
    lo = 0 if family.domain == SQUARE_NEUMANN else 1
    K = int(math.isqrt(count)) + 2
    while True:
        m, n = np.meshgrid(np.arange(lo, K + 1), np.arange(lo, K + 1), indexing="ij")
        m, n = m.ravel(), n.ravel()
        keep = (m + n) > 0
        m, n = m[keep], n[keep]
        s = m**2 + n**2
        order = np.lexsort((n, m, s))[:count]
        # every unlisted pair has an index above K, hence s >= (K + 1)^2
        if len(order) == count and s[order[-1]] < (K + 1) ** 2:
            break
        K *= 2
    idx = np.stack([m[order], n[order]], axis=1)
    return AnalyticModes(family, idx, scale * s[order].astype(float))


def _nonnull(spectrum: Spectrum, family: AnalyticEigenFamily) -> Spectrum:
    if family.has_null_mode:
        return spectrum.drop(int(np.argmin(spectrum.eigenvalues)))
    return spectrum


def mode_errors(spectrum: Spectrum, modes: AnalyticModes, space: DiscreteSpace, degree: int | None = None) -> np.ndarray:
    """Relative L2 distance between every analytic and numerical mode.

    Both functions are normalised in L2 and the sign is chosen to minimise the
    error, so entry ``(n, k)`` equals ``sqrt(2 - 2 |(phi_n, u_k)|)``.
    """
    degree = 2 * space.order + 2 if degree is None else degree
    vd = space.volume_data(degree)
    x = vd.x.reshape(-1, space.mesh.dim)
    w = vd.wdet.reshape(-1)
    U = np.einsum("qb,ebk->eqk", vd.values, spectrum.full_eigenvectors()[space.dof_map]).reshape(len(w), -1)
    unorm = np.sqrt(np.einsum("q,qk,qk->k", w, U, U))
    inner = np.empty((len(modes), U.shape[1]))
    step = 256
    for start in range(0, len(modes), step):
        sel = slice(start, start + step)
        phi = modes.evaluate(x, sel)
        pnorm = np.sqrt(np.einsum("q,nq,nq->n", w, phi, phi))
        inner[sel] = (phi * w) @ U / pnorm[:, None]
    cosine = np.clip(np.abs(inner) / unorm[None, :], 0.0, 1.0)
    return np.sqrt(2.0 - 2.0 * cosine)


def match_modes(spectrum: Spectrum, family: AnalyticEigenFamily, space: DiscreteSpace, degree: int | None = None) -> np.ndarray:
    """Greedy assignment of analytic modes to numerical modes.

    Analytic modes are visited in ascending order; each takes the remaining
    numerical mode with the smallest L2 eigenfunction error.  Returns
    ``perm`` with ``perm[n]`` the numerical index assigned to analytic mode n
    (indices refer to ``spectrum`` with any null mode still present).
    """
    base = spectrum
    spectrum = _nonnull(spectrum, family)
    keep = np.setdiff1d(np.arange(len(base)), [int(np.argmin(base.eigenvalues))]) if family.has_null_mode else np.arange(len(base))
    N = len(spectrum)
    modes = analytic_eigenpairs(family, N)
    err = mode_errors(spectrum, modes, space, degree)
    taken = np.zeros(N, dtype=bool)
    perm = np.empty(N, dtype=int)
    for n in range(N):
        row = np.where(taken, np.inf, err[n])
        k = int(np.argmin(row))
        perm[n] = k
        taken[k] = True
    return keep[perm]


def normalized_spectrum(spectrum: Spectrum, family: AnalyticEigenFamily, space: DiscreteSpace | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Frequency ratios ``omega_h / omega`` against normalised mode number ``n/N``.

    Uses ``spectrum.matched_indices`` when present, otherwise matches modes
    (which needs ``space``).
    """
    perm = spectrum.matched_indices
    if perm is None:
        if space is None:
            raise InvalidArgumentError("mode matching needs the discrete space")
        perm = match_modes(spectrum, family, space)
    N = len(perm)
    modes = analytic_eigenpairs(family, N)
    lam = np.clip(spectrum.eigenvalues[perm], 0.0, None)
    ratio = np.sqrt(lam / modes.eigenvalues)
    return np.arange(1, N + 1) / N, ratio


# -- benchmark set-up ---------------------------------------------------------

SPECTRUM_BENCHMARKS = ("string1d", "drum2d-quad", "drum2d-tri")


def elements_for_target(P: int, d: int, target: int) -> int:
    """Elements per direction ``n`` with ``(P n)^d`` closest to ``target``."""
    n0 = max(1, int(round(target ** (1.0 / d) / P)))
    cands = [n for n in (n0 - 1, n0, n0 + 1) if n >= 1]
    return min(cands, key=lambda n: (abs((P * n) ** d - target), n))


def spectrum_problem(benchmark: str, P: int, bc: str = DIRICHLET, target_dofs: int | None = None,
                     material: MaterialScalar | None = None, n_elements: int | None = None):
    """Mesh, space and analytic family for a built-in spectrum benchmark.

    Returns ``(space, family)``.  Default sizes aim at about 100 DOFs in 1D
    and 900 in 2D.
    """
    material = material or MaterialScalar()
    rho, T = float(np.mean(material.rho)), float(np.mean(material.T))
    if benchmark == "string1d":
        if bc != DIRICHLET:
            raise InvalidArgumentError("string1d supports only dirichlet ends")
        n = n_elements or elements_for_target(P, 1, target_dofs or 100)
        mesh = generate_interval_mesh(1.0, n, DIRICHLET)
        family = AnalyticEigenFamily(INTERVAL_DIRICHLET, rho, T, 1.0)
    elif benchmark in ("drum2d-quad", "drum2d-tri"):
        if bc not in (DIRICHLET, NEUMANN):
            raise InvalidArgumentError("bc must be 'dirichlet' or 'neumann'")
        kind = ElementKind.QUAD if benchmark.endswith("quad") else ElementKind.TRIANGLE
        n = n_elements or elements_for_target(P, 2, target_dofs or 900)
        mesh = generate_grid_mesh((1.0, 1.0), (n, n), kind, bc)
        family = AnalyticEigenFamily(SQUARE_DIRICHLET if bc == DIRICHLET else SQUARE_NEUMANN, rho, T, 1.0)
    else:
        raise InvalidArgumentError(f"unknown benchmark {benchmark!r}; choose from {SPECTRUM_BENCHMARKS}")
    return DiscreteSpace(mesh, P), family


def compute_spectrum(space: DiscreteSpace, material: MaterialScalar | None = None, c: float = 0.0,
                     family: AnalyticEigenFamily | None = None, operators=None) -> Spectrum:
    """Eigenpairs of the mass-scaled system on ``space``; matched if ``family`` is given."""
    from .dynamics.scaling import scaled_operators

    ops = operators or scaled_operators(space, material)
    spec = solve_generalized_eigen(ops.K, ops.mass(c))
    spec.free = ops.free
    spec.ndofs = space.ndofs
    spec.metadata.update(c=float(c), P=space.order, ndofs=len(ops.free), tie_break="lexicographic")
    if family is not None:
        spec.matched_indices = match_modes(spec, family, space)
    return spec
