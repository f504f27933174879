"""Closed-form estimates for the mass-scaling factor and the critical step."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import EmptySystemError, InvalidArgumentError
from ..femcore import DiscreteSpace, MaterialScalar, assemble_interface_mass, assemble_mass, assemble_stiffness

SCALAR = "scalar"
VECTOR = "vector"


@dataclass(frozen=True)
class BetaEstimate:
    c: float
    d: int
    P: int
    h: float
    kind: str
    value: float

    def __float__(self):
        return self.value


def beta_coefficient(d: int, P: int, kind: str = SCALAR) -> float:
    """``beta / (c h^3)``: ``1 / (4 d^k pi^2 (2P^3 - P^2))`` with k=2 (scalar) or 4 (vector)."""
    if kind not in (SCALAR, VECTOR):
        raise InvalidArgumentError(f"kind must be {SCALAR!r} or {VECTOR!r}")
    if d not in (1, 2, 3) or P < 1:
        raise InvalidArgumentError("need d in {1, 2, 3} and P >= 1")
    power = 2 if kind == SCALAR else 4
    return 0.25 / (d**power * math.pi**2) / (2 * P**3 - P**2)


def estimate_beta(c: float, d: int, P: int, h: float, kind: str = SCALAR) -> BetaEstimate:
    """Element-local scaling factor ``beta`` (units of length cubed)."""
    if c < 0 or h <= 0:
        raise InvalidArgumentError("need c >= 0 and h > 0")
    value = c * beta_coefficient(d, P, kind) * h**3
    return BetaEstimate(float(c), int(d), int(P), float(h), kind, float(value))


def facet_betas(space: DiscreteSpace, c: float, kind: str = SCALAR) -> tuple[np.ndarray, np.ndarray]:
    """Per-facet ``beta`` for interior and boundary facets of ``space.mesh``.

    The facet size is the mean diameter of the adjacent elements.
    """
    hi, hb = space.mesh.facet_diameters()
    coef = c * beta_coefficient(space.mesh.dim, space.order, kind)
    return coef * hi**3, coef * hb**3


def lambda_max_estimate(material: MaterialScalar | float, d: int, P: int, h: float) -> float:
    """Largest analytic eigenvalue resolved by the mesh, ``(T/rho) (d pi P / h)^2``.

    ``material`` may also be the wave-speed ratio ``T/rho`` itself.
    """
    if isinstance(material, MaterialScalar):
        ratio = float(np.max(np.asarray(material.T)) / np.min(np.asarray(material.rho)))
    else:
        ratio = float(material)
    if ratio <= 0 or d < 1 or P < 1 or h <= 0:
        raise InvalidArgumentError("lambda_max_estimate needs positive inputs")
    return ratio * (d * math.pi * P / h) ** 2


def theta_prediction(c: float, b: float) -> float:
    """Predicted critical-step gain ``sqrt(c b + 1)``.

    ``b`` is the overprediction ratio of the unscaled maximum eigenvalue.
    """
    if c < 0 or b < 1:
        raise InvalidArgumentError("need c >= 0 and b >= 1")
    return math.sqrt(c * b + 1.0)


def critical_timestep(lambda_max: float) -> float:
    """Central-difference stability limit ``2 / sqrt(lambda_max)``."""
    if not lambda_max > 0:
        raise InvalidArgumentError("lambda_max must be positive")
    return 2.0 / math.sqrt(lambda_max)


def largest_eigenvalue(K, M, dense_limit: int = 1500) -> float:
    """Largest eigenvalue of ``K x = lambda M x`` for symmetric ``K`` and SPD ``M``.

    Small systems use a dense solve.  Larger ones take a rough Lanczos
    estimate, then refine it by shift-invert just above that estimate, which
    converges quickly even when the top of the spectrum is clustered.
    """
    from ..spectra import solve_generalized_eigen

    n = K.shape[0]
    if n <= dense_limit:
        return float(solve_generalized_eigen(K, M, eigenvectors=False).eigenvalues[-1])
    K = sp.csc_matrix(K)
    M = sp.csc_matrix(M)
    lu = spla.splu(M)
    Minv = spla.LinearOperator((n, n), matvec=lu.solve, dtype=float)
    # a constant start vector is orthogonal to antisymmetric modes on symmetric meshes
    v0 = np.random.default_rng(0).standard_normal(n)
    try:
        rough = spla.eigsh(K, k=1, M=M, Minv=Minv, which="LA", tol=1e-3, v0=v0,
                           return_eigenvectors=False)[0]
    except spla.ArpackNoConvergence as exc:
        if len(exc.eigenvalues) == 0:
            raise
        rough = float(np.max(exc.eigenvalues))
    # every eigenvalue lies below the shift, so the one nearest to it is the largest
    sigma = 1.05 * float(rough)
    while True:
        top = float(spla.eigsh(K, k=1, M=M, sigma=sigma, which="LM", tol=1e-10, v0=v0,
                               return_eigenvectors=False)[0])
        if top < sigma:
            return top
        sigma = 1.05 * top


@dataclass
class ScaledOperators:
    """Mass, stiffness and unit-``c`` interface mass on the free DOFs.

    ``mass(c)`` returns ``M + c * G`` where ``G`` already carries the per-facet
    ``beta / c`` weights, so sweeps over ``c`` reuse one assembly.
    """

    space: DiscreteSpace
    M: sp.csr_matrix
    K: sp.csr_matrix
    G: sp.csr_matrix
    free: np.ndarray

    def mass(self, c: float) -> sp.csr_matrix:
        return (self.M + c * self.G).tocsr() if c else self.M

    def tcrit(self, c: float, dense_limit: int = 1500) -> float:
        return critical_timestep(largest_eigenvalue(self.K, self.mass(c), dense_limit))


def scaled_operators(space: DiscreteSpace, material: MaterialScalar | None = None) -> ScaledOperators:
    """Assemble ``M``, ``K`` and the unit-``c`` interface mass, reduced to free DOFs."""
    material = material or MaterialScalar()
    bi, bb = facet_betas(space, 1.0)
    M = assemble_mass(space, material)
    K = assemble_stiffness(space, material)
    G = assemble_interface_mass(space, material, bi, bb)
    free = space.free_dofs
    if free.size == 0:
        raise EmptySystemError("every DOF is constrained")
    return ScaledOperators(space, M[free][:, free], K[free][:, free], G[free][:, free], free)
