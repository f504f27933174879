"""Saint Venant-Kirchhoff explicit dynamics with a linearised traction-jump mass.

The nonlinear model uses ``F = I + grad u``, ``E = (F^T F - I)/2``,
``S = lam tr(E) I + 2 mu E`` and ``P = F S``.  The mass-scaling term uses the
linear strain, so the scaled mass is assembled and factorised once.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from .dynamics import (
    VECTOR,
    SemiDiscreteSystem,
    State,
    TimeHistory,
    critical_timestep,
    facet_betas,
    integrate,
    largest_eigenvalue,
)
from .errors import InvalidArgumentError
from .femcore import DiscreteSpace, assemble_mass, interpolate, scatter
from .femcore.assembly import _weights, scatter_vector
from .meshkit import DIRICHLET, NEUMANN, ElementKind, Mesh, build_mesh, generate_grid_mesh


@dataclass(frozen=True)
class HyperelasticMaterial:
    rho0: float
    lam: float
    mu: float

    def __post_init__(self):
        if self.rho0 <= 0 or self.mu <= 0 or self.bulk <= 0:
            raise InvalidArgumentError("need rho0 > 0, mu > 0 and a positive bulk modulus")

    @classmethod
    def from_young(cls, rho0: float, E: float, nu: float) -> "HyperelasticMaterial":
        if not -1.0 < nu < 0.5 or E <= 0:
            raise InvalidArgumentError("need E > 0 and -1 < nu < 0.5")
        lam = E * nu / ((1 + nu) * (1 - 2 * nu))
        mu = E / (2 * (1 + nu))
        return cls(rho0, lam, mu)

    @property
    def bulk(self) -> float:
        return self.lam + 2.0 * self.mu / 3.0

    @property
    def modulus(self) -> float:
        """``|C| = max(mu, K)``."""
        return max(self.mu, self.bulk)

    @property
    def wave_speed(self) -> float:
        return math.sqrt((self.lam + 2 * self.mu) / self.rho0)


@dataclass(frozen=True)
class DeformationState:
    grad_u: np.ndarray
    F: np.ndarray
    E: np.ndarray
    S: np.ndarray
    P: np.ndarray


def _t(A):
    return np.swapaxes(A, -1, -2)


def stress_state(grad_u, material: HyperelasticMaterial) -> DeformationState:
    """Kinematics and stresses for one or many (trailing ``d x d``) gradients."""
    G = np.asarray(grad_u, dtype=float)
    d = G.shape[-1]
    eye = np.eye(d)
    F = eye + G
    E = 0.5 * (_t(F) @ F - eye)
    trE = np.trace(E, axis1=-2, axis2=-1)[..., None, None]
    S = material.lam * trE * eye + 2.0 * material.mu * E
    return DeformationState(G, F, E, S, F @ S)


def linear_strain(grad_u) -> np.ndarray:
    G = np.asarray(grad_u, dtype=float)
    return 0.5 * (G + _t(G))


def _check_vector(space: DiscreteSpace):
    if space.components != space.mesh.dim:
        raise InvalidArgumentError("hyperelastic operators need a vector space")


def _gradients(space: DiscreteSpace, u: np.ndarray):
    vd = space.volume_data()
    d = space.components
    ue = np.asarray(u, dtype=float)[space.dof_map].reshape(space.mesh.n_elements, -1, d)
    return vd, np.einsum("eai,eqaj->eqij", ue, vd.grads)


def strain_energy(space: DiscreteSpace, u: np.ndarray, material: HyperelasticMaterial) -> float:
    """``int lam/2 tr(E)^2 + mu E:E``."""
    _check_vector(space)
    vd, G = _gradients(space, u)
    st = stress_state(G, material)
    trE = np.trace(st.E, axis1=-2, axis2=-1)
    w = 0.5 * material.lam * trE**2 + material.mu * np.einsum("eqij,eqij->eq", st.E, st.E)
    return float(np.sum(w * vd.wdet))


def assemble_internal_force(space: DiscreteSpace, u: np.ndarray, material: HyperelasticMaterial) -> np.ndarray:
    """``f_(a,i) = int P_iJ d_J N_a``, the gradient of :func:`strain_energy`."""
    _check_vector(space)
    vd, G = _gradients(space, u)
    P = stress_state(G, material).P
    blocks = np.einsum("eqij,eqaj,eq->eai", P, vd.grads, vd.wdet)
    return scatter_vector(space.dof_map, blocks.reshape(len(blocks), -1), space.ndofs)


def tangent_modulus(st: DeformationState, material: HyperelasticMaterial) -> np.ndarray:
    """``A_iJkL = dP_iJ / dF_kL``."""
    F, S = st.F, st.S
    d = F.shape[-1]
    eye = np.eye(d)
    lam, mu = material.lam, material.mu
    FFt = F @ _t(F)
    A = np.einsum("ik,...jl->...ijkl", eye, S)
    A = A + lam * np.einsum("...ij,...kl->...ijkl", F, F)
    A = A + mu * np.einsum("...il,...kj->...ijkl", F, F)
    A = A + mu * np.einsum("...ik,jl->...ijkl", FFt, eye)
    return A


def assemble_linearized_stiffness(space: DiscreteSpace, u: np.ndarray, material: HyperelasticMaterial) -> sp.csr_matrix:
    """Tangent of the internal force about ``u``; small-strain stiffness at ``u = 0``."""
    _check_vector(space)
    vd, G = _gradients(space, u)
    A = tangent_modulus(stress_state(G, material), material)
    blocks = np.einsum("eqaj,eqijkl,eqbl,eq->eaibk", vd.grads, A, vd.grads, vd.wdet)
    E, nb, d = blocks.shape[:3]
    return scatter(space.dof_map, blocks.reshape(E, nb * d, nb * d), space.ndofs)


def _tractions(grads: np.ndarray, normals: np.ndarray, material: HyperelasticMaterial) -> np.ndarray:
    """``(C : eps(N_a e_i)) n`` as an array (f, q, a, i, m)."""
    d = grads.shape[-1]
    eye = np.eye(d)
    dn = np.einsum("fqam,fqm->fqa", grads, normals)
    t = material.lam * np.einsum("fqai,fqm->fqaim", grads, normals)
    t = t + material.mu * (np.einsum("fqa,im->fqaim", dn, eye) + np.einsum("fqam,fqi->fqaim", grads, normals))
    return t


def assemble_traction_jump_mass(space: DiscreteSpace, material: HyperelasticMaterial,
                                weights_interior=None, weights_boundary=None) -> sp.csr_matrix:
    """Unscaled linearised interface mass of a vector space.

    Interior facets give ``rho/|C|^2 [[(C:eps(v))n]] . [[(C:eps(w))n]]``;
    Neumann facets the same with one-sided tractions.  Dirichlet facets
    contribute nothing.
    """
    _check_vector(space)
    mesh = space.mesh
    coef = material.rho0 / material.modulus**2
    n = space.ndofs
    M = sp.csr_matrix((n, n))
    nint = len(mesh.interior_facets)
    if nint:
        fd = space.facet_data("interior")
        tl = _tractions(fd.left.grads, fd.normals, material)
        tr = _tractions(fd.right.grads, fd.normals, material)
        f, q = tl.shape[:2]
        jump = np.concatenate([tl.reshape(f, q, -1, tl.shape[-1]), -tr.reshape(f, q, -1, tr.shape[-1])], axis=2)
        w = fd.wds * (coef * _weights(weights_interior, nint))[:, None]
        blocks = np.einsum("fqam,fqbm,fq->fab", jump, jump, w)
        dofs = np.concatenate([space.dof_map[fd.left.elements], space.dof_map[fd.right.elements]], axis=1)
        M = M + scatter(dofs, blocks, n)
    neu = mesh.boundary_mask(NEUMANN)
    if np.any(neu):
        fd = space.facet_data("boundary", neu)
        t = _tractions(fd.left.grads, fd.normals, material)
        f, q = t.shape[:2]
        t = t.reshape(f, q, -1, t.shape[-1])
        wb = _weights(weights_boundary, len(mesh.boundary_facets))[neu]
        blocks = np.einsum("fqam,fqbm,fq->fab", t, t, fd.wds * (coef * wb)[:, None])
        M = M + scatter(space.dof_map[fd.left.elements], blocks, n)
    return M.tocsr()


def assemble_scaled_mass_linearized(space: DiscreteSpace, material: HyperelasticMaterial, c: float = 0.0,
                                    beta=None) -> sp.csr_matrix:
    """``M + beta M_Gamma^lin``.

    ``beta`` defaults to the vector-field estimate for factor ``c`` per
    facet; pass a scalar or ``(interior, boundary)`` arrays to override.
    """
    M = assemble_mass(space, rho=material.rho0)
    if beta is None:
        if c == 0:
            return M
        bi, bb = facet_betas(space, c, VECTOR)
    elif np.isscalar(beta):
        if beta == 0:
            return M
        bi = bb = float(beta)
    else:
        bi, bb = beta
    return (M + assemble_traction_jump_mass(space, material, bi, bb)).tocsr()


# -- beam benchmark -----------------------------------------------------------

def beam_initial_displacement(x, R: float = 0.15) -> np.ndarray:
    """Bend the straight beam onto an arc of radius ``R`` in the ``y = 0`` plane.

    ``x`` holds reference points (n, 3) or a single point.
    """
    if R <= 0:
        raise InvalidArgumentError("R must be positive")
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    X = np.atleast_2d(X)
    px, pz = X[:, 0], X[:, 2]
    out = np.zeros_like(X)
    out[:, 0] = (R - pz) * np.sin(px / R) - px
    out[:, 2] = R - (R - pz) * np.cos(px / R) - pz
    return out[0] if single else out


@dataclass
class BeamConfig:
    length: float = 0.2
    width: float = 0.02
    height: float = 0.01
    chamfer: float = 0.005  # removed along the (y = width, z = height) edge
    R: float = 0.15
    amplitude: float = 1.0  # multiplies the initial displacement
    rho: float = 2700.0
    E: float = 73e9
    nu: float = 0.33
    counts: tuple = (20, 4, 2)
    P: int = 1
    c: float = 0.0
    t_end: float = 0.01
    safety: float = 0.9
    dt: float | None = None  # overrides safety * dt_crit
    sample_every: int = 1

    def __post_init__(self):
        if min(self.length, self.width, self.height) <= 0:
            raise InvalidArgumentError("beam dimensions must be positive")
        if not 0 <= self.chamfer < min(self.width, self.height):
            raise InvalidArgumentError("chamfer must be smaller than the cross-section")
        if self.R <= self.length / math.pi:
            raise InvalidArgumentError("R must exceed length / pi")
        if self.P not in (1, 2):
            raise InvalidArgumentError("beam elements support P in {1, 2}")
        if self.c < 0 or self.t_end < 0 or self.safety <= 0:
            raise InvalidArgumentError("need c >= 0, t_end >= 0 and safety > 0")

    @property
    def material(self) -> HyperelasticMaterial:
        return HyperelasticMaterial.from_young(self.rho, self.E, self.nu)

    def as_dict(self) -> dict:
        out = asdict(self)
        out["counts"] = list(self.counts)
        return out


def beam_mesh(config: BeamConfig) -> Mesh:
    """Hex mesh of the chamfered beam, clamped at ``x = 0``, Neumann elsewhere.

    The chamfer lowers the top face linearly over the last ``chamfer`` of the
    width, so a node line must sit at ``y = width - chamfer``.
    """
    L, W, H, a = config.length, config.width, config.height, config.chamfer
    nx, ny, nz = (int(n) for n in config.counts)
    if a > 0:
        k = (W - a) / W * ny
        if abs(k - round(k)) > 1e-9:
            raise InvalidArgumentError("counts[1] must put a node line at y = width - chamfer")

    def tag(centroid, normal):
        return DIRICHLET if abs(centroid[0]) < 1e-12 * L else NEUMANN

    grid = generate_grid_mesh((L, W, H), (nx, ny, nz), ElementKind.HEX, tag)
    X = grid.nodes.copy()
    X[:, 2] -= X[:, 2] / H * np.maximum(0.0, X[:, 1] - (W - a))
    meta = dict(grid.metadata, benchmark="beam", length=L, width=W, height=H, chamfer=a)
    return build_mesh(X, ElementKind.HEX, grid.elements, tag, metadata=meta)


def _nearest_node(space: DiscreteSpace, point) -> int:
    return int(np.argmin(np.linalg.norm(space.node_coords - np.asarray(point), axis=1)))


def twist_angle(xa, xb, xc) -> float:
    """Rotation of the tip section about the beam axis, in radians.

    ``a -> b`` runs across the width and ``a -> c`` across the height of the
    tip face (deformed positions).  The angle is measured between ``a -> b``
    and the global ``y`` axis, both projected onto the section plane.
    """
    ab, ac = xb - xa, xc - xa
    normal = np.cross(ab, ac)
    normal /= np.linalg.norm(normal)
    ey = np.array([0.0, 1.0, 0.0])
    ref = ey - (ey @ normal) * normal
    v = ab - (ab @ normal) * normal
    return float(math.atan2(np.cross(ref, v) @ normal, ref @ v))


@dataclass
class BeamModel:
    """Assembled beam problem: mesh, space, operators on the free DOFs."""

    config: BeamConfig
    space: DiscreteSpace
    material: HyperelasticMaterial
    u0: np.ndarray  # full initial displacement
    M: sp.csr_matrix  # scaled mass, free DOFs
    K_lin: sp.csr_matrix  # tangent at u0, free DOFs
    free: np.ndarray
    probes: dict = field(default_factory=dict)

    def tcrit(self) -> float:
        return critical_timestep(largest_eigenvalue(self.K_lin, self.M))


def build_beam(config: BeamConfig) -> BeamModel:
    material = config.material
    space = DiscreteSpace(beam_mesh(config), config.P, components=3)
    u0 = config.amplitude * interpolate(space, lambda x: beam_initial_displacement(x, config.R))
    free = space.free_dofs
    M = assemble_scaled_mass_linearized(space, material, config.c)[free][:, free]
    K = assemble_linearized_stiffness(space, u0, material)[free][:, free]
    L, W, H = config.length, config.width, config.height
    probes = {
        "a": _nearest_node(space, (L, 0.0, 0.0)),
        "b": _nearest_node(space, (L, W, 0.0)),
        "c": _nearest_node(space, (L, 0.0, H)),
    }
    tip = np.flatnonzero(np.abs(space.node_coords[:, 0] - L) < 1e-9 * L)
    probes["tip"] = tip
    return BeamModel(config, space, material, u0, M.tocsr(), K.tocsr(), free, probes)


def beam_system(model: BeamModel) -> SemiDiscreteSystem:
    space, material = model.space, model.material
    return SemiDiscreteSystem(
        space, model.M, free=model.free,
        internal_force=lambda u: assemble_internal_force(space, u, material),
    )


def run_beam(config: BeamConfig, model: BeamModel | None = None, energy: bool = False) -> TimeHistory:
    """Release the bent beam from rest and step with central differences.

    Probes: ``tip`` (mean tip-face displacement), ``twist`` (radians) and,
    with ``energy=True``, ``energy`` (kinetic plus strain energy).
    """
    model = model or build_beam(config)
    space, material = model.space, model.material
    system = beam_system(model)
    tcrit = model.tcrit()
    dt = config.dt or config.safety * tcrit
    steps = int(math.ceil(config.t_end / dt - 1e-9)) if config.t_end > 0 else 0
    c = space.components
    X = space.node_coords
    pr = model.probes
    tip_dofs = (pr["tip"][:, None] * c + np.arange(c))

    def probe(state: State) -> dict:
        full = system.expand(state.u)
        disp = full.reshape(-1, c)
        pos = X + disp
        out = {
            "tip": full[tip_dofs].mean(axis=0),
            "twist": twist_angle(pos[pr["a"]], pos[pr["b"]], pos[pr["c"]]),
        }
        if energy:
            out["energy"] = system.kinetic_energy(state.v) + strain_energy(space, full, material)
        return out

    u0 = model.u0[model.free]
    _, history = integrate(system, u0, np.zeros_like(u0), dt, steps, "cd",
                           every=config.sample_every, probes=probe, keep_snapshots=False)
    history.metadata.update(config.as_dict(), tcrit=tcrit, dt=dt, steps=steps, ndofs=len(model.free))
    return history


def first_bending_period(model: BeamModel) -> float:
    """Period of the lowest small-strain vibration mode of the clamped beam."""
    import scipy.sparse.linalg as spla

    space = model.space
    K0 = assemble_linearized_stiffness(space, np.zeros(space.ndofs), model.material)[model.free][:, model.free]
    M0 = assemble_mass(space, rho=model.material.rho0)[model.free][:, model.free]
    lam = spla.eigsh(sp.csc_matrix(K0), k=1, M=sp.csc_matrix(M0), sigma=0.0, which="LM",
                     return_eigenvectors=False)[0]
    return 2 * math.pi / math.sqrt(lam)


def tcrit_gains(config: BeamConfig, cs) -> list[tuple[float, float, float]]:
    """``(c, dt_crit, dt_crit / dt_crit(c=0))`` from the linearised eigenproblem at ``u_IC``."""
    base_cfg = BeamConfig(**{**config.as_dict(), "c": 0.0, "counts": tuple(config.counts)})
    base = build_beam(base_cfg)
    space, material = base.space, base.material
    M = assemble_mass(space, rho=material.rho0)[base.free][:, base.free]
    G = assemble_traction_jump_mass(space, material, *facet_betas(space, 1.0, VECTOR))[base.free][:, base.free]
    t0 = critical_timestep(largest_eigenvalue(base.K_lin, M))
    out = []
    for c in cs:
        t = t0 if c == 0 else critical_timestep(largest_eigenvalue(base.K_lin, (M + c * G).tocsr()))
        out.append((float(c), t, t / t0))
    return out


# -- post-processing ------------------------------------------------------------

def blackman_window(n: int) -> np.ndarray:
    """Symmetric Blackman window ``0.42 - 0.5 cos a + 0.08 cos 2a``, ``a = 2 pi k / (n - 1)``.

    Evaluated in the factored form ``(1 - cos a)(2.125 - cos a) * 4/25`` so the
    end points are exactly 0 and, for odd ``n``, the centre exactly 1.
    """
    if n < 2:
        raise InvalidArgumentError("window needs at least 2 samples")
    a = math.pi * (2.0 * np.arange(n) / (n - 1))
    ca = np.cos(a)
    return (1.0 - ca) * (2.125 - ca) * 4.0 / 25.0


def dft_blackman(times, values, rtol: float = 1e-6) -> tuple[np.ndarray, np.ndarray]:
    """Blackman-windowed DFT magnitudes of uniformly sampled ``values``.

    Returns ``(frequency_hz, magnitude)`` for the non-negative frequencies.
    """
    t = np.asarray(times, dtype=float)
    y = np.asarray(values, dtype=float)
    if t.ndim != 1 or y.shape != t.shape or len(t) < 8:
        raise InvalidArgumentError("need at least 8 samples with matching times")
    dt = np.diff(t)
    if np.any(dt <= 0) or np.max(np.abs(dt - dt.mean())) > rtol * dt.mean():
        raise InvalidArgumentError("samples must be uniformly spaced")
    spec = np.abs(np.fft.rfft(y * blackman_window(len(y))))
    return np.fft.rfftfreq(len(y), dt.mean()), spec
