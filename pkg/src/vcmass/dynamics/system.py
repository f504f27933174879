"""Semi-discrete systems and explicit time integrators."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from ..errors import InstabilityError, InvalidArgumentError
from ..femcore import DiscreteSpace, LoadAssembler, MaterialScalar, assemble_load, evaluate
from .scaling import ScaledOperators, facet_betas, scaled_operators


class SemiDiscreteSystem:
    """``(M + beta M_Gamma) a + f_int(u) = F(t)`` on the free DOFs.

    The scaled mass is factorised once.  ``internal_force`` defaults to
    ``K u``; nonlinear problems pass their own callable (full DOF vector in,
    full force vector out).  Dirichlet values are homogeneous.
    """

    def __init__(
        self,
        space: DiscreteSpace,
        mass: sp.spmatrix,
        stiffness: sp.spmatrix | None = None,
        free: np.ndarray | None = None,
        loads: LoadAssembler | None = None,
        internal_force: Callable[[np.ndarray], np.ndarray] | None = None,
    ):
        if stiffness is None and internal_force is None:
            raise InvalidArgumentError("need a stiffness matrix or an internal force callable")
        self.space = space
        self.free = space.free_dofs if free is None else np.asarray(free)
        self.M = sp.csc_matrix(mass)
        self.K = None if stiffness is None else sp.csr_matrix(stiffness)
        self.loads = loads
        self._internal = internal_force
        self._lu = spla.splu(self.M)

    @classmethod
    def linear(cls, space: DiscreteSpace, material: MaterialScalar | None = None, c: float = 0.0,
               g=None, g_ddot=None, operators: ScaledOperators | None = None) -> "SemiDiscreteSystem":
        """Scalar wave problem with mass scaling factor ``c`` and Neumann data ``g``."""
        material = material or MaterialScalar()
        ops = operators or scaled_operators(space, material)
        loads = None
        if g is not None or g_ddot is not None:
            _, bb = facet_betas(space, c)
            loads = LoadAssembler(g, g_ddot, bb, material)
        return cls(space, ops.mass(c), ops.K, ops.free, loads)

    @property
    def size(self) -> int:
        return len(self.free)

    def expand(self, u: np.ndarray) -> np.ndarray:
        out = np.zeros(self.space.ndofs)
        out[self.free] = u
        return out

    def load(self, t: float) -> np.ndarray:
        if self.loads is None:
            return np.zeros(self.size)
        return assemble_load(self.space, self.loads, t)[self.free]

    def internal_force(self, u: np.ndarray) -> np.ndarray:
        if self._internal is None:
            return self.K @ u
        return self._internal(self.expand(u))[self.free]

    def acceleration(self, t: float, u: np.ndarray) -> np.ndarray:
        return self._lu.solve(self.load(t) - self.internal_force(u))

    def kinetic_energy(self, v: np.ndarray) -> float:
        return 0.5 * float(v @ (self.M @ v))

    def energy(self, u: np.ndarray, v: np.ndarray, potential: Callable | None = None) -> float:
        """Kinetic plus strain energy (``u^T K u / 2`` unless ``potential`` is given)."""
        pot = 0.5 * float(u @ (self.K @ u)) if potential is None else float(potential(self.expand(u)))
        return self.kinetic_energy(v) + pot


@dataclass
class State:
    t: float
    u: np.ndarray
    v: np.ndarray
    a: np.ndarray | None = None  # cached acceleration for central differences


def step_central_difference(state: State, dt: float, system) -> State:
    """One central-difference step in velocity form.

    ``system`` needs ``acceleration(t, u)``.  Equivalent to
    ``u_{n+1} - 2 u_n + u_{n-1} = dt^2 a_n``.
    """
    a = state.a if state.a is not None else system.acceleration(state.t, state.u)
    v_half = state.v + 0.5 * dt * a
    u = state.u + dt * v_half
    t = state.t + dt
    a_new = system.acceleration(t, u)
    return State(t, u, v_half + 0.5 * dt * a_new, a_new)


def step_rk4(state: State, dt: float, system) -> State:
    """Classic four-stage Runge-Kutta step of ``u' = v, v' = a(t, u)``."""
    t, u, v = state.t, state.u, state.v
    h = 0.5 * dt
    k1u, k1v = v, system.acceleration(t, u)
    k2u, k2v = v + h * k1v, system.acceleration(t + h, u + h * k1u)
    k3u, k3v = v + h * k2v, system.acceleration(t + h, u + h * k2u)
    k4u, k4v = v + dt * k3v, system.acceleration(t + dt, u + dt * k3u)
    u = u + dt / 6.0 * (k1u + 2 * k2u + 2 * k3u + k4u)
    v = v + dt / 6.0 * (k1v + 2 * k2v + 2 * k3v + k4v)
    return State(t + dt, u, v)


def rk4_ode_step(f: Callable, t: float, y, dt: float):
    """One RK4 step of the first-order system ``y' = f(t, y)``."""
    k1 = f(t, y)
    k2 = f(t + dt / 2, y + dt / 2 * k1)
    k3 = f(t + dt / 2, y + dt / 2 * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


INTEGRATORS = {"cd": step_central_difference, "rk4": step_rk4}


@dataclass
class TimeHistory:
    """Uniformly sampled trajectory; ``snapshots`` are reduced DOF vectors."""

    dt: float
    times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    probes: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def record(self, state: State, probes: dict | None = None, keep_snapshot: bool = True):
        self.times.append(state.t)
        if keep_snapshot:
            self.snapshots.append(state.u.copy())
        for name, value in (probes or {}).items():
            self.probes.setdefault(name, []).append(value)

    def probe(self, name: str) -> np.ndarray:
        return np.asarray(self.probes[name])


def integrate(
    system,
    u0: np.ndarray,
    v0: np.ndarray,
    dt: float,
    n_steps: int,
    integrator: str = "rk4",
    t0: float = 0.0,
    every: int | None = None,
    probes: Callable[[State], dict] | None = None,
    blowup: float = 1e8,
    keep_snapshots: bool = True,
) -> tuple[State, TimeHistory]:
    """Advance ``n_steps`` explicit steps of size ``dt``.

    Every ``every`` steps (and at the start) the state is recorded.  A
    non-finite state, or displacement growing beyond ``blowup`` times its
    initial size, raises :class:`InstabilityError`.
    """
    if dt <= 0 or n_steps < 0:
        raise InvalidArgumentError("need dt > 0 and n_steps >= 0")
    try:
        stepper = INTEGRATORS[integrator]
    except KeyError:
        raise InvalidArgumentError(f"unknown integrator {integrator!r}; choose from {sorted(INTEGRATORS)}") from None
    state = State(t0, np.array(u0, dtype=float), np.array(v0, dtype=float))
    history = TimeHistory(dt)
    history.record(state, probes(state) if probes else None, keep_snapshots)
    scale = max(np.max(np.abs(state.u), initial=0.0), dt * np.max(np.abs(state.v), initial=0.0))
    for k in range(1, n_steps + 1):
        state = stepper(state, dt, system)
        peak = np.max(np.abs(state.u), initial=0.0)
        if scale == 0.0:
            # start from rest: take the first response as the reference size
            scale = peak
        if not np.isfinite(peak) or peak > blowup * scale:
            raise InstabilityError(k, f"solution blew up (dt={dt:.6g})")
        if every and k % every == 0:
            history.record(state, probes(state) if probes else None, keep_snapshots)
    if not every or n_steps % every:
        history.record(state, probes(state) if probes else None, keep_snapshots)
    return state, history


def l2_error(space: DiscreteSpace, coefficients: np.ndarray, exact: Callable, degree: int | None = None) -> float:
    """``sqrt(int (u_h - u)^2)`` with quadrature of degree ``2P + 2``.

    ``coefficients`` is a full DOF vector; ``exact`` maps points (n, d) to
    values (n,) or (n, components).
    """
    degree = 2 * space.order + 2 if degree is None else degree
    vals, x, wdet = evaluate(space, coefficients, degree)
    d = space.mesh.dim
    ex = np.asarray(exact(x.reshape(-1, d)), dtype=float).reshape(vals.shape)
    diff = (vals - ex) ** 2
    if diff.ndim == 3:
        diff = diff.sum(axis=2)
    return float(np.sqrt(np.sum(diff * wdet)))
