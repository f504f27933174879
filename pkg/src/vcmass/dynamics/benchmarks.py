"""Forced-vibration benchmarks, convergence studies and critical-step tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from ..errors import InstabilityError, InvalidArgumentError
from ..femcore import DiscreteSpace, interpolate
from ..meshkit import DIRICHLET, NEUMANN, ElementKind, Mesh, generate_grid_mesh, generate_interval_mesh
from .scaling import lambda_max_estimate, largest_eigenvalue, scaled_operators, theta_prediction
from .system import SemiDiscreteSystem, integrate, l2_error

NINE_TERM = (
    (1.0, 3, 4),
    (0.8, 4, 3),
    (0.8, 6, 8),
    (0.6, 8, 6),
    (0.5, 5, 12),
    (0.2, 12, 5),
    (0.1, 9, 12),
    (0.05, 12, 9),
    (0.03, 8, 15),
)
SINGLE_MODE = ((1.0, 1, 1),)


@dataclass(frozen=True)
class StandingWaves:
    """``u = sum w cos(omega t) sin(n pi x) sin(m pi y)`` with ``omega = sqrt(n^2 + m^2) pi``.

    Exact for unit density and tension on the unit square; vanishes on its
    outer edges, so only interior cut-outs carry Neumann data.
    """

    terms: tuple = NINE_TERM

    @property
    def period(self) -> float:
        # every term has omega / pi = sqrt(n^2 + m^2); integer here
        ks = [math.sqrt(n * n + m * m) for _, n, m in self.terms]
        if all(abs(k - round(k)) < 1e-12 for k in ks):
            return 2.0 / math.gcd(*[int(round(k)) for k in ks])
        return 2.0 / min(ks)

    def _parts(self, t, x):
        for w, n, m in self.terms:
            om = math.sqrt(n * n + m * m) * math.pi
            sx, sy = np.sin(n * math.pi * x[:, 0]), np.sin(m * math.pi * x[:, 1])
            cx, cy = np.cos(n * math.pi * x[:, 0]), np.cos(m * math.pi * x[:, 1])
            yield w, n, m, om, sx, sy, cx, cy

    def u(self, t: float, x: np.ndarray) -> np.ndarray:
        return sum(w * math.cos(om * t) * sx * sy for w, n, m, om, sx, sy, cx, cy in self._parts(t, x))

    def v(self, t: float, x: np.ndarray) -> np.ndarray:
        return sum(-w * om * math.sin(om * t) * sx * sy for w, n, m, om, sx, sy, cx, cy in self._parts(t, x))

    def grad(self, t: float, x: np.ndarray, order: int = 0) -> np.ndarray:
        """Gradient of ``u`` (``order=0``) or of its second time derivative (``order=2``)."""
        out = np.zeros_like(x, dtype=float)
        for w, n, m, om, sx, sy, cx, cy in self._parts(t, x):
            a = w * math.cos(om * t) * (1.0 if order == 0 else -om * om)
            out[:, 0] += a * n * math.pi * cx * sy
            out[:, 1] += a * m * math.pi * sx * cy
        return out

    # Neumann data with the convention T d_n u = -g (unit tension)
    def g(self, t, x, n):
        return -np.einsum("pi,pi->p", self.grad(t, x), n)

    def g_ddot(self, t, x, n):
        return -np.einsum("pi,pi->p", self.grad(t, x, order=2), n)


BENCHMARKS = {"nine-term": StandingWaves(NINE_TERM), "single-mode": StandingWaves(SINGLE_MODE)}


def square_with_hole(n: int, kind=ElementKind.QUAD, hole: float = 0.5) -> Mesh:
    """Unit square with a centred square cut-out of side ``hole``.

    Outer edges are Dirichlet, cut-out edges Neumann.  ``n * hole / 2`` must
    be an integer so the cut-out follows grid lines.
    """
    k = n * hole / 2
    if n < 1 or abs(k - round(k)) > 1e-9 or not 0 < hole < 1:
        raise InvalidArgumentError("n * hole / 2 must be a positive integer and 0 < hole < 1")
    mesh = generate_grid_mesh((1.0, 1.0), (n, n), kind, DIRICHLET)
    cen = mesh.element_vertices().mean(axis=1)
    inside = np.all(np.abs(cen - 0.5) < hole / 2, axis=1)
    out = mesh.subset(~inside, NEUMANN)
    out.metadata.update(benchmark="square-hole", n=n, hole=hole)
    return out


def benchmark_mesh(name: str, n: int, kind=ElementKind.QUAD) -> Mesh:
    if name == "square":
        return generate_grid_mesh((1.0, 1.0), (n, n), kind, DIRICHLET)
    if name == "square-hole":
        return square_with_hole(n, kind)
    raise InvalidArgumentError(f"unknown benchmark mesh {name!r}; choose 'square' or 'square-hole'")


@dataclass
class ConvergenceRow:
    h: float
    error: float
    rate: float
    dt: float
    steps: int
    ndofs: int
    unstable_step: int | None = None


@dataclass
class ConvergenceTable:
    P: int
    c: float
    integrator: str
    T: float
    rows: list = field(default_factory=list)

    @property
    def errors(self) -> np.ndarray:
        return np.array([r.error for r in self.rows])

    @property
    def rates(self) -> np.ndarray:
        return np.array([r.rate for r in self.rows[1:]])


def _as_meshes(refinements, mesh_name, kind):
    out = []
    for r in refinements:
        out.append(r if isinstance(r, Mesh) else benchmark_mesh(mesh_name, int(r), kind))
    return out


def run_convergence(
    benchmark: StandingWaves | str,
    refinements,
    P: int,
    c: float,
    integrator: str = "rk4",
    safety: float = 0.9,
    T: float = 0.1,
    mesh: str = "square-hole",
    kind=ElementKind.QUAD,
    flag_instability: bool = False,
) -> ConvergenceTable:
    """L2 error at time ``T`` over a sequence of meshes.

    ``refinements`` holds element counts per direction for the built-in
    ``mesh`` or ready :class:`Mesh` objects (e.g. a user cut-out mesh over
    the unit square).  The step is ``safety * dt_crit(c)`` rounded down so
    that an integer number of steps reaches ``T``.  Rates are
    ``log(e_i / e_{i+1}) / log(h_i / h_{i+1})`` with ``h`` the largest element
    diameter.

    An unstable run raises :class:`InstabilityError` unless
    ``flag_instability`` is set, in which case its row records the failing
    step with a NaN error and the study moves on.
    """
    if isinstance(benchmark, str):
        try:
            benchmark = BENCHMARKS[benchmark]
        except KeyError:
            raise InvalidArgumentError(f"unknown benchmark {benchmark!r}; choose from {sorted(BENCHMARKS)}") from None
    table = ConvergenceTable(P, float(c), integrator, float(T))
    for mesh_obj in _as_meshes(refinements, mesh, kind):
        space = DiscreteSpace(mesh_obj, P)
        ops = scaled_operators(space)
        dt_crit = ops.tcrit(c)
        steps = max(1, math.ceil(T / (safety * dt_crit)))
        dt = T / steps
        system = SemiDiscreteSystem.linear(space, c=c, g=benchmark.g, g_ddot=benchmark.g_ddot, operators=ops)
        u0 = interpolate(space, lambda x: benchmark.u(0.0, x))[ops.free]
        v0 = interpolate(space, lambda x: benchmark.v(0.0, x))[ops.free]
        h = float(mesh_obj.diameters().max())
        try:
            state, _ = integrate(system, u0, v0, dt, steps, integrator, keep_snapshots=False)
        except InstabilityError as exc:
            if not flag_instability:
                raise
            table.rows.append(ConvergenceRow(h, math.nan, math.nan, dt, steps, len(ops.free), exc.step))
            continue
        err = l2_error(space, system.expand(state.u), lambda x: benchmark.u(T, x))
        rate = math.nan
        if table.rows and math.isfinite(table.rows[-1].error):
            prev = table.rows[-1]
            rate = math.log(prev.error / err) / math.log(prev.h / h)
        table.rows.append(ConvergenceRow(h, err, rate, dt, steps, len(ops.free)))
    return table


@dataclass
class TcritRow:
    refinement: int
    P: int
    c: float
    tcrit: float
    ratio: float


def tcrit_table(refinements, orders, cs, mesh: str = "square-hole", kind=ElementKind.QUAD) -> list[TcritRow]:
    """Critical central-difference step for every (refinement, P, c).

    ``ratio`` is relative to ``c = 0`` on the same mesh and order.
    """
    rows = []
    cs = list(cs)
    for level, mesh_obj in enumerate(_as_meshes(refinements, mesh, kind)):
        ref = refinements[level] if not isinstance(refinements[level], Mesh) else level
        for P in orders:
            ops = scaled_operators(DiscreteSpace(mesh_obj, P))
            base = ops.tcrit(0.0)
            for c in cs:
                t = base if c == 0 else ops.tcrit(c)
                rows.append(TcritRow(int(ref), int(P), float(c), t, t / base))
    return rows


@lru_cache(maxsize=None)
def overprediction_ratio(P: int, d: int = 1, target_dofs: int | None = None) -> float:
    """``b``: largest unscaled discrete eigenvalue over the analytic one.

    Measured on the Dirichlet line (d=1) or square (d=2) of about 100 or 900
    DOFs, where the analytic value is the ``(P n)^d``-th eigenvalue.
    """
    from ..spectra import elements_for_target

    target = target_dofs or (100 if d == 1 else 900)
    n = elements_for_target(P, d, target)
    if d == 1:
        mesh = generate_interval_mesh(1.0, n, DIRICHLET)
    elif d == 2:
        mesh = generate_grid_mesh((1.0, 1.0), (n, n), ElementKind.QUAD, DIRICHLET)
    else:
        raise InvalidArgumentError("overprediction_ratio supports d in {1, 2}")
    ops = scaled_operators(DiscreteSpace(mesh, P))
    lam_h = largest_eigenvalue(ops.K, ops.M)
    lam = lambda_max_estimate(1.0, d, P, float(mesh.diameters().max()))
    return lam_h / lam


def predicted_gain(c: float, P: int, d: int = 1) -> float:
    """``sqrt(c b + 1)`` with ``b`` from :func:`overprediction_ratio`."""
    return theta_prediction(c, max(1.0, overprediction_ratio(P, d)))


__all__ = [
    "NINE_TERM", "SINGLE_MODE", "BENCHMARKS", "StandingWaves", "square_with_hole", "benchmark_mesh",
    "ConvergenceRow", "ConvergenceTable", "run_convergence", "TcritRow", "tcrit_table",
    "overprediction_ratio", "predicted_gain",
]
