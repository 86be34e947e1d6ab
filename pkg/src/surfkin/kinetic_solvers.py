"""Time marchers for the kinetic surface-layer model hierarchy.

Four kinetic models share the same phase-space discretization (periodic x,
tangential velocity or energy, normal energy):

TrappedKineticSolver
    Closed layer in diffusion-scaled time: transport at v/eps, tangential
    acceleration a(x)/eps with a = -U'(x)/2, collisions at rate 1/(eps^2
    tau_ms).  As eps -> 0 the density obeys the drift-diffusion equation with
    D = tau_ms/2.

TwoGroupSolver
    Layer plus a prescribed ambient gas, in mesoscopic time (transport at v,
    collisions at 1/tau_ms).  Free cells (|e_z| above the barrier) exchange
    with the ambient at rate 1/(2 tau_z(e_z) eps): they relax toward
    l(e_z) f_s, integrated exactly (exponential), so the step is
    unconditionally stable and positivity-preserving.  Closed mode disables
    the exchange.

ChannelSolver
    Two facing layers in diffusion-scaled time.  Free cells of layer 1 pair
    with the mirrored (-e_z) free cells of layer 2; each pair's difference
    decays at 2 kappa/(2 eps tau_z) with kappa = 1/eps, 1, eps for the
    strong/moderate/weak coupling regimes.  Pair means are preserved exactly,
    so the exchange conserves mass to roundoff and, for data even in e_z,
    the two-layer sum evolves exactly as a single closed layer.

MesoSolver / FineTangentialSolver
    The homogenized model over (e_x, e_z) with cell-drift speeds w_x, and
    the resolved model with a microstructured tangential potential
    U(x) = U_hat(x / delta), both in mesoscopic time.  The fine solver
    advances cell masses with interface-open flux weights so mass
    conservation telescopes exactly even where cells are partially closed.

Each step is a Strang arrangement: half Vlasov sweep, full x-transport,
half Vlasov sweep, then an implicit (backward-Euler) collision step.  A
positivity guard clips negative cells and restores the per-x mass; it is a
bitwise no-op on nonnegative states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import backend
from .equilibrium_collision import (
    CollisionOperator,
    EnergyGrid,
    MesoCollisionOperator,
    VelocityGrid,
)
from .errors import (
    CFLViolation,
    DomainError,
    GridMismatch,
    ResolutionError,
)
from .potential_geometry import TangentialPotential

_SCHEMES = {
    "upwind": (backend.advect_x_upwind, backend.advect_v_upwind),
    "muscl": (backend.advect_x_muscl, backend.advect_v_muscl),
    "fromm": (backend.advect_x_fromm, backend.advect_v_fromm),
}


@dataclass(frozen=True)
class CosineTilt:
    """Macroscopic tangential potential U(x) = amplitude * cos(2 pi x / length).

    Drives the Vlasov term with acceleration a(x) = -U'(x)/2 and biases the
    diffusion limit toward N ~ exp(-U)."""

    amplitude: float
    length: float

    def u(self, x):
        return self.amplitude * np.cos(2.0 * np.pi * np.asarray(x) / self.length)

    def du(self, x):
        k = 2.0 * np.pi / self.length
        return -self.amplitude * k * np.sin(k * np.asarray(x))

    def accel(self, x):
        return -0.5 * self.du(x)

    @property
    def max_accel(self):
        return 0.5 * abs(self.amplitude) * 2.0 * np.pi / self.length


class PhaseGrid:
    """Periodic x-grid paired with the velocity and normal-energy grids."""

    def __init__(self, nx: int, length: float, vgrid: VelocityGrid,
                 egrid: EnergyGrid, epsilon: float):
        if nx < 2:
            raise DomainError("need at least two spatial cells")
        if not (np.isfinite(length) and length > 0):
            raise DomainError("domain length must be finite and positive")
        if not (np.isfinite(epsilon) and epsilon > 0):
            raise DomainError("scale parameter epsilon must be positive")
        self.nx = int(nx)
        self.length = float(length)
        self.dx = self.length / self.nx
        self.x = (np.arange(nx) + 0.5) * self.dx
        self.vgrid = vgrid
        self.egrid = egrid
        self.epsilon = float(epsilon)


class KineticState:
    """Cell-average values g[x, v, e_z] plus the clock."""

    def __init__(self, g, t: float = 0.0):
        # always copy: solvers advance arrays in place, so states built from
        # the same buffer must not alias each other
        self.g = np.array(g, dtype=np.float64, order="C")
        self.t = float(t)

    def copy(self):
        return KineticState(self.g.copy(), self.t)

    @classmethod
    def equilibrium(cls, grid: PhaseGrid, op: CollisionOperator, density=1.0):
        """Local discrete equilibrium with the given density profile.

        density may be a scalar, an (nx,) array, or a callable of x; the
        density moment of the result matches it exactly per cell.
        """
        prof = density(grid.x) if callable(density) else density
        prof = np.broadcast_to(np.asarray(prof, dtype=float), (grid.nx,))
        g = prof[:, None, None] * op.equilibrium_unit_density()[None, :, :]
        return cls(g)


class MesoState:
    """Cell-average values h[x, e_x, e_z] for the homogenized model."""

    def __init__(self, h, t: float = 0.0):
        self.h = np.array(h, dtype=np.float64, order="C")
        self.t = float(t)

    def copy(self):
        return MesoState(self.h.copy(), self.t)

    @classmethod
    def equilibrium(cls, x, mop: MesoCollisionOperator, density=1.0):
        x = np.asarray(x)
        prof = density(x) if callable(density) else density
        prof = np.broadcast_to(np.asarray(prof, dtype=float), x.shape)
        h = prof[:, None, None] * mop.equilibrium_unit_density()[None, :, :]
        return cls(h)


class AmbientBoundary:
    """Ambient gas seen by the free molecules of the two-group model.

    mode 'closed' seals the layer; 'prescribed' relaxes free cells toward
    l(e_z) * f_s with the given ambient values f_s[v, e_z] (only free-energy
    columns are consulted).
    """

    def __init__(self, mode: str, f_s=None):
        if mode not in ("closed", "prescribed"):
            raise DomainError(f"unknown ambient mode {mode!r}")
        if mode == "prescribed" and f_s is None:
            raise DomainError("prescribed ambient needs f_s values")
        self.mode = mode
        self.f_s = None if f_s is None else np.asarray(f_s, dtype=float)

    @classmethod
    def closed(cls):
        return cls("closed")

    @classmethod
    def vacuum(cls, op: CollisionOperator):
        """Prescribed empty ambient: free molecules leak out and none return."""
        return cls("prescribed", np.zeros((op.vgrid.n, op.egrid.n)))

    @classmethod
    def equilibrium(cls, op: CollisionOperator, density: float = 1.0):
        """Ambient in detailed balance with the discrete layer equilibrium:
        l * f_s equals the equilibrium cell values exactly."""
        g_eq = density * op.equilibrium_unit_density()
        f_s = g_eq / op.ell_cells[None, :]
        return cls("prescribed", f_s)


def positivity_guard(g, mass_weights):
    """Clip negative cells and restore each x-slice's mass by rescaling.

    Returns the total clipped mass.  Exact no-op (including bitwise) when
    the state is already nonnegative.
    """
    neg = g < 0.0
    if not neg.any():
        return 0.0
    m0 = np.sum(g * mass_weights, axis=(-2, -1))
    clipped = -float(np.sum(g[neg] * np.broadcast_to(mass_weights, g.shape)[neg]))
    np.clip(g, 0.0, None, out=g)
    m1 = np.sum(g * mass_weights, axis=(-2, -1))
    scale = np.where(m1 > 0.0, m0 / np.where(m1 > 0.0, m1, 1.0), 1.0)
    g *= scale[..., None, None]
    return clipped


class _SplitCore:
    """Shared Strang substeps (Vlasov/transport/collision) for one layer."""

    def __init__(self, grid: PhaseGrid, op: CollisionOperator, dt: float,
                 transport_rate: float, collision_lam: float, tilt, scheme: str,
                 collision_tol: float, accelerate: bool, cfl: float):
        if scheme not in _SCHEMES:
            raise DomainError(f"unknown advection scheme {scheme!r}; "
                              f"choose from {sorted(_SCHEMES)}")
        if op.egrid is not grid.egrid and not np.array_equal(
                op.egrid.edges, grid.egrid.edges):
            raise GridMismatch("collision operator and phase grid use "
                               "different energy grids")
        if op.vgrid is not grid.vgrid and not np.array_equal(
                op.vgrid.edges, grid.vgrid.edges):
            raise GridMismatch("collision operator and phase grid use "
                               "different velocity grids")
        self.grid = grid
        self.op = op
        self.dt = float(dt)
        self.tilt = tilt
        self.lam = collision_lam
        self.tol = collision_tol
        self.accelerate = accelerate
        self._advect_x, self._advect_v = _SCHEMES[scheme]

        # moment-matched speed set: scaling both the speeds and their
        # spacing keeps the emergent diffusion constant and the drift /
        # diffusion ratio of the discrete model exact
        v = grid.vgrid.transport_speeds()
        dv = grid.vgrid.transport_scale() * grid.vgrid.dv
        self.nu_x = np.ascontiguousarray(v * transport_rate * dt / grid.dx)
        cour_x = float(np.max(np.abs(self.nu_x)))
        if tilt is not None:
            a = tilt.accel(grid.x) * transport_rate
            self.nu_v_half = np.ascontiguousarray(0.5 * a * dt / dv)
            cour_v = float(np.max(np.abs(2.0 * self.nu_v_half)))
        else:
            self.nu_v_half = None
            cour_v = 0.0
        worst = max(cour_x, cour_v)
        if worst > cfl * (1.0 + 1e-12):
            raise CFLViolation(
                f"dt={dt:g} gives Courant number {worst:.3f} > {cfl:g}"
            )

    def advance(self, g):
        if self.nu_v_half is not None:
            self._advect_v(g, self.nu_v_half)
        self._advect_x(g, self.nu_x)
        if self.nu_v_half is not None:
            self._advect_v(g, self.nu_v_half)
        return self.op.implicit_update(g, self.lam, tol=self.tol,
                                       accelerate=self.accelerate)


def _auto_dt(grid: PhaseGrid, transport_rate: float, tilt, cfl: float) -> float:
    s = grid.vgrid.transport_scale()
    bound = grid.dx / (s * grid.vgrid.v_max * transport_rate)
    if tilt is not None and tilt.max_accel > 0:
        bound = min(bound, s * grid.vgrid.dv / (tilt.max_accel * transport_rate))
    return cfl * bound


class TrappedKineticSolver:
    """Closed-layer kinetic solver in diffusion-scaled time."""

    transport_clock = "diffusion"

    def __init__(self, grid: PhaseGrid, op: CollisionOperator,
                 tau_ms: float = 1.0, tilt: CosineTilt | None = None,
                 scheme: str = "upwind", dt: float | None = None,
                 cfl: float = 0.9, collision_tol: float = 1e-12,
                 accelerate: bool = True, guard: bool = True):
        if tau_ms <= 0:
            raise DomainError("collision time tau_ms must be positive")
        rate = 1.0 / grid.epsilon
        if dt is None:
            dt = _auto_dt(grid, rate, tilt, cfl)
        self.dt = float(dt)
        self.tau_ms = float(tau_ms)
        self.guard = guard
        lam = self.dt / (grid.epsilon ** 2 * tau_ms)
        self.core = _SplitCore(grid, op, self.dt, rate, lam, tilt, scheme,
                               collision_tol, accelerate, cfl)
        self.grid = grid
        self.op = op
        self.clipped_mass = 0.0
        self._remake = lambda new_dt: TrappedKineticSolver(
            grid, op, tau_ms=tau_ms, tilt=tilt, scheme=scheme, dt=new_dt,
            cfl=cfl, collision_tol=collision_tol, accelerate=accelerate,
            guard=guard)

    def with_dt(self, dt: float):
        return self._remake(dt)

    def density(self, state: KineticState):
        return self.op.density(state.g)

    def flux(self, state: KineticState):
        """Velocity moment in the solver clock: (1/eps) sum g v dv de."""
        v = self.grid.vgrid.transport_speeds() / self.grid.epsilon
        return np.einsum("xvi,v,vi->x", state.g, v, self.op.mass_weights)

    def total_mass(self, state: KineticState) -> float:
        return float(np.sum(self.density(state)) * self.grid.dx)

    def step(self, state: KineticState, n: int = 1):
        for _ in range(n):
            state.g = self.core.advance(state.g)
            if self.guard:
                self.clipped_mass += positivity_guard(state.g,
                                                      self.op.mass_weights)
            state.t += self.dt
        return state

    def run(self, state: KineticState, t_final: float, callback=None,
            callback_every: int = 1):
        return _run_loop(self, state, t_final, callback, callback_every)


def _run_loop(solver, state, t_final, callback, callback_every):
    """March state to t_final in full steps plus one adjusted final step."""
    if callback is not None:
        callback(state, 0)
    istep = 0
    while state.t < t_final - 1e-12 * max(1.0, abs(t_final)):
        remainder = t_final - state.t
        if remainder < solver.dt * (1.0 - 1e-9):
            tmp = solver.with_dt(remainder)
            tmp.step(state)
            for attr in ("clipped_mass", "emitted_mass", "absorbed_mass"):
                if hasattr(solver, attr):
                    setattr(solver, attr,
                            getattr(solver, attr) + getattr(tmp, attr))
        else:
            solver.step(state)
        istep += 1
        if callback is not None and istep % callback_every == 0:
            callback(state, istep)
    return state


class TwoGroupSolver:
    """Layer with ambient exchange for free molecules, in mesoscopic time."""

    transport_clock = "mesoscopic"

    def __init__(self, grid: PhaseGrid, op: CollisionOperator,
                 ambient: AmbientBoundary, tau_ms: float = 1.0,
                 tilt: CosineTilt | None = None, scheme: str = "upwind",
                 dt: float | None = None, cfl: float = 0.9,
                 collision_tol: float = 1e-12, accelerate: bool = True,
                 guard: bool = True):
        if tau_ms <= 0:
            raise DomainError("collision time tau_ms must be positive")
        if dt is None:
            dt = _auto_dt(grid, 1.0, tilt, cfl)
        self.dt = float(dt)
        self.guard = guard
        lam = self.dt / tau_ms
        self.core = _SplitCore(grid, op, self.dt, 1.0, lam, tilt, scheme,
                               collision_tol, accelerate, cfl)
        self.grid = grid
        self.op = op
        self.ambient = ambient
        self.clipped_mass = 0.0
        self.emitted_mass = 0.0
        self.absorbed_mass = 0.0

        self._free = np.where(~op.egrid.trapped)[0]
        if ambient.mode == "prescribed":
            if ambient.f_s.shape != (op.vgrid.n, op.egrid.n):
                raise GridMismatch("ambient f_s values do not match the "
                                   "(v, e_z) grid")
            rate = 1.0 / (2.0 * op.tau_cells[self._free] * grid.epsilon)
            self._decay = -np.expm1(-rate * self.dt)  # 1 - exp(-r dt), exact
            self._target = (op.ell_cells[None, self._free]
                            * ambient.f_s[:, self._free])
        self._remake = lambda new_dt: TwoGroupSolver(
            grid, op, ambient, tau_ms=tau_ms, tilt=tilt, scheme=scheme,
            dt=new_dt, cfl=cfl, collision_tol=collision_tol,
            accelerate=accelerate, guard=guard)

    def with_dt(self, dt: float):
        return self._remake(dt)

    def density(self, state: KineticState):
        return self.op.density(state.g)

    def flux(self, state: KineticState):
        """Velocity moment in mesoscopic time: sum g v dv de."""
        v = self.grid.vgrid.transport_speeds()
        return np.einsum("xvi,v,vi->x", state.g, v, self.op.mass_weights)

    def total_mass(self, state: KineticState) -> float:
        return float(np.sum(self.density(state)) * self.grid.dx)

    def outgoing_distribution(self, state: KineticState):
        """Record of the distribution leaving the layer, g_free / l."""
        return state.g[..., self._free] / self.op.ell_cells[self._free]

    def _exchange(self, g):
        gf = g[..., self._free]
        delta = (self._target[None, :, :] - gf) * self._decay[None, None, :]
        w = self.op.mass_weights[:, self._free]
        self.emitted_mass += float(np.sum(gf * self._decay * w)) * self.grid.dx
        self.absorbed_mass += float(
            np.sum(self._target * self._decay * w)) * self.grid.dx * self.grid.nx
        g[..., self._free] = gf + delta

    def step(self, state: KineticState, n: int = 1):
        for _ in range(n):
            state.g = self.core.advance(state.g)
            if self.ambient.mode == "prescribed":
                self._exchange(state.g)
            if self.guard:
                self.clipped_mass += positivity_guard(state.g,
                                                      self.op.mass_weights)
            state.t += self.dt
        return state

    def run(self, state: KineticState, t_final: float, callback=None,
            callback_every: int = 1):
        return _run_loop(self, state, t_final, callback, callback_every)


_CHANNEL_REGIMES = ("strong", "moderate", "weak")


class ChannelSolver:
    """Two facing layers coupled through their free molecules.

    The coupling strength kappa is 1/eps (strong), 1 (moderate) or eps
    (weak); free-cell pair differences decay exactly as exp(-2 r dt) with
    r = kappa / (2 eps tau_z), preserving pair means.  Both layers advance
    with the identical substep core used by TrappedKineticSolver, so for
    even-in-e_z data the layer sum reproduces the closed-layer solution to
    roundoff.
    """

    transport_clock = "diffusion"

    def __init__(self, grid: PhaseGrid, op: CollisionOperator,
                 regime: str = "moderate", tau_ms: float = 1.0,
                 tilt: CosineTilt | None = None, scheme: str = "upwind",
                 dt: float | None = None, cfl: float = 0.9,
                 collision_tol: float = 1e-12, accelerate: bool = True,
                 guard: bool = True):
        if regime not in _CHANNEL_REGIMES:
            raise DomainError(f"unknown coupling regime {regime!r}; choose "
                              f"from {_CHANNEL_REGIMES}")
        if tau_ms <= 0:
            raise DomainError("collision time tau_ms must be positive")
        rate = 1.0 / grid.epsilon
        if dt is None:
            dt = _auto_dt(grid, rate, tilt, cfl)
        self.dt = float(dt)
        self.guard = guard
        lam = self.dt / (grid.epsilon ** 2 * tau_ms)
        self.core = _SplitCore(grid, op, self.dt, rate, lam, tilt, scheme,
                               collision_tol, accelerate, cfl)
        self.grid = grid
        self.op = op
        self.regime = regime
        kappa = {"strong": 1.0 / grid.epsilon, "moderate": 1.0,
                 "weak": grid.epsilon}[regime]
        self._free = np.where(~op.egrid.trapped)[0]
        self._mirror = op.egrid.mirror[self._free]
        r = kappa / (2.0 * grid.epsilon * op.tau_cells[self._free])
        self._pair_factor = np.exp(-2.0 * r * self.dt)
        self.clipped_mass = 0.0

    def density(self, state: KineticState):
        return self.op.density(state.g)

    def flux(self, state: KineticState):
        v = self.grid.vgrid.transport_speeds() / self.grid.epsilon
        return np.einsum("xvi,v,vi->x", state.g, v, self.op.mass_weights)

    def total_mass(self, state: KineticState) -> float:
        return float(np.sum(self.density(state)) * self.grid.dx)

    def _exchange(self, g1, g2):
        a = g1[..., self._free]
        b = g2[..., self._mirror]
        mean = 0.5 * (a + b)
        half = 0.5 * (a - b) * self._pair_factor[None, None, :]
        g1[..., self._free] = mean + half
        g2[..., self._mirror] = mean - half

    def step(self, s1: KineticState, s2: KineticState, n: int = 1):
        for _ in range(n):
            s1.g = self.core.advance(s1.g)
            s2.g = self.core.advance(s2.g)
            self._exchange(s1.g, s2.g)
            if self.guard:
                self.clipped_mass += positivity_guard(s1.g, self.op.mass_weights)
                self.clipped_mass += positivity_guard(s2.g, self.op.mass_weights)
            s1.t += self.dt
            s2.t += self.dt
        return s1, s2

    def run(self, s1: KineticState, s2: KineticState, t_final: float,
            callback=None, callback_every: int = 1):
        istep = 0
        if callback is not None:
            callback(s1, s2, 0)
        while s1.t < t_final - 1e-12 * max(1.0, t_final):
            self.step(s1, s2)
            istep += 1
            if callback is not None and istep % callback_every == 0:
                callback(s1, s2, istep)
        return s1, s2


class MesoSolver:
    """Homogenized solver: drift at the cell-average speeds w_x(e_x)."""

    transport_clock = "mesoscopic"

    def __init__(self, x_length: float, nx: int, mop: MesoCollisionOperator,
                 tau_ms: float = 1.0, scheme: str = "upwind",
                 dt: float | None = None, cfl: float = 0.9,
                 collision_tol: float = 1e-12, accelerate: bool = True,
                 guard: bool = True):
        if scheme not in _SCHEMES:
            raise DomainError(f"unknown advection scheme {scheme!r}")
        if tau_ms <= 0:
            raise DomainError("collision time tau_ms must be positive")
        self.nx = int(nx)
        self.length = float(x_length)
        self.dx = self.length / self.nx
        self.x = (np.arange(self.nx) + 0.5) * self.dx
        self.mop = mop
        w_max = float(np.max(np.abs(mop.drift)))
        if dt is None:
            dt = cfl * self.dx / w_max if w_max > 0 else cfl * self.dx
        self.dt = float(dt)
        self.nu = np.ascontiguousarray(mop.drift * self.dt / self.dx)
        worst = float(np.max(np.abs(self.nu)))
        if worst > cfl * (1.0 + 1e-12):
            raise CFLViolation(f"dt={dt:g} gives meso Courant {worst:.3f}")
        self.lam = self.dt / tau_ms
        self.tol = collision_tol
        self.accelerate = accelerate
        self.guard = guard
        self._advect, _ = _SCHEMES[scheme]
        self.clipped_mass = 0.0
        self._remake = lambda new_dt: MesoSolver(
            x_length, nx, mop, tau_ms=tau_ms, scheme=scheme, dt=new_dt,
            cfl=cfl, collision_tol=collision_tol, accelerate=accelerate,
            guard=guard)

    def with_dt(self, dt: float):
        return self._remake(dt)

    def density(self, state: MesoState):
        return self.mop.density(state.h)

    def flux(self, state: MesoState):
        """Drift moment: sum h w_x (mass weights); bound cells contribute 0."""
        return np.einsum("xai,a,ai->x", state.h, self.mop.drift,
                         self.mop.mass_weights)

    def total_mass(self, state: MesoState) -> float:
        return float(np.sum(self.density(state)) * self.dx)

    def step(self, state: MesoState, n: int = 1):
        for _ in range(n):
            self._advect(state.h, self.nu)
            state.h = self.mop.implicit_update(state.h, self.lam, tol=self.tol,
                                               accelerate=self.accelerate)
            if self.guard:
                self.clipped_mass += positivity_guard(state.h,
                                                      self.mop.mass_weights)
            state.t += self.dt
        return state

    def run(self, state: MesoState, t_final: float, callback=None,
            callback_every: int = 1):
        return _run_loop(self, state, t_final, callback, callback_every)


class FineState:
    """Cell masses m[x, e_x, e_z] for the resolved tangential model."""

    def __init__(self, masses, t: float = 0.0):
        self.m = np.array(masses, dtype=np.float64, order="C")
        self.t = float(t)

    def copy(self):
        return FineState(self.m.copy(), self.t)


class FineTangentialSolver:
    """Resolved solver for a microstructured tangential potential.

    The potential is U(x) = U_hat(x / delta) with U_hat the unit-cell
    profile; the domain length must hold an integer number of cells and the
    mesh must resolve them (dx <= delta / 16, else ResolutionError).  The
    transported unknowns are cell masses with x-local open-window weights,
    so conservation telescopes exactly across partially closed cells.
    """

    transport_clock = "mesoscopic"

    def __init__(self, x_length: float, nx: int,
                 tangential: TangentialPotential, delta: float,
                 exgrid: EnergyGrid, zop: CollisionOperator,
                 tau_ms: float = 1.0, dt: float | None = None,
                 cfl: float = 0.9, collision_tol: float = 1e-12,
                 accelerate: bool = True, guard: bool = True):
        from scipy.special import erfc

        exgrid.compatible_with_barrier(tangential.u_m, "tangential-potential")
        if tau_ms <= 0:
            raise DomainError("collision time tau_ms must be positive")
        n_cells = x_length / delta
        if abs(n_cells - round(n_cells)) > 1e-9:
            raise GridMismatch("domain length must be an integer number of "
                               "microstructure cells")
        self.nx = int(nx)
        self.length = float(x_length)
        self.dx = self.length / self.nx
        if self.dx > delta / 16.0 * (1.0 + 1e-12):
            raise ResolutionError(
                f"dx={self.dx:g} too coarse for microstructure delta={delta:g}"
                f" (need dx <= delta/16)"
            )
        self.x = (np.arange(self.nx) + 0.5) * self.dx
        self.delta = float(delta)
        self.tangential = tangential
        self.exgrid = exgrid
        self.zop = zop

        u_c = tangential.value(self.x / delta)            # cell centres
        u_if = tangential.value((self.x - 0.5 * self.dx) / delta)  # left faces
        lo = np.minimum(np.abs(exgrid.edges[:-1]), np.abs(exgrid.edges[1:]))
        hi = np.maximum(np.abs(exgrid.edges[:-1]), np.abs(exgrid.edges[1:]))
        sgn = np.sign(exgrid.centers)

        u_lo = np.sqrt(np.maximum(lo[None, :] ** 2 - u_c[:, None], 0.0))
        u_hi = np.sqrt(np.maximum(hi[None, :] ** 2 - u_c[:, None], 0.0))
        # plain and Maxwellian-weighted open-window weights per (x, e_x) cell
        self.w_plain = u_hi - u_lo
        self.w_maxw = (math.sqrt(math.pi) / 2.0 * np.exp(-u_c)[:, None]
                       * (erfc(u_lo) - erfc(u_hi)))
        self.w_maxw_sum = self.w_maxw.sum(axis=1)
        # Face openness uses the highest potential a crossing particle must
        # pass (face value capped below by both neighbouring centres), so no
        # mass tunnels through a cell whose centre is classically forbidden.
        u_barrier = np.maximum(u_if, np.maximum(u_c, np.roll(u_c, 1)))
        open_hi = np.maximum(hi[None, :] ** 2 - u_barrier[:, None], 0.0)
        open_lo = np.maximum(lo[None, :] ** 2 - u_barrier[:, None], 0.0)
        # signed flux factor J = integral of e de over the open face window
        self.jflux = 0.5 * sgn[None, :] * (open_hi - open_lo)
        self._jcenter = 0.5 * sgn[None, :] * (u_hi ** 2 - u_lo ** 2)

        e_max = float(np.abs(exgrid.edges).max())
        if dt is None:
            dt = cfl * self.dx / e_max
        self.dt = float(dt)
        if self.dt * e_max / self.dx > cfl * (1.0 + 1e-12):
            raise CFLViolation(f"dt={dt:g} exceeds the fine-transport bound")
        self._jc = np.ascontiguousarray(self.jflux * self.dt / self.dx)
        self.lam = self.dt / tau_ms
        self.tol = collision_tol
        self.accelerate = accelerate
        self.guard = guard
        self.clipped_mass = 0.0
        self._remake = lambda new_dt: FineTangentialSolver(
            x_length, nx, tangential, delta, exgrid, zop, tau_ms=tau_ms,
            dt=new_dt, cfl=cfl, collision_tol=collision_tol,
            accelerate=accelerate, guard=guard)

    def with_dt(self, dt: float):
        return self._remake(dt)

    def equilibrium(self, density=1.0) -> FineState:
        """Well-prepared masses: profile times the local equilibrium shape.

        The returned density keeps the exp(-U(x/delta)) microstructure
        pattern; the profile multiplies it, normalized so that a unit
        profile carries unit mean density.
        """
        prof = density(self.x) if callable(density) else density
        prof = np.broadcast_to(np.asarray(prof, dtype=float), (self.nx,))
        shape = self.w_maxw[:, :, None] * self.zop.mu[None, None, :]
        norm = float(self.w_maxw_sum.mean() * self.zop.mu.sum())
        return FineState(prof[:, None, None] * shape / norm)

    def values(self, state: FineState):
        """Cell-average distribution values m / (open weight * de)."""
        w = self.w_plain[:, :, None] * self.zop.egrid.widths[None, None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.where(w > 0.0, state.m / np.where(w > 0.0, w, 1.0), 0.0)
        return np.ascontiguousarray(h)

    def _flux_variable(self, m):
        """Per-z-cell mass form h_a = m / w_plain, donor-limited so that no
        cell empties by more than the stability cap in one step."""
        out_face = np.where(self.exgrid.centers[None, :] > 0,
                            np.abs(np.roll(self._jc, -1, axis=0)),
                            np.abs(self._jc))
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_w = np.where(self.w_plain > 0.0, 1.0 /
                             np.where(self.w_plain > 0.0, self.w_plain, 1.0),
                             0.0)
            cap = np.where(out_face > 0.0, 0.95 /
                           np.where(out_face > 0.0, out_face, 1.0), 0.0)
        factor = np.where(self.w_plain > 0.0, np.minimum(inv_w, cap), cap)
        return np.ascontiguousarray(m * factor[:, :, None])

    def density(self, state: FineState):
        return state.m.sum(axis=(1, 2))

    def flux(self, state: FineState):
        """Velocity moment from the cell-centre open windows."""
        with np.errstate(divide="ignore", invalid="ignore"):
            inv_w = np.where(self.w_plain > 0.0, 1.0 /
                             np.where(self.w_plain > 0.0, self.w_plain, 1.0),
                             0.0)
        return np.einsum("xaj,xa->x", state.m, inv_w * self._jcenter)

    def total_mass(self, state: FineState) -> float:
        return float(np.sum(state.m) * self.dx)

    def block_average_density(self, state: FineState, block_width: float):
        """Density averaged over x-blocks (for comparisons across models)."""
        per = block_width / self.dx
        if abs(per - round(per)) > 1e-9:
            raise GridMismatch("block width must be a multiple of dx")
        per = int(round(per))
        n = self.density(state)
        return n.reshape(-1, per).mean(axis=1)

    def step(self, state: FineState, n: int = 1):
        from .equilibrium_collision import picard_kernel_solve

        for _ in range(n):
            h = self._flux_variable(state.m)
            backend.advect_fine_masses(state.m, h, self._jc)
            # collision: per-x fugacity solve on the z-kernel
            col = state.m.sum(axis=1)                       # (nx, ne)
            qstar = col / (self.w_maxw_sum[:, None] * self.zop.mu[None, :])
            q = picard_kernel_solve(lambda v: v @ self.zop.p.T, qstar,
                                    self.zop.mu, self.lam, self.tol,
                                    200, self.accelerate)
            theta = q @ self.zop.p.T
            gain = (theta[:, None, :] * self.w_maxw[:, :, None]
                    * self.zop.mu[None, None, :])
            m_new = (state.m + self.lam * gain) / (1.0 + self.lam)
            m_in = state.m.sum(axis=(1, 2))
            m_out = m_new.sum(axis=(1, 2))
            m_gain = gain.sum(axis=(1, 2))
            corr = (m_in - m_out) * (1.0 + self.lam) / self.lam
            safe = np.where(m_gain != 0.0, m_gain, 1.0)
            state.m = m_new + (self.lam / (1.0 + self.lam)) \
                * (corr / safe)[:, None, None] * gain
            if self.guard:
                self.clipped_mass += positivity_guard(state.m, 1.0)
            state.t += self.dt
        return state

    def run(self, state: FineState, t_final: float, callback=None,
            callback_every: int = 1):
        return _run_loop(self, state, t_final, callback, callback_every)
