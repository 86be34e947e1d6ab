"""Diffusion-level coefficients and solvers for the surface-flow hierarchy.

The macroscopic content of the kinetic models reduces, for small epsilon, to
drift-diffusion equations for the line density N(t, x):

isothermal
    dN/dt = d/dx [ D0n dN/dx + D0n U'(x) N ],   D0n = (tau_ms/gamma) <<v^2 l M>>
    (equal to tau_ms/2 in scaled units for every well profile, because the
    v-Gaussian moment factors out of the l-weighted energy integral).

non-isothermal
    dN/dt = d/dx [ D0n(T) dN/dx + D0T(N,T) dT/dx + D0n U' N ],
    with D0n(T) = D0n*T and the printed thermal coefficient
    D0T = (tau/gamma(T)) << v^2 ((v^2+e^2)/T^2 - gamma'(T)/gamma(T)^2) l M_T >> N.
    The pressure form uses C0p = D0n(T)/T and C0T = D0T - (N/T) D0n(T),
    which reproduces the (N,T) flux identically.

coupled layers
    Two isothermal layers exchanging mass at rate c(W_m) =
    (int chi_f |e| M_z de) / (int l M_z de); the difference obeys
    d(N1-N2)/dt = -2c (N1-N2) pointwise, integrated exactly per step.

All steppers use interface fluxes (mass conservation telescopes).  The
diffusive+drift part is discretized with exponentially fitted interface
weights (drift upwinded through the Bernoulli factors, second-order
accurate, discretely flux-free at N ~ exp(-U/T)); the thermal-gradient
term upwinds its donor N.  Time stepping is Heun's second-order explicit
step under the parabolic bound r = D dt / dx^2 <= 0.4; a theta-implicit
variant (cached sparse factorization) is available for stiff sweeps.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DomainError, GridMismatch, StabilityError
from .potential_geometry import (
    DEFAULT_QUAD,
    NormalPotential,
    QuadratureSpec,
    composite_nodes,
)
from .equilibrium_collision import GammaTable


class TransportCoefficients:
    """Quadrature-evaluated coefficients of the diffusion hierarchy.

    Parameters
    ----------
    potential : NormalPotential
        Normal confinement profile (sets l, gamma and the free fraction).
    tau_ms : float
        Relaxation time in scaled units.
    quad : QuadratureSpec
        Node budget for the energy quadratures; Gaussian velocity moments
        use the same budget on split segments.

    Attributes
    ----------
    d0n : float
        Density diffusion coefficient at T = 1 (numerically tau_ms/2).
    gamma : float
        Equilibrium normalization <<l M>> at T = 1.
    c_exchange : float
        Free-molecule exchange rate between facing layers.
    """

    def __init__(self, potential: NormalPotential, tau_ms: float = 1.0,
                 quad: QuadratureSpec = DEFAULT_QUAD, e_cut: float = 10.0,
                 v_cut: float = 10.0):
        if tau_ms <= 0:
            raise DomainError("tau_ms must be positive")
        self.potential = potential
        self.tau_ms = float(tau_ms)
        self.quad = quad
        self.e_cut = float(e_cut)
        self.v_cut = float(v_cut)
        self.table = GammaTable(potential, quad, e_cut)

        # Gaussian velocity moments by quadrature (refinement-convergent,
        # keeps D0n an honest numerical value rather than a hardcoded tau/2)
        self._vx, self._vw = composite_nodes((0.0, 1.0, 3.0, v_cut),
                                             quad.nodes)
        e_sep = math.sqrt(potential.w_m)
        self._fx, self._fw = composite_nodes(
            (e_sep, min(e_sep + 3.0, e_cut), e_cut), quad.nodes)

        self.gamma = self.gamma_at(1.0)
        self.d0n = self._d0n_at_unit_T()
        self.c_exchange = self._exchange_c()

    # -- scalar building blocks -------------------------------------------

    def _v_moment(self, k: int, T: float) -> float:
        """int_R v^k exp(-v^2/T) dv for even k (odd moments vanish)."""
        return 2.0 * float(np.sum(self._vw * self._vx ** k
                                  * np.exp(-self._vx ** 2 / T)))

    def gamma_at(self, T: float) -> float:
        return self.table.gamma(T)

    def _d0n_at_unit_T(self) -> float:
        il = self.table.ell_moment(1.0, 0)
        num = self._v_moment(2, 1.0) * il
        den = self._v_moment(0, 1.0) * il
        return self.tau_ms * num / den

    def d0n_at(self, T: float) -> float:
        """Diffusion coefficient at temperature T: exactly d0n * T."""
        return self.d0n * T

    def d0t(self, N: float, T: float) -> float:
        """Thermal-gradient coefficient, proportional to N."""
        if T <= 0:
            raise DomainError("temperature must be positive")
        i0 = self.table.ell_moment(T, 0)
        i2 = self.table.ell_moment(T, 2)
        v2 = self._v_moment(2, T)
        v4 = self._v_moment(4, T)
        gam = float(self.table.gamma(T))
        b = float(self.table.dgamma(T)) / gam ** 2
        bracket = (v4 * i0 + v2 * i2) / T ** 2 - b * v2 * i0
        return N * self.tau_ms / gam * bracket

    def pressure_coeffs(self, N: float, T: float):
        """(C0p, C0T) of the pressure-form flux C0p d(NT)/dx + C0T dT/dx."""
        d0n_T = self.d0n_at(T)
        return d0n_T / T, self.d0t(N, T) - (N / T) * d0n_T

    def _exchange_c(self) -> float:
        # numerator: int over signed e of chi_f |e| exp(-e^2); closed form
        # exp(-W_m), evaluated here by quadrature
        num = 2.0 * float(np.sum(self._fw * self._fx
                                 * np.exp(-self._fx ** 2)))
        den = self.table.ell_moment(1.0, 0)
        return num / den

    def exchange_numerator(self) -> float:
        return 2.0 * float(np.sum(self._fw * self._fx
                                  * np.exp(-self._fx ** 2)))

    def refined(self) -> "TransportCoefficients":
        return TransportCoefficients(self.potential, self.tau_ms,
                                     self.quad.refined(), self.e_cut,
                                     self.v_cut)


class DiffusionState:
    """Density profile N(x) plus the clock."""

    def __init__(self, N, t: float = 0.0):
        self.N = np.asarray(N, dtype=np.float64).copy()
        self.t = float(t)

    def copy(self):
        return DiffusionState(self.N, self.t)


class CoupledState:
    """Densities of two facing layers."""

    def __init__(self, N1, N2, t: float = 0.0):
        self.N1 = np.asarray(N1, dtype=np.float64).copy()
        self.N2 = np.asarray(N2, dtype=np.float64).copy()
        if self.N1.shape != self.N2.shape:
            raise GridMismatch("coupled layers need matching grids")
        self.t = float(t)

    def copy(self):
        return CoupledState(self.N1, self.N2, self.t)


def _upwind_select(u, left, right):
    """Donor value for interface velocity u."""
    return np.where(u > 0.0, left, np.where(u < 0.0, right, 0.5 * (left + right)))


def _bernoulli(z):
    """B(z) = z / (e^z - 1), the exponential-fitting weight (B(0) = 1)."""
    z = np.asarray(z, dtype=float)
    small = np.abs(z) < 1e-12
    den = np.where(small, 1.0, np.expm1(np.where(small, 1.0, z)))
    return np.where(small, 1.0 - 0.5 * z, z / den)


def _fitted_weights(D_if, p, dx):
    """Interface weights (w_hi, w_lo) of the exponentially fitted flux

        F = w_hi N_k - w_lo N_{k-1},   p = U' dx / T  at the interface,

    which discretizes D (dN/dx + N U'/T).  The weights upwind the drift
    smoothly (donor cell for |p| >> 1, central for p -> 0), are second-order
    accurate, and make the discrete flux-free state exactly proportional to
    exp(-sum U' dx / T).  For p = 0 they reduce bitwise to plain central
    differencing D (N_k - N_{k-1}) / dx.
    """
    return D_if * _bernoulli(-p) / dx, D_if * _bernoulli(p) / dx


class IsoDiffusionSolver:
    """Heun / theta stepper for dN/dt = d/dx [D dN/dx + D U' N]."""

    def __init__(self, nx: int, length: float, D: float, tilt=None,
                 dt: float | None = None, safety: float = 0.4,
                 theta: float | None = None):
        if D <= 0:
            raise DomainError("diffusion coefficient must be positive")
        self.nx = int(nx)
        self.length = float(length)
        self.dx = self.length / self.nx
        self.x = (np.arange(self.nx) + 0.5) * self.dx
        self.D = float(D)
        self.tilt = tilt
        # U' sampled at interfaces x_{k-1/2}
        xi = self.x - 0.5 * self.dx
        self.du_if = tilt.du(xi) if tilt is not None else np.zeros(self.nx)
        if tilt is not None:
            self._w_hi, self._w_lo = _fitted_weights(
                self.D, self.du_if * self.dx, self.dx)
        self.theta = theta
        if dt is None:
            dt = safety * self.dx ** 2 / self.D
        self.dt = float(dt)
        r = self.D * self.dt / self.dx ** 2
        if theta is None and r > safety * (1.0 + 1e-12):
            raise StabilityError(
                f"dt={dt:g} gives diffusion number {r:.3f} > {safety:g}")
        self._lu = None
        if theta is not None:
            self._build_implicit()

    def with_dt(self, dt: float):
        return IsoDiffusionSolver(self.nx, self.length, self.D, self.tilt,
                                  dt=dt, theta=self.theta)

    # -- spatial operator ---------------------------------------------------

    def _interface_flux(self, N):
        """F at x_{k-1/2} such that dN_k/dt = (F_{k+1/2} - F_{k-1/2})/dx."""
        Nl = np.roll(N, 1)                       # N_{k-1}
        if self.tilt is None:
            return self.D * (N - Nl) / self.dx
        return self._w_hi * N - self._w_lo * Nl

    def rhs(self, N):
        F = self._interface_flux(N)
        return (np.roll(F, -1) - F) / self.dx

    def _build_implicit(self):
        from scipy.sparse import csc_matrix
        from scipy.sparse.linalg import splu

        n = self.nx
        A = np.zeros((n, n))
        eye = np.eye(n)
        for j in range(n):
            A[:, j] = self.rhs(eye[:, j])
        th = self.theta
        self._expl = eye + (1.0 - th) * self.dt * A
        self._lu = splu(csc_matrix(eye - th * self.dt * A))

    # -- time marching ------------------------------------------------------

    def step(self, state: DiffusionState, n: int = 1):
        for _ in range(n):
            if self._lu is not None:
                state.N = self._lu.solve(self._expl @ state.N)
            else:
                k1 = self.rhs(state.N)
                mid = state.N + self.dt * k1
                state.N = state.N + 0.5 * self.dt * (k1 + self.rhs(mid))
            state.t += self.dt
        return state

    def run(self, state: DiffusionState, t_final: float):
        while state.t < t_final - 1e-12 * max(1.0, abs(t_final)):
            remainder = t_final - state.t
            if remainder < self.dt * (1.0 - 1e-9):
                self.with_dt(remainder).step(state)
            else:
                self.step(state)
        return state

    def total_mass(self, state: DiffusionState) -> float:
        return float(np.sum(state.N) * self.dx)

    def flux(self, state: DiffusionState):
        """Physical flux Phi = -(D dN/dx + D U' N) averaged to centres."""
        F = self._interface_flux(state.N)
        return -0.5 * (F + np.roll(F, -1))


class NonIsoDiffusionSolver:
    """Heun stepper with a prescribed temperature profile T(x).

    The interface diffusivity is D0n * Tbar (arithmetic-mean T); the
    thermal-gradient flux D0T(N,T) dT/dx uses the upwind donor N (by the
    sign of its effective velocity).  With constant T every extra term is
    exactly zero and the trajectory coincides with IsoDiffusionSolver.
    """

    def __init__(self, nx: int, length: float, coeffs: TransportCoefficients,
                 temperature, tilt=None, dt: float | None = None,
                 safety: float = 0.4, theta: float | None = None):
        self.nx = int(nx)
        self.length = float(length)
        self.dx = self.length / self.nx
        self.x = (np.arange(self.nx) + 0.5) * self.dx
        self.coeffs = coeffs
        self.tilt = tilt
        xi = self.x - 0.5 * self.dx
        self.du_if = tilt.du(xi) if tilt is not None else np.zeros(self.nx)
        T = temperature(self.x) if callable(temperature) else temperature
        self.T = np.broadcast_to(np.asarray(T, dtype=float), (self.nx,)).copy()
        if np.any(self.T <= 0):
            raise DomainError("temperature profile must be positive")
        self.T_if = 0.5 * (self.T + np.roll(self.T, 1))
        self.dT_if = (self.T - np.roll(self.T, 1)) / self.dx
        self.d0t_unit = np.array([coeffs.d0t(1.0, t) for t in self.T_if])
        self.D_if = coeffs.d0n_at(self.T_if)
        if tilt is not None:
            # drift coefficient is the T-independent d0n U' N; dividing the
            # fitting argument by T keeps D_if (B N - B' Nl) equal to
            # d0n T dN/dx + d0n U' N to second order
            self._w_hi, self._w_lo = _fitted_weights(
                self.D_if, self.du_if * self.dx / self.T_if, self.dx)
        self.theta = theta
        D_max = float(self.D_if.max())
        if dt is None:
            dt = safety * self.dx ** 2 / D_max
        self.dt = float(dt)
        r = D_max * self.dt / self.dx ** 2
        if theta is None and r > safety * (1.0 + 1e-12):
            raise StabilityError(
                f"dt={dt:g} gives diffusion number {r:.3f} > {safety:g}")
        self._lu = None
        if theta is not None:
            self._build_implicit()

    def with_dt(self, dt: float):
        sol = NonIsoDiffusionSolver(self.nx, self.length, self.coeffs,
                                    self.T, self.tilt, dt=dt,
                                    theta=self.theta)
        return sol

    def _interface_flux(self, N):
        Nl = np.roll(N, 1)
        if self.tilt is None:
            F = self.D_if * (N - Nl) / self.dx
        else:
            F = self._w_hi * N - self._w_lo * Nl
        # thermal-gradient term: D0T(N,T) dT/dx, donor N by its velocity
        uT = -self.d0t_unit * self.dT_if
        F = F + self.d0t_unit * _upwind_select(uT, Nl, N) * self.dT_if
        return F

    def rhs(self, N):
        F = self._interface_flux(N)
        return (np.roll(F, -1) - F) / self.dx

    def pressure_flux(self, N):
        """Same interface flux assembled in (p, T) variables,
        C0p dp/dx + C0T dT/dx plus the drift part (identity check)."""
        Nl = np.roll(N, 1)
        p = N * self.T
        pl = np.roll(p, 1)
        central = self.D_if * (N - Nl) / self.dx
        if self.tilt is None:
            drift = np.zeros(self.nx)
        else:
            drift = self._w_hi * N - self._w_lo * Nl - central
        uT = -self.d0t_unit * self.dT_if
        N_upT = _upwind_select(uT, Nl, N)
        # C0T needs the same donor N as the (N,T) form for exact agreement
        c0t = self.d0t_unit * N_upT - 0.5 * (N + Nl) / self.T_if * self.D_if
        return (self.D_if / self.T_if) * (p - pl) / self.dx \
            + c0t * self.dT_if + drift

    def _build_implicit(self):
        from scipy.sparse import csc_matrix
        from scipy.sparse.linalg import splu

        n = self.nx
        A = np.zeros((n, n))
        eye = np.eye(n)
        for j in range(n):
            A[:, j] = self.rhs(eye[:, j])
        th = self.theta
        self._expl = eye + (1.0 - th) * self.dt * A
        self._lu = splu(csc_matrix(eye - th * self.dt * A))

    def step(self, state: DiffusionState, n: int = 1):
        for _ in range(n):
            if self._lu is not None:
                state.N = self._lu.solve(self._expl @ state.N)
            else:
                k1 = self.rhs(state.N)
                mid = state.N + self.dt * k1
                state.N = state.N + 0.5 * self.dt * (k1 + self.rhs(mid))
            state.t += self.dt
        return state

    def run(self, state: DiffusionState, t_final: float):
        while state.t < t_final - 1e-12 * max(1.0, abs(t_final)):
            remainder = t_final - state.t
            if remainder < self.dt * (1.0 - 1e-9):
                self.with_dt(remainder).step(state)
            else:
                self.step(state)
        return state

    def total_mass(self, state: DiffusionState) -> float:
        return float(np.sum(state.N) * self.dx)

    def flux(self, state: DiffusionState):
        F = self._interface_flux(state.N)
        return -0.5 * (F + np.roll(F, -1))


class CoupledDiffusionSolver:
    """Two isothermal layers exchanging mass at rate c (Prop.-style system).

    Each layer advances with the identical isothermal operator; the local
    exchange c (N_other - N_self) is integrated exactly: the pointwise
    difference contracts by exp(-2 c dt) while the sum is untouched, so the
    summed trajectory reproduces a single-layer run to roundoff.
    """

    def __init__(self, nx: int, length: float, D: float, c: float,
                 tilt=None, dt: float | None = None, safety: float = 0.4,
                 theta: float | None = None):
        if c < 0:
            raise DomainError("exchange rate must be nonnegative")
        self.iso = IsoDiffusionSolver(nx, length, D, tilt, dt=dt,
                                      safety=safety, theta=theta)
        self.c = float(c)
        self.dt = self.iso.dt
        self.nx = self.iso.nx
        self.dx = self.iso.dx
        self.x = self.iso.x
        self._fac = math.exp(-2.0 * self.c * self.dt)

    def with_dt(self, dt: float):
        return CoupledDiffusionSolver(self.nx, self.iso.length, self.iso.D,
                                      self.c, self.iso.tilt, dt=dt,
                                      theta=self.iso.theta)

    def step(self, state: CoupledState, n: int = 1):
        s1 = DiffusionState(state.N1, state.t)
        s2 = DiffusionState(state.N2, state.t)
        for _ in range(n):
            self.iso.step(s1)
            self.iso.step(s2)
            mean = 0.5 * (s1.N + s2.N)
            half = 0.5 * (s1.N - s2.N) * self._fac
            s1.N = mean + half
            s2.N = mean - half
        state.N1, state.N2, state.t = s1.N, s2.N, s1.t
        return state

    def run(self, state: CoupledState, t_final: float):
        while state.t < t_final - 1e-12 * max(1.0, abs(t_final)):
            remainder = t_final - state.t
            if remainder < self.dt * (1.0 - 1e-9):
                self.with_dt(remainder).step(state)
            else:
                self.step(state)
        return state

    def total_mass(self, state: CoupledState) -> float:
        return float(np.sum(state.N1 + state.N2) * self.dx)
