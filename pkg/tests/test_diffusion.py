"""Diffusion solvers and transport coefficients."""

import math

import numpy as np
import pytest

from surfkin import (
    CosineTilt,
    CoupledDiffusionSolver,
    CoupledState,
    DiffusionState,
    DomainError,
    GridMismatch,
    IsoDiffusionSolver,
    NonIsoDiffusionSolver,
    NormalPotential,
    StabilityError,
    TransportCoefficients,
)

RNG = np.random.default_rng(11)

# frozen exchange-rate regressions (independent quadrature values)
C_EXCHANGE = {
    1.0: 0.27791516039952685,
    2.0: 0.12765279969085158,
    4.0: 0.023429794086117253,
    8.0: 0.0006040832188536404,
}


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------

def test_d0n_is_half_tau_for_any_well():
    wells = [NormalPotential.flat(),
             NormalPotential.parabolic(1.0),
             NormalPotential.parabolic(4.0, z_m=0.3)]
    for pot in wells:
        for tau in (0.5, 1.0, 2.0):
            c = TransportCoefficients(pot, tau)
            assert abs(c.d0n - 0.5 * tau) < 1e-10
            assert abs(c.d0n_at(1.7) - 0.5 * tau * 1.7) < 1e-10


def test_exchange_numerator_is_barrier_boltzmann_factor():
    for w_m in (1.0, 2.0, 4.0, 8.0):
        c = TransportCoefficients(NormalPotential.parabolic(w_m))
        assert abs(c.exchange_numerator() - math.exp(-w_m)) < 1e-10


def test_exchange_rate_frozen_and_decreasing():
    vals = []
    for w_m in (1.0, 2.0, 4.0, 8.0):
        c = TransportCoefficients(NormalPotential.parabolic(w_m)).c_exchange
        assert abs(c - C_EXCHANGE[w_m]) < 1e-12
        vals.append(c)
    assert all(a > b for a, b in zip(vals, vals[1:]))


def test_exchange_rate_ratio_bound():
    c1 = TransportCoefficients(NormalPotential.parabolic(1.0))
    c8 = TransportCoefficients(NormalPotential.parabolic(8.0))
    # c = exp(-W_m) / <<l M>>, so c(8)/c(1) = e^-7 * den(1)/den(8), strictly
    # below e^-6 times the quadrature-evaluated denominator ratio
    den_ratio = c1.table.ell_moment(1.0, 0) / c8.table.ell_moment(1.0, 0)
    assert c8.c_exchange / c1.c_exchange < math.exp(-6.0) * den_ratio


def test_flat_well_closed_forms():
    c = TransportCoefficients(NormalPotential.flat())
    assert abs(c.gamma - math.pi) < 1e-12
    assert abs(c.c_exchange - 1.0 / math.sqrt(math.pi)) < 1e-12
    assert abs(c.d0t(1.0, 1.0) - (1.0 - 1.0 / (2.0 * math.pi))) < 1e-12


def test_d0t_scales_linearly_in_density():
    c = TransportCoefficients(NormalPotential.parabolic(2.0))
    assert abs(c.d0t(3.0, 1.2) - 3.0 * c.d0t(1.0, 1.2)) < 1e-12


def test_pressure_coeffs_identity():
    c = TransportCoefficients(NormalPotential.parabolic(4.0))
    for n, t in ((1.0, 1.0), (2.5, 0.7), (0.3, 1.9)):
        c0p, c0t = c.pressure_coeffs(n, t)
        assert abs(c0p - c.d0n_at(t) / t) < 1e-14
        assert abs(c0t - (c.d0t(n, t) - n / t * c.d0n_at(t))) < 1e-14


def test_coefficients_refinement_converged():
    a = TransportCoefficients(NormalPotential.parabolic(4.0))
    b = a.refined()
    assert abs(a.d0n - b.d0n) < 1e-11
    assert abs(a.c_exchange - b.c_exchange) < 1e-11
    assert abs(a.gamma - b.gamma) < 1e-9 * a.gamma


# ---------------------------------------------------------------------------
# isothermal stepper
# ---------------------------------------------------------------------------

def test_iso_heat_mode_decay():
    # single Fourier mode on U' = 0: exact factor exp(-D k^2 t)
    D, L, nx = 0.5, 1.0, 256
    solver = IsoDiffusionSolver(nx, L, D)
    k = 2.0 * math.pi / L
    state = DiffusionState(1.0 + 0.5 * np.cos(k * solver.x))
    solver.run(state, 0.1)
    exact = 1.0 + 0.5 * math.exp(-D * k * k * 0.1) * np.cos(k * solver.x)
    assert np.max(np.abs(state.N - exact)) / np.max(np.abs(exact)) < 1e-4


def test_iso_mass_conserved_per_step():
    solver = IsoDiffusionSolver(64, 1.0, 0.5, CosineTilt(0.4, 1.0))
    state = DiffusionState(RNG.random(64) + 0.5)
    m0 = solver.total_mass(state)
    for _ in range(200):
        solver.step(state)
        assert abs(solver.total_mass(state) - m0) < 1e-13


def test_iso_fitted_flux_is_exactly_flux_free_at_boltzmann_profile():
    tilt = CosineTilt(0.6, 1.0)
    solver = IsoDiffusionSolver(128, 1.0, 0.5, tilt)
    # the fitted weights' exactly flux-free state carries the cumulative
    # interface drift, exp(-sum U' dx); it agrees with pointwise exp(-U)
    # to O(dx^2)
    n_star = np.exp(-np.cumsum(solver.du_if * solver.dx))
    assert np.max(np.abs(solver._interface_flux(n_star))) < 1e-12
    assert np.max(np.abs(solver.rhs(n_star))) < 1e-10
    boltz = np.exp(-tilt.u(solver.x))
    assert np.max(np.abs(n_star / n_star.mean() - boltz / boltz.mean())) < 1e-3
    state = DiffusionState(n_star)
    solver.step(state, 50)
    assert np.max(np.abs(state.N - n_star)) < 1e-10


def test_iso_reduces_to_central_without_tilt():
    a = IsoDiffusionSolver(32, 1.0, 0.5)
    N = RNG.random(32)
    F = a._interface_flux(N)
    expect = 0.5 * (N - np.roll(N, 1)) / a.dx
    assert np.array_equal(F, expect)


def test_iso_comparison_principle():
    solver = IsoDiffusionSolver(48, 1.0, 0.5, CosineTilt(0.3, 1.0))
    state = DiffusionState(np.maximum(RNG.random(48), 1e-3))
    solver.step(state, 100)
    assert state.N.min() > 0.0


def test_iso_theta_scheme_stable_beyond_explicit_bound():
    expl = IsoDiffusionSolver(64, 1.0, 0.5)
    big_dt = 50.0 * expl.dt
    solver = IsoDiffusionSolver(64, 1.0, 0.5, dt=big_dt, theta=0.5)
    state = DiffusionState(1.0 + 0.3 * np.sin(2 * np.pi * solver.x))
    m0 = solver.total_mass(state)
    solver.step(state, 50)
    assert np.all(np.isfinite(state.N))
    assert abs(solver.total_mass(state) - m0) < 1e-12
    # still converges to the flat steady state
    assert np.max(np.abs(state.N - 1.0)) < 0.3


def test_iso_stability_error():
    with pytest.raises(StabilityError):
        IsoDiffusionSolver(64, 1.0, 0.5, dt=1.0)
    with pytest.raises(DomainError):
        IsoDiffusionSolver(64, 1.0, -0.5)


# ---------------------------------------------------------------------------
# non-isothermal stepper
# ---------------------------------------------------------------------------

def test_noniso_constant_temperature_matches_iso_bitwise():
    coeffs = TransportCoefficients(NormalPotential.parabolic(4.0))
    tilt = CosineTilt(0.4, 1.0)
    iso = IsoDiffusionSolver(64, 1.0, coeffs.d0n, tilt)
    noniso = NonIsoDiffusionSolver(64, 1.0, coeffs, 1.0, tilt, dt=iso.dt)
    n0 = 1.0 + 0.5 * np.sin(2 * np.pi * iso.x)
    a = DiffusionState(n0)
    b = DiffusionState(n0)
    iso.step(a, 100)
    noniso.step(b, 100)
    assert np.max(np.abs(a.N - b.N)) == 0.0


def test_noniso_mass_conserved_with_temperature_gradient():
    coeffs = TransportCoefficients(NormalPotential.parabolic(4.0))
    temp = lambda x: 1.0 + 0.2 * np.cos(2 * np.pi * x)
    solver = NonIsoDiffusionSolver(64, 1.0, coeffs, temp, CosineTilt(0.3, 1.0))
    state = DiffusionState(RNG.random(64) + 0.5)
    m0 = solver.total_mass(state)
    for _ in range(200):
        solver.step(state)
        assert abs(solver.total_mass(state) - m0) < 1e-13


def test_noniso_pressure_flux_identity():
    # the (p, T) assembly of the interface flux is the same discrete object
    # as the (N, T) assembly, by the change-of-variables identity
    coeffs = TransportCoefficients(NormalPotential.parabolic(4.0))
    temp = lambda x: 1.0 + 0.25 * np.sin(2 * np.pi * x)
    solver = NonIsoDiffusionSolver(96, 1.0, coeffs, temp, CosineTilt(0.2, 1.0))
    N = 1.0 + 0.4 * np.cos(2 * np.pi * solver.x)
    assert np.max(np.abs(solver.pressure_flux(N) - solver._interface_flux(N))) \
        < 1e-13


def test_noniso_rejects_nonpositive_temperature():
    coeffs = TransportCoefficients(NormalPotential.flat())
    with pytest.raises(DomainError):
        NonIsoDiffusionSolver(32, 1.0, coeffs, 0.0)


# ---------------------------------------------------------------------------
# coupled layers
# ---------------------------------------------------------------------------

def test_coupled_sum_matches_single_layer():
    tilt = CosineTilt(0.3, 1.0)
    solver = CoupledDiffusionSolver(64, 1.0, 0.5, c=0.4, tilt=tilt)
    single = IsoDiffusionSolver(64, 1.0, 0.5, tilt, dt=solver.dt)
    n1 = 1.0 + 0.5 * np.sin(2 * np.pi * solver.x)
    n2 = 0.8 + 0.3 * np.cos(2 * np.pi * solver.x)
    cs = CoupledState(n1, n2)
    ref = DiffusionState(n1 + n2)
    for _ in range(100):
        solver.step(cs)
        single.step(ref)
        assert np.max(np.abs(cs.N1 + cs.N2 - ref.N)) < 5e-13


def test_coupled_gap_decays_at_exchange_rate():
    # with U' = 0 and x-uniform layers the gap obeys the scalar exchange ODE
    c = 0.7
    solver = CoupledDiffusionSolver(32, 1.0, 0.5, c=c)
    cs = CoupledState(np.full(32, 1.5), np.full(32, 0.5))
    t_final = 20 * solver.dt
    solver.run(cs, t_final)
    gap = float(np.max(np.abs(cs.N1 - cs.N2)))
    assert abs(gap - math.exp(-2.0 * c * t_final)) < 5e-13


def test_coupled_mass_conserved():
    solver = CoupledDiffusionSolver(32, 1.0, 0.5, c=0.2,
                                    tilt=CosineTilt(0.5, 1.0))
    cs = CoupledState(RNG.random(32) + 0.5, RNG.random(32) + 0.2)
    m0 = solver.total_mass(cs)
    for _ in range(200):
        solver.step(cs)
        assert abs(solver.total_mass(cs) - m0) < 1e-13


def test_coupled_validation():
    with pytest.raises(DomainError):
        CoupledDiffusionSolver(32, 1.0, 0.5, c=-1.0)
    with pytest.raises(GridMismatch):
        CoupledState(np.ones(8), np.ones(9))
