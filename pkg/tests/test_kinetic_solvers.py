"""Kinetic time marchers: stationarity, conservation, channel algebra."""

import math

import numpy as np
import pytest

from surfkin import (
    AmbientBoundary,
    CFLViolation,
    ChannelSolver,
    CollisionOperator,
    CosineTilt,
    DomainError,
    EnergyGrid,
    FineTangentialSolver,
    GridMismatch,
    KineticState,
    MesoCollisionOperator,
    MesoSolver,
    MesoState,
    NormalPotential,
    PhaseGrid,
    ResolutionError,
    TangentialPotential,
    TrappedKineticSolver,
    TwoGroupSolver,
    VelocityGrid,
    positivity_guard,
)

RNG = np.random.default_rng(42)


def small_setup(w_m=4.0, nx=12, nv=8, ne_t=4, ne_f=6, epsilon=0.1):
    pot = NormalPotential.parabolic(w_m)
    vg = VelocityGrid(nv)
    eg = EnergyGrid(math.sqrt(w_m), ne_t, ne_f)
    op = CollisionOperator(pot, eg, vg)
    grid = PhaseGrid(nx, 1.0, vg, eg, epsilon=epsilon)
    return grid, op


def meso_setup(u_m=1.0):
    zgrid, zop = None, None
    pot = NormalPotential.parabolic(4.0)
    zgrid = EnergyGrid(2.0, 4, 4)
    zop = CollisionOperator(pot, zgrid, VelocityGrid(8))
    tang = TangentialPotential.harmonic(u_m)
    exg = EnergyGrid(math.sqrt(u_m), 4, 6, e_max=4.0)
    mop = MesoCollisionOperator(tang, exg, zop)
    return mop, zop


# ---------------------------------------------------------------------------
# stationarity of the discrete equilibrium (flat density, no tilt)
# ---------------------------------------------------------------------------

def test_trapped_equilibrium_stationary():
    grid, op = small_setup()
    state = KineticState.equilibrium(grid, op, density=0.7)
    g0 = state.g.copy()
    TrappedKineticSolver(grid, op, scheme="muscl").step(state, 100)
    assert np.max(np.abs(state.g - g0)) < 1e-8


def test_two_group_closed_equilibrium_stationary():
    grid, op = small_setup()
    state = KineticState.equilibrium(grid, op, density=0.7)
    g0 = state.g.copy()
    TwoGroupSolver(grid, op, AmbientBoundary.closed()).step(state, 100)
    assert np.max(np.abs(state.g - g0)) < 1e-8


def test_channel_equilibrium_stationary():
    grid, op = small_setup()
    s1 = KineticState.equilibrium(grid, op, density=0.7)
    s2 = KineticState.equilibrium(grid, op, density=0.7)
    g0 = s1.g.copy()
    ChannelSolver(grid, op, regime="strong").step(s1, s2, 100)
    assert np.max(np.abs(s1.g - g0)) < 1e-8
    assert np.max(np.abs(s2.g - g0)) < 1e-8


def test_meso_equilibrium_stationary():
    mop, _ = meso_setup()
    solver = MesoSolver(1.0, 12, mop)
    state = MesoState.equilibrium(solver.x, mop, density=0.7)
    h0 = state.h.copy()
    solver.step(state, 100)
    assert np.max(np.abs(state.h - h0)) < 1e-8


def test_two_group_detailed_balance_with_equilibrium_ambient():
    grid, op = small_setup()
    state = KineticState.equilibrium(grid, op, density=1.0)
    g0 = state.g.copy()
    solver = TwoGroupSolver(grid, op, AmbientBoundary.equilibrium(op, 1.0))
    solver.step(state, 50)
    assert np.max(np.abs(state.g - g0)) < 1e-10
    # exchange is active but balanced: emitted equals absorbed
    assert solver.emitted_mass > 0.0
    assert abs(solver.emitted_mass - solver.absorbed_mass) \
        < 1e-12 * solver.emitted_mass


# ---------------------------------------------------------------------------
# mass bookkeeping
# ---------------------------------------------------------------------------

def test_trapped_mass_conserved_per_step():
    grid, op = small_setup()
    tilt = CosineTilt(0.3, 1.0)
    solver = TrappedKineticSolver(grid, op, tilt=tilt, scheme="muscl")
    state = KineticState.equilibrium(
        grid, op, density=lambda x: 1.0 + 0.4 * np.sin(2 * np.pi * x))
    m0 = solver.total_mass(state)
    for _ in range(200):
        solver.step(state)
        assert abs(solver.total_mass(state) - m0) < 1e-12


def test_channel_mass_conserved_per_step():
    grid, op = small_setup()
    solver = ChannelSolver(grid, op, regime="moderate", scheme="fromm")
    s1 = KineticState(RNG.random((grid.nx, grid.vgrid.n, grid.egrid.n)))
    s2 = KineticState(RNG.random((grid.nx, grid.vgrid.n, grid.egrid.n)))
    m0 = solver.total_mass(s1) + solver.total_mass(s2)
    for _ in range(100):
        solver.step(s1, s2)
        assert abs(solver.total_mass(s1) + solver.total_mass(s2) - m0) < 1e-12


def test_two_group_vacuum_drains_and_balances():
    grid, op = small_setup()
    solver = TwoGroupSolver(grid, op, AmbientBoundary.vacuum(op))
    state = KineticState.equilibrium(grid, op, density=1.0)
    m0 = solver.total_mass(state)
    masses = [m0]
    for _ in range(50):
        solver.step(state)
        masses.append(solver.total_mass(state))
    assert all(b < a for a, b in zip(masses, masses[1:]))
    assert solver.absorbed_mass == 0.0
    # exact ledger: lost mass is exactly what the exchange emitted
    assert abs((m0 - masses[-1]) - solver.emitted_mass) < 1e-13 * m0


def test_fine_mass_conserved_exactly():
    _, zop = meso_setup()
    tang = TangentialPotential.harmonic(1.0)
    exg = EnergyGrid(1.0, 4, 6, e_max=4.0)
    fine = FineTangentialSolver(1.0, 32, tang, 0.5, exg, zop)
    state = fine.equilibrium(density=lambda x: 1.0 + 0.3 * np.sin(2 * np.pi * x))
    m0 = fine.total_mass(state)
    for _ in range(100):
        fine.step(state)
        assert abs(fine.total_mass(state) - m0) < 1e-13


def test_fine_equilibrium_stationary_and_forbidden_cells_empty():
    _, zop = meso_setup()
    tang = TangentialPotential.harmonic(1.0)
    exg = EnergyGrid(1.0, 4, 6, e_max=4.0)
    fine = FineTangentialSolver(1.0, 32, tang, 0.5, exg, zop)
    state = fine.equilibrium(density=1.0)
    closed = fine.w_plain == 0.0          # classically forbidden (x, e_x)
    assert np.all(state.m[closed] == 0.0)
    b0 = fine.block_average_density(state, 0.5)
    fine.step(state, 100)
    # bound-orbit mass redistributes inside each microcell toward the
    # orbit-residence steady state, but the macroscopic observable (the
    # block average over a cell) and the forbidden-region emptiness are
    # preserved to machine precision
    assert np.max(np.abs(fine.block_average_density(state, 0.5) - b0)) < 1e-12
    assert np.all(state.m[closed] == 0.0)


# ---------------------------------------------------------------------------
# channel algebra
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("regime", ["strong", "moderate", "weak"])
def test_channel_mirrored_sum_is_single_layer(regime):
    grid, op = small_setup(nx=8)
    mirror = op.egrid.mirror
    kw = dict(collision_tol=1e-15, accelerate=False)
    solver = ChannelSolver(grid, op, regime=regime, **kw)
    ref = TrappedKineticSolver(grid, op, dt=solver.dt, **kw)
    shape = (grid.nx, grid.vgrid.n, grid.egrid.n)
    s1 = KineticState(RNG.random(shape))
    s2 = KineticState(RNG.random(shape))
    sref = KineticState(s1.g + s2.g[:, :, mirror])
    for _ in range(30):
        solver.step(s1, s2)
        ref.step(sref)
        mism = np.max(np.abs(s1.g + s2.g[:, :, mirror] - sref.g))
        assert mism < 1e-12 * np.max(np.abs(sref.g))


def test_channel_symmetric_layers_stay_identical():
    grid, op = small_setup(nx=8)
    solver = ChannelSolver(grid, op, regime="moderate")
    data = RNG.random((grid.nx, grid.vgrid.n, grid.egrid.n))
    s1 = KineticState(data)
    s2 = KineticState(data)
    solver.step(s1, s2, 25)
    assert np.array_equal(s1.g, s2.g)


def test_channel_gap_contracts_at_pair_rate():
    # free-cell pair differences must decay by exactly exp(-2 r dt) in one
    # exchange application (transport switched off via a zero-speed check
    # is not possible, so compare right after construction on one step of
    # the bare exchange)
    grid, op = small_setup(nx=4)
    solver = ChannelSolver(grid, op, regime="weak")
    shape = (grid.nx, grid.vgrid.n, grid.egrid.n)
    g1 = RNG.random(shape)
    g2 = RNG.random(shape)
    free = np.where(~op.egrid.trapped)[0]
    mirror = op.egrid.mirror[free]
    before = g1[..., free] - g2[..., mirror]
    solver._exchange(g1, g2)
    after = g1[..., free] - g2[..., mirror]
    expect = before * solver._pair_factor[None, None, :]
    assert np.max(np.abs(after - expect)) < 1e-15


# ---------------------------------------------------------------------------
# state plumbing and guards
# ---------------------------------------------------------------------------

def test_states_never_alias_their_input():
    buf = RNG.random((4, 6, 8))
    s1 = KineticState(buf)
    s2 = KineticState(buf)
    s1.g[0, 0, 0] = 123.0
    assert buf[0, 0, 0] != 123.0
    assert s2.g[0, 0, 0] != 123.0
    c = s2.copy()
    s2.g[1, 1, 1] = -5.0
    assert c.g[1, 1, 1] != -5.0


def test_positivity_guard_noop_on_nonnegative():
    g = RNG.random((5, 4, 6))
    ref = g.copy()
    w = np.full((4, 6), 0.1)
    assert positivity_guard(g, w) == 0.0
    assert np.array_equal(g, ref)


def test_positivity_guard_clips_and_preserves_slice_mass():
    g = RNG.random((5, 4, 6)) - 0.2
    w = np.full((4, 6), 0.1)
    m0 = np.sum(g * w, axis=(-2, -1))
    clipped = positivity_guard(g, w)
    assert clipped > 0.0
    assert g.min() >= 0.0
    assert np.max(np.abs(np.sum(g * w, axis=(-2, -1)) - m0)) < 1e-14


def test_equilibrium_flux_vanishes():
    grid, op = small_setup()
    solver = TrappedKineticSolver(grid, op)
    state = KineticState.equilibrium(grid, op, density=1.0)
    assert np.max(np.abs(solver.flux(state))) < 1e-13


# ---------------------------------------------------------------------------
# run loop
# ---------------------------------------------------------------------------

def test_run_lands_exactly_on_t_final():
    grid, op = small_setup()
    solver = TrappedKineticSolver(grid, op)
    state = KineticState.equilibrium(grid, op, density=1.0)
    t_final = 2.5 * solver.dt
    m0 = solver.total_mass(state)
    solver.run(state, t_final)
    assert state.t == pytest.approx(t_final, abs=1e-15)
    assert abs(solver.total_mass(state) - m0) < 1e-12


def test_run_callback_cadence():
    grid, op = small_setup()
    solver = TrappedKineticSolver(grid, op)
    state = KineticState.equilibrium(grid, op, density=1.0)
    seen = []
    solver.run(state, 4 * solver.dt, callback=lambda s, i: seen.append(i),
               callback_every=2)
    assert seen == [0, 2, 4]


# ---------------------------------------------------------------------------
# validation errors
# ---------------------------------------------------------------------------

def test_cfl_violation():
    grid, op = small_setup()
    with pytest.raises(CFLViolation):
        TrappedKineticSolver(grid, op, dt=1.0)


def test_unknown_scheme_and_regime():
    grid, op = small_setup()
    with pytest.raises(DomainError):
        TrappedKineticSolver(grid, op, scheme="weno9")
    with pytest.raises(DomainError):
        ChannelSolver(grid, op, regime="ultra")


def test_operator_grid_mismatch():
    grid, op = small_setup()
    other = CollisionOperator(NormalPotential.parabolic(4.0),
                              EnergyGrid(2.0, 4, 6), VelocityGrid(10))
    with pytest.raises(GridMismatch):
        TrappedKineticSolver(grid, other)


def test_phase_grid_validation():
    vg = VelocityGrid(8)
    eg = EnergyGrid(2.0, 4, 4)
    with pytest.raises(DomainError):
        PhaseGrid(1, 1.0, vg, eg, epsilon=0.1)
    with pytest.raises(DomainError):
        PhaseGrid(8, 1.0, vg, eg, epsilon=0.0)
    with pytest.raises(DomainError):
        PhaseGrid(8, -1.0, vg, eg, epsilon=0.1)


def test_ambient_validation():
    grid, op = small_setup()
    with pytest.raises(DomainError):
        AmbientBoundary("leaky")
    with pytest.raises(DomainError):
        AmbientBoundary("prescribed")
    bad = AmbientBoundary("prescribed", np.zeros((3, 3)))
    with pytest.raises(GridMismatch):
        TwoGroupSolver(grid, op, bad)


def test_fine_solver_validation():
    _, zop = meso_setup()
    tang = TangentialPotential.harmonic(1.0)
    exg = EnergyGrid(1.0, 4, 6, e_max=4.0)
    with pytest.raises(ResolutionError):
        FineTangentialSolver(1.0, 16, tang, 0.5, exg, zop)   # dx > delta/16
    with pytest.raises(GridMismatch):
        FineTangentialSolver(1.0, 64, tang, 0.3, exg, zop)   # 1/0.3 not whole
    fine = FineTangentialSolver(1.0, 32, tang, 0.5, exg, zop)
    state = fine.equilibrium()
    with pytest.raises(GridMismatch):
        fine.block_average_density(state, 0.3)


def test_meso_solver_rejects_bad_inputs():
    mop, _ = meso_setup()
    with pytest.raises(DomainError):
        MesoSolver(1.0, 12, mop, tau_ms=-1.0)
    with pytest.raises(CFLViolation):
        MesoSolver(1.0, 12, mop, dt=10.0)
