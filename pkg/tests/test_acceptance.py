"""End-to-end acceptance suite.

Twelve numbered criteria cover the full model hierarchy: collision-kernel
stochasticity, equilibrium fixed points, exact conservation, stationarity,
orbit-time and drift closed forms, transport coefficients, the two
asymptotic studies (diffusion limit and homogenization), channel algebra,
coupling regimes, the nonisothermal reduction, and the heat-kernel
benchmark.  Each test prints one PASS/FAIL line with the measured numbers
(written to the real stdout so the lines survive pytest capture) and then
asserts at the stated tolerance.
"""

import math
import sys
import time

import numpy as np

from surfkin import (
    AmbientBoundary,
    ChannelSolver,
    CollisionOperator,
    CosineTilt,
    CoupledDiffusionSolver,
    CoupledState,
    DiffusionState,
    EnergyGrid,
    FineTangentialSolver,
    IsoDiffusionSolver,
    KineticState,
    MesoCollisionOperator,
    MesoSolver,
    MesoState,
    NonIsoDiffusionSolver,
    NormalPotential,
    PhaseGrid,
    TangentialPotential,
    TransportCoefficients,
    TrappedKineticSolver,
    TwoGroupSolver,
    VelocityGrid,
    kernel_row_mass,
    run_coupling_regime_study,
    run_diffusion_limit_study,
    run_homogenization_study,
)

RNG = np.random.default_rng(20250825)


def announce(num, name, passed, detail):
    line = (f"criterion {num:02d} [{name}]: "
            f"{'PASS' if passed else 'FAIL'} ({detail})")
    print(line, file=sys.__stdout__, flush=True)
    assert passed, line


def small_kinetic(nx=12, nv=8, ne_t=4, ne_f=6, epsilon=0.1):
    pot = NormalPotential.parabolic(4.0)
    vg = VelocityGrid(nv)
    eg = EnergyGrid(2.0, ne_t, ne_f)
    op = CollisionOperator(pot, eg, vg)
    return PhaseGrid(nx, 1.0, vg, eg, epsilon=epsilon), op


def small_meso():
    zop = CollisionOperator(NormalPotential.parabolic(4.0),
                            EnergyGrid(2.0, 4, 4), VelocityGrid(8))
    tang = TangentialPotential.harmonic(1.0)
    exg = EnergyGrid(1.0, 4, 6, e_max=4.0)
    return MesoCollisionOperator(tang, exg, zop), tang, exg, zop


# ---------------------------------------------------------------------------
# 1. collision kernel rows integrate to one
# ---------------------------------------------------------------------------

def test_criterion_01_kernel_rows_have_unit_mass():
    tic = time.perf_counter()
    pot = NormalPotential.parabolic(4.0)
    energies = np.concatenate([RNG.uniform(0.1, 4.5, size=10),
                               -RNG.uniform(0.1, 4.5, size=10)])
    worst = max(abs(kernel_row_mass(pot, float(e)) - 1.0) for e in energies)
    elapsed = time.perf_counter() - tic
    announce(1, "kernel stochasticity", worst <= 1e-8 and elapsed < 10.0,
             f"max |int khat - 1| = {worst:.3e} over 20 energies, "
             f"tol 1e-8, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 2. equilibrium temperature fixed point
# ---------------------------------------------------------------------------

def test_criterion_02_theta_fixed_point():
    tic = time.perf_counter()
    op = CollisionOperator(NormalPotential.parabolic(4.0),
                           EnergyGrid(2.0, 16, 16), VelocityGrid(32))
    worst = 0.0
    for beta in (0.5, 1.0, 3.0):
        theta = op.theta(op.equilibrium(beta))
        worst = max(worst, float(np.max(np.abs(theta - beta))))
    mop, _, _, _ = small_meso()
    worst_bar = 0.0
    for beta in (0.5, 1.0, 3.0):
        tb = mop.theta_bar(mop.equilibrium(beta))
        worst_bar = max(worst_bar, float(np.max(np.abs(tb - beta))))
    elapsed = time.perf_counter() - tic
    announce(2, "theta fixed point",
             worst <= 1e-8 and worst_bar <= 1e-8 and elapsed < 10.0,
             f"max |theta - beta| = {worst:.3e}, homogenized "
             f"{worst_bar:.3e}, tol 1e-8, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 3. exact mass conservation over 1000 steps
# ---------------------------------------------------------------------------

def _per_step_drift(solver, state, nsteps, pair=None):
    def mass():
        m = solver.total_mass(state)
        return m + solver.total_mass(pair) if pair is not None else m
    worst, m = 0.0, mass()
    for _ in range(nsteps):
        solver.step(state) if pair is None else solver.step(state, pair)
        m_new = mass()
        worst = max(worst, abs(m_new - m))
        m = m_new
    return worst


def test_criterion_03_mass_conservation_1000_steps():
    tic = time.perf_counter()
    grid, op = small_kinetic()
    tilt = CosineTilt(0.3, 1.0)
    shape = (grid.nx, grid.vgrid.n, grid.egrid.n)

    kin = max(
        _per_step_drift(TrappedKineticSolver(grid, op, tilt=tilt,
                                             scheme="fromm"),
                        KineticState(RNG.random(shape)), 1000),
        _per_step_drift(TwoGroupSolver(grid, op, AmbientBoundary.closed(),
                                       tilt=tilt),
                        KineticState(RNG.random(shape)), 1000),
        _per_step_drift(ChannelSolver(grid, op, regime="moderate",
                                      scheme="muscl"),
                        KineticState(RNG.random(shape)), 1000,
                        pair=KineticState(RNG.random(shape))),
    )
    mop, tang, exg, zop = small_meso()
    ms = MesoSolver(1.0, 12, mop)
    kin = max(kin, _per_step_drift(
        ms, MesoState.equilibrium(
            ms.x, mop, density=lambda x: 1.0 + 0.4 * np.sin(2 * np.pi * x)),
        1000))
    fine = FineTangentialSolver(1.0, 32, tang, 0.5, exg, zop)
    kin = max(kin, _per_step_drift(
        fine, fine.equilibrium(
            density=lambda x: 1.0 + 0.3 * np.sin(2 * np.pi * x)), 1000))

    coeffs = TransportCoefficients(NormalPotential.parabolic(4.0))
    temp = lambda x: 1.0 + 0.2 * np.cos(2 * np.pi * x)
    dif = max(
        _per_step_drift(IsoDiffusionSolver(64, 1.0, 0.5, tilt),
                        DiffusionState(RNG.random(64) + 0.5), 1000),
        _per_step_drift(NonIsoDiffusionSolver(64, 1.0, coeffs, temp, tilt),
                        DiffusionState(RNG.random(64) + 0.5), 1000),
        _per_step_drift(CoupledDiffusionSolver(32, 1.0, 0.5, c=0.2,
                                               tilt=tilt),
                        CoupledState(RNG.random(32) + 0.5,
                                     RNG.random(32) + 0.2), 1000),
    )
    elapsed = time.perf_counter() - tic
    announce(3, "mass conservation",
             kin <= 1e-12 and dif <= 1e-13 and elapsed < 60.0,
             f"kinetic max/step {kin:.2e} (tol 1e-12), diffusion "
             f"{dif:.2e} (tol 1e-13), 1000 steps each, {elapsed:.1f}s")


# ---------------------------------------------------------------------------
# 4. the uniform discrete equilibrium is stationary in all four solvers
# ---------------------------------------------------------------------------

def test_criterion_04_uniform_equilibrium_stationary():
    grid, op = small_kinetic()
    drifts = {}

    state = KineticState.equilibrium(grid, op, density=0.7)
    g0 = state.g.copy()
    TrappedKineticSolver(grid, op, scheme="muscl").step(state, 100)
    drifts["trapped"] = float(np.max(np.abs(state.g - g0)))

    state = KineticState.equilibrium(grid, op, density=0.7)
    TwoGroupSolver(grid, op, AmbientBoundary.closed()).step(state, 100)
    drifts["two-group"] = float(np.max(np.abs(state.g - g0)))

    s1 = KineticState.equilibrium(grid, op, density=0.7)
    s2 = KineticState.equilibrium(grid, op, density=0.7)
    ChannelSolver(grid, op, regime="moderate").step(s1, s2, 100)
    drifts["channel"] = float(max(np.max(np.abs(s1.g - g0)),
                                  np.max(np.abs(s2.g - g0))))

    mop, _, _, _ = small_meso()
    ms = MesoSolver(1.0, 12, mop)
    mstate = MesoState.equilibrium(ms.x, mop, density=0.7)
    h0 = mstate.h.copy()
    ms.step(mstate, 100)
    drifts["homogenized"] = float(np.max(np.abs(mstate.h - h0)))

    worst = max(drifts.values())
    announce(4, "equilibrium stationarity", worst <= 1e-8,
             "sup drift over 100 steps: " +
             ", ".join(f"{k} {v:.2e}" for k, v in drifts.items()) +
             ", tol 1e-8")


# ---------------------------------------------------------------------------
# 5. orbit-time and drift-speed closed forms
# ---------------------------------------------------------------------------

def test_criterion_05_orbit_times_and_drifts():
    worst_tau = 0.0
    for w_m in (0.5, 2.0, 4.0, 9.0):
        for z_m in (0.3, 0.5, 0.7):
            pot = NormalPotential.parabolic(w_m, z_m)
            exact = math.pi / (2.0 * math.sqrt(w_m))
            for e in np.linspace(0.05, 0.999, 9) * math.sqrt(w_m):
                worst_tau = max(worst_tau,
                                abs(float(pot.tau_z(e)) - exact) / exact)

    worst_w = 0.0
    bound_ok = True
    for u_m in (0.5, 1.0, 2.0):
        tp = TangentialPotential.harmonic(u_m)
        for e in (1.02 * math.sqrt(u_m), 1.8, 3.0):
            if e * e <= u_m:
                continue
            a = math.sqrt(u_m) / e
            exact = e * a / math.asin(a)
            worst_w = max(worst_w,
                          abs(float(tp.drift_speed(e)) - exact) / exact)
        for e in (0.2 * math.sqrt(u_m), 0.9 * math.sqrt(u_m)):
            bound_ok = bound_ok and float(tp.drift_speed(e)) == 0.0

    announce(5, "orbit closed forms",
             worst_tau <= 1e-6 and worst_w <= 1e-6 and bound_ok,
             f"tau_z rel err {worst_tau:.3e}, drift rel err {worst_w:.3e} "
             f"(tol 1e-6), bound drift exactly zero: {bound_ok}")


# ---------------------------------------------------------------------------
# 6. transport coefficients
# ---------------------------------------------------------------------------

def test_criterion_06_transport_coefficients():
    wells = (NormalPotential.flat(), NormalPotential.parabolic(1.0),
             NormalPotential.parabolic(4.0, 0.3))
    worst_d = max(abs(TransportCoefficients(pot, 0.8).d0n - 0.4)
                  for pot in wells)

    worst_num = 0.0
    cs = []
    for w_m in (1.0, 2.0, 4.0, 8.0):
        tc = TransportCoefficients(NormalPotential.parabolic(w_m))
        worst_num = max(worst_num,
                        abs(tc.exchange_numerator() - math.exp(-w_m)))
        cs.append(tc.c_exchange)
    decreasing = all(a > b for a, b in zip(cs, cs[1:]))

    c1 = TransportCoefficients(NormalPotential.parabolic(1.0))
    c8 = TransportCoefficients(NormalPotential.parabolic(8.0))
    den_ratio = c1.table.ell_moment(1.0, 0) / c8.table.ell_moment(1.0, 0)
    ratio_ok = c8.c_exchange / c1.c_exchange < math.exp(-6.0) * den_ratio

    announce(6, "transport coefficients",
             worst_d <= 1e-10 and worst_num <= 1e-10 and decreasing
             and ratio_ok,
             f"|D0n - tau/2| {worst_d:.2e}, |numerator - e^-Wm| "
             f"{worst_num:.2e} (tol 1e-10), c decreasing: {decreasing}, "
             f"c(8)/c(1) = {cs[3] / cs[0]:.3e} < e^-6 * {den_ratio:.3f}: "
             f"{ratio_ok}")


# ---------------------------------------------------------------------------
# 7. kinetic-to-diffusion limit
# ---------------------------------------------------------------------------

def test_criterion_07_diffusion_limit_convergence():
    tic = time.perf_counter()
    report = run_diffusion_limit_study(threads=3)
    elapsed = time.perf_counter() - tic
    l1 = report.l1_errors
    monotone = all(a > b for a, b in zip(l1, l1[1:]))
    global_order = float(np.log(l1[0] / l1[-1])
                         / np.log(report.parameters[0]
                                  / report.parameters[-1]))
    announce(7, "diffusion limit",
             report.passed and monotone and global_order >= 0.8
             and elapsed < 600.0,
             "L1 = " + ", ".join(f"{v:.3e}" for v in l1) +
             f" at eps = {report.parameters}, global order "
             f"{global_order:.3f} (needs >= 0.8), {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 8. homogenization limit
# ---------------------------------------------------------------------------

def test_criterion_08_homogenization_convergence():
    tic = time.perf_counter()
    report = run_homogenization_study(threads=3)
    elapsed = time.perf_counter() - tic
    errs = report.l1_errors
    monotone = all(a > b for a, b in zip(errs, errs[1:]))
    announce(8, "homogenization",
             report.passed and monotone and elapsed < 600.0,
             "block-L1 = " + ", ".join(f"{v:.3e}" for v in errs) +
             f" at delta = {report.parameters}, strictly decreasing: "
             f"{monotone}, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 9. channel algebra: mirrored sum and symmetry
# ---------------------------------------------------------------------------

def test_criterion_09_channel_reduction_identities():
    grid, op = small_kinetic(nx=8)
    mirror = op.egrid.mirror
    shape = (grid.nx, grid.vgrid.n, grid.egrid.n)
    kw = dict(collision_tol=1e-15, accelerate=False)

    worst_sum = 0.0
    for regime in ("strong", "moderate", "weak"):
        solver = ChannelSolver(grid, op, regime=regime, **kw)
        ref = TrappedKineticSolver(grid, op, dt=solver.dt, **kw)
        s1 = KineticState(RNG.random(shape))
        s2 = KineticState(RNG.random(shape))
        sref = KineticState(s1.g + s2.g[:, :, mirror])
        for _ in range(30):
            solver.step(s1, s2)
            ref.step(sref)
            mism = np.max(np.abs(s1.g + s2.g[:, :, mirror] - sref.g))
            worst_sum = max(worst_sum,
                            float(mism / np.max(np.abs(sref.g))))

    data = RNG.random(shape)
    s1, s2 = KineticState(data), KineticState(data)
    ChannelSolver(grid, op, regime="moderate").step(s1, s2, 25)
    sym = float(np.max(np.abs(s1.g - s2.g)))

    announce(9, "channel algebra", worst_sum <= 1e-12 and sym <= 1e-12,
             f"mirrored-sum error {worst_sum:.2e}/step over three "
             f"regimes, symmetric-layer gap {sym:.2e}, tol 1e-12")


# ---------------------------------------------------------------------------
# 10. coupling regimes: strong collapse, weak exchange law
# ---------------------------------------------------------------------------

def test_criterion_10_coupling_regimes():
    diags = {d.regime: d
             for d in run_coupling_regime_study(("strong", "weak"),
                                                threads=2)}
    strong, weak = diags["strong"], diags["weak"]
    announce(10, "coupling regimes",
             strong.passed and weak.passed
             and strong.rel_gap_final < 1e-3
             and weak.max_ode_mismatch <= 0.10,
             f"strong rel gap {strong.rel_gap_final:.3e} at "
             f"t = 5 eps tau (tol 1e-3), weak gap/exp(-2ct) mismatch "
             f"{weak.max_ode_mismatch:.2%} (tol 10%)")


# ---------------------------------------------------------------------------
# 11. nonisothermal reduction
# ---------------------------------------------------------------------------

def test_criterion_11_noniso_reduction():
    coeffs = TransportCoefficients(NormalPotential.parabolic(4.0))
    tilt = CosineTilt(0.4, 1.0)
    iso = IsoDiffusionSolver(64, 1.0, coeffs.d0n, tilt)
    noniso = NonIsoDiffusionSolver(64, 1.0, coeffs, 1.0, tilt, dt=iso.dt)
    n0 = 1.0 + 0.5 * np.sin(2 * np.pi * iso.x)
    a, b = DiffusionState(n0), DiffusionState(n0)
    iso.step(a, 100)
    noniso.step(b, 100)
    const_t = float(np.max(np.abs(a.N - b.N)))

    temp = lambda x: 1.0 + 0.25 * np.sin(2 * np.pi * x)
    grad = NonIsoDiffusionSolver(96, 1.0, coeffs, temp, CosineTilt(0.2, 1.0))
    N = 1.0 + 0.4 * np.cos(2 * np.pi * grad.x)
    flux_gap = float(np.max(np.abs(grad.pressure_flux(N)
                                   - grad._interface_flux(N))))

    announce(11, "nonisothermal reduction",
             const_t <= 1e-12 and flux_gap <= 1e-8,
             f"constant-T gap vs isothermal {const_t:.2e} (tol 1e-12), "
             f"pressure-form vs density-form flux {flux_gap:.2e} (tol 1e-8)")


# ---------------------------------------------------------------------------
# 12. heat-kernel benchmark
# ---------------------------------------------------------------------------

def test_criterion_12_heat_kernel():
    D, L, nx, t_f = 0.5, 1.0, 256, 0.1
    solver = IsoDiffusionSolver(nx, L, D)
    x = solver.x
    w0, amp, bg, x0 = 0.08, 1.0, 0.5, 0.5

    def wrapped_gaussian(width):
        out = np.full_like(x, bg)
        for k in range(-8, 9):
            out += (amp * (w0 / width)
                    * np.exp(-(x - x0 + k * L) ** 2 / (2.0 * width ** 2)))
        return out

    state = DiffusionState(wrapped_gaussian(w0))
    solver.run(state, t_f)
    exact = wrapped_gaussian(math.sqrt(w0 * w0 + 2.0 * D * t_f))
    rel = float(np.max(np.abs(state.N - exact)) / np.max(np.abs(exact)))
    announce(12, "heat kernel", rel <= 1e-4,
             f"rel Linf vs periodic Gaussian spreading {rel:.3e} at "
             f"t = {t_f}, {nx} cells, tol 1e-4")
