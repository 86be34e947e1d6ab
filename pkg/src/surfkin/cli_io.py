"""Configuration parsing, scenario dispatch and structured output.

Scenario files are INI: ``key = value`` lines under ``[section]`` headers,
``#``/``;`` comments.  Keys and defaults:

[scenario]
    kind                   one of: trapped-kinetic, two-group, channel,
                           mesoscopic, fine-tangential, diffusion-iso,
                           diffusion-noniso, coupled-diffusion, coeffs,
                           study-diffusion-limit, study-homogenization,
                           study-coupling (required)
[potential.normal]         required for kinetic and nonisothermal kinds
    kind = parabolic       flat | parabolic
    z_m = 0.5              well-minimum height (parabolic)
[potential.tangential]     required for mesoscopic / fine-tangential
    kind = harmonic        flat | harmonic | cosine
[grid]
    nx = 64                spatial cells (periodic)
    nv = 16                velocity cells on [-v_max, v_max]
    ne_trapped = 8         normal-energy cells per side below the barrier
    ne_free = 8            ... per side above the barrier
    ax_trapped = 6         tangential-energy cells per side below U_m
    ax_free = 10           ... per side above U_m
    v_max = 6.0            velocity cutoff
    e_max = 6.0            normal-energy cutoff
    ex_max = 4.0           tangential-energy cutoff
    x_length = 1.0         domain length
    dt = auto              time step ("auto" = stability-bound choice)
    t_final = 0.1          horizon
    scheme = upwind        upwind | muscl | fromm
[physics]
    w_m = 4.0              normal barrier height (ignored for flat wells)
    u_m = 1.0              tangential barrier height
    tau_ms = 1.0           relaxation time
    epsilon = 0.1          scale-separation parameter, in (0, 1]
    epsilon0 = epsilon     layer-density normalization scale (bookkeeping
                           only; it never enters the scaled dynamics)
    temperature = 1.0      mean temperature (diffusion-noniso)
    temperature_amplitude = 0.0   relative cosine modulation of T(x)
    tilt_amplitude = 0.0   macroscopic potential U(x) = A cos(2 pi x / L)
    ambient = closed       closed | vacuum | equilibrium (two-group)
    regime = moderate      strong | moderate | weak (channel)
    delta = 0.05           microstructure period (fine-tangential)
[initial]
    background = 1.0       uniform density floor
    bump_amplitude = 0.5   wrapped-Gaussian bump height (layer 1)
    bump_width = 0.1       bump standard deviation
[sweep]                    comma-separated lists
    w_m = ...              coeffs table rows (0 means the flat layer)
    epsilons = ...         study-diffusion-limit sweep
    deltas = ...           study-homogenization sweep
    regimes = ...          study-coupling regimes
[output]
    directory = out
    formats = csv          csv[, binary]
    snapshot_every = 0     snapshot cadence in steps (0 = first and last)
[units]                    optional; switches the file to physical inputs
    temperature_K          ambient temperature in kelvin
    mass_kg                molecular mass in kilograms
    length_m               domain length scale in metres
                           The thermal speed v* = sqrt(2 kB T / m) and
                           t* = length_m / v* convert tau_ms, dt and
                           t_final (seconds) and x_length (metres) to the
                           dimensionless values used everywhere else.

Artifacts (all byte-identical across reruns of the same file):
  series CSV     columns t,x,N,Phi; 17 significant digits
  binary dumps   4 little-endian int64 (nx, nv_or_ax, ne, snapshot index)
                 followed by the row-major float64 state array
  coeffs CSV     columns W_m,U_m,tau_ms,gamma,D0n,D0T,C0p,C0T,c
  study CSV      columns param,L1,Linf,order (no runtimes)

Exit codes: 0 success / study passed, 1 solver error or study failed,
2 config parse or validation error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import math
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from .diffusion_solvers import (
    CoupledDiffusionSolver,
    CoupledState,
    DiffusionState,
    IsoDiffusionSolver,
    NonIsoDiffusionSolver,
    TransportCoefficients,
)
from .equilibrium_collision import (
    CollisionOperator,
    EnergyGrid,
    MesoCollisionOperator,
    VelocityGrid,
)
from .errors import ParseError, SurfkinError, ValidationError
from .hierarchy_harness import (
    CouplingScenario,
    DiffusionLimitScenario,
    HomogenizationScenario,
    run_coupling_regime_study,
    run_diffusion_limit_study,
    run_homogenization_study,
)
from .kinetic_solvers import (
    AmbientBoundary,
    ChannelSolver,
    CosineTilt,
    FineTangentialSolver,
    KineticState,
    MesoSolver,
    MesoState,
    PhaseGrid,
    TrappedKineticSolver,
    TwoGroupSolver,
)
from .potential_geometry import NormalPotential, TangentialPotential

KINDS = (
    "trapped-kinetic", "two-group", "channel", "mesoscopic",
    "fine-tangential", "diffusion-iso", "diffusion-noniso",
    "coupled-diffusion", "coeffs", "study-diffusion-limit",
    "study-homogenization", "study-coupling",
)
_KINETIC_KINDS = ("trapped-kinetic", "two-group", "channel")
_TANGENTIAL_KINDS = ("mesoscopic", "fine-tangential")
_BOLTZMANN = 1.380649e-23  # J/K


@dataclass(frozen=True)
class UnitScales:
    """Physical-to-dimensionless conversion derived from a [units] section."""

    v_star: float   # thermal speed sqrt(2 kB T / m), m/s
    x_star: float   # length scale, m
    t_star: float   # x_star / v_star, s

    def describe(self) -> str:
        return (f"units: v* = {self.v_star:.6g} m/s, "
                f"x* = {self.x_star:.6g} m, t* = {self.t_star:.6g} s")


@dataclass
class ScenarioConfig:
    """Validated, defaulted contents of one scenario file."""

    kind: str
    path: str
    sections: frozenset

    normal_kind: str = "parabolic"
    z_m: float = 0.5
    tangential_kind: str = "harmonic"

    nx: int = 64
    nv: int = 16
    ne_trapped: int = 8
    ne_free: int = 8
    ax_trapped: int = 6
    ax_free: int = 10
    v_max: float = 6.0
    e_max: float = 6.0
    ex_max: float = 4.0
    x_length: float = 1.0
    dt: float | None = None
    t_final: float = 0.1
    scheme: str = "upwind"

    w_m: float = 4.0
    u_m: float = 1.0
    tau_ms: float = 1.0
    epsilon: float = 0.1
    epsilon0: float | None = None
    temperature: float = 1.0
    temperature_amplitude: float = 0.0
    tilt_amplitude: float = 0.0
    ambient: str = "closed"
    regime: str = "moderate"
    delta: float = 0.05

    background: float = 1.0
    bump_amplitude: float = 0.5
    bump_width: float = 0.1

    sweep: dict = field(default_factory=dict)

    out_dir: str = "out"
    formats: tuple = ("csv",)
    snapshot_every: int = 0

    units: UnitScales | None = None
    explicit: frozenset = frozenset()

    def has(self, section: str, key: str) -> bool:
        """True when the file set section.key explicitly."""
        return f"{section}.{key}" in self.explicit

    def normal_potential(self) -> NormalPotential:
        if self.normal_kind == "flat":
            return NormalPotential.flat()
        return NormalPotential.parabolic(self.w_m, self.z_m)

    def tangential_potential(self) -> TangentialPotential:
        if self.tangential_kind == "flat":
            return TangentialPotential.flat()
        if self.tangential_kind == "harmonic":
            return TangentialPotential.harmonic(self.u_m)
        return TangentialPotential.cosine(self.u_m)

    def tilt(self) -> CosineTilt | None:
        if self.tilt_amplitude == 0.0:
            return None
        return CosineTilt(self.tilt_amplitude, self.x_length)

    def initial_profile(self, x):
        """Background plus a wrapped-Gaussian bump centred mid-domain."""
        x = np.asarray(x, dtype=float)
        out = np.full_like(x, self.background)
        x0 = 0.5 * self.x_length
        for k in (-1, 0, 1):
            out += self.bump_amplitude * np.exp(
                -0.5 * ((x - x0 + k * self.x_length) / self.bump_width) ** 2)
        return out


# ---------------------------------------------------------------------------
# Parsing and validation
# ---------------------------------------------------------------------------

class _Collector:
    """Typed reads from a ConfigParser that aggregate every problem."""

    def __init__(self, cp: configparser.ConfigParser):
        self.cp = cp
        self.problems = []
        self.explicit = set()

    def raw(self, section, key):
        if self.cp.has_option(section, key):
            self.explicit.add(f"{section}.{key}")
            return self.cp.get(section, key).strip()
        return None

    def _converted(self, section, key, conv, raw):
        try:
            return conv(raw)
        except ValueError:
            kindname = {int: "an integer", float: "a number"}.get(conv, "valid")
            self.problems.append(
                f"{section}.{key} must be {kindname} (got {raw!r})")
            return None

    def value(self, section, key, conv, default, check=None, message=""):
        raw = self.raw(section, key)
        if raw is None:
            return default
        val = self._converted(section, key, conv, raw)
        if val is None:
            return default
        if check is not None and not check(val):
            self.problems.append(f"{section}.{key} {message} (got {raw})")
            return default
        return val

    def choice(self, section, key, options, default):
        raw = self.raw(section, key)
        if raw is None:
            return default
        if raw not in options:
            self.problems.append(
                f"{section}.{key} must be one of {', '.join(options)} "
                f"(got {raw!r})")
            return default
        return raw

    def float_list(self, section, key, check=None, message=""):
        raw = self.raw(section, key)
        if raw is None:
            return None
        items = [s for s in raw.replace(",", " ").split() if s]
        vals = []
        for s in items:
            try:
                vals.append(float(s))
            except ValueError:
                self.problems.append(
                    f"{section}.{key} entry {s!r} is not a number")
                return None
        if not vals:
            self.problems.append(f"{section}.{key} list is empty")
            return None
        if check is not None and not all(check(v) for v in vals):
            self.problems.append(f"{section}.{key} {message} (got {raw})")
            return None
        return tuple(vals)


def parse_config(path: str) -> ScenarioConfig:
    """Read and validate one scenario file.

    Raises ParseError (with line numbers) on malformed INI syntax and
    ValidationError listing every invalid or missing key at once.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"),
                                   interpolation=None)
    try:
        with open(path, "r", encoding="utf-8") as fh:
            cp.read_file(fh, source=path)
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc}") from exc
    except configparser.MissingSectionHeaderError as exc:
        raise ParseError(
            f"{path}: line {exc.lineno}: key outside any [section]") from exc
    except configparser.DuplicateOptionError as exc:
        raise ParseError(
            f"{path}: line {exc.lineno}: duplicate key {exc.option!r} in "
            f"[{exc.section}]") from exc
    except configparser.DuplicateSectionError as exc:
        raise ParseError(
            f"{path}: line {exc.lineno}: duplicate section "
            f"[{exc.section}]") from exc
    except configparser.ParsingError as exc:
        lines = ", ".join(f"line {lineno}: {text.strip()!r}"
                          for lineno, text in exc.errors)
        raise ParseError(f"{path}: {lines}") from exc
    except configparser.Error as exc:
        raise ParseError(f"{path}: {exc}") from exc

    col = _Collector(cp)
    sections = frozenset(cp.sections())

    kind = None
    if not cp.has_option("scenario", "kind"):
        col.problems.append("scenario.kind is required")
    else:
        kind = col.choice("scenario", "kind", KINDS, None)

    if kind in _KINETIC_KINDS + _TANGENTIAL_KINDS + ("diffusion-noniso",):
        if "potential.normal" not in sections:
            col.problems.append(
                f"section [potential.normal] is required for kind {kind}")
    if kind in _TANGENTIAL_KINDS and "potential.tangential" not in sections:
        col.problems.append(
            f"section [potential.tangential] is required for kind {kind}")

    pos = lambda v: v > 0
    cfg = ScenarioConfig(kind=kind or "invalid", path=path, sections=sections)

    cfg.normal_kind = col.choice("potential.normal", "kind",
                                 ("flat", "parabolic"), cfg.normal_kind)
    cfg.z_m = col.value("potential.normal", "z_m", float, cfg.z_m,
                        lambda v: 0.0 < v < 1.0, "must be in (0,1)")
    cfg.tangential_kind = col.choice("potential.tangential", "kind",
                                     ("flat", "harmonic", "cosine"),
                                     cfg.tangential_kind)

    cfg.nx = col.value("grid", "nx", int, cfg.nx, lambda v: v >= 2,
                       "must be a positive integer >= 2")
    cfg.nv = col.value("grid", "nv", int, cfg.nv, lambda v: v >= 2,
                       "must be a positive integer >= 2")
    for key in ("ne_trapped", "ne_free", "ax_trapped", "ax_free"):
        setattr(cfg, key, col.value("grid", key, int, getattr(cfg, key),
                                    lambda v: v >= 1,
                                    "must be a positive integer"))
    for key in ("v_max", "e_max", "ex_max", "x_length", "t_final"):
        setattr(cfg, key, col.value("grid", key, float, getattr(cfg, key),
                                    pos, "must be positive"))
    cfg.scheme = col.choice("grid", "scheme", ("upwind", "muscl", "fromm"),
                            cfg.scheme)
    raw_dt = col.raw("grid", "dt")
    if raw_dt is not None and raw_dt != "auto":
        cfg.dt = col._converted("grid", "dt", float, raw_dt)
        if cfg.dt is not None and cfg.dt <= 0:
            col.problems.append(f"grid.dt must be positive or "
                                f"'auto' (got {raw_dt})")
            cfg.dt = None

    cfg.w_m = col.value("physics", "w_m", float, cfg.w_m, pos,
                        "must be > 0")
    cfg.u_m = col.value("physics", "u_m", float, cfg.u_m,
                        lambda v: v >= 0, "must be >= 0")
    cfg.tau_ms = col.value("physics", "tau_ms", float, cfg.tau_ms, pos,
                           "must be positive")
    cfg.epsilon = col.value("physics", "epsilon", float, cfg.epsilon,
                            lambda v: 0.0 < v <= 1.0, "must be in (0,1]")
    cfg.epsilon0 = col.value("physics", "epsilon0", float, cfg.epsilon,
                             lambda v: 0.0 < v <= 1.0, "must be in (0,1]")
    cfg.temperature = col.value("physics", "temperature", float,
                                cfg.temperature, pos, "must be positive")
    cfg.temperature_amplitude = col.value(
        "physics", "temperature_amplitude", float, cfg.temperature_amplitude,
        lambda v: abs(v) < 1.0, "must lie in (-1,1)")
    cfg.tilt_amplitude = col.value("physics", "tilt_amplitude", float,
                                   cfg.tilt_amplitude, None, "")
    cfg.ambient = col.choice("physics", "ambient",
                             ("closed", "vacuum", "equilibrium"), cfg.ambient)
    cfg.regime = col.choice("physics", "regime",
                            ("strong", "moderate", "weak"), cfg.regime)
    cfg.delta = col.value("physics", "delta", float, cfg.delta, pos,
                          "must be positive")

    cfg.background = col.value("initial", "background", float,
                               cfg.background, lambda v: v >= 0,
                               "must be >= 0")
    cfg.bump_amplitude = col.value("initial", "bump_amplitude", float,
                                   cfg.bump_amplitude, None, "")
    cfg.bump_width = col.value("initial", "bump_width", float,
                               cfg.bump_width, pos, "must be positive")

    sweep = {}
    lst = col.float_list("sweep", "w_m", lambda v: v >= 0, "must be >= 0")
    if lst is not None:
        sweep["w_m"] = lst
    lst = col.float_list("sweep", "epsilons", lambda v: 0.0 < v <= 1.0,
                         "entries must be in (0,1]")
    if lst is not None:
        sweep["epsilons"] = lst
    lst = col.float_list("sweep", "deltas", pos, "entries must be positive")
    if lst is not None:
        sweep["deltas"] = lst
    raw = col.raw("sweep", "regimes")
    if raw is not None:
        regs = tuple(s for s in raw.replace(",", " ").split() if s)
        bad = [r for r in regs if r not in ("strong", "moderate", "weak")]
        if bad or not regs:
            col.problems.append(
                "sweep.regimes entries must be strong/moderate/weak "
                f"(got {raw!r})")
        else:
            sweep["regimes"] = regs
    cfg.sweep = sweep

    cfg.out_dir = col.value("output", "directory", str, cfg.out_dir,
                            lambda v: bool(v), "must be non-empty")
    raw = col.raw("output", "formats")
    if raw is not None:
        fmts = tuple(s for s in raw.replace(",", " ").split() if s)
        bad = [f for f in fmts if f not in ("csv", "binary")]
        if bad or not fmts:
            col.problems.append(
                f"output.formats entries must be csv/binary (got {raw!r})")
        else:
            cfg.formats = fmts
    cfg.snapshot_every = col.value("output", "snapshot_every", int,
                                   cfg.snapshot_every, lambda v: v >= 0,
                                   "must be a non-negative integer")

    if "units" in sections:
        vals = {}
        for key in ("temperature_K", "mass_kg", "length_m"):
            if not cp.has_option("units", key):
                col.problems.append(f"units.{key} is required when the "
                                    "[units] section is present")
                continue
            vals[key] = col.value("units", key, float, None, pos,
                                  "must be positive")
        if len(vals) == 3 and all(v is not None for v in vals.values()):
            v_star = math.sqrt(2.0 * _BOLTZMANN * vals["temperature_K"]
                               / vals["mass_kg"])
            x_star = vals["length_m"]
            cfg.units = UnitScales(v_star, x_star, x_star / v_star)
            # tau_ms, dt, t_final arrive in seconds; x_length in metres
            cfg.tau_ms = cfg.tau_ms / cfg.units.t_star
            cfg.t_final = cfg.t_final / cfg.units.t_star
            if cfg.dt is not None:
                cfg.dt = cfg.dt / cfg.units.t_star
            cfg.x_length = cfg.x_length / cfg.units.x_star

    if kind in _TANGENTIAL_KINDS and cfg.tangential_kind != "flat":
        if cfg.ex_max <= math.sqrt(max(cfg.u_m, 0.0)):
            col.problems.append(
                "grid.ex_max must exceed sqrt(physics.u_m) "
                f"(got {cfg.ex_max} with u_m = {cfg.u_m})")

    if col.problems:
        raise ValidationError(col.problems)
    cfg.explicit = frozenset(col.explicit)
    return cfg


# ---------------------------------------------------------------------------
# Output writers
# ---------------------------------------------------------------------------

def _fmt(x: float) -> str:
    return format(float(x), ".17g")


class SeriesWriter:
    """Appends (t, x, N, Phi) snapshot rows to one CSV file."""

    def __init__(self, path: str):
        self.path = path
        self._fh = open(path, "w", newline="", encoding="utf-8")
        self._csv = csv.writer(self._fh)
        self._csv.writerow(("t", "x", "N", "Phi"))
        self.count = 0

    def snapshot(self, t, x, n, phi):
        for xk, nk, pk in zip(x, n, phi):
            self._csv.writerow((_fmt(t), _fmt(xk), _fmt(nk), _fmt(pk)))
        self.count += 1

    def close(self):
        self._fh.close()


def write_binary_snapshot(path: str, state_array, index: int):
    """Header (nx, nv_or_ax, ne, index) as little-endian int64, then the
    row-major float64 payload; bit-exact round trip via read_binary_snapshot.
    """
    g = np.ascontiguousarray(state_array, dtype="<f8")
    if g.ndim == 1:
        dims = (g.shape[0], 1, 1)
    elif g.ndim == 2:
        dims = (g.shape[0], g.shape[1], 1)
    else:
        dims = g.shape
    header = np.array([*dims, index], dtype="<i8")
    with open(path, "wb") as fh:
        fh.write(header.tobytes())
        fh.write(g.tobytes())


def read_binary_snapshot(path: str):
    """Inverse of write_binary_snapshot: ((nx, ns, ne, index), array)."""
    with open(path, "rb") as fh:
        head = fh.read(32)
        if len(head) != 32:
            raise ParseError(f"{path}: truncated snapshot header")
        nx, ns, ne, index = (int(v) for v in np.frombuffer(head, dtype="<i8"))
        body = fh.read()
    if len(body) != 8 * nx * ns * ne:
        raise ParseError(f"{path}: payload size {len(body) // 8} does not "
                         f"match header dims {(nx, ns, ne)}")
    payload = np.frombuffer(body, dtype="<f8")
    return (nx, ns, ne, index), payload.reshape(nx, ns, ne).copy()


class _SnapshotSink:
    """Owns the per-layer series CSV and optional binary dumps."""

    def __init__(self, outdir, label, formats):
        self.series = SeriesWriter(os.path.join(outdir, f"{label}_series.csv"))
        self.binary = "binary" in formats
        self.outdir = outdir
        self.label = label
        self.index = 0
        self.last_t = None

    def write(self, t, x, n, phi, state_array):
        if (self.last_t is not None
                and abs(t - self.last_t) <= 1e-12 * max(1.0, abs(t))):
            return
        self.series.snapshot(t, x, n, phi)
        if self.binary:
            path = os.path.join(self.outdir,
                                f"{self.label}_snap_{self.index:04d}.bin")
            write_binary_snapshot(path, state_array, self.index)
        self.index += 1
        self.last_t = t

    def close(self):
        self.series.close()


# ---------------------------------------------------------------------------
# Scenario runners
# ---------------------------------------------------------------------------

def _march_with_snapshots(solver, state, t_final, every, emit):
    """Advance to t_final, emitting at t=0, every `every` steps, and at
    the end; the last step is shortened to land on t_final exactly."""
    emit(state)
    istep = 0
    while state.t < t_final * (1.0 - 1e-12):
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
        if every and istep % every == 0:
            emit(state)
    emit(state)
    return istep


def _run_single_kinetic(cfg, outdir):
    pot = cfg.normal_potential()
    vg = VelocityGrid(cfg.nv, cfg.v_max)
    eg = EnergyGrid(math.sqrt(pot.w_m), cfg.ne_trapped, cfg.ne_free,
                    cfg.e_max)
    op = CollisionOperator(pot, eg, vg)
    grid = PhaseGrid(cfg.nx, cfg.x_length, vg, eg, epsilon=cfg.epsilon)
    tilt = cfg.tilt()
    common = dict(tau_ms=cfg.tau_ms, tilt=tilt, scheme=cfg.scheme, dt=cfg.dt)
    if cfg.kind == "trapped-kinetic":
        solver = TrappedKineticSolver(grid, op, **common)
    elif cfg.kind == "two-group":
        if cfg.ambient == "closed":
            ambient = AmbientBoundary.closed()
        elif cfg.ambient == "vacuum":
            ambient = AmbientBoundary.vacuum(op)
        else:
            ambient = AmbientBoundary.equilibrium(op, density=cfg.background)
        solver = TwoGroupSolver(grid, op, ambient, **common)
    else:
        raise SurfkinError(f"not a single-layer kinetic kind: {cfg.kind}")

    state = KineticState.equilibrium(grid, op,
                                     density=cfg.initial_profile(grid.x))
    mass0 = solver.total_mass(state)
    sink = _SnapshotSink(outdir, "layer1", cfg.formats)
    emit = lambda st: sink.write(st.t, grid.x, solver.density(st),
                                 solver.flux(st), st.g)
    steps = _march_with_snapshots(solver, state, cfg.t_final,
                                  cfg.snapshot_every, emit)
    sink.close()
    drift = solver.total_mass(state) - mass0
    extra = ""
    if cfg.kind == "two-group" and solver.ambient.mode == "prescribed":
        net = solver.absorbed_mass - solver.emitted_mass
        extra = (f", exchanged mass {net:+.6e} "
                 f"(balance residual {drift - net:+.3e})")
    print(f"{cfg.kind}: {steps} steps to t = {_fmt(state.t)}, "
          f"mass drift = {drift:+.3e}{extra}")
    print(f"wrote {sink.series.path} ({sink.index} snapshots)")
    return 0


def _run_channel(cfg, outdir):
    pot = cfg.normal_potential()
    vg = VelocityGrid(cfg.nv, cfg.v_max)
    eg = EnergyGrid(math.sqrt(pot.w_m), cfg.ne_trapped, cfg.ne_free,
                    cfg.e_max)
    op = CollisionOperator(pot, eg, vg)
    grid = PhaseGrid(cfg.nx, cfg.x_length, vg, eg, epsilon=cfg.epsilon)
    solver = ChannelSolver(grid, op, regime=cfg.regime, tau_ms=cfg.tau_ms,
                           tilt=cfg.tilt(), scheme=cfg.scheme, dt=cfg.dt)
    if cfg.dt is None:
        # no partial-step support on the paired stepper: pick the largest
        # commensurate step under the stability bound
        nsteps = max(1, int(math.ceil(cfg.t_final / solver.dt - 1e-9)))
        solver = ChannelSolver(grid, op, regime=cfg.regime,
                               tau_ms=cfg.tau_ms, tilt=cfg.tilt(),
                               scheme=cfg.scheme, dt=cfg.t_final / nsteps)
    s1 = KineticState.equilibrium(grid, op,
                                  density=cfg.initial_profile(grid.x))
    s2 = KineticState.equilibrium(grid, op, density=cfg.background)
    mass0 = solver.total_mass(s1) + solver.total_mass(s2)

    sinks = [_SnapshotSink(outdir, "layer1", cfg.formats),
             _SnapshotSink(outdir, "layer2", cfg.formats)]

    def emit(a, b):
        sinks[0].write(a.t, grid.x, solver.density(a), solver.flux(a), a.g)
        sinks[1].write(b.t, grid.x, solver.density(b), solver.flux(b), b.g)

    emit(s1, s2)
    istep = 0
    while s1.t < cfg.t_final * (1.0 - 1e-12):
        solver.step(s1, s2)
        istep += 1
        if cfg.snapshot_every and istep % cfg.snapshot_every == 0:
            emit(s1, s2)
    emit(s1, s2)
    for sink in sinks:
        sink.close()
    drift = solver.total_mass(s1) + solver.total_mass(s2) - mass0
    print(f"channel[{cfg.regime}]: {istep} steps to t = {_fmt(s1.t)}, "
          f"mass drift = {drift:+.3e}")
    print(f"wrote {sinks[0].series.path} and {sinks[1].series.path} "
          f"({sinks[0].index} snapshots each)")
    return 0


def _run_meso(cfg, outdir):
    pot = cfg.normal_potential()
    zgrid = EnergyGrid(math.sqrt(pot.w_m), cfg.ne_trapped, cfg.ne_free,
                       cfg.e_max)
    zop = CollisionOperator(pot, zgrid, VelocityGrid(cfg.nv, cfg.v_max))
    tang = cfg.tangential_potential()
    exgrid = EnergyGrid(math.sqrt(tang.u_m), cfg.ax_trapped, cfg.ax_free,
                        cfg.ex_max)
    mop = MesoCollisionOperator(tang, exgrid, zop)
    solver = MesoSolver(cfg.x_length, cfg.nx, mop, tau_ms=cfg.tau_ms,
                        scheme=cfg.scheme, dt=cfg.dt)
    state = MesoState.equilibrium(solver.x, mop,
                                  density=cfg.initial_profile(solver.x))
    mass0 = solver.total_mass(state)
    sink = _SnapshotSink(outdir, "layer1", cfg.formats)
    emit = lambda st: sink.write(st.t, solver.x, solver.density(st),
                                 solver.flux(st), st.h)
    steps = _march_with_snapshots(solver, state, cfg.t_final,
                                  cfg.snapshot_every, emit)
    sink.close()
    drift = solver.total_mass(state) - mass0
    print(f"mesoscopic: {steps} steps to t = {_fmt(state.t)}, "
          f"mass drift = {drift:+.3e}")
    print(f"wrote {sink.series.path} ({sink.index} snapshots)")
    return 0


def _run_fine(cfg, outdir):
    pot = cfg.normal_potential()
    zgrid = EnergyGrid(math.sqrt(pot.w_m), cfg.ne_trapped, cfg.ne_free,
                       cfg.e_max)
    zop = CollisionOperator(pot, zgrid, VelocityGrid(cfg.nv, cfg.v_max))
    tang = cfg.tangential_potential()
    exgrid = EnergyGrid(math.sqrt(tang.u_m), cfg.ax_trapped, cfg.ax_free,
                        cfg.ex_max)
    solver = FineTangentialSolver(cfg.x_length, cfg.nx, tang, cfg.delta,
                                  exgrid, zop, tau_ms=cfg.tau_ms, dt=cfg.dt)
    state = solver.equilibrium(density=cfg.initial_profile(solver.x))
    mass0 = solver.total_mass(state)
    sink = _SnapshotSink(outdir, "layer1", cfg.formats)
    emit = lambda st: sink.write(st.t, solver.x, solver.density(st),
                                 solver.flux(st), st.m)
    steps = _march_with_snapshots(solver, state, cfg.t_final,
                                  cfg.snapshot_every, emit)
    sink.close()
    drift = solver.total_mass(state) - mass0
    print(f"fine-tangential: {steps} steps to t = {_fmt(state.t)}, "
          f"mass drift = {drift:+.3e}")
    print(f"wrote {sink.series.path} ({sink.index} snapshots)")
    return 0


def _temperature_profile(cfg, x):
    if cfg.temperature_amplitude == 0.0:
        return cfg.temperature
    return cfg.temperature * (1.0 + cfg.temperature_amplitude * np.cos(
        2.0 * math.pi * np.asarray(x) / cfg.x_length))


def _run_diffusion(cfg, outdir):
    tilt = cfg.tilt()
    if cfg.kind == "diffusion-iso":
        solver = IsoDiffusionSolver(cfg.nx, cfg.x_length, 0.5 * cfg.tau_ms,
                                    tilt, dt=cfg.dt)
    else:
        coeffs = TransportCoefficients(cfg.normal_potential(), cfg.tau_ms)
        x = (np.arange(cfg.nx) + 0.5) * cfg.x_length / cfg.nx
        solver = NonIsoDiffusionSolver(cfg.nx, cfg.x_length, coeffs,
                                       _temperature_profile(cfg, x),
                                       tilt, dt=cfg.dt)
    state = DiffusionState(cfg.initial_profile(solver.x))
    mass0 = solver.total_mass(state)
    sink = _SnapshotSink(outdir, "layer1", cfg.formats)
    emit = lambda st: sink.write(st.t, solver.x, st.N, solver.flux(st), st.N)
    steps = _march_with_snapshots(solver, state, cfg.t_final,
                                  cfg.snapshot_every, emit)
    sink.close()
    drift = solver.total_mass(state) - mass0
    print(f"{cfg.kind}: {steps} steps to t = {_fmt(state.t)}, "
          f"mass drift = {drift:+.3e}")
    print(f"wrote {sink.series.path} ({sink.index} snapshots)")
    return 0


def _run_coupled_diffusion(cfg, outdir):
    c = TransportCoefficients(cfg.normal_potential(), cfg.tau_ms).c_exchange
    solver = CoupledDiffusionSolver(cfg.nx, cfg.x_length, 0.5 * cfg.tau_ms,
                                    c, cfg.tilt(), dt=cfg.dt)
    x = solver.iso.x
    state = CoupledState(cfg.initial_profile(x),
                         np.full(cfg.nx, cfg.background))
    mass0 = solver.total_mass(state)
    sinks = [_SnapshotSink(outdir, "layer1", cfg.formats),
             _SnapshotSink(outdir, "layer2", cfg.formats)]

    def emit(st):
        for sink, n in ((sinks[0], st.N1), (sinks[1], st.N2)):
            sink.write(st.t, x, n, solver.iso.flux(DiffusionState(n, st.t)), n)

    steps = _march_with_snapshots(solver, state, cfg.t_final,
                                  cfg.snapshot_every, emit)
    for sink in sinks:
        sink.close()
    drift = solver.total_mass(state) - mass0
    print(f"coupled-diffusion (c = {c:.6g}): {steps} steps to "
          f"t = {_fmt(state.t)}, mass drift = {drift:+.3e}")
    print(f"wrote {sinks[0].series.path} and {sinks[1].series.path} "
          f"({sinks[0].index} snapshots each)")
    return 0


def _run_coeffs(cfg, outdir):
    if "w_m" in cfg.sweep:
        w_values = cfg.sweep["w_m"]
    elif cfg.normal_kind == "flat":
        w_values = (0.0,)
    else:
        w_values = (cfg.w_m,)
    path = os.path.join(outdir, "coeffs.csv")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("W_m", "U_m", "tau_ms", "gamma", "D0n", "D0T",
                         "C0p", "C0T", "c"))
        for w in w_values:
            pot = (NormalPotential.flat() if w == 0.0
                   else NormalPotential.parabolic(w, cfg.z_m))
            tc = TransportCoefficients(pot, cfg.tau_ms)
            c0p, c0t = tc.pressure_coeffs(1.0, 1.0)
            writer.writerow(tuple(_fmt(v) for v in (
                w, cfg.u_m, cfg.tau_ms, tc.gamma, tc.d0n,
                tc.d0t(1.0, 1.0), c0p, c0t, tc.c_exchange)))
    print(f"coeffs: {len(w_values)} rows (W_m = "
          f"{', '.join(_fmt(w) for w in w_values)}) -> {path}")
    return 0


def _scenario_overrides(cfg, mapping):
    """Scenario-dataclass kwargs from keys the file set explicitly.

    mapping: {(section, key): (cfg_attribute, scenario_field)}.
    """
    out = {}
    for (section, key), (attr, field_name) in mapping.items():
        if cfg.has(section, key):
            out[field_name] = getattr(cfg, attr)
    return out


def _write_report_csv(path, report):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(("param", "L1", "Linf", "order"))
        for row in report.csv_rows():
            writer.writerow(tuple(_fmt(v) for v in row))


def _run_study(cfg, outdir, threads):
    if cfg.kind == "study-diffusion-limit":
        overrides = _scenario_overrides(cfg, {
            ("grid", "nx"): ("nx", "nx"),
            ("grid", "nv"): ("nv", "nv"),
            ("grid", "ne_trapped"): ("ne_trapped", "ne_trapped"),
            ("grid", "ne_free"): ("ne_free", "ne_free"),
            ("grid", "x_length"): ("x_length", "x_length"),
            ("grid", "t_final"): ("t_final", "t_final"),
            ("grid", "scheme"): ("scheme", "scheme"),
            ("physics", "w_m"): ("w_m", "w_m"),
            ("physics", "tau_ms"): ("tau_ms", "tau_ms"),
            ("physics", "tilt_amplitude"): ("tilt_amplitude",
                                            "tilt_amplitude"),
            ("initial", "bump_amplitude"): ("bump_amplitude",
                                            "bump_amplitude"),
            ("initial", "bump_width"): ("bump_width", "bump_width"),
        })
        report = run_diffusion_limit_study(
            cfg.sweep.get("epsilons", (0.1, 0.05, 0.025)),
            DiffusionLimitScenario(**overrides), verbose=True,
            threads=threads)
    elif cfg.kind == "study-homogenization":
        overrides = _scenario_overrides(cfg, {
            ("grid", "x_length"): ("x_length", "x_length"),
            ("grid", "t_final"): ("t_final", "t_final"),
            ("physics", "w_m"): ("w_m", "w_m"),
            ("physics", "u_m"): ("u_m", "u_m"),
            ("physics", "tau_ms"): ("tau_ms", "tau_ms"),
            ("potential.tangential", "kind"): ("tangential_kind",
                                               "tangential_kind"),
        })
        report = run_homogenization_study(
            cfg.sweep.get("deltas", (0.04, 0.02, 0.01)),
            HomogenizationScenario(**overrides), verbose=True,
            threads=threads)
    else:
        overrides = _scenario_overrides(cfg, {
            ("grid", "nx"): ("nx", "nx"),
            ("grid", "nv"): ("nv", "nv"),
            ("grid", "ne_trapped"): ("ne_trapped", "ne_trapped"),
            ("grid", "ne_free"): ("ne_free", "ne_free"),
            ("grid", "x_length"): ("x_length", "x_length"),
            ("physics", "tau_ms"): ("tau_ms", "tau_ms"),
            ("physics", "epsilon"): ("epsilon", "epsilon"),
        })
        diags = run_coupling_regime_study(
            cfg.sweep.get("regimes", ("strong", "moderate", "weak")),
            CouplingScenario(**overrides), verbose=False, threads=threads)
        path = os.path.join(outdir, "coupling_report.csv")
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(("regime", "W_m", "epsilon", "t_final",
                             "rel_gap_initial", "rel_gap_final", "sum_error",
                             "max_ode_mismatch", "passed"))
            for d in diags:
                writer.writerow((d.regime, _fmt(d.w_m), _fmt(d.epsilon),
                                 _fmt(d.t_final), _fmt(d.rel_gap_initial),
                                 _fmt(d.rel_gap_final), _fmt(d.sum_error),
                                 _fmt(d.max_ode_mismatch), int(d.passed)))
        for d in diags:
            gpath = os.path.join(outdir, f"coupling_gap_{d.regime}.csv")
            with open(gpath, "w", newline="", encoding="utf-8") as fh:
                writer = csv.writer(fh)
                if d.predicted_gap:
                    writer.writerow(("t", "gap", "predicted"))
                    for t, g, p in zip(d.gap_times, d.gap_values,
                                       d.predicted_gap):
                        writer.writerow((_fmt(t), _fmt(g), _fmt(p)))
                else:
                    writer.writerow(("t", "gap"))
                    for t, g in zip(d.gap_times, d.gap_values):
                        writer.writerow((_fmt(t), _fmt(g)))
            print(d.summary())
        print(f"wrote {path}")
        return 0 if all(d.passed for d in diags) else 1

    path = os.path.join(outdir, f"{report.study}_report.csv")
    _write_report_csv(path, report)
    print(report.summary())
    print(f"wrote {path}")
    return 0 if report.passed else 1


def run_scenario(cfg: ScenarioConfig, threads: int = 1) -> int:
    """Dispatch one validated config; returns the process exit code.

    Artifacts land in cfg.out_dir; a summary (including the conserved-mass
    drift for time-marching kinds) is printed to stdout.  Solver errors are
    reported on stderr with the failing kind named, exit code 1.
    """
    os.makedirs(cfg.out_dir, exist_ok=True)
    if cfg.units is not None:
        print(cfg.units.describe())
    try:
        if cfg.kind in ("trapped-kinetic", "two-group"):
            return _run_single_kinetic(cfg, cfg.out_dir)
        if cfg.kind == "channel":
            return _run_channel(cfg, cfg.out_dir)
        if cfg.kind == "mesoscopic":
            return _run_meso(cfg, cfg.out_dir)
        if cfg.kind == "fine-tangential":
            return _run_fine(cfg, cfg.out_dir)
        if cfg.kind in ("diffusion-iso", "diffusion-noniso"):
            return _run_diffusion(cfg, cfg.out_dir)
        if cfg.kind == "coupled-diffusion":
            return _run_coupled_diffusion(cfg, cfg.out_dir)
        if cfg.kind == "coeffs":
            return _run_coeffs(cfg, cfg.out_dir)
        return _run_study(cfg, cfg.out_dir, threads)
    except SurfkinError as exc:
        print(f"error [{cfg.kind}]: {exc}", file=sys.stderr)
        return 1


# ---------------------------------------------------------------------------
# Command line
# ---------------------------------------------------------------------------

def _add_common(sub):
    sub.add_argument("config", help="scenario file (INI)")
    sub.add_argument("--out", help="override the output directory")
    sub.add_argument("--threads", type=int, default=1,
                     help="worker threads for sweep points (default 1)")
    sub.add_argument("--snapshot-every", type=int, dest="snapshot_every",
                     help="override the snapshot cadence in steps")


def _load(args):
    cfg = parse_config(args.config)
    if args.out:
        cfg.out_dir = args.out
    if getattr(args, "snapshot_every", None) is not None:
        if args.snapshot_every < 0:
            raise ValidationError(
                "--snapshot-every must be a non-negative integer")
        cfg.snapshot_every = args.snapshot_every
    return cfg


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="surfkin",
        description="Surface-layer kinetic and diffusion model runner.")
    subs = parser.add_subparsers(dest="command", required=True)

    p_run = subs.add_parser("run", help="run any scenario kind")
    _add_common(p_run)
    p_coeffs = subs.add_parser("coeffs", help="write the coefficient table")
    _add_common(p_coeffs)
    p_study = subs.add_parser("study", help="run a verification study")
    p_study.add_argument("study_kind", choices=("diffusion-limit",
                                                "homogenization", "coupling"))
    _add_common(p_study)
    p_val = subs.add_parser("validate", help="parse and validate only")
    p_val.add_argument("config", help="scenario file (INI)")

    args = parser.parse_args(argv)

    if args.command == "validate":
        try:
            cfg = parse_config(args.config)
        except (ParseError, ValidationError) as exc:
            _print_config_errors(exc)
            return 2
        print(f"config OK: kind = {cfg.kind}")
        return 0

    try:
        cfg = _load(args)
    except (ParseError, ValidationError) as exc:
        _print_config_errors(exc)
        return 2

    if args.command == "coeffs" and cfg.kind != "coeffs":
        print(f"error: scenario.kind is {cfg.kind!r}; the coeffs "
              "subcommand needs kind = coeffs", file=sys.stderr)
        return 2
    if args.command == "study":
        expected = f"study-{args.study_kind}"
        if cfg.kind != expected:
            print(f"error: scenario.kind is {cfg.kind!r}; the study "
                  f"subcommand expects kind = {expected}", file=sys.stderr)
            return 2

    return run_scenario(cfg, threads=max(1, args.threads))


def _print_config_errors(exc):
    if isinstance(exc, ValidationError):
        print(f"invalid config ({len(exc.problems)} problem"
              f"{'s' if len(exc.problems) != 1 else ''}):", file=sys.stderr)
        for problem in exc.problems:
            print(f"  - {problem}", file=sys.stderr)
    else:
        print(f"parse error: {exc}", file=sys.stderr)


if __name__ == "__main__":
    sys.exit(main())
