"""Confining potentials and classical orbit geometry for the surface layer.

The layer occupies z in (0, 1] in units of the layer depth.  A molecule with
normal energy e_z^2 (energies are measured in kT, velocities in
v* = sqrt(2kT/m)) moves in the normal potential W(z); its classically allowed
window is {z : W(z) < e_z^2}.  The quantities computed here are

    sigma_z(z, e_z) = (e_z^2 - W(z))^(-1/2)        inverse normal speed,
    tau_z(e_z)      = integral of sigma_z over the allowed window,
    ell(e_z)        = |e_z| * tau_z(e_z)           effective layer width,

and the tangential analogues on the unit periodic cell y in [-1/2, 1/2):

    sigma_bar(e_x)  = integral of (e_x^2 - U(y))^(-1/2) over the allowed y,
    w_x(e_x)        = sgn(e_x) / sigma_bar(e_x)    mean drift (0 if bound).

All integrals have inverse-square-root endpoints at turning points, so the
quadratures map each segment through z = a + (b - a) sin^2(theta) before
applying Gauss-Legendre; that removes both the 1/sqrt singularities and the
sqrt kinks, restoring spectral accuracy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import NamedTuple

import numpy as np
from scipy.special import roots_legendre

from .errors import DomainError, QuadratureError, RootError

#: Lowest height at which a steep wall profile is ever evaluated.  Profiles
#: used here are bounded near z = 0, so windows that formally reach the wall
#: integrate from z = 0 exactly; the floor only caps root searches.
Z_FLOOR = 1.0e-4


@dataclass(frozen=True)
class QuadratureSpec:
    """Controls the composite quadratures.

    nodes        Gauss-Legendre points per segment.
    tolerance    bound used by optional self-checks (QuadratureError beyond it).
    refinement   factor applied to `nodes` when a refined second path is built.
    """

    nodes: int = 48
    tolerance: float = 1.0e-10
    refinement: float = 2.0

    def refined(self) -> "QuadratureSpec":
        n = max(self.nodes + 1, int(math.ceil(self.nodes * self.refinement)))
        return QuadratureSpec(n, self.tolerance, self.refinement)


DEFAULT_QUAD = QuadratureSpec()


@lru_cache(maxsize=64)
def _legendre(n: int):
    x, w = roots_legendre(n)
    return x, w


def gauss_segment(a: float, b: float, n: int):
    """Nodes and weights for integral_a^b f(z) dz via z = a + (b-a) sin^2(theta).

    Exact treatment of (z - a)^(-1/2) and (b - z)^(-1/2) endpoint behaviour;
    harmless (still spectrally convergent) for smooth integrands.
    """
    x, w = _legendre(n)
    theta = (x + 1.0) * (np.pi / 4.0)
    s = np.sin(theta)
    c = np.cos(theta)
    z = a + (b - a) * s * s
    wz = (b - a) * 2.0 * s * c * (np.pi / 4.0) * w
    return z, wz


def composite_nodes(breakpoints, n: int):
    """Concatenate sin^2-mapped Gauss-Legendre rules over consecutive segments.

    Zero-length segments are skipped; breakpoints must be sorted.
    """
    pts = np.asarray(breakpoints, dtype=float)
    zs = []
    ws = []
    for a, b in zip(pts[:-1], pts[1:]):
        if b - a <= 0.0:
            continue
        z, w = gauss_segment(a, b, n)
        zs.append(z)
        ws.append(w)
    if not zs:
        raise QuadratureError("empty quadrature window")
    return np.concatenate(zs), np.concatenate(ws)


class TurningPoints(NamedTuple):
    z_lo: float
    z_hi: float
    trapped: bool


class NormalPotential:
    """Normal confining profile W(z) on (0, 1].

    Profiles
    --------
    flat            W = 0 everywhere (no confinement; every molecule is free).
    parabolic       piecewise-parabolic well with minimum 0 at z_m and barrier
                    W_m at both the wall (z -> 0) and the layer edge (z = 1):

                        W(z) = W_m ((z - z_m)/z_m)^2        z <= z_m
                        W(z) = W_m ((z - z_m)/(1 - z_m))^2  z >  z_m

    The barrier height W(1) = W_m separates trapped (|e_z| <= sqrt(W_m)) from
    free molecules.  The wall is "soft": W caps at W_m as z -> 0, so free
    molecules reach z = 0 and their window is the whole layer.
    """

    def __init__(self, kind: str, w_m: float, z_m: float = 0.5):
        if kind not in ("flat", "parabolic"):
            raise DomainError(f"unknown normal profile kind {kind!r}")
        if not (np.isfinite(w_m) and w_m >= 0.0):
            raise DomainError("barrier height W_m must be finite and >= 0")
        if kind == "parabolic" and not (0.0 < z_m < 1.0):
            raise DomainError("well minimum z_m must lie inside (0, 1)")
        self.kind = kind
        self.w_m = float(w_m)
        self.z_m = float(z_m)

    @classmethod
    def flat(cls) -> "NormalPotential":
        return cls("flat", 0.0)

    @classmethod
    def parabolic(cls, w_m: float, z_m: float = 0.5) -> "NormalPotential":
        return cls("parabolic", w_m, z_m)

    # -- profile -----------------------------------------------------------

    def value(self, z):
        z = np.asarray(z, dtype=float)
        if self.kind == "flat":
            return np.zeros_like(z)
        left = ((z - self.z_m) / self.z_m) ** 2
        right = ((z - self.z_m) / (1.0 - self.z_m)) ** 2
        return self.w_m * np.where(z <= self.z_m, left, right)

    def profile_breaks(self):
        """Interior z where W is continuous but not smooth."""
        if self.kind == "parabolic":
            return (self.z_m,)
        return ()

    # -- orbits ------------------------------------------------------------

    def turning_points(self, e_z: float) -> TurningPoints:
        """Classical window (z_lo, z_hi) for normal energy e_z^2.

        Trapped molecules (e_z^2 <= W_m) turn at the roots of W = e_z^2;
        free molecules span the whole layer (z_lo = 0, z_hi = 1).
        """
        if not np.isfinite(e_z):
            raise DomainError("e_z must be finite")
        ee = float(e_z) ** 2
        if ee == 0.0:
            raise DomainError("zero normal energy has no bounce orbit")
        if self.kind == "flat":
            return TurningPoints(0.0, 1.0, False)
        if ee >= self.w_m:
            return TurningPoints(0.0, 1.0, ee <= self.w_m)
        r = math.sqrt(ee / self.w_m)
        z_lo = self.z_m * (1.0 - r)
        z_hi = self.z_m + (1.0 - self.z_m) * r
        if not (0.0 <= z_lo < z_hi <= 1.0):
            raise RootError(f"turning points out of order for e_z={e_z}")
        return TurningPoints(z_lo, z_hi, True)

    def window_breaks(self, e_z: float):
        """Sorted breakpoints of the allowed window, including profile kinks."""
        tp = self.turning_points(e_z)
        pts = [tp.z_lo]
        pts += [b for b in self.profile_breaks() if tp.z_lo < b < tp.z_hi]
        pts.append(tp.z_hi)
        return pts

    def sigma_z(self, z, e_z):
        """Inverse normal speed (e_z^2 - W(z))^(-1/2); DomainError outside."""
        z = np.asarray(z, dtype=float)
        if not np.all(np.isfinite(z)) or not np.isfinite(e_z):
            raise DomainError("non-finite input to sigma_z")
        gap = float(e_z) ** 2 - self.value(z)
        if np.any(gap <= 0.0):
            raise DomainError(
                f"sigma_z evaluated outside the allowed window (e_z={e_z})"
            )
        return 1.0 / np.sqrt(gap)

    def tau_z(self, e_z, quad: QuadratureSpec = DEFAULT_QUAD, check: bool = False):
        """Traversal time integral of sigma_z over the allowed window.

        Accepts a scalar or an array of energies.  With ``check=True`` the
        integral is recomputed on a refined rule and QuadratureError is raised
        if the two disagree beyond quad.tolerance (relative).
        """
        e_arr = np.atleast_1d(np.asarray(e_z, dtype=float))
        out = np.empty_like(e_arr)
        for i, e in enumerate(e_arr):
            out[i] = self._tau_one(e, quad.nodes)
            if check:
                ref = self._tau_one(e, quad.refined().nodes)
                if abs(ref - out[i]) > quad.tolerance * max(1.0, abs(ref)):
                    raise QuadratureError(
                        f"tau_z quadrature not converged at e_z={e}: "
                        f"{out[i]!r} vs refined {ref!r}"
                    )
        return out[0] if np.isscalar(e_z) or np.asarray(e_z).ndim == 0 else out

    def _tau_one(self, e: float, nodes: int) -> float:
        ee = e * e
        z, w = composite_nodes(self.window_breaks(e), nodes)
        return float(np.sum(w / np.sqrt(ee - self.value(z))))

    def ell(self, e_z, quad: QuadratureSpec = DEFAULT_QUAD):
        """Effective layer width l(e_z) = |e_z| tau_z(e_z)."""
        return np.abs(e_z) * self.tau_z(e_z, quad)


class TangentialPotential:
    """Periodic tangential profile U on the unit cell y in [-1/2, 1/2).

    Profiles
    --------
    flat        U = 0.
    harmonic    U(y) = U_m (2y)^2: minimum 0 at the cell centre, maximum U_m
                at the cell edges (kink there under periodic continuation).
    cosine      U(y) = U_m (1 - cos(2 pi y)) / 2: smooth, same extrema.

    Molecules with e_x^2 <= U_m are bound to one cell; free molecules drift
    with mean tangential speed w_x = sgn(e_x)/sigma_bar(e_x).
    """

    def __init__(self, kind: str, u_m: float):
        if kind not in ("flat", "harmonic", "cosine"):
            raise DomainError(f"unknown tangential profile kind {kind!r}")
        if not (np.isfinite(u_m) and u_m >= 0.0):
            raise DomainError("amplitude U_m must be finite and >= 0")
        self.kind = kind
        self.u_m = float(u_m)

    @classmethod
    def flat(cls) -> "TangentialPotential":
        return cls("flat", 0.0)

    @classmethod
    def harmonic(cls, u_m: float) -> "TangentialPotential":
        return cls("harmonic", u_m)

    @classmethod
    def cosine(cls, u_m: float) -> "TangentialPotential":
        return cls("cosine", u_m)

    def value(self, y):
        y = np.asarray(y, dtype=float)
        y = y - np.round(y)  # wrap to [-1/2, 1/2]
        if self.kind == "flat":
            return np.zeros_like(y)
        if self.kind == "harmonic":
            return self.u_m * (2.0 * y) ** 2
        return self.u_m * 0.5 * (1.0 - np.cos(2.0 * np.pi * y))

    def trapped(self, e_x: float) -> bool:
        return float(e_x) ** 2 <= self.u_m

    def turning_points(self, e_x: float):
        """Allowed y-window (symmetric about 0); the full cell if free."""
        if not np.isfinite(e_x):
            raise DomainError("e_x must be finite")
        ee = float(e_x) ** 2
        if ee == 0.0 and self.u_m > 0.0:
            raise DomainError("zero tangential energy has no orbit")
        if self.kind == "flat" or ee >= self.u_m:
            return (-0.5, 0.5)
        if self.kind == "harmonic":
            y = math.sqrt(ee / self.u_m) / 2.0
        else:
            y = math.acos(1.0 - 2.0 * ee / self.u_m) / (2.0 * math.pi)
        return (-y, y)

    def sigma_bar(self, e_x, quad: QuadratureSpec = DEFAULT_QUAD):
        """Cell-travel time: integral of (e_x^2 - U)^(-1/2) over allowed y.

        For bound molecules this is the half-period of the librating orbit;
        for free molecules the time to cross one cell.
        """
        e_arr = np.atleast_1d(np.asarray(e_x, dtype=float))
        out = np.empty_like(e_arr)
        for i, e in enumerate(e_arr):
            y0, y1 = self.turning_points(e)
            y, w = composite_nodes([y0, 0.0, y1] if y0 < 0.0 < y1 else [y0, y1],
                                   quad.nodes)
            out[i] = float(np.sum(w / np.sqrt(e * e - self.value(y))))
        return out[0] if np.isscalar(e_x) or np.asarray(e_x).ndim == 0 else out

    def drift_speed(self, e_x, quad: QuadratureSpec = DEFAULT_QUAD):
        """Homogenized drift w_x: one cell per sigma_bar for free molecules,
        exactly zero for bound ones."""
        e_arr = np.atleast_1d(np.asarray(e_x, dtype=float))
        out = np.zeros_like(e_arr)
        for i, e in enumerate(e_arr):
            if not self.trapped(e):
                out[i] = math.copysign(1.0, e) / self.sigma_bar(e, quad)
        return out[0] if np.isscalar(e_x) or np.asarray(e_x).ndim == 0 else out
