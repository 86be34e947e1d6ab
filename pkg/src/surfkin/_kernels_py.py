"""NumPy implementations of the per-step sweep kernels.

Signature-compatible with the compiled module surfkin._kernels; the backend
module picks whichever is available.  All functions update their first
argument in place.

Array layout: fields are (nx, S, R) with x the leading (periodic) axis,
S the transported species axis (velocity or tangential-energy cells) and R
the remaining energy axis.  `nu` are signed Courant numbers.
"""

import numpy as np


def _minmod(a, b):
    return np.where(a * b > 0.0, np.where(np.abs(a) < np.abs(b), a, b), 0.0)


def advect_x_upwind(g, nu):
    """First-order upwind periodic x-sweep; nu[s] = speed_s * dt / dx."""
    gm = np.roll(g, 1, axis=0)
    gp = np.roll(g, -1, axis=0)
    nu3 = nu[None, :, None]
    g -= np.where(nu3 > 0.0, nu3 * (g - gm), nu3 * (gp - g))


def advect_x_muscl(g, nu):
    """Second-order TVD (minmod-limited) periodic x-sweep."""
    gm = np.roll(g, 1, axis=0)
    gp = np.roll(g, -1, axis=0)
    sig = _minmod(g - gm, gp - g)
    nu3 = nu[None, :, None]
    f_pos = nu3 * (g + 0.5 * (1.0 - nu3) * sig)
    f_neg = nu3 * (gp - 0.5 * (1.0 + nu3) * np.roll(sig, -1, axis=0))
    flux = np.where(nu3 > 0.0, f_pos, f_neg)  # value at the right face
    g -= flux - np.roll(flux, 1, axis=0)


def advect_x_fromm(g, nu):
    """Second-order unlimited (central-slope) periodic x-sweep.

    No limiter: retains full second order at smooth extrema, which TVD
    limiters clip to first order.  Intended for smooth fields.
    """
    gm = np.roll(g, 1, axis=0)
    gp = np.roll(g, -1, axis=0)
    sig = 0.5 * (gp - gm)
    nu3 = nu[None, :, None]
    f_pos = nu3 * (g + 0.5 * (1.0 - nu3) * sig)
    f_neg = nu3 * (gp - 0.5 * (1.0 + nu3) * np.roll(sig, -1, axis=0))
    flux = np.where(nu3 > 0.0, f_pos, f_neg)
    g -= flux - np.roll(flux, 1, axis=0)


def advect_v_upwind(g, nu_x):
    """First-order upwind sweep along axis 1 with zero-flux ends.

    nu_x[k] = acceleration(x_k) * dt / dv, constant across the v axis.
    """
    nu3 = nu_x[:, None, None]
    flux = np.where(nu3 > 0.0, nu3 * g[:, :-1, :], nu3 * g[:, 1:, :])
    g[:, :-1, :] -= flux
    g[:, 1:, :] += flux


def advect_v_muscl(g, nu_x):
    """Minmod-limited sweep along axis 1 with zero-flux ends."""
    sig = np.zeros_like(g)
    dm = g[:, 1:-1, :] - g[:, :-2, :]
    dp = g[:, 2:, :] - g[:, 1:-1, :]
    sig[:, 1:-1, :] = _minmod(dm, dp)
    nu3 = nu_x[:, None, None]
    f_pos = nu3 * (g[:, :-1, :] + 0.5 * (1.0 - nu3) * sig[:, :-1, :])
    f_neg = nu3 * (g[:, 1:, :] - 0.5 * (1.0 + nu3) * sig[:, 1:, :])
    flux = np.where(nu3 > 0.0, f_pos, f_neg)
    g[:, :-1, :] -= flux
    g[:, 1:, :] += flux


def advect_v_fromm(g, nu_x):
    """Unlimited central-slope sweep along axis 1 with zero-flux ends."""
    sig = np.zeros_like(g)
    sig[:, 1:-1, :] = 0.5 * (g[:, 2:, :] - g[:, :-2, :])
    nu3 = nu_x[:, None, None]
    f_pos = nu3 * (g[:, :-1, :] + 0.5 * (1.0 - nu3) * sig[:, :-1, :])
    f_neg = nu3 * (g[:, 1:, :] - 0.5 * (1.0 + nu3) * sig[:, 1:, :])
    flux = np.where(nu3 > 0.0, f_pos, f_neg)
    g[:, :-1, :] -= flux
    g[:, 1:, :] += flux


def advect_fine_masses(m, h, jc):
    """Mass-conservative periodic x-sweep with interface-weighted fluxes.

    m[k,a,r]  cell masses (updated in place),
    h[k,a,r]  the upwinded values,
    jc[k,a]   signed flux factor at the LEFT interface of cell k times dt/dx.
    """
    hm = np.roll(h, 1, axis=0)
    jc3 = jc[:, :, None]
    flux = np.where(jc3 > 0.0, jc3 * hm, jc3 * h)  # at the left face of k
    m += flux - np.roll(flux, -1, axis=0)
