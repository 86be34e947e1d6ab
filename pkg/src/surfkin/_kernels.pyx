# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled per-step sweep kernels (hot loops of the time marchers).

Mirrors surfkin._kernels_py; see that module for the array conventions.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline double _minmod1(double a, double b) nogil:
    if a * b <= 0.0:
        return 0.0
    if a < 0.0:
        return a if a > b else b
    return a if a < b else b


def advect_x_upwind(double[:, :, ::1] g, double[::1] nu):
    cdef Py_ssize_t nx = g.shape[0], ns = g.shape[1], nr = g.shape[2]
    cdef Py_ssize_t k, s, r, km, kp
    cdef double c
    src_arr = np.asarray(g).copy()
    cdef double[:, :, ::1] src = src_arr
    with nogil:
        for k in range(nx):
            km = k - 1 if k > 0 else nx - 1
            kp = k + 1 if k < nx - 1 else 0
            for s in range(ns):
                c = nu[s]
                if c > 0.0:
                    for r in range(nr):
                        g[k, s, r] = src[k, s, r] - c * (src[k, s, r] - src[km, s, r])
                else:
                    for r in range(nr):
                        g[k, s, r] = src[k, s, r] - c * (src[kp, s, r] - src[k, s, r])


def advect_x_muscl(double[:, :, ::1] g, double[::1] nu):
    cdef Py_ssize_t nx = g.shape[0], ns = g.shape[1], nr = g.shape[2]
    cdef Py_ssize_t k, s, r, km, kp, kpp
    cdef double c, sk, skp, f_r, f_l, gm, g0, gp, gpp
    src_arr = np.asarray(g).copy()
    cdef double[:, :, ::1] src = src_arr
    with nogil:
        for k in range(nx):
            km = k - 1 if k > 0 else nx - 1
            kp = k + 1 if k < nx - 1 else 0
            kpp = kp + 1 if kp < nx - 1 else 0
            for s in range(ns):
                c = nu[s]
                for r in range(nr):
                    gm = src[km, s, r]
                    g0 = src[k, s, r]
                    gp = src[kp, s, r]
                    if c > 0.0:
                        # right and left faces, upwind side is the left cell
                        sk = _minmod1(g0 - gm, gp - g0)
                        f_r = c * (g0 + 0.5 * (1.0 - c) * sk)
                        sk = _minmod1(gm - src[km - 1 if km > 0 else nx - 1, s, r],
                                      g0 - gm)
                        f_l = c * (gm + 0.5 * (1.0 - c) * sk)
                    else:
                        gpp = src[kpp, s, r]
                        skp = _minmod1(gp - g0, gpp - gp)
                        f_r = c * (gp - 0.5 * (1.0 + c) * skp)
                        skp = _minmod1(g0 - gm, gp - g0)
                        f_l = c * (g0 - 0.5 * (1.0 + c) * skp)
                    g[k, s, r] = g0 - (f_r - f_l)


def advect_x_fromm(double[:, :, ::1] g, double[::1] nu):
    cdef Py_ssize_t nx = g.shape[0], ns = g.shape[1], nr = g.shape[2]
    cdef Py_ssize_t k, s, r, km, kmm, kp, kpp
    cdef double c, sk, skp, f_r, f_l, gm, g0, gp
    src_arr = np.asarray(g).copy()
    cdef double[:, :, ::1] src = src_arr
    with nogil:
        for k in range(nx):
            km = k - 1 if k > 0 else nx - 1
            kmm = km - 1 if km > 0 else nx - 1
            kp = k + 1 if k < nx - 1 else 0
            kpp = kp + 1 if kp < nx - 1 else 0
            for s in range(ns):
                c = nu[s]
                for r in range(nr):
                    gm = src[km, s, r]
                    g0 = src[k, s, r]
                    gp = src[kp, s, r]
                    if c > 0.0:
                        sk = 0.5 * (gp - gm)
                        f_r = c * (g0 + 0.5 * (1.0 - c) * sk)
                        sk = 0.5 * (g0 - src[kmm, s, r])
                        f_l = c * (gm + 0.5 * (1.0 - c) * sk)
                    else:
                        skp = 0.5 * (src[kpp, s, r] - g0)
                        f_r = c * (gp - 0.5 * (1.0 + c) * skp)
                        skp = 0.5 * (gp - gm)
                        f_l = c * (g0 - 0.5 * (1.0 + c) * skp)
                    g[k, s, r] = g0 - (f_r - f_l)


def advect_v_upwind(double[:, :, ::1] g, double[::1] nu_x):
    cdef Py_ssize_t nx = g.shape[0], nv = g.shape[1], nr = g.shape[2]
    cdef Py_ssize_t k, m, r
    cdef double c, f
    src_arr = np.asarray(g).copy()
    cdef double[:, :, ::1] src = src_arr
    with nogil:
        for k in range(nx):
            c = nu_x[k]
            if c == 0.0:
                continue
            for m in range(nv - 1):
                # flux through the face between m and m+1
                for r in range(nr):
                    f = c * src[k, m, r] if c > 0.0 else c * src[k, m + 1, r]
                    g[k, m, r] -= f
                    g[k, m + 1, r] += f


def advect_v_muscl(double[:, :, ::1] g, double[::1] nu_x):
    cdef Py_ssize_t nx = g.shape[0], nv = g.shape[1], nr = g.shape[2]
    cdef Py_ssize_t k, m, r
    cdef double c, f, sm, sp
    src_arr = np.asarray(g).copy()
    cdef double[:, :, ::1] src = src_arr
    with nogil:
        for k in range(nx):
            c = nu_x[k]
            if c == 0.0:
                continue
            for m in range(nv - 1):
                for r in range(nr):
                    if c > 0.0:
                        sm = 0.0
                        if m > 0:
                            sm = _minmod1(src[k, m, r] - src[k, m - 1, r],
                                          src[k, m + 1, r] - src[k, m, r])
                        f = c * (src[k, m, r] + 0.5 * (1.0 - c) * sm)
                    else:
                        sp = 0.0
                        if m + 1 < nv - 1:
                            sp = _minmod1(src[k, m + 1, r] - src[k, m, r],
                                          src[k, m + 2, r] - src[k, m + 1, r])
                        f = c * (src[k, m + 1, r] - 0.5 * (1.0 + c) * sp)
                    g[k, m, r] -= f
                    g[k, m + 1, r] += f


def advect_v_fromm(double[:, :, ::1] g, double[::1] nu_x):
    cdef Py_ssize_t nx = g.shape[0], nv = g.shape[1], nr = g.shape[2]
    cdef Py_ssize_t k, m, r
    cdef double c, f, sm, sp
    src_arr = np.asarray(g).copy()
    cdef double[:, :, ::1] src = src_arr
    with nogil:
        for k in range(nx):
            c = nu_x[k]
            if c == 0.0:
                continue
            for m in range(nv - 1):
                for r in range(nr):
                    if c > 0.0:
                        sm = 0.0
                        if m > 0:
                            sm = 0.5 * (src[k, m + 1, r] - src[k, m - 1, r])
                        f = c * (src[k, m, r] + 0.5 * (1.0 - c) * sm)
                    else:
                        sp = 0.0
                        if m + 1 < nv - 1:
                            sp = 0.5 * (src[k, m + 2, r] - src[k, m, r])
                        f = c * (src[k, m + 1, r] - 0.5 * (1.0 + c) * sp)
                    g[k, m, r] -= f
                    g[k, m + 1, r] += f


def advect_fine_masses(double[:, :, ::1] m, double[:, :, ::1] h,
                       double[:, ::1] jc):
    cdef Py_ssize_t nx = m.shape[0], na = m.shape[1], nr = m.shape[2]
    cdef Py_ssize_t k, a, r, km, kp
    cdef double c, cp
    flux_arr = np.empty((nx, na, nr), dtype=np.float64)
    cdef double[:, :, ::1] flux = flux_arr
    with nogil:
        for k in range(nx):
            km = k - 1 if k > 0 else nx - 1
            for a in range(na):
                c = jc[k, a]
                if c > 0.0:
                    for r in range(nr):
                        flux[k, a, r] = c * h[km, a, r]
                else:
                    for r in range(nr):
                        flux[k, a, r] = c * h[k, a, r]
        for k in range(nx):
            kp = k + 1 if k < nx - 1 else 0
            for a in range(na):
                for r in range(nr):
                    m[k, a, r] += flux[k, a, r] - flux[kp, a, r]
