# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels in ``_kernels_py`` (same signatures and results)."""

import numpy as np
cimport numpy as cnp
from libc.math cimport cosh, sinh, tanh, sqrt, fabs, pow

cnp.import_array()

SUPPORT_PLANE = 0
SUPPORT_CATENOID = 1


def march_segments(values, double level):
    """Contour segments of ``values == level``; see ``_kernels_py.march_segments``."""
    cdef cnp.ndarray[cnp.float64_t, ndim=2] f = np.ascontiguousarray(values, dtype=np.float64) - level
    cdef Py_ssize_t ni = f.shape[0] - 1, nj = f.shape[1] - 1
    cdef cnp.ndarray[cnp.int64_t, ndim=3] out = np.empty((2 * ni * nj, 2, 3), dtype=np.int64)
    cdef Py_ssize_t i, j, n = 0
    cdef int b0, b1, b2, b3, k, centre
    cdef long e[4][3]
    cdef int crossed[4]
    cdef int nc, q
    for i in range(ni):
        for j in range(nj):
            b0 = f[i, j] < 0
            b1 = f[i + 1, j] < 0
            b2 = f[i + 1, j + 1] < 0
            b3 = f[i, j + 1] < 0
            k = b0 + 2 * b1 + 4 * b2 + 8 * b3
            if k == 0 or k == 15:
                continue
            e[0][0] = 0; e[0][1] = i; e[0][2] = j
            e[1][0] = 1; e[1][1] = i + 1; e[1][2] = j
            e[2][0] = 0; e[2][1] = i; e[2][2] = j + 1
            e[3][0] = 1; e[3][1] = i; e[3][2] = j
            nc = 0
            if b0 != b1:
                crossed[nc] = 0; nc += 1
            if b1 != b2:
                crossed[nc] = 1; nc += 1
            if b3 != b2:
                crossed[nc] = 2; nc += 1
            if b0 != b3:
                crossed[nc] = 3; nc += 1
            if nc == 2:
                for q in range(3):
                    out[n, 0, q] = e[crossed[0]][q]
                    out[n, 1, q] = e[crossed[1]][q]
                n += 1
            else:
                centre = 0.25 * (f[i, j] + f[i + 1, j] + f[i + 1, j + 1] + f[i, j + 1]) < 0
                if centre == b0:
                    for q in range(3):
                        out[n, 0, q] = e[0][q]; out[n, 1, q] = e[1][q]
                        out[n + 1, 0, q] = e[2][q]; out[n + 1, 1, q] = e[3][q]
                else:
                    for q in range(3):
                        out[n, 0, q] = e[0][q]; out[n, 1, q] = e[3][q]
                        out[n + 1, 0, q] = e[1][q]; out[n + 1, 1, q] = e[2][q]
                n += 2
    return out[:n].copy()


cdef void _geometry(double[::1] rho, double[::1] z, double[::1] t_rho, double[::1] t_z,
                    double[::1] n_rho, double[::1] n_z, double[::1] kappa, double[::1] k_rot) noexcept nogil:
    cdef Py_ssize_t n = rho.shape[0], i
    cdef double nr, ax, ay, bx, by, cx, cy, cross, la, lb, lc
    for i in range(n):
        if i == 0:
            t_rho[i] = rho[1] - rho[0]; t_z[i] = z[1] - z[0]
        elif i == n - 1:
            t_rho[i] = rho[n - 1] - rho[n - 2]; t_z[i] = z[n - 1] - z[n - 2]
        else:
            t_rho[i] = rho[i + 1] - rho[i - 1]; t_z[i] = z[i + 1] - z[i - 1]
        nr = sqrt(t_rho[i] * t_rho[i] + t_z[i] * t_z[i])
        t_rho[i] /= nr
        t_z[i] /= nr
        n_rho[i] = t_z[i]
        n_z[i] = -t_rho[i]
    for i in range(1, n - 1):
        ax = rho[i - 1]; ay = z[i - 1]
        bx = rho[i]; by = z[i]
        cx = rho[i + 1]; cy = z[i + 1]
        cross = (bx - ax) * (cy - ay) - (by - ay) * (cx - ax)
        la = sqrt((bx - ax) * (bx - ax) + (by - ay) * (by - ay))
        lb = sqrt((cx - bx) * (cx - bx) + (cy - by) * (cy - by))
        lc = sqrt((cx - ax) * (cx - ax) + (cy - ay) * (cy - ay))
        kappa[i] = 2.0 * cross / (la * lb * lc)
    kappa[0] = kappa[1]
    kappa[n - 1] = kappa[n - 2]
    for i in range(n - 1):
        k_rot[i] = n_rho[i] / rho[i]
    k_rot[n - 1] = kappa[n - 1]


def curve_geometry(rho, z):
    """Tangent, normal and curvatures of a meridian polyline; see ``_kernels_py.curve_geometry``."""
    cdef double[::1] r = np.ascontiguousarray(rho, dtype=np.float64)
    cdef double[::1] zz = np.ascontiguousarray(z, dtype=np.float64)
    cdef Py_ssize_t n = r.shape[0]
    t_rho = np.empty(n); t_z = np.empty(n); n_rho = np.empty(n); n_z = np.empty(n)
    kappa = np.empty(n); k_rot = np.empty(n)
    _geometry(r, zz, t_rho, t_z, n_rho, n_z, kappa, k_rot)
    return t_rho, t_z, n_rho, n_z, kappa, k_rot


cdef void _project(int kind, double m, double offset, double rho, double z,
                   double* pr, double* pz, double* nr, double* nz) noexcept nogil:
    cdef double s, ch, sh, dr, dz, f, fp, ds
    cdef int it
    if kind == 0:
        pr[0] = rho; pz[0] = offset; nr[0] = 0.0; nz[0] = 1.0
        return
    s = (z - offset) / m
    for it in range(20):
        ch = cosh(s); sh = sinh(s)
        dr = m * ch - rho
        dz = m * s + offset - z
        f = dr * m * sh + dz * m
        fp = m * m * (sh * sh + 1.0) + dr * m * ch
        ds = f / fp
        s -= ds
        if fabs(ds) < 1e-15:
            break
    ch = cosh(s)
    pr[0] = m * ch; pz[0] = m * s + offset; nr[0] = 1.0 / ch; nz[0] = -tanh(s)


def support_project(int kind, double m, double offset, double rho, double z):
    cdef double pr, pz, nr, nz
    _project(kind, m, offset, rho, z, &pr, &pz, &nr, &nz)
    return pr, pz, nr, nz


cdef int _velocity(double[::1] rho, double[::1] z, int kind, double m, double offset, double eps, double gamma,
                   double[::1] er, double[::1] ez, double[::1] w1, double[::1] w2, double[::1] w3,
                   double[::1] w4, double[::1] w5, double[::1] w6,
                   double[::1] vr, double[::1] vz) noexcept nogil:
    cdef Py_ssize_t n = rho.shape[0], i
    cdef double pr, pz, n0r, n0z, proj, h, sp
    _project(kind, m, offset, rho[0], z[0], &pr, &pz, &n0r, &n0z)
    proj = (rho[1] - rho[0]) * n0r + (z[1] - z[0]) * n0z
    for i in range(n):
        er[i + 1] = rho[i]
        ez[i + 1] = z[i]
    er[0] = rho[1] - 2.0 * proj * n0r
    ez[0] = z[1] - 2.0 * proj * n0z
    er[n + 1] = -rho[n - 2]
    ez[n + 1] = z[n - 2]
    _geometry(er, ez, w1, w2, w3, w4, w5, w6)
    for i in range(n):
        if i < n - 1:
            h = w5[i + 1] + w3[i + 1] / rho[i]
        else:
            h = 2.0 * w5[i + 1]
        if not h > 0.0:
            return 1
        if eps == 0.0:
            sp = h
        else:
            sp = sqrt(eps * eps + pow(h, 2.0 / gamma))
        vr[i] = w3[i + 1] / sp
        vz[i] = w4[i + 1] / sp
    return 0


cdef void _constrain(double[::1] rho, double[::1] z, int kind, double m, double offset) noexcept nogil:
    cdef double pr, pz, nr, nz
    _project(kind, m, offset, rho[0], z[0], &pr, &pz, &nr, &nz)
    rho[0] = pr
    z[0] = pz
    rho[rho.shape[0] - 1] = 0.0


def imcf_substeps(rho, z, double dt, int n_sub, int kind, double m, double offset,
                  double eps=0.0, double gamma=1.0):
    """Heun substeps of the smooth flow; see ``_kernels_py.imcf_substeps``."""
    r_arr = np.array(rho, dtype=np.float64)
    z_arr = np.array(z, dtype=np.float64)
    cdef double[::1] r = r_arr
    cdef double[::1] zz = z_arr
    cdef Py_ssize_t n = r.shape[0], i
    cdef double[::1] r1 = np.empty(n), z1 = np.empty(n)
    cdef double[::1] v1r = np.empty(n), v1z = np.empty(n), v2r = np.empty(n), v2z = np.empty(n)
    cdef double[::1] er = np.empty(n + 2), ez = np.empty(n + 2)
    cdef double[::1] w1 = np.empty(n + 2), w2 = np.empty(n + 2), w3 = np.empty(n + 2)
    cdef double[::1] w4 = np.empty(n + 2), w5 = np.empty(n + 2), w6 = np.empty(n + 2)
    cdef int k, status = 0
    with nogil:
        for k in range(n_sub):
            if _velocity(r, zz, kind, m, offset, eps, gamma, er, ez, w1, w2, w3, w4, w5, w6, v1r, v1z):
                status = 1
                break
            for i in range(n):
                r1[i] = r[i] + dt * v1r[i]
                z1[i] = zz[i] + dt * v1z[i]
            _constrain(r1, z1, kind, m, offset)
            if _velocity(r1, z1, kind, m, offset, eps, gamma, er, ez, w1, w2, w3, w4, w5, w6, v2r, v2z):
                status = 1
                break
            for i in range(n):
                r[i] = r[i] + 0.5 * dt * (v1r[i] + v2r[i])
                zz[i] = zz[i] + 0.5 * dt * (v1z[i] + v2z[i])
            _constrain(r, zz, kind, m, offset)
    return r_arr, z_arr, (k if status else n_sub), status
