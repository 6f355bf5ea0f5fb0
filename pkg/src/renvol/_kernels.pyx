# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled hot loops: per-face adaptive Simpson and the Riccati integrator.

Semantics match ``_kernels_py`` exactly; see that module for documentation.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, fabs, pow

cnp.import_array()

DEF MAX_DEPTH = 48
DEF STACK = 256
DEF MAX_SPLITS = 16384


cdef inline double _area(double s, double t, double d, double r) nogil:
    return 0.5 * s * (exp(2.0 * r) + t + exp(-2.0 * r) * d)


def simpson_faces(s_in, t_in, d_in, double a, double b, double tol):
    cdef cnp.ndarray[cnp.float64_t, ndim=1] s = np.ascontiguousarray(s_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] t = np.ascontiguousarray(t_in, dtype=np.float64)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] d = np.ascontiguousarray(d_in, dtype=np.float64)
    cdef Py_ssize_t n = s.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.zeros(n)
    cdef cnp.ndarray[cnp.float64_t, ndim=1] err = np.zeros(n)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] ok = np.ones(n, dtype=np.uint8)
    cdef double st[STACK][8]
    cdef int top, depth, splits
    cdef Py_ssize_t i
    cdef double si, ti, di, fa, fb, fm, m, whole, total, etot
    cdef double x0, x1, f0, fmid, f1, S, eps, xm, fl, fr, h, left, right, delta
    if a == b:
        return out, err, ok.astype(bool)
    with nogil:
        for i in range(n):
            si = s[i]; ti = t[i]; di = d[i]
            fa = _area(si, ti, di, a)
            fb = _area(si, ti, di, b)
            m = 0.5 * (a + b)
            fm = _area(si, ti, di, m)
            whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
            top = 0
            st[0][0] = a; st[0][1] = b; st[0][2] = fa; st[0][3] = fm
            st[0][4] = fb; st[0][5] = whole; st[0][6] = tol; st[0][7] = 0
            total = 0.0
            etot = 0.0
            splits = 0
            while top >= 0:
                x0 = st[top][0]; x1 = st[top][1]; f0 = st[top][2]; fmid = st[top][3]
                f1 = st[top][4]; S = st[top][5]; eps = st[top][6]; depth = <int>st[top][7]
                top -= 1
                xm = 0.5 * (x0 + x1)
                fl = _area(si, ti, di, 0.5 * (x0 + xm))
                fr = _area(si, ti, di, 0.5 * (xm + x1))
                h = x1 - x0
                left = h * (f0 + 4.0 * fl + fmid) / 12.0
                right = h * (fmid + 4.0 * fr + f1) / 12.0
                delta = left + right - S
                if (fabs(delta) <= 15.0 * eps or depth >= MAX_DEPTH or top + 2 >= STACK
                        or splits >= MAX_SPLITS):
                    if fabs(delta) > 15.0 * eps:
                        ok[i] = 0
                    total += left + right + delta / 15.0
                    etot += fabs(delta) / 15.0
                else:
                    splits += 1
                    top += 1
                    st[top][0] = xm; st[top][1] = x1; st[top][2] = fmid; st[top][3] = fr
                    st[top][4] = f1; st[top][5] = right; st[top][6] = 0.5 * eps; st[top][7] = depth + 1
                    top += 1
                    st[top][0] = x0; st[top][1] = xm; st[top][2] = f0; st[top][3] = fl
                    st[top][4] = fmid; st[top][5] = left; st[top][6] = 0.5 * eps; st[top][7] = depth + 1
            out[i] = total
            err[i] = etot
    return out, err, ok.astype(bool)


cdef double[7] _C = [0.0, 1.0 / 5, 3.0 / 10, 4.0 / 5, 8.0 / 9, 1.0, 1.0]
cdef double[7][6] _A = [
    [0, 0, 0, 0, 0, 0],
    [1.0 / 5, 0, 0, 0, 0, 0],
    [3.0 / 40, 9.0 / 40, 0, 0, 0, 0],
    [44.0 / 45, -56.0 / 15, 32.0 / 9, 0, 0, 0],
    [19372.0 / 6561, -25360.0 / 2187, 64448.0 / 6561, -212.0 / 729, 0, 0],
    [9017.0 / 3168, -355.0 / 33, 46732.0 / 5247, 49.0 / 176, -5103.0 / 18656, 0],
    [35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84],
]
cdef double[7] _B = [35.0 / 384, 0.0, 500.0 / 1113, 125.0 / 192, -2187.0 / 6784, 11.0 / 84, 0.0]
cdef double[7] _E = [71.0 / 57600, 0.0, -71.0 / 16695, 71.0 / 1920, -17253.0 / 339200,
                     22.0 / 525, -1.0 / 40]


cdef inline double _rhs(double r, double y) nogil:
    return 1.0 - (1.0 + 2.0 / (r * r)) * y * y


def riccati_dopri5(double r0, double y0, double r_end, double rtol, double atol, double h_max):
    rs = [r0]
    ys = [y0]
    fs = [_rhs(r0, y0)]
    cdef double r = r0, y = y0
    cdef double h = min(h_max, 1e-3 * max(1.0, r0))
    cdef int rejected = 0
    cdef double k[7]
    cdef double acc, y_new, e, scale, err, fac
    cdef int i, j
    while r < r_end:
        if r + h > r_end:
            h = r_end - r
        k[0] = _rhs(r, y)
        for i in range(1, 7):
            acc = y
            for j in range(i):
                acc += h * _A[i][j] * k[j]
            k[i] = _rhs(r + _C[i] * h, acc)
        y_new = y
        e = 0.0
        for i in range(7):
            y_new += h * _B[i] * k[i]
            e += h * _E[i] * k[i]
        scale = atol + rtol * max(fabs(y), fabs(y_new))
        err = fabs(e) / scale
        if err <= 1.0:
            r = r + h
            y = y_new
            rs.append(r)
            ys.append(y)
            fs.append(k[6])
            if err == 0.0:
                fac = 5.0
            else:
                fac = min(5.0, max(0.2, 0.9 * pow(err, -0.2)))
        else:
            rejected += 1
            fac = max(0.2, 0.9 * pow(err, -0.2))
        h = min(h_max, h * fac)
        if h < 1e-14 * max(1.0, fabs(r)):
            raise RuntimeError(f"step size collapsed at r = {r!r}")
    return np.array(rs), np.array(ys), np.array(fs), rejected
