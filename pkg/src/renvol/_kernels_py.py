"""Pure-Python reference implementations of the compiled kernels.

Both functions mirror ``_kernels.pyx`` step for step; the accelerated module
is preferred when it is importable (see ``_accel``).
"""

from __future__ import annotations

import math

import numpy as np

MAX_DEPTH = 48
# subdivisions per face before giving up; bounds the work when tol is unreachable
MAX_SPLITS = 16384


def _area(s, t, d, r):
    return 0.5 * s * (math.exp(2.0 * r) + t + math.exp(-2.0 * r) * d)


def simpson_faces(s, t, d, a, b, tol):
    """Adaptive Simpson of ``s/2 (e^{2r} + t + e^{-2r} d)`` over ``[a, b]`` per face.

    Returns ``(values, error_estimates, ok)``; ``ok`` is False for faces whose
    recursion hit the depth or subdivision limit before meeting ``tol``.
    """
    s = np.ascontiguousarray(s, dtype=np.float64)
    t = np.ascontiguousarray(t, dtype=np.float64)
    d = np.ascontiguousarray(d, dtype=np.float64)
    n = s.shape[0]
    out = np.zeros(n)
    err = np.zeros(n)
    ok = np.ones(n, dtype=bool)
    if a == b:
        return out, err, ok
    for i in range(n):
        si, ti, di = float(s[i]), float(t[i]), float(d[i])
        fa = _area(si, ti, di, a)
        fb = _area(si, ti, di, b)
        m = 0.5 * (a + b)
        fm = _area(si, ti, di, m)
        whole = (b - a) * (fa + 4.0 * fm + fb) / 6.0
        stack = [(a, b, fa, fm, fb, whole, tol, 0)]
        total = 0.0
        etot = 0.0
        splits = 0
        while stack:
            x0, x1, f0, fmid, f1, S, eps, depth = stack.pop()
            xm = 0.5 * (x0 + x1)
            fl = _area(si, ti, di, 0.5 * (x0 + xm))
            fr = _area(si, ti, di, 0.5 * (xm + x1))
            h = x1 - x0
            left = h * (f0 + 4.0 * fl + fmid) / 12.0
            right = h * (fmid + 4.0 * fr + f1) / 12.0
            delta = left + right - S
            if abs(delta) <= 15.0 * eps or depth >= MAX_DEPTH or splits >= MAX_SPLITS:
                if abs(delta) > 15.0 * eps:
                    ok[i] = False
                total += left + right + delta / 15.0
                etot += abs(delta) / 15.0
            else:
                splits += 1
                stack.append((xm, x1, fmid, fr, f1, right, 0.5 * eps, depth + 1))
                stack.append((x0, xm, f0, fl, fmid, left, 0.5 * eps, depth + 1))
        out[i] = total
        err[i] = etot
    return out, err, ok


# Dormand-Prince 5(4) tableau
_C = (0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0)
_A = (
    (),
    (1 / 5,),
    (3 / 40, 9 / 40),
    (44 / 45, -56 / 15, 32 / 9),
    (19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729),
    (9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656),
    (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84),
)
_B = (35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0)
_E = (71 / 57600, 0.0, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40)


def _rhs(r, y):
    return 1.0 - (1.0 + 2.0 / (r * r)) * y * y


def riccati_dopri5(r0, y0, r_end, rtol, atol, h_max):
    """Integrate ``y' = 1 - (1 + 2/r^2) y^2`` from ``(r0, y0)`` to ``r_end``.

    Returns ``(r, y, dy, n_rejected)`` at every accepted step. Raises
    RuntimeError when the step size collapses.
    """
    rs = [r0]
    ys = [y0]
    fs = [_rhs(r0, y0)]
    r, y = r0, y0
    h = min(h_max, 1e-3 * max(1.0, r0))
    rejected = 0
    k = [0.0] * 7
    while r < r_end:
        if r + h > r_end:
            h = r_end - r
        k[0] = _rhs(r, y)
        for i in range(1, 7):
            acc = y
            row = _A[i]
            for j in range(i):
                acc += h * row[j] * k[j]
            k[i] = _rhs(r + _C[i] * h, acc)
        y_new = y
        e = 0.0
        for i in range(7):
            y_new += h * _B[i] * k[i]
            e += h * _E[i] * k[i]
        scale = atol + rtol * max(abs(y), abs(y_new))
        err = abs(e) / scale
        if err <= 1.0:
            r = r + h
            y = y_new
            rs.append(r)
            ys.append(y)
            fs.append(k[6])
            fac = 5.0 if err == 0.0 else min(5.0, max(0.2, 0.9 * err ** -0.2))
        else:
            rejected += 1
            fac = max(0.2, 0.9 * err ** -0.2)
        h = min(h_max, h * fac)
        if h < 1e-14 * max(1.0, abs(r)):
            raise RuntimeError(f"step size collapsed at r = {r!r}")
    return np.array(rs), np.array(ys), np.array(fs), rejected
