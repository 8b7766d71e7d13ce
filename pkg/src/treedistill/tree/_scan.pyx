# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled split-gain scan.  Same contract as ``_scan_py.split_gains``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport log, INFINITY

cnp.import_array()


cdef inline double _xlogx(double v) nogil:
    return v * log(v) if v > 0.0 else 0.0


def split_gains(const double[::1] xs, const double[:, ::1] rows, int code):
    cdef Py_ssize_t n = xs.shape[0]
    cdef Py_ssize_t K = rows.shape[1]
    if n < 2:
        return np.empty(0)
    if code < 0 or code > 3:
        raise ValueError(f"unknown criterion code {code}")
    out = np.empty(n - 1, dtype=np.float64)
    cdef double[::1] gains = out
    cdef double[::1] total = np.zeros(K)
    cdef double[::1] left = np.zeros(K)
    cdef Py_ssize_t i, k
    cdef double wp = 0.0, hp = 0.0, sp = 0.0, tmax, tmin
    cdef double r, lmax, rmax, lmin, rmin, wl, wr, phl, phr, sl, sr, nl, nr

    for i in range(n):
        for k in range(K):
            total[k] += rows[i, k]
    tmax = total[0]
    tmin = total[0]
    for k in range(K):
        wp += total[k]
        if total[k] > tmax:
            tmax = total[k]
        if total[k] < tmin:
            tmin = total[k]
        hp += _xlogx(total[k])
        sp += total[k] * total[k]
    hp = _xlogx(wp) - hp

    with nogil:
        for i in range(n - 1):
            for k in range(K):
                left[k] += rows[i, k]
            if xs[i] == xs[i + 1]:
                gains[i] = -INFINITY
                continue
            if code == 0:
                lmax = left[0]
                rmax = total[0] - left[0]
                for k in range(1, K):
                    r = total[k] - left[k]
                    if left[k] > lmax:
                        lmax = left[k]
                    if r > rmax:
                        rmax = r
                gains[i] = (lmax + rmax - tmax) / n
            elif code == 1:
                if wp > 0.0:
                    lmin = left[0]
                    rmin = total[0] - left[0]
                    if rmin < 0.0:
                        rmin = 0.0
                    for k in range(1, K):
                        r = total[k] - left[k]
                        if r < 0.0:
                            r = 0.0
                        if left[k] < lmin:
                            lmin = left[k]
                        if r < rmin:
                            rmin = r
                    gains[i] = (tmin - lmin - rmin) / wp
                else:
                    gains[i] = 0.0
            elif code == 2:
                if wp > 0.0:
                    wl = 0.0
                    wr = 0.0
                    phl = 0.0
                    phr = 0.0
                    for k in range(K):
                        r = total[k] - left[k]
                        if r < 0.0:
                            r = 0.0
                        wl += left[k]
                        wr += r
                        phl += _xlogx(left[k])
                        phr += _xlogx(r)
                    gains[i] = (hp - (_xlogx(wl) - phl) - (_xlogx(wr) - phr)) / wp
                else:
                    gains[i] = 0.0
            else:
                nl = <double>(i + 1)
                nr = <double>(n - i - 1)
                sl = 0.0
                sr = 0.0
                for k in range(K):
                    r = total[k] - left[k]
                    sl += left[k] * left[k]
                    sr += r * r
                gains[i] = (sl / nl + sr / nr - sp / n) / n
    return out
