# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled subset-enumeration kernel.

Sums ``C(a - s) - C(a - dk - s)`` over subset sums ``s`` of the posterior offload
volumes, visiting indices in Gray-code order with compensated accumulation.
"""
from libc.math cimport exp, expm1


cdef inline double _cost_diff(int code, double p1, double p2, double lo, double hi) noexcept nogil:
    if code == 0:
        return p1 * (hi - lo)
    elif code == 1:
        return (hi - lo) * (p1 + p2 * (hi + lo))
    return p1 * exp(p2 * lo) * expm1(p2 * (hi - lo))


def chunk_sum(int code, double p1, double p2, double a, double dk,
              const double[::1] lo_tab, const double[::1] hi_tab, int h,
              long long start, long long stop):
    cdef long long i, g
    cdef long long mask = (<long long>1 << h) - 1
    cdef double s, v, y, t
    cdef double total = 0.0
    cdef double comp = 0.0
    with nogil:
        for i in range(start, stop):
            g = i ^ (i >> 1)
            s = lo_tab[g & mask] + hi_tab[g >> h]
            v = _cost_diff(code, p1, p2, a - dk - s, a - s)
            y = v - comp
            t = total + y
            comp = (t - total) - y
            total = t
    return total
