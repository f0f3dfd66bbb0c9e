"""Pure numpy version of the subset-enumeration kernel."""
import math

import numpy as np


def cost_diff(code, p1, p2, lo, hi):
    if code == 0:
        return p1 * (hi - lo)
    if code == 1:
        return (hi - lo) * (p1 + p2 * (hi + lo))
    return p1 * np.exp(p2 * lo) * np.expm1(p2 * (hi - lo))


def chunk_sum(code, p1, p2, a, dk, lo_tab, hi_tab, h, start, stop):
    i = np.arange(start, stop, dtype=np.int64)
    g = i ^ (i >> 1)
    mask = (1 << h) - 1
    s = lo_tab[g & mask] + hi_tab[g >> h]
    return math.fsum(cost_diff(code, p1, p2, a - dk - s, a - s))
