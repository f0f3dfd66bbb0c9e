"""Hot loops of the bargaining module, with a compiled backend when available.

The compiled extension is used when it imports; setting ``OFFLOAD_PURE=1``
forces the numpy fallback.  Both backends visit the same chunks in the same
order, and chunk totals are combined with ``math.fsum`` in index order, so the
result does not depend on the number of workers.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import _kernels_py

_compiled = None
if not os.environ.get("OFFLOAD_PURE"):
    try:
        from . import _kernels as _compiled
    except ImportError:  # extension not built
        _compiled = None

BACKEND = "cython" if _compiled is not None else "python"
CHUNK = 1 << 15

__all__ = ["BACKEND", "subset_tables", "exact_mean_cost_diff", "mc_cost_diff", "cost_diff"]

cost_diff = _kernels_py.cost_diff


def _backend(name):
    if name is None:
        return _compiled or _kernels_py
    if name == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not available")
        return _compiled
    return _kernels_py


def subset_tables(d) -> tuple[np.ndarray, np.ndarray, int]:
    """Subset-sum tables for the low and high halves of ``d``."""
    d = np.ascontiguousarray(d, dtype=float)
    k = len(d)
    h = k // 2

    def table(vals):
        t = np.zeros(1 << len(vals))
        for j, v in enumerate(vals):
            w = 1 << j
            t[w : 2 * w] = t[:w] + v
        return t

    return table(d[:h]), table(d[h:]), h


def exact_mean_cost_diff(code, p1, p2, a, dk, d, workers=1, backend=None) -> float:
    """Mean over all subsets ``I`` of ``C(a - s_I) - C(a - dk - s_I)``."""
    impl = _backend(backend)
    lo_tab, hi_tab, h = subset_tables(d)
    total = 1 << len(d)
    bounds = [(i, min(i + CHUNK, total)) for i in range(0, total, CHUNK)]

    def run(b):
        return impl.chunk_sum(code, p1, p2, a, dk, lo_tab, hi_tab, h, b[0], b[1])

    if workers > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(run, bounds))
    else:
        parts = [run(b) for b in bounds]
    return math.fsum(parts) / total


def mc_cost_diff(code, p1, p2, a, dk, d, samples, seed, stream) -> tuple[float, float]:
    """Monte Carlo mean and standard error with i.i.d. fair-coin inclusion."""
    d = np.asarray(d, dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(stream)]))
    bits = rng.integers(0, 2, size=(samples, len(d)), dtype=np.uint8)
    s = np.zeros(samples)
    for j in range(len(d)):
        s += bits[:, j] * d[j]
    v = cost_diff(code, p1, p2, a - dk - s, a - s)
    mean = math.fsum(v) / samples
    se = float(np.std(v, ddof=1)) / math.sqrt(samples) if samples > 1 else float("inf")
    return mean, se
