"""Scenario factories shared by the test modules."""
import numpy as np

from offloadbargain.model import (
    ApoParams,
    CostModel,
    Exponential,
    Linear,
    MnoParams,
    PiecewiseLinearCdf,
    Quadratic,
    Scenario,
    Uniform,
)

GOLDEN_PSI = (0.0, 1.0, 1.8, 2.4, 2.8)
GROUPING_PSI = (0.0, 1.0, 1.6, 2.0, 2.2)


def random_demand(rng, kind="uniform"):
    if kind == "uniform":
        lo = float(rng.choice([0.0, rng.uniform(0, 2)]))
        return Uniform(lo, lo + rng.uniform(2, 10))
    # concave CDF: decreasing slopes
    k = int(rng.integers(2, 5))
    widths = rng.uniform(0.5, 3.0, size=k)
    dens = np.sort(rng.uniform(0.2, 1.0, size=k))[::-1] * widths
    cdf = np.concatenate(([0.0], np.cumsum(dens) / np.sum(dens)))
    cdf[-1] = 1.0
    vals = np.concatenate(([0.0], np.cumsum(widths)))
    return PiecewiseLinearCdf(list(zip(vals, cdf)))


def random_shape(rng, kind="quadratic"):
    if kind == "linear":
        return Linear(rng.uniform(0.5, 2.0))
    if kind == "exponential":
        return Exponential(rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.2))
    return Quadratic(rng.uniform(0.1, 0.5), rng.uniform(0.02, 0.1))


def random_scenario(rng, n, additive=False, demand="uniform", shape="quadratic", phi=None):
    """A scenario where offloading is usually worthwhile for most APOs."""
    apos = []
    for _ in range(n):
        w = rng.uniform(0.5, 1.5)
        apos.append(
            ApoParams(
                s=rng.uniform(0.5, 4.0),
                theta=rng.uniform(0.5, 2.5),
                phi=rng.uniform(0.5, 2.0) if phi is None else phi,
                b=rng.uniform(1.0, 12.0),
                w=w,
                c=rng.uniform(0.0, 0.4) * w,
                demand=random_demand(rng, demand),
            )
        )
    mno = MnoParams(rng.uniform(0.0, 10.0), rng.uniform(0.5, 3.0), CostModel(random_shape(rng, shape), additive))
    return Scenario(mno, tuple(apos))


def golden_scenario():
    """Four identical APOs with welfare 1.1k - 0.1k² after k full offloads.

    At integer totals this is 0, 1.0, 1.8, 2.4, 2.8 and the optimum is (1, 1, 1, 1).
    """
    apo = ApoParams(s=1.0, theta=1.0, phi=1.0, b=3.0, w=1.0, c=0.1, demand=Uniform(0.0, 1.0))
    return Scenario(MnoParams(0.0, 1.0, CostModel(Quadratic(0.4, 0.1))), (apo,) * 4)


def table_welfare(psi):
    """``Ψ(x) = ψ(Σx)`` for a table of values at integer totals."""

    def fn(x):
        return psi[int(round(float(np.sum(x))))]

    return fn
