"""Slow brute-force verifiers for the bargaining solutions.

Nothing here calls the bargaining module.  Welfare is re-evaluated from the raw
cost and demand closed forms, without the cancellation-free differences used by
the solvers, and the Nash products are maximized by exhaustive grid search.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np

from .model import Scenario
from .optimizer import OptimizerConfig, socially_optimal

__all__ = ["GridNbs", "grid_nbs", "BackwardInduction", "backward_induction_nbs", "plain_welfare"]


def plain_welfare(scenario: Scenario, x) -> float:
    """``Ψ(x)`` evaluated term by term as written, vectorized over a leading axis."""
    x = np.asarray(x, dtype=float)
    m = scenario.mno
    shape = m.cost.shape
    s = np.array([a.s for a in scenario.apos])
    th = np.array([a.theta for a in scenario.apos])
    if m.cost.additive:
        r = np.sum(shape.value(s / th) - shape.value((s - x) / th), axis=-1)
    else:
        b0 = m.s0 / m.theta0 + np.sum(s / th)
        r = shape.value(b0) - shape.value(b0 - np.sum(x / th, axis=-1))
    q = 0.0
    for i, a in enumerate(scenario.apos):
        xi = x[..., i]
        emin = a.demand.survival_integral
        q = q + (a.w - a.c) * (emin(a.b - xi / a.phi) - emin(a.b)) - a.c * xi / a.phi
    return r + q


@dataclass(frozen=True)
class GridNbs:
    x: float
    pi: float
    x_cell: float
    pi_cell: float


def grid_nbs(scenario: Scenario, n_x: int = 1001, n_pi: int = 1001) -> GridNbs:
    """Maximize ``(Ψ(x) - π)·π`` over an ``n_x`` by ``n_pi`` grid (single APO)."""
    if scenario.n != 1:
        raise ValueError("grid_nbs needs exactly one APO")
    u = scenario.apos[0].upper
    xs = np.linspace(0.0, u, n_x)
    psi = plain_welfare(scenario, xs[:, None])
    top = max(float(np.max(psi)), 0.0)
    pis = np.linspace(0.0, top, n_pi)
    prod = (psi[:, None] - pis[None, :]) * pis[None, :]
    i, j = np.unravel_index(int(np.argmax(prod)), prod.shape)
    x_cell = xs[1] - xs[0] if n_x > 1 else 0.0
    pi_cell = pis[1] - pis[0] if n_pi > 1 else 0.0
    return GridNbs(float(xs[i]), float(pis[j]), float(x_cell), float(pi_cell))


@dataclass(frozen=True)
class BackwardInduction:
    pi: np.ndarray
    mno_payoff: float
    x: np.ndarray
    step: float


def backward_induction_nbs(
    scenario: Scenario,
    grid_step: float,
    order: Sequence[int] | None = None,
    x_star=None,
    cfg: OptimizerConfig | None = None,
) -> BackwardInduction:
    """Sequential bargaining solved stage by stage from the last APO backwards.

    At the stage of APO ``order[k]`` the MNO has already agreed with the set ``A``.
    Agreement yields the MNO continuation ``M(k+1, A ∪ {n})`` plus the APO's loss
    folded into the payoff it is paid; breakdown yields ``M(k+1, A)``, which is the
    disagreement point.  The APO payoff is the grid point maximizing the Nash
    product ``(Δ - v)·v`` over ``v`` in ``{0, h, 2h, ...}``.  Offload volumes are
    held at the welfare optimum; only the division is searched.
    """
    n = scenario.n
    if n > 3:
        raise ValueError("backward induction oracle is limited to three APOs")
    order = list(range(n)) if order is None else [int(i) for i in order]
    if sorted(order) != list(range(n)):
        raise ValueError("order must be a permutation of the APO indices")
    x = socially_optimal(scenario, cfg) if x_star is None else np.asarray(x_star, dtype=float)
    shape = scenario.mno.cost.shape
    s = np.array([a.s for a in scenario.apos])
    th = np.array([a.theta for a in scenario.apos])
    b0 = scenario.mno.s0 / scenario.mno.theta0 + float(np.sum(s / th))

    def reduction(agreed: frozenset) -> float:
        y = np.array([x[i] if i in agreed else 0.0 for i in range(n)])
        if scenario.additive:
            return float(np.sum(shape.value(s / th) - shape.value((s - y) / th)))
        return float(shape.value(b0) - shape.value(b0 - np.sum(y / th)))

    def loss(i: int) -> float:
        single = np.zeros(n)
        single[i] = x[i]
        return float(plain_welfare(scenario, single)) - reduction(frozenset([i]))

    q = [loss(i) for i in range(n)]
    pay = {}

    @lru_cache(maxsize=None)
    def mno_value(k: int, agreed: frozenset) -> float:
        # MNO's payoff from stage k on, before payments made at earlier stages
        if k == n:
            return reduction(agreed)
        apo = order[k]
        agree = mno_value(k + 1, agreed | {apo})
        breakdown = mno_value(k + 1, agreed)
        delta = agree + q[apo] - breakdown
        if delta <= 0.0:
            pay[(k, agreed)] = (0.0, False)
            return breakdown
        vs = np.arange(0.0, delta + grid_step, grid_step)
        v = float(vs[int(np.argmax((delta - vs) * vs))])
        pay[(k, agreed)] = (v, True)
        # the MNO pays v - Q so that the APO ends up with v
        return agree - (v - q[apo])

    u = mno_value(0, frozenset())
    pi = np.zeros(n)
    agreed = frozenset()
    for k, apo in enumerate(order):
        pi[apo], ok = pay[(k, agreed)]
        if ok:
            agreed = agreed | {apo}
    return BackwardInduction(pi, u, x, grid_step)
