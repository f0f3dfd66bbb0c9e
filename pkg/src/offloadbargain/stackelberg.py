"""Non-cooperative pricing benchmark: the MNO posts unit prices, APOs respond.

AP-side efficiency is normalized to one here (``φ = 1``) so offload volume and
ceded AP resource coincide.

The MNO problem is solved over offload volumes rather than prices.  On the
active range an APO's best response is invertible, giving the inverse supply
curve ``p(x) = w - (w - c)·F(B - x)``; paying ``x·p(x)`` is convex in ``x`` when
the demand density is nonincreasing, so the MNO objective is concave in ``x``
and the dual bisection of :mod:`optimizer` applies exactly.  Where an APO is
indifferent (a flat stretch of ``p``) the MNO picks the point it prefers.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .model import ApoParams, Scenario, require_valid
from .optimizer import OptimizerConfig, _leftmost_root, socially_optimal, solve_dual
from .welfare import apo_profit_loss, base_consumption, cost_reduction, social_welfare

__all__ = [
    "StackelbergOutcome",
    "ComparisonReport",
    "critical_price",
    "apo_best_response",
    "apo_payoff",
    "inverse_supply",
    "mno_objective",
    "mno_optimal_prices",
    "compare_nbs_ne",
    "unit_phi",
]


def unit_phi(scenario: Scenario) -> Scenario:
    return Scenario(scenario.mno, tuple(replace(a, phi=1.0) for a in scenario.apos))


def critical_price(apo: ApoParams) -> float:
    """Price below which the APO keeps all of its capacity."""
    return apo.c + (apo.w - apo.c) * (1.0 - float(apo.demand.cdf(apo.b)))


def apo_best_response(apo: ApoParams, p_n: float) -> float:
    """Offload volume maximizing ``p·x + Q(x)`` over ``[0, B]``."""
    if p_n < critical_price(apo):
        return 0.0
    if p_n <= apo.w:
        u = (apo.w - p_n) / (apo.w - apo.c)
        return max(apo.b - float(apo.demand.ppf(u)), 0.0)
    return apo.b


def apo_payoff(apo: ApoParams, p_n: float, x_n):
    """APO gain from selling ``x_n`` at unit price ``p_n``."""
    return p_n * np.asarray(x_n, dtype=float) + apo_profit_loss(replace(apo, phi=1.0), x_n)


def inverse_supply(apo: ApoParams, x_n):
    """Lowest price at which ``x_n`` is a best response, for ``x_n`` in ``[0, B - lo]``."""
    return apo.w - (apo.w - apo.c) * apo.demand.cdf(apo.b - np.asarray(x_n, dtype=float))


def _stack_cap(apo: ApoParams) -> float:
    return max(min(apo.s, apo.b - apo.demand.lo), 0.0)


class _Payment:
    """Marginal payment ``d(x·p(x))/dx`` as an exact piecewise-linear function.

    Between breakpoints (where ``B - x`` crosses a CDF knot) ``p`` is linear with
    slope ``σ``, so the marginal payment is ``p(x) + σ·x``.
    """

    def __init__(self, apo: ApoParams, cap: float):
        self.apo = apo
        self.cap = cap
        v = np.array([k[0] for k in apo.demand.knots])
        cuts = sorted({0.0, cap} | {float(apo.b - t) for t in v if 0.0 < apo.b - t < cap})
        self.x0 = np.array(cuts[:-1]) if len(cuts) > 1 else np.array([0.0])
        self.x1 = np.array(cuts[1:]) if len(cuts) > 1 else np.array([0.0])
        mids = 0.5 * (self.x0 + self.x1)
        self.slope = (apo.w - apo.c) * np.asarray(apo.demand.pdf(apo.b - mids))
        self.p0 = np.asarray(inverse_supply(apo, self.x0), dtype=float)

    def right(self, x: float) -> float:
        j = max(int(np.searchsorted(self.x0, x, side="right")) - 1, 0)
        return float(inverse_supply(self.apo, x)) + float(self.slope[j]) * x

    def left(self, x: float) -> float:
        j = max(int(np.searchsorted(self.x0, x, side="left")) - 1, 0)
        return float(inverse_supply(self.apo, x)) + float(self.slope[j]) * x

    def leftmost_at_least(self, tau: float) -> float:
        """Smallest ``x`` in ``[0, cap]`` whose right marginal payment reaches ``tau``."""
        if self.cap <= 0.0:
            return 0.0
        for x0, x1, p0, s in zip(self.x0, self.x1, self.p0, self.slope):
            if tau <= p0 + s * x0:
                return float(x0)
            end = p0 + s * (x1 - x0) + s * x1
            if s > 0.0 and tau <= end:
                return float(min(max((tau - p0 + s * x0) / (2.0 * s), x0), x1))
        return self.cap


def _area_optimum(shape, apo: ApoParams, pay: _Payment, tol: float) -> float:
    """Leftmost maximizer of ``C(S/θ) - C((S - x)/θ) - x·p(x)`` on ``[0, cap]``.

    The piece holding the root is found first so a root at a kink of the
    marginal payment is returned exactly.
    """

    def saving(t):
        return float(shape.deriv((apo.s - t) / apo.theta)) / apo.theta

    if pay.cap <= 0.0:
        return 0.0
    for x0, x1, p0, s in zip(pay.x0, pay.x1, pay.p0, pay.slope):
        if saving(x0) <= p0 + s * x0:
            return float(x0)
        if saving(x1) <= p0 + s * (x1 - x0) + s * x1:
            def g(t, x0=x0, p0=p0, s=s):
                return saving(x0 + t) - (p0 + s * t + s * (x0 + t))

            return float(x0) + _leftmost_root(g, float(x1 - x0), tol)
    return pay.cap


@dataclass(frozen=True)
class StackelbergOutcome:
    p: np.ndarray
    x: np.ndarray
    mno_payoff: float
    apo_payoffs: np.ndarray
    welfare: float
    foc_residual: float
    binding: tuple[int, ...]
    marginal_payment: np.ndarray
    at_kink: tuple[int, ...] = ()

    def to_dict(self) -> dict:
        return {
            "protocol": "stackelberg",
            "p_star": [float(v) for v in self.p],
            "x": [float(v) for v in self.x],
            "pi": [float(v) for v in self.apo_payoffs],
            "mno_payoff": float(self.mno_payoff),
            "welfare": float(self.welfare),
            "foc_residual": float(self.foc_residual),
            "binding": [i + 1 for i in self.binding],
        }


def mno_objective(scenario: Scenario, p) -> float:
    """MNO payoff when every APO best-responds to ``p`` (traffic caps ignored)."""
    sc = unit_phi(scenario)
    x = np.array([min(apo_best_response(a, pn), a.s) for a, pn in zip(sc.apos, p)])
    return cost_reduction(sc, x) - float(np.dot(p, x))


def mno_optimal_prices(scenario: Scenario, cfg: OptimizerConfig | None = None) -> StackelbergOutcome:
    """The MNO's payoff-maximizing linear prices and the responses they induce."""
    cfg = cfg or OptimizerConfig()
    sc = unit_phi(scenario)
    require_valid(sc)
    apos = sc.apos
    caps = np.array([_stack_cap(a) for a in apos])
    pay = [_Payment(a, cap) for a, cap in zip(apos, caps)]
    theta = np.array([a.theta for a in apos])
    shape = sc.mno.cost.shape

    if sc.additive:
        x = np.array([_area_optimum(shape, a, pay[i], cfg.bisect_tol) for i, a in enumerate(apos)])
    else:
        x = solve_dual(
            shape,
            sc.mno.s0 / sc.mno.theta0,
            np.array([a.s for a in apos]),
            theta,
            caps,
            lambda i, lam: pay[i].leftmost_at_least(lam / theta[i]),
        )

    p = np.array([float(inverse_supply(a, xi)) if xi > 0.0 else 0.0 for a, xi in zip(apos, x)])
    if sc.additive:
        saving = np.array([float(shape.deriv((a.s - xi) / a.theta)) / a.theta for a, xi in zip(apos, x)])
    else:
        b = base_consumption(sc) - math.fsum(x / theta)
        saving = float(shape.deriv(b)) / theta
    resid = 0.0
    for i in range(sc.n):
        if 0.0 < x[i] < caps[i]:
            lo, hi = pay[i].left(x[i]), pay[i].right(x[i])
            gap = max(lo - saving[i], saving[i] - hi, 0.0)
            resid = max(resid, gap / max(abs(saving[i]), 1e-300))
    mp = np.array([theta[i] * pay[i].right(x[i]) if x[i] > 0 else 0.0 for i in range(sc.n)])
    apo_pay = np.array([float(apo_payoff(a, pn, xi)) for a, pn, xi in zip(apos, p, x)])
    binding = tuple(i for i in range(sc.n) if caps[i] > 0 and x[i] >= caps[i])
    # marginal payment jumps where B - x sits on a CDF knot
    at_kink = tuple(i for i in range(sc.n) if x[i] > 0 and pay[i].left(x[i]) != pay[i].right(x[i]))
    return StackelbergOutcome(
        p=p,
        x=x,
        mno_payoff=cost_reduction(sc, x) - float(np.dot(p, x)),
        apo_payoffs=apo_pay,
        welfare=social_welfare(sc, x),
        foc_residual=resid,
        binding=binding,
        marginal_payment=mp,
        at_kink=at_kink,
    )


@dataclass(frozen=True)
class ComparisonReport:
    x_nbs: np.ndarray
    x_ne: np.ndarray
    p_ne: np.ndarray
    weighted_difference: float
    welfare_nbs: float
    welfare_ne: float
    degenerate: bool

    @property
    def welfare_gap(self) -> float:
        return self.welfare_nbs - self.welfare_ne

    def to_dict(self) -> dict:
        return {
            "x_nbs": [float(v) for v in self.x_nbs],
            "x_ne": [float(v) for v in self.x_ne],
            "p_star": [float(v) for v in self.p_ne],
            "weighted_difference": float(self.weighted_difference),
            "welfare_nbs": float(self.welfare_nbs),
            "welfare_ne": float(self.welfare_ne),
            "welfare_gap": float(self.welfare_gap),
            "degenerate": self.degenerate,
        }


def compare_nbs_ne(scenario: Scenario, cfg: OptimizerConfig | None = None) -> ComparisonReport:
    """Social optimum against the pricing equilibrium, both with ``φ = 1``."""
    sc = unit_phi(scenario)
    x_o = socially_optimal(sc, cfg)
    ne = mno_optimal_prices(sc, cfg)
    total = math.fsum(x_o)
    degenerate = total <= 0.0
    diff = 0.0 if degenerate else math.fsum(np.abs(x_o - ne.x)) / total
    return ComparisonReport(
        x_nbs=x_o,
        x_ne=ne.x,
        p_ne=ne.p,
        weighted_difference=diff,
        welfare_nbs=social_welfare(sc, x_o),
        welfare_ne=ne.welfare,
        degenerate=degenerate,
    )
