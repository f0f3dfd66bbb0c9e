"""Socially optimal offloading: maximize Ψ over the feasible box.

Three solvers share one convention, namely that among several maximizers the
lowest one is returned, coordinate by coordinate:

* ``"bisect"``: additive (or linear) cost makes Ψ separable, so each coordinate is
  the leftmost root of its own nonincreasing derivative.
* ``"pga"``: projected gradient ascent with Barzilai-Borwein steps and Armijo
  backtracking, for coupled cost.  Started from the origin, so exchangeable APOs
  stay exchangeable along the whole path.
* ``"dual"``: one-dimensional bisection on the resource consumption ``b``.  At a
  fixed marginal saving ``C'(b)`` every coordinate has a closed-form maximizer, and
  consistency of ``b`` pins down the optimum.  Used as a cross-check and reused by
  the pricing benchmark.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .model import ApoParams, Linear, Scenario, require_valid
from .welfare import (
    apo_profit_loss_derivative,
    base_consumption,
    welfare_difference,
    welfare_gradient,
)

__all__ = [
    "OptimizerConfig",
    "OptimizeResult",
    "ConvergenceError",
    "feasible_box",
    "projected_gradient",
    "supply_at_price",
    "solve_dual",
    "solve",
    "socially_optimal",
    "kkt_violations",
]

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class OptimizerConfig:
    grad_tol: float = 1e-10
    max_iters: int = 100_000
    bisect_tol: float = 1e-12
    method: str = "auto"

    def __post_init__(self):
        if not (self.grad_tol > 0 and self.max_iters > 0 and self.bisect_tol > 0):
            raise ValueError("optimizer tolerances and iteration cap must be positive")
        if self.method not in ("auto", "bisect", "pga", "dual"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass(frozen=True)
class OptimizeResult:
    x: np.ndarray
    method: str
    iterations: int
    pg_norm: float


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, last_iterate):
        self.last_iterate = np.array(last_iterate, dtype=float)
        super().__init__(f"{message}; last iterate {self.last_iterate.tolist()}")


def feasible_box(scenario: Scenario) -> list[tuple[float, float]]:
    return [(0.0, a.upper) for a in scenario.apos]


def _uppers(scenario: Scenario) -> np.ndarray:
    return np.array([a.upper for a in scenario.apos])


def projected_gradient(g, x, upper) -> np.ndarray:
    """Gradient with components that point out of the box removed."""
    g = np.asarray(g, dtype=float)
    pg = g.copy()
    at_lo = x <= 0.0
    at_hi = x >= upper
    pg[at_lo] = np.maximum(g[at_lo], 0.0)
    pg[at_hi] = np.minimum(g[at_hi], 0.0)
    pg[at_lo & at_hi] = 0.0
    return pg


# ---------------------------------------------------------------------------
# Per-coordinate maximizers
# ---------------------------------------------------------------------------


def supply_at_price(apo: ApoParams, kappa: float) -> float:
    """Leftmost maximizer over ``[0, φB]`` of ``κ·x/φ + Q(x)``.

    ``κ`` is a price per unit of AP resource.  The answer is the APO's own
    best response to a linear price ``κ`` (scaled by ``φ``): nothing below the
    critical price, the whole capacity above ``w``, and the inverse CDF between.
    """
    w, c, dist = apo.w, apo.c, apo.demand
    crit = c + (w - c) * (1.0 - float(dist.cdf(apo.b)))
    if kappa <= crit:
        return 0.0
    if kappa < w:
        y = float(dist.ppf(1.0 - (kappa - c) / (w - c)))
        return apo.phi * max(apo.b - y, 0.0)
    if kappa == w:
        return apo.phi * max(apo.b - dist.lo, 0.0)
    return apo.phi * apo.b


def _leftmost_root(g: Callable[[float], float], hi: float, tol: float) -> float:
    """Leftmost point of ``[0, hi]`` where nonincreasing ``g`` stops being positive."""
    if hi <= 0.0 or g(0.0) <= 0.0:
        return 0.0
    if g(hi) > 0.0:
        return hi
    lo = 0.0
    tol = tol * max(1.0, hi)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if g(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _solve_separable(scenario: Scenario, cfg: OptimizerConfig) -> OptimizeResult:
    shape = scenario.mno.cost.shape
    x = np.zeros(scenario.n)
    for n, a in enumerate(scenario.apos):
        if scenario.additive:
            def g(t, a=a):
                return shape.deriv((a.s - t) / a.theta) / a.theta + apo_profit_loss_derivative(a, t)
        else:
            # linear cost: marginal saving is the constant slope
            def g(t, a=a):
                return shape.a / a.theta + apo_profit_loss_derivative(a, t)
        x[n] = _leftmost_root(g, a.upper, cfg.bisect_tol)
    return OptimizeResult(x, "bisect", 0, 0.0)


# ---------------------------------------------------------------------------
# Dual bisection on total consumption
# ---------------------------------------------------------------------------


def solve_dual(
    shape,
    b_fixed: float,
    s: np.ndarray,
    theta: np.ndarray,
    upper: np.ndarray,
    respond: Callable[[int, float], float],
) -> np.ndarray:
    """Maximize ``C(b_0) - C(b(x)) + Σ L_n(x_n)`` for concave ``L_n`` and convex ``C``.

    ``respond(n, λ)`` must return the leftmost maximizer on ``[0, upper_n]`` of
    ``λ·x/θ_n + L_n(x)``.  ``b(x) = b_fixed + Σ (s_n - x_n)/θ_n``.

    Where a response jumps (``L_n`` linear on an interval) the remaining slack is
    filled by moving every jumping coordinate the same fraction of its jump.
    """
    n = len(s)

    def profile(b):
        lam = float(shape.deriv(b))
        return np.array([min(max(respond(i, lam), 0.0), upper[i]) for i in range(n)])

    def resid(b, x):
        return b - (b_fixed + math.fsum((s - x) / theta))

    b_hi = b_fixed + math.fsum(s / theta)
    b_lo = b_fixed + math.fsum((s - upper) / theta)
    x_lo, x_hi = profile(b_lo), profile(b_hi)
    r_lo, r_hi = resid(b_lo, x_lo), resid(b_hi, x_hi)
    if r_lo >= 0.0:
        return x_lo
    if r_hi <= 0.0:
        return x_hi
    for _ in range(200):
        mid = 0.5 * (b_lo + b_hi)
        if mid <= b_lo or mid >= b_hi:
            break
        x_mid = profile(mid)
        r = resid(mid, x_mid)
        if r == 0.0:
            return x_mid
        if r < 0.0:
            b_lo, x_lo, r_lo = mid, x_mid, r
        else:
            b_hi, x_hi, r_hi = mid, x_mid, r
    jump = x_hi - x_lo
    moved = math.fsum(jump / theta)
    if moved <= 0.0:
        return x_hi
    # consistency at b_hi: b_fixed + Σ(s - x_lo - t·jump)/θ = b_hi
    t = (b_fixed + math.fsum((s - x_lo) / theta) - b_hi) / moved
    t = min(max(t, 0.0), 1.0)
    return x_lo + t * jump


def _solve_dual_welfare(scenario: Scenario) -> OptimizeResult:
    m = scenario.mno
    apos = scenario.apos
    theta = np.array([a.theta for a in apos])

    def respond(i, lam):
        a = apos[i]
        return supply_at_price(a, lam * a.phi / a.theta)

    x = solve_dual(
        m.cost.shape,
        m.s0 / m.theta0,
        np.array([a.s for a in apos]),
        theta,
        _uppers(scenario),
        respond,
    )
    return OptimizeResult(x, "dual", 0, float("nan"))


# ---------------------------------------------------------------------------
# Projected gradient ascent
# ---------------------------------------------------------------------------


def _solve_pga(scenario: Scenario, cfg: OptimizerConfig, x0=None) -> OptimizeResult:
    upper = _uppers(scenario)
    x = np.zeros(scenario.n) if x0 is None else np.clip(np.asarray(x0, dtype=float), 0.0, upper)
    g = welfare_gradient(scenario, x)
    pg = projected_gradient(g, x, upper)
    norm = float(np.max(np.abs(pg), initial=0.0))
    shape = scenario.mno.cost.shape
    theta = np.array([a.theta for a in scenario.apos])
    # curvature bound of the coupled term at b(0) sets the first step
    curv = float(shape.second(base_consumption(scenario))) * float(np.sum(1.0 / theta**2))
    alpha = 1.0 / max(curv, 1e-12 * max(norm, 1.0), 1e-300)
    alpha = min(alpha, 1e6 * max(1.0, float(np.max(upper, initial=0.0))) / max(norm, 1e-300))
    sigma = 1e-4
    it = 0
    while norm > cfg.grad_tol:
        if it >= cfg.max_iters:
            raise ConvergenceError(
                f"projected gradient ascent stopped after {it} iterations at |pg| = {norm:.3e}", x
            )
        it += 1
        step = alpha
        while True:
            x_new = np.clip(x + step * g, 0.0, upper)
            d = x_new - x
            gain = welfare_difference(scenario, x, x_new)
            if gain >= sigma * float(np.dot(g, d)) or not np.any(d):
                break
            step *= 0.5
            if step < 1e-300:
                raise ConvergenceError("line search failed", x)
        if not np.any(d):
            # every coordinate is pinned by a bound it is pushed against
            break
        g_new = welfare_gradient(scenario, x_new)
        y = g_new - g
        sy = float(np.dot(d, y))
        ss = float(np.dot(d, d))
        alpha = ss / -sy if sy < 0.0 else 2.0 * step
        x, g = x_new, g_new
        pg = projected_gradient(g, x, upper)
        norm = float(np.max(np.abs(pg), initial=0.0))
    log.debug("pga converged in %d iterations, |pg| = %.3e", it, norm)
    return OptimizeResult(x, "pga", it, norm)


# ---------------------------------------------------------------------------
# Entry points
# ---------------------------------------------------------------------------


def solve(scenario: Scenario, cfg: OptimizerConfig | None = None) -> OptimizeResult:
    cfg = cfg or OptimizerConfig()
    require_valid(scenario)
    method = cfg.method
    separable = scenario.additive or isinstance(scenario.mno.cost.shape, Linear)
    if method == "auto":
        method = "bisect" if separable else "pga"
    if method == "bisect":
        if not separable:
            raise ValueError("bisection solver needs additive or linear cost")
        return _solve_separable(scenario, cfg)
    if method == "dual":
        if scenario.additive:
            raise ValueError("dual solver is for coupled cost")
        return _solve_dual_welfare(scenario)
    return _solve_pga(scenario, cfg)


def socially_optimal(scenario: Scenario, cfg: OptimizerConfig | None = None) -> np.ndarray:
    """The welfare-maximizing offload profile ``x°``."""
    return solve(scenario, cfg).x


def kkt_violations(scenario: Scenario, x: Sequence[float], tol: float) -> list[int]:
    """Indices whose gradient sign is inconsistent with their position in the box."""
    x = np.asarray(x, dtype=float)
    g = welfare_gradient(scenario, x)
    upper = _uppers(scenario)
    bad = []
    for i in range(len(x)):
        if upper[i] <= 0.0:
            continue
        if x[i] <= 0.0:
            ok = g[i] <= tol
        elif x[i] >= upper[i]:
            ok = g[i] >= -tol
        else:
            ok = abs(g[i]) <= tol
        if not ok:
            bad.append(i)
    return bad
