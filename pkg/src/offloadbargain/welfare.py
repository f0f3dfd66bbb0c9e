"""Economic functions of an offloading profile.

The MNO saves ``R(x) = C(b(0)) - C(b(x))`` in serving cost; APO ``n`` gives up
``Q_n(x_n) <= 0`` in expected own-demand profit plus serving cost; welfare is
``Ψ(x) = R(x) + Σ Q_n(x_n)``, with payments cancelling out.

Differences of ``C`` and of expected-min capacity are evaluated by closed forms
that avoid cancellation, so welfare *increments* stay accurate near an optimum.
All functions are pure and vectorize over per-APO arrays where that is cheap.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np

from .model import ApoParams, PiecewiseLinearCdf, Scenario

__all__ = [
    "InfeasibleOffloadError",
    "check_feasible",
    "resource_consumption",
    "cost_reduction",
    "expected_min_resource",
    "apo_profit_loss",
    "apo_profit_loss_derivative",
    "apo_profit_loss_diff",
    "area_welfare",
    "social_welfare",
    "welfare_difference",
    "welfare_gradient",
]

FEAS_RTOL = 1e-12


class InfeasibleOffloadError(ValueError):
    def __init__(self, index: int, value: float, upper: float):
        self.index = index
        super().__init__(f"offload x_{index + 1} = {value!r} outside [0, {upper!r}]")


def check_feasible(scenario: Scenario, x) -> np.ndarray:
    """Return ``x`` as an array, raising if any coordinate leaves its interval."""
    x = np.asarray(x, dtype=float)
    if x.shape != (scenario.n,):
        raise ValueError(f"offload profile has shape {x.shape}, expected ({scenario.n},)")
    for i, (xi, a) in enumerate(zip(x, scenario.apos)):
        ub = a.upper
        slack = FEAS_RTOL * max(1.0, ub)
        if not (-slack <= xi <= ub + slack):
            raise InfeasibleOffloadError(i, float(xi), ub)
    return x


def _check_scalar(apo: ApoParams, x_n: float) -> None:
    cap = apo.capacity
    if np.any(np.asarray(x_n) < -FEAS_RTOL * max(1.0, cap)) or np.any(
        np.asarray(x_n) > cap * (1 + FEAS_RTOL) + FEAS_RTOL
    ):
        raise InfeasibleOffloadError(0, float(np.max(x_n)), cap)


def _thetas(scenario: Scenario) -> np.ndarray:
    return np.array([a.theta for a in scenario.apos])


def _traffic(scenario: Scenario) -> np.ndarray:
    return np.array([a.s for a in scenario.apos])


def base_consumption(scenario: Scenario) -> float:
    """``b(0)``: resource the MNO spends with nothing offloaded."""
    m = scenario.mno
    return m.s0 / m.theta0 + float(np.sum(_traffic(scenario) / _thetas(scenario)))


def resource_consumption(scenario: Scenario, x) -> float:
    x = check_feasible(scenario, x)
    m = scenario.mno
    return m.s0 / m.theta0 + float(np.sum((_traffic(scenario) - x) / _thetas(scenario)))


def cost_reduction(scenario: Scenario, x) -> float:
    x = check_feasible(scenario, x)
    shape = scenario.mno.cost.shape
    theta = _thetas(scenario)
    if scenario.additive:
        s = _traffic(scenario)
        return float(np.sum(shape.diff((s - x) / theta, s / theta)))
    b0 = base_consumption(scenario)
    saved = float(np.sum(x / theta))
    return float(shape.diff(b0 - saved, b0))


def expected_min_resource(dist: PiecewiseLinearCdf, cap):
    """``E min(cap, ξ)``: the mean when ``cap >= hi``, ``cap`` itself when ``cap <= lo``."""
    cap = np.maximum(np.asarray(cap, dtype=float), 0.0)
    out = dist.survival_integral(cap)
    return out if np.ndim(out) else float(out)


def apo_profit_loss(apo: ApoParams, x_n):
    """``Q_n(x_n)``: change in APO profit from carrying ``x_n`` offloaded traffic."""
    _check_scalar(apo, x_n)
    x_n = np.asarray(x_n, dtype=float)
    lost = x_n / apo.phi
    out = -(apo.w - apo.c) * apo.demand.survival_integral_diff(apo.b - lost, apo.b) - apo.c * lost
    return out if out.ndim else float(out)


def apo_profit_loss_diff(apo: ApoParams, x_from, x_to):
    """``Q_n(x_to) - Q_n(x_from)`` without cancellation."""
    x_from = np.asarray(x_from, dtype=float)
    x_to = np.asarray(x_to, dtype=float)
    y_from = apo.b - x_from / apo.phi
    y_to = apo.b - x_to / apo.phi
    out = (apo.w - apo.c) * apo.demand.survival_integral_diff(y_from, y_to) - apo.c * (x_to - x_from) / apo.phi
    return out if out.ndim else float(out)


def apo_profit_loss_derivative(apo: ApoParams, x_n):
    """``Q_n'(x_n) = -[(w-c)(1 - F(B - x/φ)) + c] / φ``.

    Only the CDF enters, and it is continuous, so ``Q_n`` is continuously
    differentiable everywhere including at CDF knots.
    """
    y = apo.b - np.asarray(x_n, dtype=float) / apo.phi
    out = -((apo.w - apo.c) * (1.0 - apo.demand.cdf(y)) + apo.c) / apo.phi
    return out if np.ndim(out) else float(out)


def area_welfare(scenario: Scenario, n: int, x_n):
    """Per-area welfare ``Ψ_n(x_n) = R_n(x_n) + Q_n(x_n)`` under additive cost."""
    a = scenario.apos[n]
    shape = scenario.mno.cost.shape
    x_n = np.asarray(x_n, dtype=float)
    r = shape.diff((a.s - x_n) / a.theta, a.s / a.theta)
    out = r + apo_profit_loss(a, x_n)
    return out if np.ndim(out) else float(out)


def social_welfare(scenario: Scenario, x) -> float:
    x = check_feasible(scenario, x)
    q = sum(float(apo_profit_loss(a, xi)) for a, xi in zip(scenario.apos, x))
    return cost_reduction(scenario, x) + q


def welfare_difference(scenario: Scenario, x, x_new) -> float:
    """``Ψ(x_new) - Ψ(x)`` computed from increments rather than two large values."""
    x = np.asarray(x, dtype=float)
    x_new = np.asarray(x_new, dtype=float)
    shape = scenario.mno.cost.shape
    theta = _thetas(scenario)
    if scenario.additive:
        s = _traffic(scenario)
        dr = float(np.sum(shape.diff((s - x_new) / theta, (s - x) / theta)))
    else:
        b_old = resource_consumption(scenario, x)
        db = float(np.sum((x_new - x) / theta))
        dr = float(shape.diff(b_old - db, b_old))
    dq = 0.0
    for demand, idx, wc, c, b, phi in _demand_groups(scenario):
        y_old = b - x[idx] / phi
        y_new = b - x_new[idx] / phi
        dq += float(np.sum(wc * demand.survival_integral_diff(y_old, y_new) - c * (x_new[idx] - x[idx]) / phi))
    return dr + dq


@lru_cache(maxsize=64)
def _demand_groups(scenario: Scenario):
    # APOs sharing a demand curve are evaluated in one vectorized call
    members: dict = {}
    for i, a in enumerate(scenario.apos):
        members.setdefault(a.demand, []).append(i)
    out = []
    for demand, idx in members.items():
        apos = [scenario.apos[i] for i in idx]
        out.append(
            (
                demand,
                np.array(idx),
                np.array([a.w - a.c for a in apos]),
                np.array([a.c for a in apos]),
                np.array([a.b for a in apos]),
                np.array([a.phi for a in apos]),
            )
        )
    return out


def welfare_gradient(scenario: Scenario, x) -> np.ndarray:
    """``∂Ψ/∂x_n = C'(b)/θ_n + Q_n'(x_n)`` (``b`` per area under additive cost)."""
    x = check_feasible(scenario, x)
    shape = scenario.mno.cost.shape
    theta = _thetas(scenario)
    if scenario.additive:
        marginal = shape.deriv((_traffic(scenario) - x) / theta) / theta
    else:
        marginal = shape.deriv(resource_consumption(scenario, x)) / theta
    dq = np.array([apo_profit_loss_derivative(a, xi) for a, xi in zip(scenario.apos, x)])
    return np.asarray(marginal, dtype=float) + dq
