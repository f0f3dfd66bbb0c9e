"""Nash-bargaining divisions of the welfare created by offloading.

Every protocol uses the welfare-maximizing profile ``x*``; the protocols differ
only in how they divide ``Ψ(x*)``.  A block of APOs bargaining as one player
receives half of its marginal welfare:

* sequential: the marginal welfare averaged over whether each later block
  reaches agreement, each with probability one half;
* concurrent: the marginal welfare given that every other block agrees.

The MNO keeps the rest.  Division functions accept either a :class:`Scenario`
(fast closed-form path) or any welfare callable ``Ψ(x)`` together with ``x*``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .model import BargainOutcome, GroupingStructure, Scenario, require_valid
from .optimizer import OptimizerConfig, socially_optimal
from .welfare import (
    apo_profit_loss,
    area_welfare,
    base_consumption,
    social_welfare,
)

__all__ = [
    "NbsConfig",
    "ConfigError",
    "PaymentError",
    "Estimate",
    "Division",
    "GroupingComparison",
    "virtual_marginal_welfare",
    "concurrent_marginal_welfare",
    "sequential_division",
    "concurrent_division",
    "one_to_one_nbs",
    "sequential_nbs",
    "concurrent_nbs",
    "payments_from_payoffs",
    "grouping_report",
]

log = logging.getLogger(__name__)

MIN_MC_SAMPLES = 100
PAYMENT_TOL = 1e-9


class ConfigError(ValueError):
    pass


class PaymentError(ArithmeticError):
    pass


@dataclass(frozen=True)
class NbsConfig:
    exact_cutoff: int = 20
    mc_samples: int = 100_000
    seed: int = 0
    workers: int = 1
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)

    def __post_init__(self):
        if self.exact_cutoff < 0 or self.mc_samples < 1 or self.workers < 1:
            raise ConfigError("need exact_cutoff >= 0, mc_samples >= 1, workers >= 1")


@dataclass(frozen=True)
class Estimate:
    """A marginal welfare; ``stderr`` is 0 when it was enumerated exactly."""

    value: float
    stderr: float = 0.0

    @property
    def exact(self) -> bool:
        return self.stderr == 0.0

    def __float__(self):
        return self.value


@dataclass(frozen=True)
class Division:
    block_pi: np.ndarray
    pi: np.ndarray
    mno_payoff: float
    welfare: float
    block_stderr: np.ndarray | None = None


# ---------------------------------------------------------------------------
# Welfare models
# ---------------------------------------------------------------------------


class _FunctionModel:
    """Brute-force evaluation through a welfare callable."""

    def __init__(self, fn: Callable[[np.ndarray], float], x_star):
        self.fn = fn
        self.x = np.asarray(x_star, dtype=float)
        self.n = len(self.x)

    def welfare(self) -> float:
        return float(self.fn(self.x.copy()))

    def _marginal(self, included: Sequence[int], block) -> float:
        y = np.zeros(self.n)
        idx = list(included)
        y[idx] = self.x[idx]
        y_with = y.copy()
        y_with[list(block)] = self.x[list(block)]
        return float(self.fn(y_with)) - float(self.fn(y))

    def sequential(self, blocks, k, cfg: NbsConfig) -> Estimate:
        pred = [i for b in blocks[:k] for i in b]
        post = blocks[k + 1 :]
        K = len(post)
        if K <= cfg.exact_cutoff:
            vals = []
            for i in range(1 << K):
                g = i ^ (i >> 1)
                inc = pred + [m for j in range(K) if g >> j & 1 for m in post[j]]
                vals.append(self._marginal(inc, blocks[k]))
            return Estimate(math.fsum(vals) / (1 << K))
        rng = np.random.default_rng(np.random.SeedSequence([int(cfg.seed), k]))
        bits = rng.integers(0, 2, size=(cfg.mc_samples, K), dtype=np.uint8)
        vals = np.array(
            [
                self._marginal(pred + [m for j in range(K) if row[j] for m in post[j]], blocks[k])
                for row in bits
            ]
        )
        return _mc_estimate(vals)

    def concurrent(self, blocks, k) -> float:
        others = [i for j, b in enumerate(blocks) if j != k for i in b]
        return self._marginal(others, blocks[k])


class _ScenarioModel:
    """Closed-form marginals for a scenario.

    Under coupled cost only the block's own loss and the cost difference over
    the block's offload volume survive in a marginal, so averaging over later
    blocks reduces to averaging a scalar cost difference over subset sums.
    """

    def __init__(self, scenario: Scenario, x_star):
        self.sc = scenario
        self.x = np.asarray(x_star, dtype=float)
        self.n = scenario.n
        theta = np.array([a.theta for a in scenario.apos])
        self.vol = self.x / theta
        self.q = np.array([float(apo_profit_loss(a, v)) for a, v in zip(scenario.apos, self.x)])
        self.b0 = base_consumption(scenario)
        self.shape = scenario.mno.cost.shape
        if scenario.additive:
            self.area = np.array([float(area_welfare(scenario, i, v)) for i, v in enumerate(self.x)])

    def welfare(self) -> float:
        return social_welfare(self.sc, self.x)

    def _vol(self, block) -> float:
        return math.fsum(self.vol[i] for i in block)

    def _q(self, block) -> float:
        return math.fsum(self.q[i] for i in block)

    def sequential(self, blocks, k, cfg: NbsConfig) -> Estimate:
        if self.sc.additive:
            return Estimate(math.fsum(self.area[i] for i in blocks[k]))
        a = self.b0 - math.fsum(self._vol(b) for b in blocks[:k])
        dk = self._vol(blocks[k])
        post = np.array([self._vol(b) for b in blocks[k + 1 :]])
        code = self.shape.code
        p1, p2 = self.shape.kernel_params
        if len(post) <= cfg.exact_cutoff:
            mean = kernels.exact_mean_cost_diff(code, p1, p2, a, dk, post, cfg.workers)
            return Estimate(mean + self._q(blocks[k]))
        mean, se = kernels.mc_cost_diff(code, p1, p2, a, dk, post, cfg.mc_samples, cfg.seed, k)
        return Estimate(mean + self._q(blocks[k]), se)

    def concurrent(self, blocks, k) -> float:
        if self.sc.additive:
            return math.fsum(self.area[i] for i in blocks[k])
        b_star = self.b0 - math.fsum(self.vol)
        return float(self.shape.diff(b_star, b_star + self._vol(blocks[k]))) + self._q(blocks[k])


def _mc_estimate(vals: np.ndarray) -> Estimate:
    m = len(vals)
    se = float(np.std(vals, ddof=1)) / math.sqrt(m) if m > 1 else float("inf")
    return Estimate(math.fsum(vals) / m, se)


def _model(source, x_star):
    if isinstance(source, Scenario):
        if x_star is None:
            raise ValueError("x_star is required")
        return _ScenarioModel(source, x_star)
    if callable(source):
        return _FunctionModel(source, x_star)
    raise TypeError("expected a Scenario or a welfare callable")


# ---------------------------------------------------------------------------
# Divisions
# ---------------------------------------------------------------------------


def virtual_marginal_welfare(
    source, x_star, grouping: GroupingStructure, k: int, cfg: NbsConfig | None = None
) -> Estimate:
    """Block ``k``'s marginal welfare averaged over agreement of the later blocks."""
    cfg = cfg or NbsConfig()
    return _model(source, x_star).sequential(grouping.blocks, k, cfg)


def concurrent_marginal_welfare(source, x_star, grouping: GroupingStructure, k: int) -> float:
    """``Ψ(x*) - Ψ(x*`` with block ``k`` zeroed``)``."""
    return _model(source, x_star).concurrent(grouping.blocks, k)


def _own_marginal(model, i: int) -> float:
    alone = [(i,)] + [(j,) for j in range(model.n) if j != i]
    return model.concurrent(alone, 0)


def _split(model, blocks, block_pi) -> np.ndarray:
    """Share each block total among its members in proportion to their own marginals."""
    pi = np.zeros(model.n)
    for b, total in zip(blocks, block_pi):
        if len(b) == 1:
            pi[b[0]] = total
            continue
        weights = np.array([max(_own_marginal(model, i), 0.0) for i in b])
        wsum = math.fsum(weights)
        share = weights / wsum if wsum > 0 else np.full(len(b), 1.0 / len(b))
        pi[list(b)] = total * share
    return pi


def _check_grouping(n: int, grouping: GroupingStructure) -> None:
    problems = grouping.problems(n)
    if problems:
        raise ValueError("; ".join(problems))


def sequential_division(
    source, x_star, grouping: GroupingStructure, cfg: NbsConfig | None = None
) -> Division:
    cfg = cfg or NbsConfig()
    model = _model(source, x_star)
    blocks = grouping.blocks
    _check_grouping(model.n, grouping)
    nb = len(blocks)
    if nb - 1 > cfg.exact_cutoff and cfg.mc_samples < MIN_MC_SAMPLES:
        raise ConfigError(
            f"Monte Carlo needs at least {MIN_MC_SAMPLES} samples, got {cfg.mc_samples}"
        )
    est = [model.sequential(blocks, k, cfg) for k in range(nb)]
    block_pi = np.array([e.value for e in est]) / 2.0
    psi = model.welfare()
    stderr = None
    if any(not e.exact for e in est):
        stderr = np.array([e.stderr for e in est]) / 2.0
    return Division(block_pi, _split(model, blocks, block_pi), psi - math.fsum(block_pi), psi, stderr)


def concurrent_division(source, x_star, grouping: GroupingStructure) -> Division:
    model = _model(source, x_star)
    blocks = grouping.blocks
    _check_grouping(model.n, grouping)
    block_pi = np.array([model.concurrent(blocks, k) for k in range(len(blocks))]) / 2.0
    psi = model.welfare()
    return Division(block_pi, _split(model, blocks, block_pi), psi - math.fsum(block_pi), psi)


# ---------------------------------------------------------------------------
# Scenario-level protocols
# ---------------------------------------------------------------------------


def payments_from_payoffs(scenario: Scenario, x_star, pi) -> np.ndarray:
    """``z_n = π_n - Q_n(x_n)``; a payment below ``-1e-9`` signals an inconsistency."""
    x_star = np.asarray(x_star, dtype=float)
    pi = np.asarray(pi, dtype=float)
    if len(x_star) != scenario.n or len(pi) != scenario.n:
        raise ValueError("x and pi must have one entry per APO")
    q = np.array([float(apo_profit_loss(a, v)) for a, v in zip(scenario.apos, x_star)])
    z = pi - q
    bad = np.flatnonzero(z < -PAYMENT_TOL)
    if len(bad):
        raise PaymentError(f"negative payment for APO {bad[0] + 1}: {z[bad[0]]!r}")
    return z


def _prepare(scenario, grouping, cfg, x_star):
    cfg = cfg or NbsConfig()
    grouping = grouping or GroupingStructure.singletons(scenario.n)
    require_valid(scenario, grouping)
    if x_star is None:
        x_star = socially_optimal(scenario, cfg.optimizer)
    return cfg, grouping, np.asarray(x_star, dtype=float)


def _outcome(scenario, x, div: Division, protocol, grouping) -> BargainOutcome:
    z = payments_from_payoffs(scenario, x, div.pi)
    se = None if div.block_stderr is None else tuple(float(v) for v in div.block_stderr)
    return BargainOutcome(
        x=x,
        pi=div.pi,
        z=z,
        mno_payoff=div.mno_payoff,
        welfare=div.welfare,
        protocol=protocol,
        grouping=grouping,
        block_pi=div.block_pi,
        mc_stderr=se,
    )


def one_to_one_nbs(scenario: Scenario, cfg: NbsConfig | None = None) -> BargainOutcome:
    """A single APO and the MNO split ``Ψ(x°)`` equally."""
    if scenario.n != 1:
        raise ValueError(f"one-to-one bargaining needs exactly one APO, got {scenario.n}")
    cfg, grouping, x = _prepare(scenario, None, cfg, None)
    psi = social_welfare(scenario, x)
    half = np.array([psi / 2.0])
    div = Division(half, half.copy(), psi - half[0], psi)
    return _outcome(scenario, x, div, "one2one", grouping)


def sequential_nbs(
    scenario: Scenario,
    grouping: GroupingStructure | None = None,
    cfg: NbsConfig | None = None,
    x_star=None,
) -> BargainOutcome:
    cfg, grouping, x = _prepare(scenario, grouping, cfg, x_star)
    div = sequential_division(scenario, x, grouping, cfg)
    return _outcome(scenario, x, div, "sequential", grouping)


def concurrent_nbs(
    scenario: Scenario,
    grouping: GroupingStructure | None = None,
    cfg: NbsConfig | None = None,
    x_star=None,
) -> BargainOutcome:
    cfg, grouping, x = _prepare(scenario, grouping, cfg, x_star)
    div = concurrent_division(scenario, x, grouping)
    return _outcome(scenario, x, div, "concurrent", grouping)


# ---------------------------------------------------------------------------
# Grouping comparison
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupingComparison:
    """Block payoffs of a finer grouping ``a`` against a coarser grouping ``b``.

    ``rows`` has one entry per block of ``b`` with its role: ``"group"`` when it
    merges several blocks of ``a``, otherwise ``"before"`` or ``"after"``
    relative to the first merged block.
    """

    rows: list[dict]
    flags: dict[str, bool]


def _coarsening(a: GroupingStructure, b: GroupingStructure) -> list[list[int]]:
    """For each block of ``b``, the consecutive blocks of ``a`` it is made of."""
    parts, k = [], 0
    for blk in b.blocks:
        target, got, members = set(blk), set(), []
        while k < a.n_blocks and got < target:
            if not set(a.blocks[k]) <= target:
                break
            got |= set(a.blocks[k])
            members.append(k)
            k += 1
        if got != target:
            raise ValueError("second grouping must merge consecutive blocks of the first")
        parts.append(members)
    return parts


def grouping_report(
    scenario: Scenario,
    cfg: NbsConfig | None,
    grouping_a: GroupingStructure,
    grouping_b: GroupingStructure,
    tol: float = 1e-9,
) -> GroupingComparison:
    cfg = cfg or NbsConfig()
    require_valid(scenario, grouping_a)
    require_valid(scenario, grouping_b)
    parts = _coarsening(grouping_a, grouping_b)
    x = socially_optimal(scenario, cfg.optimizer)
    seq_a = sequential_division(scenario, x, grouping_a, cfg).block_pi
    seq_b = sequential_division(scenario, x, grouping_b, cfg).block_pi
    con_a = concurrent_division(scenario, x, grouping_a).block_pi
    con_b = concurrent_division(scenario, x, grouping_b).block_pi
    first = next((j for j, p in enumerate(parts) if len(p) > 1), len(parts))
    rows = []
    for j, p in enumerate(parts):
        role = "group" if len(p) > 1 else ("before" if j < first else "after")
        s_a = math.fsum(seq_a[i] for i in p)
        c_a = math.fsum(con_a[i] for i in p)
        rows.append(
            {
                "block": [i + 1 for i in grouping_b.blocks[j]],
                "role": role,
                "sequential_a": s_a,
                "sequential_b": float(seq_b[j]),
                "sequential_delta": float(seq_b[j]) - s_a,
                "concurrent_a": c_a,
                "concurrent_b": float(con_b[j]),
                "concurrent_delta": float(con_b[j]) - c_a,
            }
        )

    def all_rows(role, key, ok):
        return all(ok(r[key]) for r in rows if r["role"] == role)

    flags = {
        "group_gain_sequential": all_rows("group", "sequential_delta", lambda d: d >= -tol),
        "group_gain_concurrent": all_rows("group", "concurrent_delta", lambda d: d >= -tol),
        "predecessor_gain_sequential": all_rows("before", "sequential_delta", lambda d: d >= -tol),
        "successor_neutral_sequential": all_rows("after", "sequential_delta", lambda d: abs(d) <= tol),
        "others_neutral_concurrent": all(
            abs(r["concurrent_delta"]) <= tol for r in rows if r["role"] != "group"
        ),
    }
    return GroupingComparison(rows, flags)
