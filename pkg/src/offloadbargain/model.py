"""Problem-instance types: MNO and APO parameters, demand distributions, cost shapes.

Types here carry no algorithms beyond evaluating their own closed forms.  Economic
invariants (``w > c``, positive efficiencies, ...) are *reported* by :func:`validate`
rather than raised, so that a malformed instance can be inspected.  Demand
distributions are the exception: a CDF that is not a CDF is rejected at construction.

All indices are 0-based in the Python API and 1-based in every external format.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

__all__ = [
    "PiecewiseLinearCdf",
    "Uniform",
    "Linear",
    "Quadratic",
    "Exponential",
    "CostModel",
    "MnoParams",
    "ApoParams",
    "Scenario",
    "GroupingStructure",
    "BargainOutcome",
    "InvalidScenarioError",
    "validate",
    "require_valid",
]


class InvalidScenarioError(ValueError):
    """Raised by solvers handed an instance that fails :func:`validate`."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid scenario: " + "; ".join(self.problems))


# ---------------------------------------------------------------------------
# Demand distributions
# ---------------------------------------------------------------------------


class PiecewiseLinearCdf:
    """Own-demand distribution with a piecewise-linear CDF.

    ``knots`` is a sequence of ``(value, cdf)`` pairs.  The CDF must start at 0,
    end at 1, increase strictly, and be concave (nonincreasing density), which is
    what the pricing benchmark needs.

    Every integral is evaluated per segment in closed form, so there is no
    quadrature error anywhere downstream.
    """

    kind = "piecewise_linear_cdf"

    def __init__(self, knots: Sequence[Sequence[float]]):
        pts = np.asarray(knots, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
            raise ValueError("knots must be a list of at least two (value, cdf) pairs")
        v, F = pts[:, 0].copy(), pts[:, 1].copy()
        if not np.all(np.isfinite(pts)):
            raise ValueError("knots must be finite")
        if np.any(np.diff(v) <= 0):
            raise ValueError("knot values must be strictly increasing")
        if F[0] != 0.0 or F[-1] != 1.0:
            raise ValueError("CDF must be 0 at the first knot and 1 at the last")
        if np.any(np.diff(F) <= 0):
            raise ValueError("CDF must be strictly increasing on the support")
        slopes = np.diff(F) / np.diff(v)
        if np.any(np.diff(slopes) > 1e-12 * slopes[:-1]):
            raise ValueError("density must be nonincreasing (concave CDF)")
        v.flags.writeable = False
        F.flags.writeable = False
        self._v = v
        self._F = F
        self._slopes = slopes
        # survival integral ∫_0^{v_j} (1 - F) at each knot, for lo >= 0
        seg = np.diff(v) * (1.0 - 0.5 * (F[:-1] + F[1:]))
        self._G = np.concatenate(([v[0]], v[0] + np.cumsum(seg)))

    @property
    def lo(self) -> float:
        return float(self._v[0])

    @property
    def hi(self) -> float:
        return float(self._v[-1])

    @property
    def knots(self) -> tuple[tuple[float, float], ...]:
        return tuple((float(a), float(b)) for a, b in zip(self._v, self._F))

    @property
    def params(self) -> dict:
        return {"knots": [list(k) for k in self.knots]}

    def mean(self) -> float:
        return float(self._G[-1])

    def cdf(self, t):
        return np.interp(t, self._v, self._F, left=0.0, right=1.0)

    def pdf(self, t, side: str = "right"):
        """Density; at a knot the one-sided limit named by ``side`` is returned."""
        t = np.asarray(t, dtype=float)
        s = "right" if side == "right" else "left"
        j = np.searchsorted(self._v, t, side=s) - 1
        inside = (j >= 0) & (j < len(self._slopes))
        out = np.where(inside, self._slopes[np.clip(j, 0, len(self._slopes) - 1)], 0.0)
        return out if out.ndim else float(out)

    def ppf(self, u):
        return np.interp(u, self._F, self._v)

    def _segment(self, t):
        return np.clip(np.searchsorted(self._v, t, side="right") - 1, -1, len(self._v) - 1)

    def survival_integral(self, t):
        """``∫_0^t (1 - F)``; equals ``E min(t, ξ)`` for ``t >= 0``."""
        t = np.asarray(t, dtype=float)
        j = np.clip(np.searchsorted(self._v, t, side="right") - 1, 0, len(self._v) - 2)
        Ft = self.cdf(t)
        inner = self._G[j] + (t - self._v[j]) * (1.0 - 0.5 * (self._F[j] + Ft))
        out = np.where(t <= self._v[0], t, np.where(t >= self._v[-1], self._G[-1], inner))
        return out if out.ndim else float(out)

    def survival_integral_diff(self, t1, t2):
        """``∫_{t1}^{t2} (1 - F)`` without cancellation when t1, t2 share a segment."""
        t1 = np.asarray(t1, dtype=float)
        t2 = np.asarray(t2, dtype=float)
        same = self._segment(t1) == self._segment(t2)
        local = (t2 - t1) * (1.0 - 0.5 * (self.cdf(t1) + self.cdf(t2)))
        out = np.where(same, local, self.survival_integral(t2) - self.survival_integral(t1))
        return out if out.ndim else float(out)

    def cdf_diff(self, t1, t2):
        """``F(t2) - F(t1)`` computed from the density when both share a segment."""
        t1 = np.asarray(t1, dtype=float)
        t2 = np.asarray(t2, dtype=float)
        same = self._segment(t1) == self._segment(t2)
        local = (t2 - t1) * self.pdf(np.minimum(t1, t2))
        out = np.where(same, local, self.cdf(t2) - self.cdf(t1))
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": self.params}

    def __eq__(self, other):
        return (
            isinstance(other, PiecewiseLinearCdf)
            and self.kind == other.kind
            and np.array_equal(self._v, other._v)
            and np.array_equal(self._F, other._F)
        )

    def __hash__(self):
        return hash((self.kind, self.knots))

    def __repr__(self):
        return f"PiecewiseLinearCdf(knots={list(self.knots)!r})"


class Uniform(PiecewiseLinearCdf):
    """Uniform own demand on ``[lo, hi]``."""

    kind = "uniform"

    def __init__(self, lo: float, hi: float):
        lo, hi = float(lo), float(hi)
        if not hi > lo:
            raise ValueError(f"uniform demand needs lo < hi, got [{lo}, {hi}]")
        super().__init__([(lo, 0.0), (hi, 1.0)])

    @property
    def params(self) -> dict:
        return {"lo": self.lo, "hi": self.hi}

    def __repr__(self):
        return f"Uniform({self.lo!r}, {self.hi!r})"


def demand_from_dict(d: dict) -> PiecewiseLinearCdf:
    kind = d["kind"]
    p = d["params"]
    if kind == "uniform":
        return Uniform(p["lo"], p["hi"])
    if kind == "piecewise_linear_cdf":
        return PiecewiseLinearCdf(p["knots"])
    raise ValueError(f"unknown demand kind {kind!r}")


# ---------------------------------------------------------------------------
# Cost shapes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Linear:
    """``C(b) = a·b``."""

    a: float
    kind = "linear"
    code = 0

    @property
    def params(self) -> dict:
        return {"a": self.a}

    @property
    def kernel_params(self) -> tuple[float, float]:
        return (self.a, 0.0)

    def value(self, b):
        return self.a * np.asarray(b, dtype=float) if np.ndim(b) else self.a * float(b)

    def deriv(self, b):
        return self.a + 0.0 * np.asarray(b, dtype=float) if np.ndim(b) else self.a

    def second(self, b):
        return 0.0 * np.asarray(b, dtype=float) if np.ndim(b) else 0.0

    def diff(self, b_lo, b_hi):
        """``C(b_hi) - C(b_lo)``."""
        return self.a * (np.asarray(b_hi, dtype=float) - b_lo)

    def problems(self) -> list[str]:
        return [] if self.a > 0 else ["linear cost needs a > 0"]


@dataclass(frozen=True)
class Quadratic:
    """``C(b) = a·b + q·b²``."""

    a: float
    q: float
    kind = "quadratic"
    code = 1

    @property
    def params(self) -> dict:
        return {"a": self.a, "q": self.q}

    @property
    def kernel_params(self) -> tuple[float, float]:
        return (self.a, self.q)

    def value(self, b):
        b = np.asarray(b, dtype=float)
        out = b * (self.a + self.q * b)
        return out if out.ndim else float(out)

    def deriv(self, b):
        b = np.asarray(b, dtype=float)
        out = self.a + 2.0 * self.q * b
        return out if out.ndim else float(out)

    def second(self, b):
        b = np.asarray(b, dtype=float)
        out = np.full_like(b, 2.0 * self.q)
        return out if out.ndim else float(out)

    def diff(self, b_lo, b_hi):
        b_lo = np.asarray(b_lo, dtype=float)
        b_hi = np.asarray(b_hi, dtype=float)
        out = (b_hi - b_lo) * (self.a + self.q * (b_hi + b_lo))
        return out if out.ndim else float(out)

    def problems(self) -> list[str]:
        out = []
        if self.a < 0 or self.q < 0 or self.a + self.q <= 0:
            out.append("quadratic cost needs a >= 0, q >= 0, a + q > 0")
        return out


@dataclass(frozen=True)
class Exponential:
    """``C(b) = a·(exp(k·b) - 1)``."""

    a: float
    k: float
    kind = "exponential"
    code = 2

    @property
    def params(self) -> dict:
        return {"a": self.a, "k": self.k}

    @property
    def kernel_params(self) -> tuple[float, float]:
        return (self.a, self.k)

    def value(self, b):
        out = self.a * np.expm1(self.k * np.asarray(b, dtype=float))
        return out if out.ndim else float(out)

    def deriv(self, b):
        out = self.a * self.k * np.exp(self.k * np.asarray(b, dtype=float))
        return out if out.ndim else float(out)

    def second(self, b):
        out = self.a * self.k**2 * np.exp(self.k * np.asarray(b, dtype=float))
        return out if out.ndim else float(out)

    def diff(self, b_lo, b_hi):
        b_lo = np.asarray(b_lo, dtype=float)
        b_hi = np.asarray(b_hi, dtype=float)
        out = self.a * np.exp(self.k * b_lo) * np.expm1(self.k * (b_hi - b_lo))
        return out if out.ndim else float(out)

    def problems(self) -> list[str]:
        return [] if self.a > 0 and self.k > 0 else ["exponential cost needs a > 0, k > 0"]


_SHAPES = {cls.kind: cls for cls in (Linear, Quadratic, Exponential)}


@dataclass(frozen=True)
class CostModel:
    """MNO serving cost.

    ``additive=False`` applies ``shape`` to the total resource consumption ``b``.
    ``additive=True`` applies it to each area's consumption separately and sums,
    which decouples welfare across APOs.
    """

    shape: Linear | Quadratic | Exponential
    additive: bool = False

    def to_dict(self) -> dict:
        return {"kind": self.shape.kind, "params": dict(self.shape.params), "additive": self.additive}

    @classmethod
    def from_dict(cls, d: dict) -> "CostModel":
        kind = d["kind"]
        if kind not in _SHAPES:
            raise ValueError(f"unknown cost kind {kind!r}")
        shape = _SHAPES[kind](**{k: float(v) for k, v in d["params"].items()})
        return cls(shape, bool(d.get("additive", False)))


# ---------------------------------------------------------------------------
# Scenario
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MnoParams:
    s0: float
    theta0: float
    cost: CostModel


@dataclass(frozen=True)
class ApoParams:
    s: float
    theta: float
    phi: float
    b: float
    w: float
    c: float
    demand: PiecewiseLinearCdf

    @property
    def capacity(self) -> float:
        """Largest offload the AP can carry, ``φ·B``."""
        return self.phi * self.b

    @property
    def upper(self) -> float:
        """Upper end of the feasible offload interval."""
        return min(self.s, self.phi * self.b)

    def to_dict(self) -> dict:
        return {
            "s": self.s,
            "theta": self.theta,
            "phi": self.phi,
            "b": self.b,
            "w": self.w,
            "c": self.c,
            "demand": self.demand.to_dict(),
        }


@dataclass(frozen=True)
class Scenario:
    mno: MnoParams
    apos: tuple[ApoParams, ...]

    def __post_init__(self):
        object.__setattr__(self, "apos", tuple(self.apos))

    @property
    def n(self) -> int:
        return len(self.apos)

    @property
    def additive(self) -> bool:
        return self.mno.cost.additive

    def replace_apo(self, index: int, **changes) -> "Scenario":
        from dataclasses import replace

        apos = list(self.apos)
        apos[index] = replace(apos[index], **changes)
        return Scenario(self.mno, tuple(apos))

    def subset(self, indices: Sequence[int]) -> "Scenario":
        return Scenario(self.mno, tuple(self.apos[i] for i in indices))

    def to_dict(self) -> dict:
        return {
            "mno": {"s0": self.mno.s0, "theta0": self.mno.theta0, "cost": self.mno.cost.to_dict()},
            "apos": [a.to_dict() for a in self.apos],
        }


# ---------------------------------------------------------------------------
# Grouping and outcomes
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GroupingStructure:
    """Ordered partition of APO indices; block order is the bargaining order."""

    blocks: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "blocks", tuple(tuple(int(i) for i in b) for b in self.blocks))

    @classmethod
    def singletons(cls, n: int) -> "GroupingStructure":
        return cls(tuple((i,) for i in range(n)))

    @classmethod
    def from_order(cls, order: Sequence[int]) -> "GroupingStructure":
        return cls(tuple((int(i),) for i in order))

    @classmethod
    def single_block(cls, n: int) -> "GroupingStructure":
        return cls((tuple(range(n)),))

    @classmethod
    def from_external(cls, blocks: Sequence[Sequence[int]]) -> "GroupingStructure":
        return cls(tuple(tuple(int(i) - 1 for i in b) for b in blocks))

    def to_external(self) -> list[list[int]]:
        return [[i + 1 for i in b] for b in self.blocks]

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    def block_of(self) -> dict[int, int]:
        return {i: k for k, b in enumerate(self.blocks) for i in b}

    def problems(self, n: int) -> list[str]:
        out = []
        if any(len(b) == 0 for b in self.blocks):
            out.append("grouping has an empty block")
        flat = [i for b in self.blocks for i in b]
        if len(flat) != len(set(flat)) or set(flat) != set(range(n)):
            out.append(f"grouping is not a partition of {{1..{n}}}")
        return out


@dataclass(frozen=True)
class BargainOutcome:
    """Result of one bargaining protocol.

    ``pi`` holds per-APO payoffs after the intra-block split; ``block_pi`` holds the
    block totals, which are the only quantities the bargaining theory pins down.
    """

    x: np.ndarray
    pi: np.ndarray
    z: np.ndarray
    mno_payoff: float
    welfare: float
    protocol: str
    grouping: GroupingStructure
    block_pi: np.ndarray
    mc_stderr: tuple[float, ...] | None = None

    def to_dict(self) -> dict:
        return {
            "protocol": self.protocol,
            "grouping": self.grouping.to_external(),
            "x": [float(v) for v in self.x],
            "pi": [float(v) for v in self.pi],
            "z": [float(v) for v in self.z],
            "block_pi": [float(v) for v in self.block_pi],
            "mno_payoff": float(self.mno_payoff),
            "welfare": float(self.welfare),
            "mc_stderr": None if self.mc_stderr is None else [float(v) for v in self.mc_stderr],
        }


# ---------------------------------------------------------------------------
# Validation
# ---------------------------------------------------------------------------


def _finite(*vals) -> bool:
    return all(isinstance(v, (int, float)) and math.isfinite(v) for v in vals)


def validate(scenario: Scenario, grouping: GroupingStructure | None = None) -> list[str]:
    """Return every violated invariant as a message; an empty list means valid."""
    out: list[str] = []
    m = scenario.mno
    if not _finite(m.s0, m.theta0):
        out.append("MNO parameters must be finite")
    else:
        if m.s0 < 0:
            out.append("s0 >= 0 required")
        if m.theta0 <= 0:
            out.append("theta0 > 0 required")
    out.extend(m.cost.shape.problems())
    if scenario.n < 1:
        out.append("at least one APO required")
    for i, a in enumerate(scenario.apos, start=1):
        tag = f"apo {i}: "
        if not _finite(a.s, a.theta, a.phi, a.b, a.w, a.c):
            out.append(tag + "parameters must be finite")
            continue
        if a.s < 0:
            out.append(tag + "s_n >= 0 required")
        if a.theta <= 0:
            out.append(tag + "theta_n > 0 required")
        if a.phi <= 0:
            out.append(tag + "phi_n > 0 required")
        if a.b <= 0:
            out.append(tag + "b_n > 0 required")
        if not a.w > a.c:
            out.append(tag + "w_n > c_n required")
        if a.c < 0:
            out.append(tag + "c_n >= 0 required")
        if a.demand.lo < 0:
            out.append(tag + "demand support must satisfy 0 <= lo")
    if grouping is not None:
        out.extend(grouping.problems(scenario.n))
    return out


def require_valid(scenario: Scenario, grouping: GroupingStructure | None = None) -> None:
    problems = validate(scenario, grouping)
    if problems:
        raise InvalidScenarioError(problems)
