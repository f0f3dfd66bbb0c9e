"""Seeded scenario generation and JSON persistence.

Mobile users land in AP hotspot areas or in the macro-only area through a
categorical draw: each user is in a hotspot with probability
``ratio / (1 + ratio)`` and, if so, in a uniformly chosen AP's area.  Only the
per-area traffic totals enter the model, so no geometry is simulated.

Each field draws from its own sub-stream of the seed, which keeps sweeps paired:
changing one field's settings leaves the others' draws untouched.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .model import (
    ApoParams,
    CostModel,
    MnoParams,
    Quadratic,
    Scenario,
    Uniform,
    demand_from_dict,
)

__all__ = ["GeneratorSpec", "ScenarioFormatError", "generate", "dumps", "loads", "save", "load"]

# sub-stream ids, one per random field
_STREAMS = {
    "mu_area": 1,
    "mu_traffic": 2,
    "ap_bandwidth": 3,
    "theta": 4,
    "theta0": 5,
    "w": 6,
    "c": 7,
    "mu_hotspot": 8,
}


@dataclass(frozen=True)
class GeneratorSpec:
    n_apos: int = 50
    seed: int = 0
    mno_bandwidth: float = 20.0
    ap_bandwidth_choices: tuple[float, ...] = (1.0, 2.0, 5.5, 11.0)
    mu_count: int = 250
    per_mu_traffic_choices: tuple[float, ...] = (0.0, 32.0, 64.0, 128.0, 256.0, 512.0)  # Kbps
    hotspot_density_ratio: float = 4.0
    demand_lo: float = 0.0
    demand_hi: float = 10.0
    theta_range: tuple[float, float] = (0.5, 4.0)
    theta0_range: tuple[float, float] = (0.5, 4.0)
    w_range: tuple[float, float] = (0.5, 1.5)
    c_range: tuple[float, float] = (0.05, 0.45)
    cost_a: float = 0.3
    additive_cost: bool = False

    def problems(self) -> list[str]:
        out = []
        if self.n_apos < 1:
            out.append("n_apos must be positive")
        if self.mu_count < 0:
            out.append("mu_count must be nonnegative")
        if not self.ap_bandwidth_choices or not self.per_mu_traffic_choices:
            out.append("choice sets must be nonempty")
        if self.hotspot_density_ratio < 0 or self.mno_bandwidth <= 0:
            out.append("hotspot ratio must be nonnegative and MNO bandwidth positive")
        if not self.demand_hi > self.demand_lo >= 0:
            out.append("demand range must satisfy 0 <= lo < hi")
        for name in ("theta_range", "theta0_range", "w_range", "c_range"):
            lo, hi = getattr(self, name)
            if not (0 <= lo <= hi):
                out.append(f"{name} must satisfy 0 <= lo <= hi")
        if self.c_range[1] >= self.w_range[0]:
            out.append("c_range must lie below w_range")
        return out

    @property
    def hotspot_probability(self) -> float:
        r = self.hotspot_density_ratio
        return r / (1.0 + r)


def _rng(seed: int, name: str) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), _STREAMS[name]]))


def generate(spec: GeneratorSpec) -> Scenario:
    problems = spec.problems()
    if problems:
        raise ValueError("; ".join(problems))
    n, m = spec.n_apos, spec.mu_count
    in_hotspot = _rng(spec.seed, "mu_hotspot").random(m) < spec.hotspot_probability
    area = _rng(spec.seed, "mu_area").integers(0, n, size=m)
    traffic = _rng(spec.seed, "mu_traffic").choice(np.asarray(spec.per_mu_traffic_choices), size=m)
    mbps = traffic / 1000.0
    s = np.zeros(n)
    for a, t in zip(area[in_hotspot], mbps[in_hotspot]):
        s[a] += t
    s0 = float(np.sum(mbps[~in_hotspot]))
    bw = _rng(spec.seed, "ap_bandwidth").choice(np.asarray(spec.ap_bandwidth_choices), size=n)
    theta = _rng(spec.seed, "theta").uniform(*spec.theta_range, size=n)
    theta0 = float(_rng(spec.seed, "theta0").uniform(*spec.theta0_range))
    w = _rng(spec.seed, "w").uniform(*spec.w_range, size=n)
    c = _rng(spec.seed, "c").uniform(*spec.c_range, size=n)
    demand = Uniform(spec.demand_lo, spec.demand_hi)
    cost = CostModel(Quadratic(spec.cost_a, spec.cost_a / spec.mno_bandwidth), spec.additive_cost)
    apos = tuple(
        ApoParams(
            s=float(s[i]),
            theta=float(theta[i]),
            phi=1.0,
            b=float(bw[i]),
            w=float(w[i]),
            c=float(c[i]),
            demand=demand,
        )
        for i in range(n)
    )
    return Scenario(MnoParams(s0, theta0, cost), apos)


def spec_from_dict(d: dict) -> GeneratorSpec:
    known = {f.name for f in fields(GeneratorSpec)}
    extra = set(d) - known
    if extra:
        raise ValueError(f"unknown generator fields: {sorted(extra)}")
    vals = {k: tuple(v) if isinstance(v, list) else v for k, v in d.items()}
    return GeneratorSpec(**vals)


def spec_to_dict(spec: GeneratorSpec) -> dict:
    return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(spec).items()}


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------


class ScenarioFormatError(ValueError):
    pass


def dumps(scenario: Scenario) -> str:
    # json writes floats with repr, the shortest string that round-trips exactly
    return json.dumps(scenario.to_dict(), indent=2) + "\n"


def _get(d, key, path):
    if not isinstance(d, dict):
        raise ScenarioFormatError(f"{path or 'top level'}: expected an object")
    if key not in d:
        where = f"{path}.{key}" if path else key
        raise ScenarioFormatError(f"missing key {where!r}")
    return d[key]


def _num(d, key, path) -> float:
    v = _get(d, key, path)
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ScenarioFormatError(f"{path}.{key}: expected a number, got {v!r}")
    return float(v)


def from_dict(d: dict) -> Scenario:
    mno = _get(d, "mno", "")
    cost = _get(mno, "cost", "mno")
    try:
        cost_model = CostModel.from_dict(
            {
                "kind": _get(cost, "kind", "mno.cost"),
                "params": _get(cost, "params", "mno.cost"),
                "additive": cost.get("additive", False),
            }
        )
    except (TypeError, ValueError) as e:
        raise ScenarioFormatError(f"mno.cost: {e}") from None
    apos_raw = _get(d, "apos", "")
    if not isinstance(apos_raw, list):
        raise ScenarioFormatError("apos: expected an array")
    apos = []
    for i, a in enumerate(apos_raw):
        path = f"apos[{i}]"
        dem = _get(a, "demand", path)
        try:
            demand = demand_from_dict({"kind": _get(dem, "kind", path + ".demand"), "params": _get(dem, "params", path + ".demand")})
        except (TypeError, ValueError, KeyError) as e:
            raise ScenarioFormatError(f"{path}.demand: {e}") from None
        apos.append(
            ApoParams(
                s=_num(a, "s", path),
                theta=_num(a, "theta", path),
                phi=_num(a, "phi", path),
                b=_num(a, "b", path),
                w=_num(a, "w", path),
                c=_num(a, "c", path),
                demand=demand,
            )
        )
    return Scenario(MnoParams(_num(mno, "s0", "mno"), _num(mno, "theta0", "mno"), cost_model), tuple(apos))


def loads(text: str) -> Scenario:
    try:
        d = json.loads(text)
    except json.JSONDecodeError as e:
        raise ScenarioFormatError(f"line {e.lineno} column {e.colno}: {e.msg}") from None
    return from_dict(d)


def save(scenario: Scenario, path) -> None:
    Path(path).write_text(dumps(scenario), encoding="utf-8", newline="\n")


def load(path) -> Scenario:
    return loads(Path(path).read_text(encoding="utf-8"))
