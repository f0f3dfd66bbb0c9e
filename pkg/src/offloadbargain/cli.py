"""Command-line front end.

    offload gen --seed 42 --apos 50 --out s.json
    offload bargain s.json --protocol sequential --groups "[1],[2,3],[4]" --out o.json
    offload stackelberg s.json --out ne.json
    offload compare s.json --sweep theta --apo 3 --range 0.5:4:0.1 --out cmp.json

Every command writes JSON plus a CSV next to it (``--csv`` overrides the path).
Indices are 1-based.  ``OFFLOAD_LOG=debug`` turns on logging to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import re
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .bargaining import NbsConfig, concurrent_nbs, one_to_one_nbs, sequential_nbs
from .model import GroupingStructure, InvalidScenarioError, validate
from .optimizer import ConvergenceError
from .oracle import backward_induction_nbs, grid_nbs
from .scenario import GeneratorSpec, ScenarioFormatError, generate, load, save
from .stackelberg import compare_nbs_ne, mno_optimal_prices

log = logging.getLogger("offloadbargain")

_GROUP = re.compile(r"\[\s*(\d+(?:\s*,\s*\d+)*)\s*\]")


class UsageError(Exception):
    pass


def parse_groups(text: str) -> list[list[int]]:
    """``"[1],[2,3],[4]"`` -> ``[[1], [2, 3], [4]]``."""
    groups, pos = [], 0
    text = text.strip()
    while pos < len(text):
        m = _GROUP.match(text, pos)
        if not m:
            raise UsageError(f"cannot parse groups near {text[pos:]!r}")
        groups.append([int(t) for t in m.group(1).split(",")])
        pos = m.end()
        rest = text[pos:].lstrip()
        if rest.startswith(","):
            pos = len(text) - len(rest) + 1
            while pos < len(text) and text[pos].isspace():
                pos += 1
        elif rest:
            raise UsageError(f"cannot parse groups near {rest!r}")
    if not groups:
        raise UsageError("empty --groups")
    return groups


def parse_order(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",")]
    except ValueError:
        raise UsageError(f"--order must be a comma list of integers, got {text!r}") from None


def build_grouping(n: int, order: list[int] | None, groups: list[list[int]] | None) -> GroupingStructure:
    if order is not None and sorted(order) != list(range(1, n + 1)):
        raise UsageError(f"--order must be a permutation of 1..{n}")
    if groups is None:
        return GroupingStructure.from_external([[i] for i in (order or range(1, n + 1))])
    flat = [i for g in groups for i in g]
    if sorted(flat) != list(range(1, n + 1)):
        raise UsageError(f"--groups must partition 1..{n}")
    if order is not None:
        pos = {v: k for k, v in enumerate(order)}
        for g in groups:
            ps = sorted(pos[i] for i in g)
            if ps[-1] - ps[0] != len(g) - 1:
                raise UsageError(f"group {g} is not contiguous in --order")
        groups = sorted(([i for i in order if i in set(g)] for g in groups), key=lambda g: pos[g[0]])
    return GroupingStructure.from_external(groups)


def parse_range(text: str) -> list[float]:
    try:
        a, b, step = (float(t) for t in text.split(":"))
    except ValueError:
        raise UsageError(f"--range must be start:stop:step, got {text!r}") from None
    if step <= 0 or b < a:
        raise UsageError("--range needs start <= stop and step > 0")
    count = int(np.floor((b - a) / step + 1e-9)) + 1
    return [round(a + i * step, 12) for i in range(count)]


# ---------------------------------------------------------------------------
# Output helpers
# ---------------------------------------------------------------------------


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8", newline="\n")


def _write_csv(path: Path, header: list[str], rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="\n")


def _csv_path(args) -> Path:
    return Path(args.csv) if args.csv else Path(args.out).with_suffix(".csv")


def _load(path):
    sc = load(path)
    problems = validate(sc)
    if problems:
        raise InvalidScenarioError(problems)
    return sc


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    spec = GeneratorSpec(
        n_apos=args.apos, seed=args.seed, mu_count=args.mu_count, additive_cost=args.additive
    )
    sc = generate(spec)
    save(sc, args.out)
    log.info("wrote %s (%d APOs)", args.out, sc.n)
    return 0


def _verify(sc, out, protocol, cfg) -> dict:
    if protocol == "one2one":
        g = grid_nbs(sc)
        diff = float(abs(g.pi - out.pi[0]))
        tol = g.pi_cell + 1e-12
        return {"oracle": "grid_nbs", "max_abs_diff": diff, "tolerance": tol, "ok": diff <= tol}
    if protocol == "sequential" and sc.n <= 3 and all(len(b) == 1 for b in out.grouping.blocks):
        step = 1e-5 * max(out.welfare, 1e-9)
        bi = backward_induction_nbs(sc, step, [b[0] for b in out.grouping.blocks], x_star=out.x)
        diff = float(np.max(np.abs(bi.pi - out.pi)))
        tol = sc.n * step
        return {"oracle": "backward_induction", "max_abs_diff": diff, "tolerance": tol, "ok": diff <= tol}
    return {"oracle": None, "ok": True, "note": "no oracle for this configuration"}


def cmd_bargain(args) -> int:
    sc = _load(args.scenario)
    order = parse_order(args.order) if args.order else None
    groups = parse_groups(args.groups) if args.groups else None
    grouping = build_grouping(sc.n, order, groups)
    cfg = NbsConfig(
        exact_cutoff=args.exact_cutoff, mc_samples=args.mc_samples, seed=args.seed, workers=args.workers
    )
    if args.protocol == "one2one":
        if sc.n != 1:
            raise UsageError(f"one2one needs a single-APO scenario, got {sc.n} APOs")
        out = one_to_one_nbs(sc, cfg)
    elif args.protocol == "sequential":
        out = sequential_nbs(sc, grouping, cfg)
    else:
        out = concurrent_nbs(sc, grouping, cfg)
    doc = out.to_dict()
    status = 0
    if args.verify:
        doc["verification"] = _verify(sc, out, args.protocol, cfg)
        if not doc["verification"]["ok"]:
            print("verification failed: " + json.dumps(doc["verification"]), file=sys.stderr)
            status = 1
    _write_json(Path(args.out), doc)
    block_of = out.grouping.block_of()
    rows = [
        (i + 1, block_of[i] + 1, float(out.x[i]), float(out.pi[i]), float(out.z[i])) for i in range(sc.n)
    ]
    _write_csv(_csv_path(args), ["index", "block", "x", "pi", "z"], rows)
    return status


def cmd_stackelberg(args) -> int:
    sc = _load(args.scenario)
    ne = mno_optimal_prices(sc)
    _write_json(Path(args.out), ne.to_dict())
    rows = [
        (i + 1, a.theta, a.c, float(ne.p[i]), float(ne.x[i]), float(ne.apo_payoffs[i]))
        for i, a in enumerate(sc.apos)
    ]
    _write_csv(_csv_path(args), ["index", "theta", "c", "p", "x", "pi"], rows)
    return 0


def _compare_one(sc):
    return compare_nbs_ne(sc)


def cmd_compare(args) -> int:
    sc = _load(args.scenario)
    if not args.sweep:
        rep = compare_nbs_ne(sc)
        _write_json(Path(args.out), rep.to_dict())
        rows = [
            (i + 1, a.theta, a.c, float(rep.x_nbs[i]), float(rep.x_ne[i])) for i, a in enumerate(sc.apos)
        ]
        _write_csv(_csv_path(args), ["index", "theta", "c", "x_nbs", "x_ne"], rows)
        return 0
    if args.apo is None or args.range is None:
        raise UsageError("--sweep needs --apo and --range")
    if not 1 <= args.apo <= sc.n:
        raise UsageError(f"--apo must be in 1..{sc.n}")
    k = args.apo - 1
    values = parse_range(args.range)
    field = "theta" if args.sweep == "theta" else "c"
    variants = [sc.replace_apo(k, **{field: v}) for v in values]
    failures = []
    for v, var in zip(values, variants):
        problems = validate(var)
        if problems:
            failures.append(f"{field}={v!r}: {'; '.join(problems)}")
    if failures:
        raise UsageError("sweep leaves the valid parameter range: " + ", ".join(failures))
    if args.workers > 1:
        with ProcessPoolExecutor(args.workers) as ex:
            futures = [ex.submit(_compare_one, var) for var in variants]
            results = []
            for fut in futures:
                try:
                    results.append(fut.result())
                except ConvergenceError as e:
                    results.append(e)
    else:
        results = []
        for var in variants:
            try:
                results.append(compare_nbs_ne(var))
            except ConvergenceError as e:
                results.append(e)
    points, rows, status = [], [], 0
    for v, var, res in zip(values, variants, results):
        if isinstance(res, Exception):
            print(f"sweep {field}={v!r} failed: {res}", file=sys.stderr)
            status = 1
            continue
        d = res.to_dict()
        d[field] = v
        points.append(d)
        a = var.apos[k]
        rows.append((args.apo, a.theta, a.c, float(res.x_nbs[k]), float(res.x_ne[k])))
    _write_json(Path(args.out), {"sweep": field, "apo": args.apo, "points": points})
    _write_csv(_csv_path(args), ["index", "theta", "c", "x_nbs", "x_ne"], rows)
    return status


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _positive(kind):
    def conv(text):
        try:
            v = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
        if v <= 0:
            raise argparse.ArgumentTypeError(f"must be positive, got {text}")
        return v

    return conv


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="offload", description=__doc__.split("\n")[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a random scenario")
    g.add_argument("--seed", type=int, required=True)
    g.add_argument("--apos", type=_positive(int), required=True)
    g.add_argument("--out", required=True)
    g.add_argument("--mu-count", type=int, default=250)
    g.add_argument("--additive", action="store_true", help="per-area additive serving cost")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("bargain", help="divide welfare by Nash bargaining")
    b.add_argument("scenario")
    b.add_argument("--protocol", choices=["one2one", "sequential", "concurrent"], default="sequential")
    b.add_argument("--order", help="bargaining order, e.g. 3,1,2 (default 1..N)")
    b.add_argument("--groups", help='blocks, e.g. "[1],[2,3],[4]"')
    b.add_argument("--mc-samples", type=_positive(int), default=100_000)
    b.add_argument("--exact-cutoff", type=int, default=20)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--workers", type=_positive(int), default=1)
    b.add_argument("--out", required=True)
    b.add_argument("--csv")
    b.add_argument("--verify", action="store_true", help="cross-check against a brute-force oracle")
    b.set_defaults(func=cmd_bargain)

    s = sub.add_parser("stackelberg", help="pricing equilibrium")
    s.add_argument("scenario")
    s.add_argument("--out", required=True)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_stackelberg)

    c = sub.add_parser("compare", help="social optimum against pricing equilibrium")
    c.add_argument("scenario")
    c.add_argument("--sweep", choices=["theta", "c"])
    c.add_argument("--apo", type=int)
    c.add_argument("--range")
    c.add_argument("--workers", type=_positive(int), default=1)
    c.add_argument("--out", required=True)
    c.add_argument("--csv")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    level = os.environ.get("OFFLOAD_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as e:
        parser.error(str(e))
    except (ScenarioFormatError, InvalidScenarioError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except ConvergenceError as e:
        print(f"did not converge: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
