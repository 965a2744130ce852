"""Command-line front end: scenario sweeps written as CSV.

Subcommands
-----------
solve      analytic engine only
simulate   simulator only
compare    both engines, checked point by point against a tolerance
sweep      the engines named in the scenario file
list       names of the built-in scenarios

Exit codes: 0 success, 2 invalid scenario or arguments, 3 numerical or
simulation failure, 4 comparison failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor

from .errors import CacheModelError, ScenarioError
from .network import solve_network
from .scenario import Scenario, builtin_names, load_scenario

__all__ = ["COLUMNS", "SCHEMA_VERSION", "main", "run_rows", "compare_rows"]

SCHEMA_VERSION = 1
COLUMNS = [
    "scenario_id", "scale", "capacity", "engine", "policy", "replication", "filter",
    "global_phit", "class_phit", "ci_halfwidth", "abs_diff", "wall_seconds",
]
EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_COMPARISON = 0, 2, 3, 4


class PointError(Exception):
    """A module error raised while evaluating one sweep point."""


def _fmt(x):
    if x is None or not math.isfinite(x):
        return "nan"
    # adding 0.0 turns a rounded negative zero into a plain zero
    return f"{round(x, 6) + 0.0:.6f}"


def _class_field(labels, values):
    return ";".join(f"{lab}={_fmt(v)}" for lab, v in zip(labels, values))


def _row(sid, scn, cap, engine, variant, phit, by_class, labels, ci=None, seconds=None):
    return {
        "scenario_id": sid, "scale": f"{scn.scale:g}", "capacity": cap, "engine": engine,
        "policy": variant.policy_label, "replication": variant.replication_label,
        "filter": variant.filter_label, "global_phit": phit,
        "class_phit": _class_field(labels, by_class), "ci_halfwidth": ci,
        "abs_diff": None, "wall_seconds": seconds,
    }


def _evaluate(scn: Scenario, name, cap, engines, seed):
    """Rows of one (composition, capacity) point, variants in scenario order."""
    from .sim.engine import simulate_many

    sid = scn.id if not name else f"{scn.id}/{name}"
    mix = scn.mixes[name]
    labels = [c.label for c in mix.classes]
    analytic, simulated = [], []
    try:
        if "analytic" in engines:
            for v in scn.variants:
                t0 = time.perf_counter()
                sol = solve_network(scn.build_topology(cap, v), mix, v.replication,
                                    scn.routing, scn.n_nodes)
                analytic.append(_row(sid, scn, cap, "analytic", v, sol.global_phit,
                                     sol.global_phit_by_class, labels,
                                     seconds=time.perf_counter() - t0))
        if "simulate" in engines:
            t0 = time.perf_counter()
            systems = [(scn.build_topology(cap, v), v.replication) for v in scn.variants]
            results = simulate_many(scn.sim_config(seed), systems, mix)
            # the variants share one request stream, hence one wall time
            seconds = time.perf_counter() - t0
            for v, res in zip(scn.variants, results):
                simulated.append(_row(sid, scn, cap, "simulate", v, res.global_phit,
                                      res.phit_by_class, labels, res.ci, seconds))
    except ScenarioError:
        raise
    except CacheModelError as err:
        raise PointError(f"scenario {sid}, capacity {cap}: {err}") from err
    if analytic and simulated:
        rows = []
        for a, s in zip(analytic, simulated):
            a["abs_diff"] = s["abs_diff"] = abs(a["global_phit"] - s["global_phit"])
            rows += [a, s]
        return rows
    return analytic + simulated


def run_rows(scn: Scenario, engines, seed=None, jobs=1):
    """Evaluate every sweep point; rows come back in sweep order."""
    points = [(name, cap) for name in scn.mixes for cap in scn.capacities]
    if jobs <= 1 or len(points) <= 1:
        return [r for name, cap in points for r in _evaluate(scn, name, cap, engines, seed)]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_evaluate, scn, name, cap, engines, seed) for name, cap in points]
        return [r for f in futures for r in f.result()]


def write_csv(rows, stream, timing=False):
    stream.write(f"# schema={SCHEMA_VERSION}\n")
    w = csv.writer(stream, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in rows:
        out = dict(r)
        for key in ("global_phit", "ci_halfwidth", "abs_diff"):
            out[key] = "" if r[key] is None else _fmt(r[key])
        out["wall_seconds"] = f"{r['wall_seconds']:.3f}" if timing and r["wall_seconds"] is not None else ""
        w.writerow([out[c] for c in COLUMNS])


def compare_rows(rows, tolerance):
    """Per-point agreement checks of paired analytic/simulated rows.

    Returns ``(checks, ok)`` where each check is ``(analytic_row,
    simulated_row, limit, passed)`` and the limit is ``tolerance`` plus
    the CI half-width.
    """
    checks = []
    for a, s in zip(rows[0::2], rows[1::2]):
        limit = tolerance + (s["ci_halfwidth"] if math.isfinite(s["ci_halfwidth"]) else math.inf)
        diff = abs(a["global_phit"] - s["global_phit"])
        checks.append((a, s, limit, bool(diff <= limit)))
    return checks, all(c[3] for c in checks)


def _summary(checks, stream):
    stream.write(f"{'scenario':<32} {'capacity':>9} {'policy':<14} {'analytic':>9} "
                 f"{'simulated':>9} {'ci':>8} {'diff':>8} {'limit':>8}  result\n")
    for a, s, limit, passed in checks:
        stream.write(
            f"{a['scenario_id']:<32} {a['capacity']:>9} {a['policy'] + ' ' + a['filter']:<14} "
            f"{a['global_phit']:>9.4f} {s['global_phit']:>9.4f} {s['ci_halfwidth']:>8.4f} "
            f"{abs(a['global_phit'] - s['global_phit']):>8.4f} {limit:>8.4f}  "
            f"{'pass' if passed else 'FAIL'}\n"
        )
    n_ok = sum(c[3] for c in checks)
    stream.write(f"{n_ok}/{len(checks)} points within tolerance\n")


def _parser():
    p = argparse.ArgumentParser(prog="cachedyn", description=__doc__.split("\n\n")[0])
    sub = p.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--scenario", required=True, help="scenario file or built-in name")
    common.add_argument("--seed", type=int, default=None, help="simulation seed")
    common.add_argument("--scale", type=float, default=None,
                        help="override the scale factor on catalogues and capacities")
    common.add_argument("--out", default="-", help="CSV destination (default stdout)")
    common.add_argument("--tolerance", type=float, default=0.02,
                        help="absolute p_hit tolerance added to the CI half-width (compare)")
    common.add_argument("--jobs", type=int, default=1, help="worker processes for sweep points")
    common.add_argument("--timing", action="store_true", help="fill the wall_seconds column")
    common.add_argument("-v", "--verbose", action="store_true", help="log simulation batches")
    for name, text in [
        ("solve", "analytic engine only"),
        ("simulate", "simulator only"),
        ("compare", "both engines, checked against the tolerance"),
        ("sweep", "engines named in the scenario"),
    ]:
        sub.add_parser(name, parents=[common], help=text)
    sub.add_parser("list", help="names of the built-in scenarios")
    return p


_ENGINES = {"analytic": ("analytic",), "simulate": ("simulate",), "both": ("analytic", "simulate")}


def main(argv=None):
    args = _parser().parse_args(argv)
    if args.command == "list":
        print("\n".join(builtin_names()))
        return EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s", stream=sys.stderr)
    if args.jobs < 1 or not args.tolerance >= 0:
        print("error: --jobs must be >= 1 and --tolerance >= 0", file=sys.stderr)
        return EXIT_VALIDATION
    try:
        scn = load_scenario(args.scenario, args.scale)
        engine = {"solve": "analytic", "simulate": "simulate", "compare": "both"}.get(
            args.command, scn.engine)
        if engine != "analytic" and scn.simulation is None:
            raise ScenarioError(f"{args.command} needs a simulation section", "simulation")
        rows = run_rows(scn, _ENGINES[engine], args.seed, args.jobs)
    except ScenarioError as err:
        print(f"error: invalid scenario {args.scenario}: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except (PointError, CacheModelError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_NUMERICAL
    buf = io.StringIO()
    write_csv(rows, buf, args.timing)
    if args.out == "-":
        sys.stdout.write(buf.getvalue())
    else:
        with open(args.out, "w", newline="") as fh:
            fh.write(buf.getvalue())
    if args.command == "compare":
        checks, ok = compare_rows(rows, args.tolerance)
        _summary(checks, sys.stderr)
        return EXIT_OK if ok else EXIT_COMPARISON
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
