"""Wall time of the compiled request kernel against its pure-Python twin.

Both backends drive the same systems with the same request stream, so the
hit probabilities must agree exactly; the script exits non-zero if they do
not.  Run with ``python benchmarks/bench_kernel.py [--horizon H]``.
"""
import argparse
import sys
import time

from cachedyn import (
    LCE, LRU, QLRU, RANDOM, ContentClass, TrafficMix, TwoLRU, binary_tree, pareto_with_mean,
    single_cache,
)
from cachedyn.sim import SimConfig, simulate_many
from cachedyn.sim import kernel


def _cases():
    pop = pareto_with_mean(10.0, 2.0)
    single = TrafficMix([ContentClass("all", 1.0, 9.0, pop, 5e4)], 1)
    tree = TrafficMix([ContentClass("all", 7.0, 63.0, pop, 1e5)], 8)
    policies = [LRU(), QLRU(0.1), RANDOM(), TwoLRU()]
    yield "single cache, 4 policies, C=1000", single, [
        (single_cache(1000, p), LCE()) for p in policies]
    yield "4-layer tree, 3 policies, C=100", tree, [
        (binary_tree(4, 100, p), LCE()) for p in policies[:3]]


def _time(process, cfg, systems, mix):
    t0 = time.perf_counter()
    res = simulate_many(cfg, systems, mix, process)
    return time.perf_counter() - t0, res


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--horizon", type=float, default=10.0, help="simulated time per case")
    args = ap.parse_args(argv)
    if kernel.process_compiled is None:
        print("compiled kernel not built; nothing to compare")
        return 1
    ok = True
    print(f"{'case':<36} {'requests':>10} {'python s':>9} {'compiled s':>10} {'speed-up':>8}")
    for name, mix, systems in _cases():
        cfg = SimConfig(horizon=args.horizon, seed=1)
        t_py, r_py = _time(kernel.process_py, cfg, systems, mix)
        t_c, r_c = _time(kernel.process_compiled, cfg, systems, mix)
        same = all(a.global_phit == b.global_phit for a, b in zip(r_py, r_c))
        ok &= same
        n = sum(r.ingress_requests for r in r_c)
        print(f"{name:<36} {n:>10} {t_py:>9.2f} {t_c:>10.2f} {t_py / t_c:>7.1f}x"
              + ("" if same else "  MISMATCH"))
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
