"""Throughput of the compiled and pure-Python Petri kernels.

    python3 benchmarks/bench_petri.py [--histories N] [--cases i,iv,vi]

Both kernels consume the same per-history seeds; the script also checks that
their estimates are bit-identical.
"""

import argparse
import time

from pfdavg.model import load_case
from pfdavg.petri import available_backends, build_case_net, monte_carlo


def bench(case, histories, backend):
    params = load_case(case)
    net = build_case_net(params).compile()
    start = time.perf_counter()
    est = monte_carlo(net, params.t0, histories, 42, backend=backend)
    return est, time.perf_counter() - start


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--histories", type=int, default=20_000)
    parser.add_argument("--cases", default="i,iv,vi")
    args = parser.parse_args()

    backends = available_backends()
    print(f"backends: {', '.join(backends)}; {args.histories} histories per run")
    print(f"{'case':<5}{'backend':<10}{'seconds':>9}{'us/history':>12}{'mean':>14}{'speedup':>9}")
    for case in args.cases.split(","):
        results = {b: bench(case, args.histories, b) for b in backends}
        base = results["python"][1]
        for b, (est, secs) in results.items():
            print(f"{case:<5}{b:<10}{secs:>9.3f}{secs / args.histories * 1e6:>12.2f}"
                  f"{est.mean:>14.6e}{base / secs:>8.1f}x")
        if len(results) == 2 and results["compiled"][0] != results["python"][0]:
            raise SystemExit(f"case {case}: kernels disagree")


if __name__ == "__main__":
    main()
