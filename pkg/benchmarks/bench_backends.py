"""Compare the jit-compiled and pure-numpy round engines on the hot paths.

Usage: python benchmarks/bench_backends.py [--rounds N] [--repeat K]

Both backends walk identical branch tables from identical uniforms, so the
output records are asserted bit-identical before timings are reported.
"""

import argparse
import time

import numpy as np

from sqkdsim.attacks import identity_attack, pns_attack, tagging_attack
from sqkdsim.kernels import (
    NUMBA_AVAILABLE,
    round_uniforms,
    simulate_b92,
    simulate_bb84,
    simulate_ca,
    B92Tables,
)
from sqkdsim.protocol import ProtocolConfig, build_bb84_tables, build_ca_tables


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def bench(name, simulate, tables, u, repeat):
    print(f"{name} ({u.shape[0]} rounds, best of {repeat}):")
    reference = None
    for backend in ("numpy",) + (("numba",) if NUMBA_AVAILABLE else ()):
        simulate(tables, u, backend=backend)  # warm up / compile
        dt = best_of(lambda: simulate(tables, u, backend=backend), repeat)
        rec = simulate(tables, u, backend=backend)
        if reference is None:
            reference = rec
        identical = all(np.array_equal(reference[k], rec[k]) for k in reference)
        print(f"  {backend:<6} {dt * 1e3:9.2f} ms   "
              f"{u.shape[0] / dt / 1e6:7.2f} M rounds/s   "
              f"identical={identical}")
    print()


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rounds", type=int, default=500_000)
    parser.add_argument("--repeat", type=int, default=3)
    args = parser.parse_args()

    u = round_uniforms(1, args.rounds)

    cfg = ProtocolConfig(rounds=args.rounds, rng_seed=1, n_max=2,
                         residual_policy="measure-resend")
    tables, _ = build_ca_tables(cfg, tagging_attack())
    bench("two-way rounds, tag attack with count decoding", simulate_ca,
          tables, u, args.repeat)

    cfg = ProtocolConfig(rounds=args.rounds, rng_seed=2, n_max=3,
                         transmission=0.4)
    tables, _ = build_ca_tables(cfg, identity_attack())
    bench("two-way rounds, lossy passive channel", simulate_ca,
          tables, u, args.repeat)

    cfg = ProtocolConfig(variant="bb84", rounds=args.rounds, rng_seed=3,
                         source_stats=(0.89, 0.1, 0.01), transmission=0.01)
    tables, _ = build_bb84_tables(cfg, pns_attack(), u)
    bench("one-way pulsed rounds, splitting attack", simulate_bb84,
          tables, u, args.repeat)

    tables = B92Tables(conclusive_p=0.75, transmission=0.1, attack=1)
    bench("two-state rounds, conclusive intercept", simulate_b92,
          tables, u, args.repeat)


if __name__ == "__main__":
    main()
