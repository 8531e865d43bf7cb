"""Compiled vs numpy kernels: rhs evaluation and a full Example 1 integration.

    python benchmarks/bench_rhs.py [--repeat 200] [--L 25 100]
"""

import argparse
import time

import numpy as np

from chembw import compiler, kernels
from chembw.hmm import Hmm
from chembw.integrate import integrate_network

EX1 = "1112112221221111222121122"


def best_of(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--repeat", type=int, default=200)
    p.add_argument("--L", type=int, nargs="+", default=[25, 100])
    p.add_argument("--t-max", type=float, default=300.0)
    args = p.parse_args(argv)

    backends = ["numpy"] + (["cython"] if kernels._ckernels is not None else [])
    if len(backends) == 1:
        print("compiled kernels not built; timing numpy only")
    hmm = Hmm.from_arrays([0.6, 0.4], [[0.6, 0.4], [0.3, 0.7]], [[0.5, 0.5], [0.5, 0.5]])
    rng = np.random.default_rng(0)
    print(f"{'L':>5} {'species':>8} {'reactions':>10} {'backend':>8} {'rhs (us)':>10} {'integrate (s)':>14} {'steps':>7}")
    for L in args.L:
        obs = np.array([int(c) - 1 for c in (EX1 * (L // len(EX1) + 1))[:L]])
        net, layout = compiler.compile_for(hmm, L, 1)
        k = compiler.default_rates(net).vector(net)
        x0 = compiler.initial_concentrations(layout, hmm, obs)
        xr = rng.uniform(0, 2, net.n_species)
        for name in backends:
            c = net.compiled.with_backend(name)
            t_rhs = best_of(lambda: c.rhs(xr, k), args.repeat)
            t0 = time.perf_counter()
            res = integrate_network(c, k, x0, args.t_max, rtol=1e-10, atol=1e-12, checkpoint_dt=None)
            t_int = time.perf_counter() - t0
            print(f"{L:>5} {net.n_species:>8} {len(net.reactions):>10} {name:>8} {t_rhs * 1e6:>10.1f} "
                  f"{t_int:>14.3f} {res.stats['steps']:>7}")


if __name__ == "__main__":
    main()
