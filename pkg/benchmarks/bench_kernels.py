"""Compare the numba and numpy kernels on representative workloads.

    python3 benchmarks/bench_kernels.py [--repeat N]

Each workload runs once per backend to warm up (numba compiles on first
call), then ``repeat`` timed runs; the best time is reported together with
the largest difference between the two backends' results.
"""
import argparse
import time

import numpy as np

from nmdtsa import _kernels
from nmdtsa.cases import ninebus_initial_angles, ninebus_system, smib_system
from nmdtsa.model import find_equilibrium
from nmdtsa.tsa import prepare


def workloads():
    smib = prepare(smib_system(), np.array([0.0, -0.26]))
    osc = smib.oscillators[0].field
    rng = np.random.default_rng(0)
    X = rng.normal(size=(20000, 2))
    rays = np.column_stack((np.cos(np.linspace(0, 2 * np.pi, 180, endpoint=False)),
                            np.sin(np.linspace(0, 2 * np.pi, 180, endpoint=False)))) * 1.5
    nine = ninebus_system(tripped=[(5, 7)])
    eq = find_equilibrium(nine, ninebus_initial_angles())
    x0 = np.concatenate((eq.delta + 0.3, np.zeros(3)))
    net = nine.network
    yield "poly_eval 20k points", lambda b: _kernels.poly_eval(osc.exps, osc.coef, X, backend=b)
    yield "rk4_path 10k steps", lambda b: _kernels.rk4_path(osc.exps, osc.coef, X[0] * 0.5,
                                                            5e-4, 10000, backend=b)[0]
    yield "rk4_gap 180 rays x 10k", lambda b: _kernels.rk4_gap(
        osc.exps, osc.coef, rays, 5e-4, 10000, 1, np.radians(750), backend=b)
    yield "swing_rk4 9-bus 5k steps", lambda b: _kernels.swing_rk4(
        net.a, net.b, net.g, nine.E, nine.Pm, nine.M, nine.D, nine.omega_s, x0, 1e-3, 5000,
        backend=b)[0]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if _kernels.HAVE_NUMBA else [])
    print(f"{'workload':28s} " + " ".join(f"{b:>10s}" for b in backends) + "   speedup  max|diff|")
    for name, fn in workloads():
        times, outs = {}, {}
        for b in backends:
            outs[b] = np.asarray(fn(b), dtype=float)
            best = np.inf
            for _ in range(args.repeat):
                t = time.perf_counter()
                fn(b)
                best = min(best, time.perf_counter() - t)
            times[b] = best
        row = f"{name:28s} " + " ".join(f"{times[b]:9.4f}s" for b in backends)
        if len(backends) == 2:
            diff = float(np.max(np.abs(outs["numpy"] - outs["numba"])))
            row += f"  {times['numpy'] / times['numba']:7.1f}x  {diff:.2e}"
        print(row)


if __name__ == "__main__":
    main()
