"""Time the compiled kernels against the numpy fallback on the same inputs.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""

import argparse
import json
import sys
import timeit

import numpy as np

from bubbledyn import _kernels
from bubbledyn.model import ModelParams
from bubbledyn.simulate import exact_step


def cases(rng):
    Phi, L = exact_step(ModelParams(1, 5, 1), 0.005)
    G = np.array([[1.0, 0.0]])
    n, m = 2000, 256

    def linear(mod):
        z0 = rng.standard_normal((256, 2))
        nrm = rng.standard_normal((2000, 256, 2))
        return lambda: mod.linear_gauss_steps(Phi, L, z0, nrm)

    def exit_scan(mod):
        nrm = rng.standard_normal((m, n, 2))
        unif = np.empty((0, n))

        def go():
            z = np.tile([1.0, 0.0], (n, 1))
            alive = np.ones(n, dtype=np.uint8)
            tau = np.full(n, 10.0)
            mod.exit_scan(Phi, L, G, z, alive, tau, 0.0, 0.005, nrm, np.zeros(1), unif)
        return go

    def fleming_viot(mod):
        z0 = np.abs(rng.standard_normal((5000, 2))) + [0.01, 0]
        nrm = rng.standard_normal((m, 5000, 2))
        unif = rng.random((m, 5000))
        return lambda: mod.fleming_viot_steps(Phi, L, z0.copy(), nrm, unif)

    def exp_rec(mod):
        d = rng.standard_normal(1_000_000)
        return lambda: mod.exp_recursion(0.997, d, 0.0)

    def crossing(mod):
        x = np.cumsum(rng.standard_normal(1_000_000)) * 0.02
        x -= x.mean()
        return lambda: mod.crossing_scan(x, 5e-4, 0.02)

    return {"linear_gauss_steps": linear, "exit_scan": exit_scan, "fleming_viot_steps": fleming_viot,
            "exp_recursion": exp_rec, "crossing_scan": crossing}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="write results here")
    args = ap.parse_args(argv)
    backends = _kernels.backends()
    if "cython" not in backends:
        print("compiled extension not built; only the fallback is timed", file=sys.stderr)
    rng = np.random.default_rng(0)
    rows = []
    print(f"{'kernel':<20}" + "".join(f"{b:>12}" for b in backends) + f"{'speedup':>10}")
    for name, make in cases(rng).items():
        times = {}
        for bname, mod in backends.items():
            fn = make(mod)
            times[bname] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
        sp = times["python"] / times["cython"] if "cython" in times else float("nan")
        rows.append({"kernel": name, **{f"{k}_s": v for k, v in times.items()}, "speedup": sp})
        print(f"{name:<20}" + "".join(f"{times[b]:>11.4f}s" for b in backends) + f"{sp:>9.1f}x")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
