"""Time the numba and numpy backends of the hot kernels.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]

Prints one row per kernel with the best-of-N wall time of each backend and
the speedup. The numba column is skipped when numba is disabled.
"""
import argparse
import time

from dupirelab import clark as ck
from dupirelab import models as md
from dupirelab import pathspace as ps
from dupirelab import regcalc as rc
from dupirelab._accel import USE_NUMBA
from dupirelab.functionals import FiniteMeasure


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    grid = ps.TimeGrid(1.0, 2**14 + 1)
    W = md.simulate(md.JumpDiffusionSpec(sigma=1.0), grid, 0.0, 0.0, 1).X
    H = md.simulate(md.JumpDiffusionSpec(sigma=1.0), grid, 0.0, 0.0, 2).X
    for p in (16, 256, 2048):
        eps = p * grid.dt
        yield f"forward_integral m=16385 p={p}", lambda b, e=eps: rc.forward_integral_eps(H, W, e, backend=b)
        yield f"bracket m=16385 p={p}", lambda b, e=eps: rc.quadratic_covariation_eps(W, H, e, backend=b)

    cg = ps.TimeGrid(1.0, 257)
    model = md.JumpDiffusionSpec(sigma=1.0, intensity=1.0, law=md.JumpLaw.uniform(-0.5, 0.5))
    spec = ck.ClarkSpec(ck.payoff("tanh"), FiniteMeasure.lebesgue(cg), model, M_inner=256, M_outer=16)
    spec.tables  # build the lookup tables outside the timed region
    yield "clark residual m=257 outer=16 inner=256", lambda b: ck.clark_representation_residual(spec, 1, backend=b)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = ("numba", "numpy") if USE_NUMBA else ("numpy",)
    print(f"{'kernel':44s} " + " ".join(f"{b + ' [s]':>12s}" for b in backends) + ("     speedup" if USE_NUMBA else ""))
    for name, run in cases():
        if USE_NUMBA:
            run("numba")  # compile (or load from cache) before timing
        t = [best_of(lambda: run(b), args.repeat) for b in backends]
        row = f"{name:44s} " + " ".join(f"{v:12.4f}" for v in t)
        if USE_NUMBA:
            row += f"  {t[1] / t[0]:10.1f}x"
        print(row)


if __name__ == "__main__":
    main()
