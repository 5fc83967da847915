"""Residuals of the exact warped solution across dimensions and times.

Prints one row per (n, t): worst |Ric - df (x) df| entry, |Laplacian f|,
|Ric_tt - f'^2| and f'^2 itself, which blows up as t -> 0.
"""

import argparse

import numpy as np

from befield.chart import sample_points
from befield.cosmology import EdSSolution
from befield.field_eq import reduced_residual
from befield.geometry import Frame


def sweep(dims, times, per_time, seed):
    rng = np.random.default_rng(seed)
    rows = []
    for n in dims:
        sol = EdSSolution(n)
        spec = sol.spec(t_range=(min(times) / 2, max(times) * 2))
        g, f = spec.assemble()
        for t in times:
            p = np.hstack([sample_points(spec.fiber.chart, per_time, rng), np.full((per_time, 1), t)])
            E, lap = reduced_residual(g, f, p)
            fr = Frame.at(g, p, order=2)
            fp = fr.field(f).d1[:, -1]
            gap = np.abs(fr.ricci.value[:, -1, -1] - fp**2).max()
            rows.append((n, t, np.abs(E).max(), np.abs(lap).max(), gap, fp[0] ** 2))
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", default="2,3,4,5,6,7,8,9")
    ap.add_argument("--times", default="0.01,0.1,0.5,1,2,10,100")
    ap.add_argument("--per-time", type=int, default=25)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    dims = [int(x) for x in args.dims.split(",")]
    times = [float(x) for x in args.times.split(",")]
    print(f"{'n':>2} {'t':>8} {'|Ric-df df|':>12} {'|lap f|':>10} {'|Ric_tt-fp2|':>12} {'fp^2':>12}")
    for n, t, e, lap, gap, fp2 in sweep(dims, times, args.per_time, args.seed):
        print(f"{n:>2} {t:>8.3g} {e:>12.2e} {lap:>10.2e} {gap:>12.2e} {fp2:>12.5g}")


if __name__ == "__main__":
    main()
