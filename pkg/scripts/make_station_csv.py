#!/usr/bin/env python3
"""Write a synthetic station file for the das-csv pathway.

Produces a 3-column CSV (x1,x2,value): stations uniform over a square, a
smooth 2-D surface, Gaussian measurement noise.  Useful as a stand-in for
real monitoring-network data, which is not bundled.

    python scripts/make_station_csv.py stations.csv [--n 379] [--seed 2024]
"""

import argparse

import numpy as np


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("path")
    parser.add_argument("--n", type=int, default=379)
    parser.add_argument("--side", type=float, default=14.0)
    parser.add_argument("--noise-std", type=float, default=0.1)
    parser.add_argument("--seed", type=int, default=2024)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    xy = rng.uniform(0.0, args.side, size=(args.n, 2))
    surface = (np.sin(0.6 * xy[:, 0]) * np.cos(0.5 * xy[:, 1])
               + 0.5 * np.exp(-((xy[:, 0] - 0.3 * args.side) ** 2
                                + (xy[:, 1] - 0.7 * args.side) ** 2) / 8))
    values = surface + rng.normal(0.0, args.noise_std, size=args.n)
    with open(args.path, "w", encoding="utf-8") as fh:
        fh.write("x1,x2,value\n")
        for (a, b), v in zip(xy, values):
            fh.write(f"{float(a)!r},{float(b)!r},{float(v)!r}\n")
    print(f"wrote {args.n} stations to {args.path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
