"""Time stacked-column batch inference against one-at-a-time evaluation.

    python3 scripts/batch_benchmark.py --units 6 --samples 256 --widths 1 4 16 64
"""
import argparse
import csv
import sys
import time

import numpy as np

from qbind.circuit import build_model, init_params
from qbind.infer import predict_batch, predict_full


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--units", type=int, default=6)
    ap.add_argument("--samples", type=int, default=256)
    ap.add_argument("--widths", type=int, nargs="+", default=[1, 4, 16, 64])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    c = build_model(args.units)
    theta = init_params(c.n_params, 0)
    xs = np.abs(rng.normal(size=(args.samples, 512)))
    xs /= np.linalg.norm(xs, axis=1, keepdims=True)
    inputs = list(xs)

    t0 = time.perf_counter()
    seq = np.array([predict_full(c, theta, x) for x in inputs])
    t_seq = time.perf_counter() - t0

    rows = [["sequential", args.samples, t_seq, 1.0, 0.0]]
    for width in args.widths:
        best = float("inf")
        for _ in range(args.repeats):
            t0 = time.perf_counter()
            out = predict_batch(c, theta, inputs, width=width)
            best = min(best, time.perf_counter() - t0)
        rows.append([width, args.samples, best, t_seq / best, float(np.max(np.abs(out - seq)))])

    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["width", "samples", "seconds", "speedup", "max_abs_diff"])
    w.writerows(rows)
    if fh is not sys.stdout:
        fh.close()


if __name__ == "__main__":
    main()
