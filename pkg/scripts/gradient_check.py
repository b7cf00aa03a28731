"""Compare adjoint, parameter-shift and finite-difference gradients over many seeded instances.

    python3 scripts/gradient_check.py --instances 100 --max-units 6 --out grads.csv
"""
import argparse
import csv
import math
import sys
import time

import numpy as np

from qbind.circuit import build_model
from qbind.grad import backward_adjoint, backward_finite_diff, backward_parameter_shift


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--instances", type=int, default=100)
    ap.add_argument("--max-units", type=int, default=6)
    ap.add_argument("--h", type=float, default=1e-4)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    rows = []
    for i in range(args.instances):
        units = int(rng.integers(1, args.max_units + 1))
        c = build_model(units)
        theta = rng.uniform(-math.pi, math.pi, c.n_params)
        x = np.abs(rng.normal(size=512))
        x /= np.linalg.norm(x)
        t0 = time.perf_counter()
        adj = backward_adjoint(c, theta, x)
        t_adj = time.perf_counter() - t0
        t0 = time.perf_counter()
        ps = backward_parameter_shift(c, theta, x)
        t_ps = time.perf_counter() - t0
        fd = backward_finite_diff(c, theta, x, args.h)
        rows.append([i, units, float(np.max(np.abs(adj.grad - ps.grad))), float(np.max(np.abs(adj.grad - fd.grad))),
                     t_adj, t_ps])

    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["instance", "n_units", "max_err_shift", "max_err_fd", "adjoint_s", "shift_s"])
    w.writerows(rows)
    if fh is not sys.stdout:
        fh.close()
    print(f"worst |adj-shift|={max(r[2] for r in rows):.2e}  worst |adj-fd|={max(r[3] for r in rows):.2e}",
          file=sys.stderr)


if __name__ == "__main__":
    main()
