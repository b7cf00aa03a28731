"""Train models of increasing depth on teacher-labelled synthetic data and score
each on a held-out split under the full, shot-sampled and noisy readouts.

    python3 scripts/depth_sweep.py --units 1 2 3 4 --steps 300 --out depth_sweep.csv

Columns: n_units, mode, lr, seed, train_rmsd, test_rmsd, test_pcc.
"""
import argparse
import csv
import sys

from qbind.circuit import build_model
from qbind.encode import EncodedSet
from qbind.infer import ShotConfig, exact_y0, metrics, predict_batch, predict_noisy_many, shots_from_y0
from qbind.qcore import NoiseSpec
from qbind.synthetic import teacher_dataset
from qbind.train import labels_of, run_protocol


def split(enc, n_test):
    pick = lambda sl: EncodedSet(enc.ids[sl], enc.vectors[sl], enc.pkd[sl])  # noqa: E731
    return pick(slice(n_test, None)), pick(slice(0, n_test))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--units", type=int, nargs="+", default=[1, 2, 3, 4])
    ap.add_argument("--n", type=int, default=96, help="total synthetic complexes")
    ap.add_argument("--test", type=int, default=32)
    ap.add_argument("--teacher-units", type=int, default=3)
    ap.add_argument("--steps", type=int, default=300)
    ap.add_argument("--lrs", type=float, nargs="+", default=[1e-4, 3e-4, 1e-3])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1])
    ap.add_argument("--shots", type=int, default=100_000)
    ap.add_argument("--gamma", type=float, default=0.001)
    ap.add_argument("--p-depol", type=float, default=0.0005)
    ap.add_argument("--out", default="-")
    args = ap.parse_args(argv)

    enc, _ = teacher_dataset(args.n, seed=0, teacher_units=args.teacher_units)
    train, test = split(enc, args.test)
    truth = labels_of(test)
    amps = test.amplitudes()
    inputs = [amps[:, i] for i in range(len(test))]
    noise = NoiseSpec(args.gamma, args.p_depol)

    rows = []
    for units in args.units:
        res = run_protocol(train, units, args.lrs, args.seeds, max_steps=args.steps)
        best = res.best
        circuit, params = build_model(units), best.params
        preds = {
            "full": predict_batch(circuit, params, inputs),
            "shots": [shots_from_y0(exact_y0(circuit, params, x), ShotConfig(args.shots, i))
                      for i, x in enumerate(inputs)],
            "noisy": predict_noisy_many(circuit, params, inputs, noise),
        }
        for mode, pred in preds.items():
            rmsd, pcc = metrics(pred, truth)
            rows.append([units, mode, best.config.learning_rate, best.config.seed,
                         best.final_train_rmsd, rmsd, pcc])
        print(f"units={units} lr={best.config.learning_rate:g} train_rmsd={best.final_train_rmsd:.3f} "
              f"test_rmsd(full)={rows[-3][5]:.3f}", file=sys.stderr)

    fh = sys.stdout if args.out == "-" else open(args.out, "w", newline="")
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["n_units", "mode", "lr", "seed", "train_rmsd", "test_rmsd", "test_pcc"])
    w.writerows(rows)
    if fh is not sys.stdout:
        fh.close()


if __name__ == "__main__":
    main()
