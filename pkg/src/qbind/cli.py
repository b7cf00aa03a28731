"""Command line: voxelize, train, protocol, eval, predict, gradcheck.

Every command that writes a file also writes a run manifest next to it
(``<output>.manifest.json``, or ``manifest.json`` inside an output directory).
Options may come from ``--config file.json``; explicit flags win.
"""
from __future__ import annotations

import argparse
import csv
import datetime as _dt
import hashlib
import io
import json
import logging
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__
from .circuit import TOPOLOGY_VERSION, Checkpoint, build_model, init_params
from .encode import EncodeConfig, EncodedSet, encode, read_cache, read_dataset, write_cache
from .errors import (
    CapacityError,
    EncodingError,
    IncompatibilityError,
    InputError,
    ParseError,
    ProtocolError,
    QBindError,
)
from .grad import backward_adjoint, backward_finite_diff, backward_parameter_shift
from .infer import (
    ShotConfig,
    exact_y0,
    metrics,
    predict_batch,
    predict_noisy,
    predict_noisy_many,
    shots_from_y0,
)
from .qcore import GATE_CONVENTION, NoiseSpec
from .train import PROTOCOL_LEARNING_RATES, PROTOCOL_SEEDS, TrainConfig, check_disjoint, pkd_to_dg, run_protocol, train_one

log = logging.getLogger("qbind")

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_CAPACITY = 3
EXIT_PARTIAL = 4
EXIT_INCOMPATIBLE = 5
EXIT_IO = 6
EXIT_PROTOCOL = 7

EVAL_COLUMNS = ["id", "dG_pred", "dG_true", "mode", "n_units", "shots", "gamma", "p_depol", "rmsd", "pcc"]
PREDICT_COLUMNS = ["id", "dG_pred", "n_units"]


# --- helpers ----------------------------------------------------------------

def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(x)
    return str(x)


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def atomic_write(path, data) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data.encode() if isinstance(data, str) else data)
    os.replace(tmp, path)


def write_manifest(path, args, inputs=(), outputs=(), seeds=None) -> None:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "_argv")}
    doc = {
        "command": ["qbind"] + list(args._argv),
        "config": config,
        "seeds": seeds or {},
        "topology_version": TOPOLOGY_VERSION,
        "gate_convention": GATE_CONVENTION,
        "inputs": {str(p): _sha256(p) for p in inputs if p and Path(p).is_file()},
        "outputs": {str(p): _sha256(p) for p in outputs if Path(p).is_file()},
        "qbind_version": __version__,
        "timestamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds"),
    }
    atomic_write(path, json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n")


def _manifest_for(out) -> Path:
    return Path(str(out) + ".manifest.json")


def _emit(text: str, out) -> None:
    if out:
        atomic_write(out, text)
    else:
        sys.stdout.write(text)


def _csv(rows, columns) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_fmt(row.get(c)) for c in columns])
    return buf.getvalue()


def _record_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1, dtype=np.uint64)[0])


def _load_model(path):
    ckpt = Checkpoint.load(path)
    return ckpt, ckpt.circuit(), np.asarray(ckpt.params)


# --- commands ---------------------------------------------------------------

def cmd_voxelize(args) -> int:
    records = read_dataset(args.data)
    config = EncodeConfig(aggregate=args.aggregate)
    ids, vecs, pkd = [], [], []
    skipped = 0
    for rec in records:
        try:
            v = encode(rec, config)
        except (EncodingError, InputError) as e:
            skipped += 1
            print(f"skip {rec.id}: {e}", file=sys.stderr)
            continue
        ids.append(rec.id)
        vecs.append(v.values)
        pkd.append(rec.pkd)
        print(f"ok {rec.id}", file=sys.stderr)
    vectors = np.array(vecs) if vecs else np.zeros((0, 512))
    write_cache(EncodedSet(ids, vectors, pkd), args.out)
    write_manifest(_manifest_for(args.out), args, inputs=[args.data], outputs=[args.out, str(args.out) + ".json"])
    print(f"encoded {len(ids)} of {len(records)} complexes", file=sys.stderr)
    return EXIT_PARTIAL if skipped else EXIT_OK


def _train_data(args) -> EncodedSet:
    data = read_cache(args.data)
    if getattr(args, "exclude", None):
        check_disjoint(data.ids, read_cache(args.exclude).ids)
    return data


def cmd_train(args) -> int:
    data = _train_data(args)
    cfg = TrainConfig(args.lr, args.seed, args.units, args.steps, args.batch, args.optimizer)
    out = Path(args.out)
    report = train_one(data, cfg, out_dir=out)
    outputs = [out / "report.json"] + ([out / "checkpoint.json"] if report.checkpoint_path else [])
    write_manifest(out / "manifest.json", args, inputs=[args.data], outputs=outputs, seeds={"init": args.seed})
    print(report.to_json(), end="")
    return EXIT_PROTOCOL if report.diverged else EXIT_OK


def cmd_protocol(args) -> int:
    data = _train_data(args)
    lrs = args.lrs or list(PROTOCOL_LEARNING_RATES)
    seeds = args.seeds or list(PROTOCOL_SEEDS)
    out = Path(args.out)
    result = run_protocol(
        data, args.units, lrs, seeds, args.steps, args.batch, args.optimizer, out_dir=out, threads=args.threads
    )
    table = result.table()
    atomic_write(out / "selection.csv", table)
    best = Path(result.best.checkpoint_path)
    atomic_write(out / "best_checkpoint.json", best.read_bytes())
    write_manifest(
        out / "manifest.json",
        args,
        inputs=[args.data],
        outputs=[out / "selection.csv", out / "best_checkpoint.json"],
        seeds={"init": list(seeds)},
    )
    sys.stdout.write(table)
    return EXIT_OK


def _noisy_predictions(circuit, params, amps_cols, noise, method, threads):
    if method == "heisenberg":
        return list(predict_noisy_many(circuit, params, amps_cols, noise))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(lambda a: predict_noisy(circuit, params, a, noise), amps_cols))
    return [predict_noisy(circuit, params, a, noise) for a in amps_cols]


def cmd_eval(args) -> int:
    ckpt, circuit, params = _load_model(args.checkpoint)
    data = read_cache(args.cache)
    amps = data.amplitudes()
    inputs = [amps[:, i] for i in range(len(data))]
    labelled = len(data) > 0 and all(p is not None for p in data.pkd)
    truth = [pkd_to_dg(float(p)) if p is not None else None for p in data.pkd]
    rows = []
    for mode in args.mode:
        shots = gamma = p_depol = None
        if mode == "full":
            pred = list(predict_batch(circuit, params, inputs, width=args.batch_width))
        elif mode == "shots":
            shots = args.shots
            pred = [
                shots_from_y0(exact_y0(circuit, params, x), ShotConfig(shots, _record_seed(args.seed, i)))
                for i, x in enumerate(inputs)
            ]
        else:
            gamma, p_depol = args.gamma, args.p_depol
            noise = NoiseSpec(gamma, p_depol)
            pred = _noisy_predictions(circuit, params, inputs, noise, args.noisy_method, args.threads)
        for i, rid in enumerate(data.ids):
            rows.append(
                {
                    "id": rid, "dG_pred": float(pred[i]), "dG_true": truth[i], "mode": mode,
                    "n_units": ckpt.n_units, "shots": shots, "gamma": gamma, "p_depol": p_depol,
                }
            )
        if labelled and len(data) > 1:
            rmsd, pcc = metrics(pred, truth)
            rows.append(
                {
                    "id": "__summary__", "mode": mode, "n_units": ckpt.n_units, "shots": shots,
                    "gamma": gamma, "p_depol": p_depol, "rmsd": rmsd, "pcc": pcc,
                }
            )
    _emit(_csv(rows, EVAL_COLUMNS), args.out)
    if args.out:
        write_manifest(
            _manifest_for(args.out), args, inputs=[args.checkpoint, args.cache], outputs=[args.out],
            seeds={"shots": args.seed},
        )
    return EXIT_OK


def cmd_predict(args) -> int:
    ckpt, circuit, params = _load_model(args.checkpoint)
    data = read_cache(args.cache)
    amps = data.amplitudes()
    pred = predict_batch(circuit, params, [amps[:, i] for i in range(len(data))], width=args.batch_width)
    rows = [{"id": rid, "dG_pred": float(p), "n_units": ckpt.n_units} for rid, p in zip(data.ids, pred)]
    _emit(_csv(rows, PREDICT_COLUMNS), args.out)
    if args.out:
        write_manifest(_manifest_for(args.out), args, inputs=[args.checkpoint, args.cache], outputs=[args.out])
    return EXIT_OK


def cmd_gradcheck(args) -> int:
    from .synthetic import synthetic_complex

    circuit = build_model(args.units)
    params = init_params(circuit.n_params, args.seed)
    x = encode(synthetic_complex(np.random.default_rng(args.seed), id="gradcheck")).to_state()
    adj = backward_adjoint(circuit, params, x)
    ps = backward_parameter_shift(circuit, params, x)
    fd = backward_finite_diff(circuit, params, x, args.h)
    rows = [
        {
            "slot": k, "adjoint": float(adj.grad[k]), "param_shift": float(ps.grad[k]),
            "finite_diff": float(fd.grad[k]), "abs_err_shift": float(abs(adj.grad[k] - ps.grad[k])),
            "abs_err_fd": float(abs(adj.grad[k] - fd.grad[k])),
        }
        for k in range(circuit.n_params)
    ]
    cols = ["slot", "adjoint", "param_shift", "finite_diff", "abs_err_shift", "abs_err_fd"]
    _emit(_csv(rows, cols), args.out)
    if args.out:
        write_manifest(_manifest_for(args.out), args, outputs=[args.out], seeds={"instance": args.seed})
    print(
        f"value={adj.value!r} max|adj-shift|={max(r['abs_err_shift'] for r in rows):.3e} "
        f"max|adj-fd|={max(r['abs_err_fd'] for r in rows):.3e}",
        file=sys.stderr,
    )
    return EXIT_OK


# --- parser -----------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="qbind", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qbind {__version__}")
    parser.add_argument("--config", help="JSON file whose keys mirror the long flag names")
    parser.add_argument("-v", "--verbose", action="store_true")
    parser.add_argument("--threads", type=int, default=1, help="cap on worker threads")
    sub = parser.add_subparsers(dest="command", required=True)
    subs = {}

    p = sub.add_parser("voxelize", help="encode a JSON-lines dataset into a vector cache")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--aggregate", choices=["max", "sum-clamped"], default="max")
    p.set_defaults(func=cmd_voxelize)
    subs["voxelize"] = p

    for name, func in (("train", cmd_train), ("protocol", cmd_protocol)):
        p = sub.add_parser(name, help="train one model" if name == "train" else "run the 4 x 3 learning-rate/seed sweep")
        p.add_argument("--data", required=True, help="encoded cache")
        p.add_argument("--units", type=int, default=6)
        p.add_argument("--steps", type=int, default=5000)
        p.add_argument("--batch", type=int, default=32)
        p.add_argument("--optimizer", choices=["sgd", "adam"], default="sgd")
        p.add_argument("--exclude", help="cache of held-out complexes that must not appear in --data")
        p.add_argument("--out", required=True, help="output directory")
        if name == "train":
            p.add_argument("--lr", type=float, required=True)
            p.add_argument("--seed", type=int, default=0)
        else:
            p.add_argument("--lrs", type=float, nargs="+")
            p.add_argument("--seeds", type=int, nargs="+")
        p.set_defaults(func=func)
        subs[name] = p

    p = sub.add_parser("eval", help="labelled evaluation with RMSD/PCC summary")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--mode", choices=["full", "shots", "noisy"], action="append")
    p.add_argument("--shots", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--gamma", type=float, default=0.001)
    p.add_argument("--p-depol", type=float, default=0.0005)
    p.add_argument("--noisy-method", choices=["heisenberg", "schrodinger"], default="heisenberg")
    p.add_argument("--batch-width", type=int, default=16)
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval)
    subs["eval"] = p

    p = sub.add_parser("predict", help="unlabelled batch inference")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--cache", required=True)
    p.add_argument("--batch-width", type=int, default=16)
    p.add_argument("--out")
    p.set_defaults(func=cmd_predict)
    subs["predict"] = p

    p = sub.add_parser("gradcheck", help="adjoint vs parameter-shift vs finite differences (CSV)")
    p.add_argument("--units", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--h", type=float, default=1e-4)
    p.add_argument("--out")
    p.set_defaults(func=cmd_gradcheck)
    subs["gradcheck"] = p
    return parser, subs


def parse_args(argv):
    parser, subs = build_parser()
    args = parser.parse_args(argv)
    if args.config:
        try:
            cfg = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as e:
            raise InputError(f"cannot read config {args.config}: {e}") from None
        if not isinstance(cfg, dict):
            raise InputError("config file must hold a JSON object")
        cfg = {k.replace("-", "_"): v for k, v in cfg.items()}
        subs[args.command].set_defaults(**cfg)
        parser.set_defaults(**{k: v for k, v in cfg.items() if k in ("threads", "verbose")})
        args = parser.parse_args(argv)
    if getattr(args, "mode", "unset") is None:
        args.mode = ["full"]
    args._argv = list(argv)
    return args


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        args = parse_args(argv)
    except QBindError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CapacityError as e:
        print(f"capacity error: {e}", file=sys.stderr)
        return EXIT_CAPACITY
    except IncompatibilityError as e:
        print(f"incompatible checkpoint: {e}", file=sys.stderr)
        return EXIT_INCOMPATIBLE
    except ProtocolError as e:
        print(f"protocol error: {e}", file=sys.stderr)
        return EXIT_PROTOCOL
    except (ParseError, InputError, EncodingError) as e:
        print(f"input error: {e}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as e:
        print(f"I/O error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
