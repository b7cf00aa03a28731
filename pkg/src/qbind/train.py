"""Label conversion, MSE training and the learning-rate x seed selection protocol."""
from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, List, Optional, Sequence

import numpy as np

from .circuit import Checkpoint, build_model, init_params
from .errors import InputError, ProtocolError
from .grad import forward_many, loss_and_grad

log = logging.getLogger(__name__)

PROTOCOL_LEARNING_RATES = (1e-7, 1e-6, 1e-5, 3e-5)
PROTOCOL_SEEDS = (0, 1, 2)


@dataclass(frozen=True)
class PhysConstants:
    R: float = 1.987e-3  # kcal / (mol K)
    T: float = 298.0  # K
    LN10: float = math.log(10.0)

    @property
    def rt_ln10(self) -> float:
        return self.LN10 * self.R * self.T


PHYS = PhysConstants()


def pkd_to_dg(pkd: float) -> float:
    """Binding free energy in kcal/mol from a pK_d value."""
    if not math.isfinite(pkd):
        raise InputError(f"pK_d must be finite, got {pkd}")
    return -PHYS.LN10 * PHYS.R * PHYS.T * pkd


def dg_to_pkd(dg: float) -> float:
    if not math.isfinite(dg):
        raise InputError(f"free energy must be finite, got {dg}")
    return -dg / (PHYS.LN10 * PHYS.R * PHYS.T)


def mse_loss(pred, truth) -> float:
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.ndim != 1 or pred.size == 0:
        raise InputError(f"need equal non-empty vectors, got shapes {pred.shape} and {truth.shape}")
    return float(np.mean((pred - truth) ** 2))


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float
    seed: int = 0
    n_units: int = 6
    max_steps: int = 5000
    batch_size: int = 32
    optimizer: str = "sgd"

    def __post_init__(self):
        if not (self.learning_rate > 0 and math.isfinite(self.learning_rate)):
            raise InputError(f"learning rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise InputError(f"batch size must be at least 1, got {self.batch_size}")
        if self.max_steps < 0:
            raise InputError(f"max_steps must be non-negative, got {self.max_steps}")
        if self.optimizer not in ("sgd", "adam"):
            raise InputError(f"optimizer must be 'sgd' or 'adam', got {self.optimizer!r}")


@dataclass
class TrialReport:
    config: TrainConfig
    final_train_rmsd: float
    loss_history: List[float]
    checkpoint_path: str = ""
    diverged: bool = False
    initial_train_mse: float = float("nan")
    params: Optional[np.ndarray] = field(default=None, repr=False)

    def to_json(self) -> str:
        doc = {
            "config": asdict(self.config),
            "final_train_rmsd": self.final_train_rmsd,
            "initial_train_mse": self.initial_train_mse,
            "loss_history": self.loss_history,
            "checkpoint_path": self.checkpoint_path,
            "diverged": self.diverged,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def labels_of(dataset) -> np.ndarray:
    if any(p is None for p in dataset.pkd) or len(dataset.pkd) != len(dataset):
        raise InputError("training data needs a pK_d label for every record")
    return np.array([pkd_to_dg(float(p)) for p in dataset.pkd])


def check_disjoint(train_ids: Sequence[str], test_ids: Sequence[str]) -> None:
    overlap = sorted(set(train_ids) & set(test_ids))
    if overlap:
        raise InputError(f"{len(overlap)} test complexes appear in the training data, e.g. {overlap[:3]}")


class _Adam:
    def __init__(self, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, grad):
        if self.m is None:
            self.m = np.zeros_like(grad)
            self.v = np.zeros_like(grad)
        self.t += 1
        self.m = self.b1 * self.m + (1 - self.b1) * grad
        self.v = self.b2 * self.v + (1 - self.b2) * grad**2
        mhat = self.m / (1 - self.b1**self.t)
        vhat = self.v / (1 - self.b2**self.t)
        return self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _batches(n, batch_size, rng):
    # endless epoch-wise shuffled minibatches
    while True:
        order = rng.permutation(n)
        for start in range(0, n, batch_size):
            yield order[start : start + batch_size]


def train_one(dataset, cfg: TrainConfig, circuit=None, out_dir=None) -> TrialReport:
    """Minibatch gradient descent on the MSE, gradients from the adjoint sweep.

    ``dataset`` is an ``EncodedSet`` with labels. Deterministic for a fixed
    ``(dataset, cfg)``; a non-finite loss ends the trial and marks it diverged.
    """
    if len(dataset) == 0:
        raise InputError("training set is empty")
    circuit = circuit if circuit is not None else build_model(cfg.n_units)
    amps = dataset.amplitudes()
    labels = labels_of(dataset)
    params = init_params(circuit.n_params, cfg.seed)
    initial = mse_loss(forward_many(circuit, params, amps), labels)
    batch_rng = np.random.default_rng([cfg.seed, 1])
    batches = _batches(len(dataset), min(cfg.batch_size, len(dataset)), batch_rng)
    adam = _Adam(cfg.learning_rate) if cfg.optimizer == "adam" else None

    history: List[float] = []
    diverged = False
    for step in range(cfg.max_steps):
        idx = next(batches)
        loss, grad, _ = loss_and_grad(circuit, params, amps[:, idx], labels[idx])
        history.append(loss)
        if not (math.isfinite(loss) and np.all(np.isfinite(grad))):
            diverged = True
            log.warning("trial lr=%g seed=%d diverged at step %d", cfg.learning_rate, cfg.seed, step)
            break
        with np.errstate(over="ignore", invalid="ignore"):
            params = params - (adam.step(grad) if adam else cfg.learning_rate * grad)
        if not np.all(np.isfinite(params)):
            diverged = True
            log.warning("trial lr=%g seed=%d: parameters overflowed at step %d", cfg.learning_rate, cfg.seed, step)
            break

    if diverged:
        rmsd = float("inf")
    else:
        rmsd = math.sqrt(mse_loss(forward_many(circuit, params, amps), labels))
        if not math.isfinite(rmsd):
            diverged, rmsd = True, float("inf")
    report = TrialReport(cfg, rmsd, history, diverged=diverged, initial_train_mse=initial, params=params)
    if out_dir is not None and not diverged:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        ckpt = Checkpoint(
            n_units=cfg.n_units,
            params=list(params),
            seed=cfg.seed,
            extra={
                "learning_rate": cfg.learning_rate,
                "batch_size": cfg.batch_size,
                "max_steps": cfg.max_steps,
                "optimizer": cfg.optimizer,
            },
        )
        report.checkpoint_path = str(out / "checkpoint.json")
        ckpt.save(report.checkpoint_path)
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        (Path(out_dir) / "report.json").write_text(report.to_json())
    return report


def select_best(reports: Sequence[TrialReport]) -> TrialReport:
    """Lowest final training RMSD; ties go to the smaller learning rate, then seed."""
    ok = [r for r in reports if not r.diverged and math.isfinite(r.final_train_rmsd)]
    if not ok:
        raise ProtocolError("every trial diverged")
    return min(ok, key=lambda r: (r.final_train_rmsd, r.config.learning_rate, r.config.seed))


@dataclass
class ProtocolResult:
    best: TrialReport
    trials: List[TrialReport]

    def table(self) -> str:
        lines = ["learning_rate,seed,final_train_rmsd,diverged,selected"]
        for r in self.trials:
            lines.append(
                f"{r.config.learning_rate:g},{r.config.seed},{r.final_train_rmsd!r},"
                f"{int(r.diverged)},{int(r is self.best)}"
            )
        return "\n".join(lines) + "\n"


def run_protocol(
    dataset,
    n_units: int,
    learning_rates: Sequence[float] = PROTOCOL_LEARNING_RATES,
    seeds: Sequence[int] = PROTOCOL_SEEDS,
    max_steps: int = 5000,
    batch_size: int = 32,
    optimizer: str = "sgd",
    out_dir=None,
    threads: int = 1,
    trainer: Callable = train_one,
) -> ProtocolResult:
    """Train every (learning rate, seed) pair and keep the lowest training RMSD."""
    if len(dataset) == 0:
        raise InputError("training set is empty")
    configs = [
        TrainConfig(lr, seed, n_units, max_steps, batch_size, optimizer) for lr in learning_rates for seed in seeds
    ]
    circuit = build_model(n_units)

    def run(cfg):
        sub = None if out_dir is None else Path(out_dir) / f"lr{cfg.learning_rate:g}_seed{cfg.seed}"
        return trainer(dataset, cfg, circuit, sub)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            reports = list(pool.map(run, configs))
    else:
        reports = [run(c) for c in configs]
    return ProtocolResult(select_best(reports), reports)
