"""Evaluation regimes: exact readout, finite shots, noisy density matrix, and batches."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InputError
from .grad import SCALE, forward_many
from .qcore import (
    NoiseSpec,
    StateVector,
    _circuit_params,
    apply_circuit_noisy,
    as_amplitudes,
    heisenberg_observable,
    marginal_prob_qubit0,
    run_gates,
    to_density,
    z0_observable,
)


@dataclass(frozen=True)
class ShotConfig:
    n_shots: int
    seed: int = 0

    def __post_init__(self):
        if int(self.n_shots) < 1:
            raise InputError(f"n_shots must be at least 1, got {self.n_shots}")


@dataclass
class BatchInput:
    """Inputs indexed by ``m`` ancilla qubits (at most ``2**m`` of them)."""

    m: int
    inputs: list

    def __post_init__(self):
        if self.m < 0:
            raise InputError("ancilla count must be non-negative")
        if len(self.inputs) > 2**self.m:
            raise InputError(f"{len(self.inputs)} inputs do not fit {self.m} ancilla qubits")

    @classmethod
    def for_inputs(cls, inputs) -> "BatchInput":
        inputs = list(inputs)
        m = max(0, math.ceil(math.log2(len(inputs)))) if inputs else 0
        return cls(m, inputs)


def _check_normalized(amps, atol=1e-9):
    norms = np.sum(np.abs(amps) ** 2, axis=0)
    if np.any(np.abs(norms - 1.0) > atol):
        raise InputError("input state is not normalised")


def _stack(circuit, inputs) -> np.ndarray:
    cols = [as_amplitudes(x, circuit.n_qubits) for x in inputs]
    if not cols:
        return np.zeros((2**circuit.n_qubits, 0), dtype=complex)
    amps = np.stack(cols, axis=1)
    _check_normalized(amps)
    return amps


def predict_full(circuit, params, input) -> float:
    """Exact ``100 (y0 - y1)`` from the output statevector."""
    return float(forward_many(circuit, params, _stack(circuit, [input]))[0])


def exact_y0(circuit, params, input) -> float:
    params = _circuit_params(circuit, params)
    psi = run_gates(_stack(circuit, [input])[:, 0], circuit.n_qubits, circuit.gates, params)
    return marginal_prob_qubit0(StateVector(circuit.n_qubits, psi))[0]


def shots_from_y0(y0: float, cfg: ShotConfig) -> float:
    rng = np.random.default_rng(cfg.seed)
    k = rng.binomial(int(cfg.n_shots), min(max(y0, 0.0), 1.0))
    return SCALE * (2.0 * k / cfg.n_shots - 1.0)


def predict_shots(circuit, params, input, cfg: ShotConfig) -> float:
    """Estimate from ``n_shots`` seeded single-qubit measurements of qubit 0."""
    return shots_from_y0(exact_y0(circuit, params, input), cfg)


def predict_noisy(circuit, params, input, noise: NoiseSpec) -> float:
    """Density-matrix evolution with damping and depolarizing after every gate."""
    amps = _stack(circuit, [input])[:, 0]
    rho = to_density(StateVector(circuit.n_qubits, amps))
    rho = apply_circuit_noisy(rho, circuit, params, noise)
    y0, y1 = marginal_prob_qubit0(rho)
    return SCALE * (y0 - y1)


def predict_noisy_many(circuit, params, inputs: Sequence, noise: NoiseSpec) -> np.ndarray:
    """Noisy predictions for many inputs via one backward pass of the readout observable.

    Equal to ``predict_noisy`` per input; the channel is linear, so the
    observable is pulled back once and each input costs a single quadratic form.
    """
    amps = _stack(circuit, inputs)
    obs = heisenberg_observable(circuit, params, noise, z0_observable(circuit.n_qubits))
    vals = np.einsum("ib,ij,jb->b", amps.conj(), obs, amps)
    return SCALE * np.real(vals)


def predict_batch(circuit, params, batch, width: int = 16) -> np.ndarray:
    """Evaluate every input of ``batch`` on stacked ``(2**n, width)`` amplitude blocks.

    Bitwise equal to calling ``predict_full`` per input, for any ``width``.
    """
    if width < 1:
        raise InputError(f"batch width must be at least 1, got {width}")
    inputs = batch.inputs if isinstance(batch, BatchInput) else list(batch)
    amps = _stack(circuit, inputs)
    out = np.empty(amps.shape[1])
    for start in range(0, amps.shape[1], width):
        block = amps[:, start : start + width]
        out[start : start + width] = forward_many(circuit, params, block)
    return out


def circuit_unitary(circuit, params) -> np.ndarray:
    """Circuit unitary obtained by running the kernels on the identity's columns."""
    params = _circuit_params(circuit, params)
    eye = np.eye(2**circuit.n_qubits, dtype=complex)
    return run_gates(eye, circuit.n_qubits, circuit.gates, params)


def predict_block_diagonal(circuit, params, batch: BatchInput) -> np.ndarray:
    """Reference: block-diagonal ``I_(2^m) (x) U`` acting on the stacked ``2**(m+n)`` vector.

    Unused index slots are zero blocks.  Only intended for ``m <= 2``.
    """
    if batch.m > 2:
        raise InputError("block-diagonal reference is limited to m <= 2 ancilla qubits")
    dim = 2**circuit.n_qubits
    amps = _stack(circuit, batch.inputs)
    stacked = np.zeros(dim * 2**batch.m, dtype=complex)
    stacked[: amps.size] = amps.T.reshape(-1)
    big = np.kron(np.eye(2**batch.m), circuit_unitary(circuit, params))
    out = (big @ stacked).reshape(2**batch.m, dim)[: len(batch.inputs)]
    p = np.abs(out) ** 2
    return SCALE * (p[:, 0::2].sum(axis=1) - p[:, 1::2].sum(axis=1))


def metrics(pred, truth):
    """Return ``(rmsd, pcc)``."""
    pred = np.asarray(pred, dtype=float)
    truth = np.asarray(truth, dtype=float)
    if pred.shape != truth.shape or pred.ndim != 1:
        raise InputError(f"prediction shape {pred.shape} does not match truth shape {truth.shape}")
    if pred.size == 0:
        raise InputError("metrics need at least one sample")
    rmsd = float(np.sqrt(np.mean((pred - truth) ** 2)))
    if np.ptp(truth) == 0:
        raise InputError("PCC is undefined for constant truth values")
    if np.ptp(pred) == 0:
        return rmsd, float("nan")
    return rmsd, float(np.corrcoef(pred, truth)[0, 1])
