"""Readout value and exact parameter gradients.

The model output is ``100 * (y0 - y1)`` on qubit 0, i.e. ``100 <Z_0>``.
``backward_adjoint`` is the production path (one forward sweep, one reverse
sweep); parameter-shift, finite differences and a dense Kronecker-product
forward pass are kept as independent checks.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np

from .errors import CapacityError, InputError
from .qcore import (
    Gate,
    _apply_raw_inverse,
    _circuit_params,
    _generator,
    as_amplitudes,
    marginal_z0,
    run_gates,
    rx_matrix,
    rz_matrix,
)

SCALE = 100.0
MAX_DENSE_QUBITS = 10


@dataclass
class GradientResult:
    value: float
    grad: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.grad)):
            raise InputError("gradient has non-finite entries")


def forward_many(circuit, params, amps: np.ndarray) -> np.ndarray:
    """Predictions for the columns of ``amps`` (shape ``(2**n, B)``)."""
    params = _circuit_params(circuit, params)
    psi = run_gates(amps, circuit.n_qubits, circuit.gates, params)
    return SCALE * marginal_z0(psi)


def forward(circuit, params, input) -> float:
    amps = as_amplitudes(input, circuit.n_qubits)
    return float(forward_many(circuit, params, amps[:, None])[0])


def _z0(psi: np.ndarray) -> np.ndarray:
    out = psi.copy()
    out[1::2] *= -1
    return out


def _adjoint_sweep(circuit, params, psi, lam) -> np.ndarray:
    """Reverse sweep given final states ``psi`` and costate ``lam`` (same shape)."""
    n = circuit.n_qubits
    grad = np.zeros(circuit.n_params)
    for g in reversed(circuit.gates):
        theta = params[g.param_slot] if g.param_slot is not None else 0.0
        if g.param_slot is not None:
            # d/dtheta exp(-i theta G/2) = -i/2 G U, so dF = Im <lam| G psi>
            grad[g.param_slot] = np.sum(np.imag(lam.conj() * _generator(psi, n, g)))
        psi = _apply_raw_inverse(psi, n, g, theta)
        lam = _apply_raw_inverse(lam, n, g, theta)
    return grad


def backward_adjoint(circuit, params, input) -> GradientResult:
    params = _circuit_params(circuit, params)
    amps = as_amplitudes(input, circuit.n_qubits)
    psi = run_gates(amps, circuit.n_qubits, circuit.gates, params)
    value = SCALE * float(marginal_z0(psi))
    grad = _adjoint_sweep(circuit, params, psi, SCALE * _z0(psi))
    return GradientResult(value, grad)


def loss_and_grad(circuit, params, amps: np.ndarray, targets: np.ndarray):
    """MSE loss over the columns of ``amps`` and its gradient, in one reverse sweep.

    Returns ``(loss, grad, predictions)``.
    """
    params = _circuit_params(circuit, params)
    targets = np.asarray(targets, dtype=float)
    b = amps.shape[1]
    if targets.shape != (b,):
        raise InputError(f"{b} inputs but targets have shape {targets.shape}")
    psi = run_gates(amps, circuit.n_qubits, circuit.gates, params)
    pred = SCALE * marginal_z0(psi)
    err = pred - targets
    loss = float(np.mean(err**2))
    weights = SCALE * 2.0 * err / b
    grad = _adjoint_sweep(circuit, params, psi, weights * _z0(psi))
    return loss, grad, pred


def _shifted_columns(params: np.ndarray, shift: float) -> np.ndarray:
    # column 2k is +shift on slot k, column 2k+1 is -shift
    p = len(params)
    cols = np.repeat(params[:, None], 2 * p, axis=1)
    idx = np.arange(p)
    cols[idx, 2 * idx] += shift
    cols[idx, 2 * idx + 1] -= shift
    return cols


def _shift_evaluations(circuit, params, input, shift):
    params = _circuit_params(circuit, params)
    amps = as_amplitudes(input, circuit.n_qubits)
    value = float(forward_many(circuit, params, amps[:, None])[0])
    if circuit.n_params == 0:
        return value, np.zeros(0), np.zeros(0)
    cols = _shifted_columns(params, shift)
    batch = np.repeat(amps[:, None], cols.shape[1], axis=1)
    psi = run_gates(batch, circuit.n_qubits, circuit.gates, cols)
    out = SCALE * marginal_z0(psi)
    return value, out[0::2], out[1::2]


def backward_parameter_shift(circuit, params, input) -> GradientResult:
    value, plus, minus = _shift_evaluations(circuit, params, input, np.pi / 2)
    return GradientResult(value, (plus - minus) / 2.0)


def backward_finite_diff(circuit, params, input, h: float = 1e-4) -> GradientResult:
    if not (0.0 < h <= 0.1):
        raise InputError(f"finite-difference step must lie in (0, 0.1], got {h}")
    value, plus, minus = _shift_evaluations(circuit, params, input, h)
    return GradientResult(value, (plus - minus) / (2.0 * h))


# --- dense reference -------------------------------------------------------

_I2 = np.eye(2, dtype=complex)
_P0 = np.array([[1, 0], [0, 0]], dtype=complex)
_P1 = np.array([[0, 0], [0, 1]], dtype=complex)
_X = np.array([[0, 1], [1, 0]], dtype=complex)


def _embed(factors: dict, n: int) -> np.ndarray:
    # kron order is qubit n-1 (leftmost) down to qubit 0
    return reduce(np.kron, [factors.get(q, _I2) for q in reversed(range(n))])


def gate_unitary(gate: Gate, theta: float, n: int) -> np.ndarray:
    if gate.kind == "RX":
        return _embed({gate.target: rx_matrix(theta)}, n)
    if gate.kind == "RZ":
        return _embed({gate.target: rz_matrix(theta)}, n)
    return _embed({gate.control: _P0}, n) + _embed({gate.control: _P1, gate.target: _X}, n)


def dense_unitary(circuit, params) -> np.ndarray:
    """Full ``2**n x 2**n`` circuit unitary assembled from Kronecker products."""
    n = circuit.n_qubits
    if n > MAX_DENSE_QUBITS:
        raise CapacityError(f"dense unitary assembly is limited to {MAX_DENSE_QUBITS} qubits")
    params = _circuit_params(circuit, params)
    u = np.eye(2**n, dtype=complex)
    for g in circuit.gates:
        theta = params[g.param_slot] if g.param_slot is not None else 0.0
        u = gate_unitary(g, theta, n) @ u
    return u


def dense_forward(circuit, params, input) -> float:
    amps = as_amplitudes(input, circuit.n_qubits)
    out = dense_unitary(circuit, params) @ amps
    p = np.abs(out) ** 2
    return SCALE * float(p[0::2].sum() - p[1::2].sum())
