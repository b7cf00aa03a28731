"""Statevector and density-matrix kernels.

Basis convention: bit ``b`` of a basis index is the state of qubit ``b``, so
qubit 0 is the least significant bit.  Gates are applied with stride-based
in-place style updates on a reshaped view; no ``2**n x 2**n`` operator is ever
assembled here.

Raw kernels (``_apply_*``) accept amplitude arrays of shape ``(2**n, *batch)``.
Any trailing batch axes are carried along untouched, and a rotation angle may
be an array broadcasting against them (one angle per column).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import CapacityError, InputError, StructuralError

GATE_KINDS = ("RX", "RZ", "CNOT")
GATE_CONVENTION = "rx-rz-standard-v1"

MAX_STATE_QUBITS = 24
MAX_DENSITY_QUBITS = 12

PAULI_X = np.array([[0, 1], [1, 0]], dtype=complex)
PAULI_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
PAULI_Z = np.array([[1, 0], [0, -1]], dtype=complex)


def rx_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta / 2), math.sin(theta / 2)
    return np.array([[c, -1j * s], [-1j * s, c]], dtype=complex)


def rz_matrix(theta: float) -> np.ndarray:
    return np.array([[np.exp(-0.5j * theta), 0], [0, np.exp(0.5j * theta)]], dtype=complex)


@dataclass(frozen=True)
class Gate:
    kind: str
    target: int
    control: Optional[int] = None
    param_slot: Optional[int] = None

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise InputError(f"unknown gate kind {self.kind!r}")
        if self.target < 0:
            raise StructuralError(f"negative target qubit {self.target}")
        if self.kind == "CNOT":
            if self.control is None or self.control < 0:
                raise StructuralError("CNOT needs a non-negative control qubit")
            if self.control == self.target:
                raise StructuralError(f"CNOT control equals target ({self.target})")
            if self.param_slot is not None:
                raise InputError("CNOT takes no parameter slot")
        else:
            if self.param_slot is None or self.param_slot < 0:
                raise InputError(f"{self.kind} needs a non-negative parameter slot")
            if self.control is not None:
                raise InputError(f"{self.kind} takes no control qubit")

    @property
    def qubits(self) -> tuple:
        if self.kind == "CNOT":
            return (self.control, self.target)
        return (self.target,)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "target": self.target}
        if self.control is not None:
            d["control"] = self.control
        if self.param_slot is not None:
            d["param_slot"] = self.param_slot
        return d


@dataclass(frozen=True)
class NoiseSpec:
    """Per-gate noise: amplitude damping rate ``gamma``, depolarizing ``p_depol``."""

    gamma: float = 0.0
    p_depol: float = 0.0

    def __post_init__(self):
        for name in ("gamma", "p_depol"):
            v = getattr(self, name)
            if not (math.isfinite(v) and 0.0 <= v <= 1.0):
                raise InputError(f"{name} must lie in [0, 1], got {v}")

    @property
    def is_zero(self) -> bool:
        return self.gamma == 0.0 and self.p_depol == 0.0


@dataclass(frozen=True, eq=False)
class StateVector:
    n_qubits: int
    amps: np.ndarray

    def __post_init__(self):
        _check_capacity(self.n_qubits, MAX_STATE_QUBITS, "statevector")
        amps = np.asarray(self.amps, dtype=complex)
        if amps.shape != (2**self.n_qubits,):
            raise InputError(
                f"expected {2**self.n_qubits} amplitudes for {self.n_qubits} qubits, got shape {amps.shape}"
            )
        amps.setflags(write=False)
        object.__setattr__(self, "amps", amps)

    @classmethod
    def basis(cls, n_qubits: int, index: int = 0) -> "StateVector":
        amps = np.zeros(2**n_qubits, dtype=complex)
        amps[index] = 1.0
        return cls(n_qubits, amps)

    @classmethod
    def from_array(cls, amps) -> "StateVector":
        amps = np.asarray(amps, dtype=complex)
        n = int(round(math.log2(amps.size))) if amps.size else -1
        if n < 0 or 2**n != amps.size or amps.ndim != 1:
            raise InputError(f"amplitude array of shape {amps.shape} is not a qubit register")
        return cls(n, amps)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amps) ** 2)))


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    n_qubits: int
    rho: np.ndarray

    def __post_init__(self):
        _check_capacity(self.n_qubits, MAX_DENSITY_QUBITS, "density matrix")
        rho = np.asarray(self.rho, dtype=complex)
        dim = 2**self.n_qubits
        if rho.shape != (dim, dim):
            raise InputError(f"expected a {dim}x{dim} density matrix, got shape {rho.shape}")
        rho.setflags(write=False)
        object.__setattr__(self, "rho", rho)

    def trace(self) -> complex:
        return complex(np.trace(self.rho))


def _check_capacity(n_qubits: int, limit: int, what: str):
    if n_qubits < 1:
        raise InputError(f"need at least one qubit, got {n_qubits}")
    if n_qubits > limit:
        raise CapacityError(f"{what} simulation is limited to {limit} qubits, requested {n_qubits}")


def _check_gate(gate: Gate, n_qubits: int):
    for q in gate.qubits:
        if q >= n_qubits:
            raise StructuralError(f"{gate.kind} acts on qubit {q} but the register has {n_qubits} qubits")


def _check_theta(theta):
    if not np.all(np.isfinite(theta)):
        raise InputError(f"rotation angle must be finite, got {theta}")


# --- raw amplitude kernels -------------------------------------------------

def _pair_view(psi: np.ndarray, n: int, q: int) -> np.ndarray:
    # axis 1 of the view is the bit of qubit q
    return psi.reshape((2 ** (n - 1 - q), 2, 2**q) + psi.shape[1:])


def _apply_rx(psi, n, q, theta):
    v = _pair_view(psi, n, q)
    a0, a1 = v[:, 0], v[:, 1]
    c = np.cos(np.asarray(theta) / 2)
    ms = -1j * np.sin(np.asarray(theta) / 2)
    out = np.empty_like(v)
    out[:, 0] = c * a0 + ms * a1
    out[:, 1] = ms * a0 + c * a1
    return out.reshape(psi.shape)


def _apply_rz(psi, n, q, theta):
    v = _pair_view(psi, n, q)
    half = 0.5j * np.asarray(theta)
    out = np.empty_like(v)
    out[:, 0] = np.exp(-half) * v[:, 0]
    out[:, 1] = np.exp(half) * v[:, 1]
    return out.reshape(psi.shape)


def _apply_matrix(psi, n, q, m):
    """Apply an arbitrary 2x2 matrix (need not be unitary) to qubit ``q``."""
    v = _pair_view(psi, n, q)
    a0, a1 = v[:, 0], v[:, 1]
    out = np.empty_like(v)
    out[:, 0] = m[0, 0] * a0 + m[0, 1] * a1
    out[:, 1] = m[1, 0] * a0 + m[1, 1] * a1
    return out.reshape(psi.shape)


def _apply_cnot(psi, n, control, target):
    v = psi.reshape((2,) * n + psi.shape[1:])
    out = v.copy()
    ax_c, ax_t = n - 1 - control, n - 1 - target
    i10 = [slice(None)] * n
    i11 = [slice(None)] * n
    i10[ax_c], i10[ax_t] = 1, 0
    i11[ax_c], i11[ax_t] = 1, 1
    out[tuple(i10)] = v[tuple(i11)]
    out[tuple(i11)] = v[tuple(i10)]
    return out.reshape(psi.shape)


def _apply_raw(psi, n, gate: Gate, theta=0.0):
    if gate.kind == "RX":
        return _apply_rx(psi, n, gate.target, theta)
    if gate.kind == "RZ":
        return _apply_rz(psi, n, gate.target, theta)
    return _apply_cnot(psi, n, gate.control, gate.target)


def _apply_raw_inverse(psi, n, gate: Gate, theta=0.0):
    if gate.kind == "CNOT":
        return _apply_cnot(psi, n, gate.control, gate.target)
    return _apply_raw(psi, n, gate, -np.asarray(theta))


def _generator(psi, n, gate: Gate):
    """Pauli generator of a rotation gate applied to ``psi`` (X for RX, Z for RZ)."""
    if gate.kind == "RX":
        v = _pair_view(psi, n, gate.target)
        out = np.empty_like(v)
        out[:, 0] = v[:, 1]
        out[:, 1] = v[:, 0]
        return out.reshape(psi.shape)
    if gate.kind == "RZ":
        v = _pair_view(psi, n, gate.target)
        out = v.copy()
        out[:, 1] *= -1
        return out.reshape(psi.shape)
    raise InputError("CNOT has no rotation generator")


def run_gates(psi: np.ndarray, n: int, gates: Sequence[Gate], params) -> np.ndarray:
    """Apply ``gates`` in order to raw amplitudes of shape ``(2**n, *batch)``.

    ``params`` is indexed by each gate's ``param_slot``.  Rows of a 2-D
    ``params`` array give one angle per batch column.
    """
    for g in gates:
        theta = params[g.param_slot] if g.param_slot is not None else 0.0
        psi = _apply_raw(psi, n, g, theta)
    return psi


def _circuit_params(circuit, params) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    if params.ndim != 1 or params.shape[0] != circuit.n_params:
        raise InputError(f"circuit has {circuit.n_params} parameter slots, got {params.shape} parameters")
    _check_theta(params)
    return params


# --- public statevector API ------------------------------------------------

def apply_gate(state: StateVector, gate: Gate, theta: float = 0.0) -> StateVector:
    _check_gate(gate, state.n_qubits)
    if gate.kind != "CNOT":
        _check_theta(theta)
    return StateVector(state.n_qubits, _apply_raw(state.amps, state.n_qubits, gate, theta))


def apply_circuit(state: StateVector, circuit, params) -> StateVector:
    """Run a compiled circuit (anything with ``n_qubits``, ``gates``, ``n_params``)."""
    if circuit.n_qubits != state.n_qubits:
        raise StructuralError(f"circuit is for {circuit.n_qubits} qubits, state has {state.n_qubits}")
    params = _circuit_params(circuit, params)
    return StateVector(state.n_qubits, run_gates(state.amps, state.n_qubits, circuit.gates, params))


def marginal_z0(amps: np.ndarray) -> np.ndarray:
    """``y0 - y1`` on qubit 0 for each column of a ``(2**n, *batch)`` array."""
    y0, y1 = marginal_probs(amps)
    return y0 - y1


def marginal_probs(amps: np.ndarray):
    p = np.abs(amps) ** 2
    # reduce along a contiguous last axis so batched and single evaluations agree bitwise
    p = np.ascontiguousarray(np.moveaxis(p.reshape((-1, 2) + p.shape[1:]), (0, 1), (-1, -2)))
    y = p.sum(axis=-1)
    return y[..., 0], y[..., 1]


def marginal_prob_qubit0(state_or_rho):
    """Return ``(y0, y1)``: probabilities of measuring 0 and 1 on qubit 0."""
    if isinstance(state_or_rho, DensityMatrix):
        diag = np.real(np.diagonal(state_or_rho.rho))
        y0, y1 = float(diag[0::2].sum()), float(diag[1::2].sum())
    elif isinstance(state_or_rho, StateVector):
        y0, y1 = marginal_probs(state_or_rho.amps)
        y0, y1 = float(y0), float(y1)
    else:
        raise InputError(f"expected StateVector or DensityMatrix, got {type(state_or_rho).__name__}")
    return y0, y1


# --- density matrices ------------------------------------------------------

def to_density(state: StateVector) -> DensityMatrix:
    _check_capacity(state.n_qubits, MAX_DENSITY_QUBITS, "density matrix")
    a = state.amps
    return DensityMatrix(state.n_qubits, np.outer(a, a.conj()))


def _conjugate(rho, n, gate: Gate, theta):
    # U rho U^dagger, using the column axis as a batch axis
    left = _apply_raw(rho, n, gate, theta)
    return _apply_raw(left.conj().T, n, gate, theta).conj().T


def _block_view(rho, n, q):
    # axes 1 and 4 are the row and column bit of qubit q
    lo, hi = 2**q, 2 ** (n - 1 - q)
    return rho.reshape(hi, 2, lo, hi, 2, lo)


def _amplitude_damping(rho, n, q, gamma):
    if gamma == 0.0:
        return rho
    r = _block_view(rho.copy(), n, q)
    s = math.sqrt(1.0 - gamma)
    r[:, 0, :, :, 0, :] += gamma * r[:, 1, :, :, 1, :]
    r[:, 1, :, :, 1, :] *= 1.0 - gamma
    r[:, 0, :, :, 1, :] *= s
    r[:, 1, :, :, 0, :] *= s
    return r.reshape(rho.shape)


def _amplitude_damping_adjoint(obs, n, q, gamma):
    if gamma == 0.0:
        return obs
    r = _block_view(obs.copy(), n, q)
    s = math.sqrt(1.0 - gamma)
    r[:, 1, :, :, 1, :] *= 1.0 - gamma
    r[:, 1, :, :, 1, :] += gamma * r[:, 0, :, :, 0, :]
    r[:, 0, :, :, 1, :] *= s
    r[:, 1, :, :, 0, :] *= s
    return r.reshape(obs.shape)


def _depolarize(rho, n, q, p):
    # (1-p) rho + p/3 (X rho X + Y rho Y + Z rho Z), written blockwise; self-adjoint
    if p == 0.0:
        return rho
    r = _block_view(rho.copy(), n, q)
    d0 = r[:, 0, :, :, 0, :].copy()
    d1 = r[:, 1, :, :, 1, :].copy()
    keep, move = 1.0 - 2.0 * p / 3.0, 2.0 * p / 3.0
    r[:, 0, :, :, 0, :] = keep * d0 + move * d1
    r[:, 1, :, :, 1, :] = move * d0 + keep * d1
    r[:, 0, :, :, 1, :] *= 1.0 - 4.0 * p / 3.0
    r[:, 1, :, :, 0, :] *= 1.0 - 4.0 * p / 3.0
    return r.reshape(rho.shape)


def _noisy_step(rho, n, gate: Gate, theta, noise: NoiseSpec):
    rho = _conjugate(rho, n, gate, theta)
    for q in gate.qubits:
        rho = _amplitude_damping(rho, n, q, noise.gamma)
        rho = _depolarize(rho, n, q, noise.p_depol)
    return rho


def _noisy_step_adjoint(obs, n, gate: Gate, theta, noise: NoiseSpec):
    for q in reversed(gate.qubits):
        obs = _depolarize(obs, n, q, noise.p_depol)
        obs = _amplitude_damping_adjoint(obs, n, q, noise.gamma)
    return _conjugate(obs, n, gate, -theta if gate.kind != "CNOT" else 0.0)


def apply_gate_noisy(rho: DensityMatrix, gate: Gate, theta: float, noise: NoiseSpec) -> DensityMatrix:
    """Apply ``gate`` then, on each qubit it touches (control first), damping and depolarizing."""
    _check_gate(gate, rho.n_qubits)
    if gate.kind != "CNOT":
        _check_theta(theta)
    return DensityMatrix(rho.n_qubits, _noisy_step(rho.rho, rho.n_qubits, gate, theta, noise))


def apply_circuit_noisy(rho: DensityMatrix, circuit, params, noise: NoiseSpec) -> DensityMatrix:
    if circuit.n_qubits != rho.n_qubits:
        raise StructuralError(f"circuit is for {circuit.n_qubits} qubits, density matrix has {rho.n_qubits}")
    params = _circuit_params(circuit, params)
    r = rho.rho
    for g in circuit.gates:
        theta = params[g.param_slot] if g.param_slot is not None else 0.0
        r = _noisy_step(r, rho.n_qubits, g, theta, noise)
    return DensityMatrix(rho.n_qubits, r)


def heisenberg_observable(circuit, params, noise: NoiseSpec, observable: np.ndarray) -> np.ndarray:
    """Pull ``observable`` back through the noisy circuit (adjoint channel).

    For any input ``rho``: ``tr(O rho_out) == tr(heisenberg_observable(O) rho_in)``.
    """
    n = circuit.n_qubits
    _check_capacity(n, MAX_DENSITY_QUBITS, "density matrix")
    params = _circuit_params(circuit, params)
    obs = np.asarray(observable, dtype=complex)
    for g in reversed(circuit.gates):
        theta = params[g.param_slot] if g.param_slot is not None else 0.0
        obs = _noisy_step_adjoint(obs, n, g, theta, noise)
    return obs


def z0_observable(n_qubits: int) -> np.ndarray:
    """Diagonal ``Z`` on qubit 0 as a dense matrix (``+1`` on even indices)."""
    diag = np.where(np.arange(2**n_qubits) % 2 == 0, 1.0, -1.0)
    return np.diag(diag).astype(complex)


def apply_kraus(rho: DensityMatrix, kraus_ops: Sequence[np.ndarray], qubit: int) -> DensityMatrix:
    """General single-qubit channel ``sum_k K rho K^dagger`` (reference path)."""
    n = rho.n_qubits
    if qubit >= n:
        raise StructuralError(f"qubit {qubit} out of range for {n} qubits")
    out = np.zeros_like(rho.rho)
    for k in kraus_ops:
        k = np.asarray(k, dtype=complex)
        left = _apply_matrix(rho.rho, n, qubit, k)
        out += _apply_matrix(left.conj().T, n, qubit, k).conj().T
    return DensityMatrix(n, out)


def amplitude_damping_kraus(gamma: float):
    return [
        np.array([[1, 0], [0, math.sqrt(1 - gamma)]], dtype=complex),
        np.array([[0, math.sqrt(gamma)], [0, 0]], dtype=complex),
    ]


def depolarizing_kraus(p: float):
    return [
        math.sqrt(1 - p) * np.eye(2, dtype=complex),
        math.sqrt(p / 3) * PAULI_X,
        math.sqrt(p / 3) * PAULI_Y,
        math.sqrt(p / 3) * PAULI_Z,
    ]


def as_amplitudes(x, n_qubits: int) -> np.ndarray:
    """Coerce a StateVector, occupancy vector or raw array to a complex amplitude array."""
    if hasattr(x, "to_state"):
        x = x.to_state()
    if isinstance(x, StateVector):
        amps = x.amps
    else:
        amps = np.asarray(x, dtype=complex)
    if amps.shape != (2**n_qubits,):
        raise StructuralError(f"input has shape {amps.shape}, circuit expects {2**n_qubits} amplitudes")
    return amps
