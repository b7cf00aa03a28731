"""QMLunit circuit construction and checkpoint I/O.

A QMLunit is one rotation layer (RX then RZ on every qubit) followed by one
entangling layer ``lbreaker(n)``: two rounds of four CNOTs in which qubit ``n``
is never a target.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import IncompatibilityError, InputError, ParseError
from .qcore import GATE_CONVENTION, Gate

N_QUBITS = 9
PARAMS_PER_UNIT = 2 * N_QUBITS
MAX_UNITS = 10
TOPOLOGY_VERSION = "canonical-v1"
SUPPORTED_TOPOLOGIES = (TOPOLOGY_VERSION,)


@dataclass(frozen=True)
class QubitRoles:
    type_qubits: tuple = (8, 7, 6)  # T2, T1, T0
    pos_qubits: tuple = (5, 4, 3, 2, 1, 0)  # X1, X0, Y1, Y0, Z1, Z0

    def __post_init__(self):
        if sorted(self.type_qubits + self.pos_qubits) != list(range(N_QUBITS)):
            raise InputError("qubit roles must be a permutation of 0..8")


@dataclass(frozen=True)
class CircuitSpec:
    n_qubits: int
    gates: tuple
    n_params: int

    def __post_init__(self):
        gates = tuple(self.gates)
        object.__setattr__(self, "gates", gates)
        slots = [g.param_slot for g in gates if g.param_slot is not None]
        if sorted(slots) != list(range(self.n_params)):
            raise InputError("every parameter slot in [0, n_params) must be used exactly once")
        for g in gates:
            if max(g.qubits) >= self.n_qubits:
                raise InputError(f"gate {g} does not fit a {self.n_qubits}-qubit register")

    def topology_hash(self) -> str:
        blob = json.dumps([g.to_dict() for g in self.gates], sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


def build_lpar(unit_index: int, n_qubits: int = N_QUBITS) -> list:
    if unit_index < 0:
        raise InputError(f"unit index must be non-negative, got {unit_index}")
    base = unit_index * 2 * n_qubits
    gates = []
    for q in range(n_qubits):
        gates.append(Gate("RX", q, param_slot=base + 2 * q))
        gates.append(Gate("RZ", q, param_slot=base + 2 * q + 1))
    return gates


def build_lbreaker(n: int) -> list:
    """Canonical entangling layer with qubit ``n`` excluded from every target.

    With ``Q`` the ascending list of the other eight qubits, the first round is
    ``CNOT(Q[i+4] -> Q[i])`` and the second ``CNOT(Q[i] -> Q[i+4])``, i = 0..3.
    """
    if not (isinstance(n, (int, np.integer)) and 0 <= n < N_QUBITS):
        raise InputError(f"lbreaker index must be in 0..{N_QUBITS - 1}, got {n}")
    others = [q for q in range(N_QUBITS) if q != n]
    layer_a = [Gate("CNOT", others[i], control=others[i + 4]) for i in range(4)]
    layer_b = [Gate("CNOT", others[i + 4], control=others[i]) for i in range(4)]
    return layer_a + layer_b


def build_model(n_units: int) -> CircuitSpec:
    if not (isinstance(n_units, (int, np.integer)) and 1 <= n_units <= MAX_UNITS):
        raise InputError(f"n_units must be in 1..{MAX_UNITS}, got {n_units}")
    gates = []
    for u in range(n_units):
        gates += build_lpar(u)
        gates += build_lbreaker(u % N_QUBITS)
    return CircuitSpec(N_QUBITS, tuple(gates), PARAMS_PER_UNIT * n_units)


def init_params(n_params: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).uniform(-math.pi, math.pi, size=n_params)


def random_circuit(n_qubits: int, n_gates: int, rng: np.random.Generator) -> CircuitSpec:
    """Random RX/RZ/CNOT circuit on ``n_qubits``; rotation slots numbered in order."""
    gates = []
    slot = 0
    for _ in range(n_gates):
        kind = rng.choice(["RX", "RZ", "CNOT"] if n_qubits > 1 else ["RX", "RZ"])
        if kind == "CNOT":
            c, t = rng.choice(n_qubits, size=2, replace=False)
            gates.append(Gate("CNOT", int(t), control=int(c)))
        else:
            gates.append(Gate(str(kind), int(rng.integers(n_qubits)), param_slot=slot))
            slot += 1
    return CircuitSpec(n_qubits, tuple(gates), slot)


@dataclass
class Checkpoint:
    n_units: int
    params: list
    seed: int
    topology_version: str = TOPOLOGY_VERSION
    gate_convention: str = GATE_CONVENTION
    extra: dict = field(default_factory=dict)

    def circuit(self) -> CircuitSpec:
        return build_model(self.n_units)

    def to_json(self) -> str:
        doc = {
            "n_units": self.n_units,
            "topology_version": self.topology_version,
            "params": [float(p) for p in self.params],
            "seed": int(self.seed),
            "gate_convention": self.gate_convention,
        }
        doc.update(self.extra)
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str, source: Optional[str] = None) -> "Checkpoint":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as e:
            raise ParseError(f"checkpoint is not valid JSON ({e.msg})", line=e.lineno, source=source) from None
        if not isinstance(doc, dict):
            raise ParseError("checkpoint must be a JSON object", source=source)
        missing = [k for k in ("n_units", "topology_version", "params", "seed", "gate_convention") if k not in doc]
        if missing:
            raise ParseError(f"checkpoint lacks fields {missing}", source=source)
        if doc["topology_version"] not in SUPPORTED_TOPOLOGIES:
            raise IncompatibilityError(
                f"checkpoint topology {doc['topology_version']!r} is not supported (have {SUPPORTED_TOPOLOGIES})"
            )
        if doc["gate_convention"] != GATE_CONVENTION:
            raise IncompatibilityError(
                f"checkpoint gate convention {doc['gate_convention']!r} differs from {GATE_CONVENTION!r}"
            )
        n_units = doc.pop("n_units")
        params = doc.pop("params")
        if not isinstance(n_units, int) or not isinstance(params, list):
            raise ParseError("n_units must be an integer and params a list", source=source)
        if len(params) != PARAMS_PER_UNIT * n_units:
            raise ParseError(
                f"{n_units} units need {PARAMS_PER_UNIT * n_units} parameters, found {len(params)}", source=source
            )
        return cls(
            n_units=n_units,
            params=[float(p) for p in params],
            seed=int(doc.pop("seed")),
            topology_version=doc.pop("topology_version"),
            gate_convention=doc.pop("gate_convention"),
            extra=doc,
        )

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        path = Path(path)
        return cls.from_json(path.read_text(), source=str(path))
