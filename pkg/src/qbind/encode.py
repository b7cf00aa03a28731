"""Protein-ligand complex -> 512 occupancy amplitudes.

Pipeline: ``voxelize`` (8 channels on a 32^3 grid of 0.5 A voxels centred on
the ligand centroid) -> ``pool`` (8^3 max pooling to 4^3) -> ``normalize``
(protein and ligand halves each scaled to squared norm 0.5) -> ``to_state``.

Channel order is protein {C, N, O, other} = 0..3, ligand {C, N, O, other} = 4..7.
Vector index is ``c*64 + x*16 + y*4 + z``, so the channel lands on qubits 8..6
and the x, y, z voxel bits on qubits 5..0.
"""
from __future__ import annotations

import io
import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, List, Optional

import numpy as np

from .errors import EncodingError, InputError, ParseError
from .qcore import StateVector

ELEMENT_CLASSES = ("C", "N", "O")
VDW_RADIUS = {"C": 1.9, "N": 1.8, "O": 1.7}
OTHER_RADIUS = 2.0
OCCUPANCY_CUTOFF = 1.5

GRID_SIDE = 16.0
GRID_CELLS = 32
VOXEL = GRID_SIDE / GRID_CELLS
POOL = 8
POOLED = GRID_CELLS // POOL
N_CHANNELS = 8
VECTOR_SIZE = N_CHANNELS * POOLED**3
N_QUBITS = 9

MOLECULES = ("protein", "ligand")
AGGREGATES = ("max", "sum-clamped")

CACHE_MAGIC = b"QBVC"
CACHE_VERSION = 1
_HEADER = struct.Struct("<4sIQ")


@dataclass(frozen=True)
class AtomRecord:
    element: str
    x: float
    y: float
    z: float
    molecule: str

    def __post_init__(self):
        if not self.element:
            raise InputError("atom element must be non-empty")
        if self.molecule not in MOLECULES:
            raise InputError(f"molecule must be one of {MOLECULES}, got {self.molecule!r}")
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise InputError(f"non-finite coordinates for {self.element} atom")


@dataclass
class ComplexRecord:
    atoms: List[AtomRecord]
    pkd: Optional[float] = None
    id: str = ""

    def ligand_atoms(self):
        return [a for a in self.atoms if a.molecule == "ligand"]

    def protein_atoms(self):
        return [a for a in self.atoms if a.molecule == "protein"]

    def to_json(self) -> str:
        doc = {
            "id": self.id,
            "pkd": self.pkd,
            "atoms": [{"el": a.element, "x": a.x, "y": a.y, "z": a.z, "mol": a.molecule} for a in self.atoms],
        }
        return json.dumps(doc)

    @classmethod
    def from_dict(cls, doc: dict) -> "ComplexRecord":
        atoms = [
            AtomRecord(str(a["el"]), float(a["x"]), float(a["y"]), float(a["z"]), str(a["mol"]))
            for a in doc["atoms"]
        ]
        pkd = doc.get("pkd")
        return cls(atoms, None if pkd is None else float(pkd), str(doc.get("id", "")))


@dataclass(frozen=True, eq=False)
class OccupancyVector:
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (VECTOR_SIZE,):
            raise InputError(f"occupancy vector must hold {VECTOR_SIZE} values, got shape {v.shape}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def protein_norm2(self) -> float:
        return float(np.sum(self.values[: VECTOR_SIZE // 2] ** 2))

    def ligand_norm2(self) -> float:
        return float(np.sum(self.values[VECTOR_SIZE // 2 :] ** 2))

    def to_state(self) -> StateVector:
        return to_state(self)


@dataclass(frozen=True)
class EncodeConfig:
    aggregate: str = "max"

    def __post_init__(self):
        if self.aggregate not in AGGREGATES:
            raise InputError(f"aggregate must be one of {AGGREGATES}, got {self.aggregate!r}")


def element_class(element: str) -> int:
    """0, 1, 2 for C, N, O; 3 for everything else (hydrogens included)."""
    e = element.strip().upper()
    return ELEMENT_CLASSES.index(e) if e in ELEMENT_CLASSES else 3


def vdw_radius(element: str) -> float:
    return VDW_RADIUS.get(element.strip().upper(), OTHER_RADIUS)


def channel(element: str, molecule: str) -> int:
    return element_class(element) + (4 if molecule == "ligand" else 0)


def occupancy(r):
    """Atomic occupancy at normalised distance ``r`` (distance / vdW radius).

    ``exp(-2 r^2)`` inside the radius, ``((3 - 2r)/e)^2`` out to 1.5 radii,
    zero beyond.  Accepts scalars or arrays.
    """
    arr = np.asarray(r, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise InputError("normalised distance must be non-negative")
    out = np.where(arr < 1.0, np.exp(-2.0 * arr**2), ((3.0 - 2.0 * arr) / math.e) ** 2)
    out = np.where(arr >= OCCUPANCY_CUTOFF, 0.0, out)
    return float(out) if np.ndim(r) == 0 else out


def ligand_centroid(cx: ComplexRecord) -> np.ndarray:
    lig = cx.ligand_atoms()
    if not lig:
        raise EncodingError(f"complex {cx.id!r} has no ligand atoms")
    heavy = [a for a in lig if a.element.strip().upper() != "H"] or lig
    return np.mean([[a.x, a.y, a.z] for a in heavy], axis=0)


def voxelize(cx: ComplexRecord, config: EncodeConfig = EncodeConfig()) -> np.ndarray:
    """8-channel occupancy grid, shape ``(8, 32, 32, 32)``."""
    centre = ligand_centroid(cx)
    grid = np.zeros((N_CHANNELS, GRID_CELLS, GRID_CELLS, GRID_CELLS))
    # voxel centres relative to the ligand centroid
    axis = -GRID_SIDE / 2 + (np.arange(GRID_CELLS) + 0.5) * VOXEL
    for atom in cx.atoms:
        radius = vdw_radius(atom.element)
        reach = OCCUPANCY_CUTOFF * radius
        pos = np.array([atom.x, atom.y, atom.z]) - centre
        lo = np.searchsorted(axis, pos - reach, side="left")
        hi = np.searchsorted(axis, pos + reach, side="right")
        if np.any(hi <= lo):
            continue
        dx = (axis[lo[0] : hi[0]] - pos[0])[:, None, None]
        dy = (axis[lo[1] : hi[1]] - pos[1])[None, :, None]
        dz = (axis[lo[2] : hi[2]] - pos[2])[None, None, :]
        r = np.sqrt(dx**2 + dy**2 + dz**2) / radius
        contrib = occupancy(r)
        block = grid[channel(atom.element, atom.molecule), lo[0] : hi[0], lo[1] : hi[1], lo[2] : hi[2]]
        if config.aggregate == "max":
            np.maximum(block, contrib, out=block)
        else:
            block += contrib
    if config.aggregate == "sum-clamped":
        np.minimum(grid, 1.0, out=grid)
    return grid


def pool(grid: np.ndarray) -> np.ndarray:
    """Disjoint 8^3 max pooling per channel: ``(8, 32, 32, 32) -> (8, 4, 4, 4)``."""
    grid = np.asarray(grid, dtype=float)
    if grid.shape != (N_CHANNELS, GRID_CELLS, GRID_CELLS, GRID_CELLS):
        raise InputError(f"grid must have shape (8, 32, 32, 32), got {grid.shape}")
    g = grid.reshape(N_CHANNELS, POOLED, POOL, POOLED, POOL, POOLED, POOL)
    return g.max(axis=(2, 4, 6))


def normalize(pooled: np.ndarray) -> OccupancyVector:
    pooled = np.asarray(pooled, dtype=float)
    if pooled.shape != (N_CHANNELS, POOLED, POOLED, POOLED):
        raise InputError(f"pooled grid must have shape (8, 4, 4, 4), got {pooled.shape}")
    flat = pooled.reshape(-1)
    half = VECTOR_SIZE // 2
    prot, lig = flat[:half], flat[half:]
    sp, sl = float(np.sum(prot**2)), float(np.sum(lig**2))
    if sp <= 0.0:
        raise EncodingError("no protein occupancy inside the grid")
    if sl <= 0.0:
        raise EncodingError("no ligand occupancy inside the grid")
    return OccupancyVector(np.concatenate([prot * math.sqrt(0.5 / sp), lig * math.sqrt(0.5 / sl)]))


def to_state(v: OccupancyVector, atol: float = 1e-9) -> StateVector:
    p, l = v.protein_norm2(), v.ligand_norm2()
    if abs(p - 0.5) > atol or abs(l - 0.5) > atol:
        raise InputError(f"occupancy vector not split-normalised (protein {p:.3g}, ligand {l:.3g})")
    return StateVector(N_QUBITS, v.values.astype(complex))


def vector_index(c: int, x: int, y: int, z: int) -> int:
    return c * 64 + x * 16 + y * 4 + z


def encode(cx: ComplexRecord, config: EncodeConfig = EncodeConfig()) -> OccupancyVector:
    return normalize(pool(voxelize(cx, config)))


# --- parsing ---------------------------------------------------------------

def _read_text(source) -> tuple:
    """Return ``(text, name)`` for a path, file object or literal text wrapper."""
    if isinstance(source, io.IOBase) or hasattr(source, "read"):
        return source.read(), getattr(source, "name", "<stream>")
    path = Path(source)
    try:
        return path.read_text(), str(path)
    except OSError as e:
        raise OSError(f"cannot read {path}: {e.strerror}") from e


def parse_pdb(text: str, molecule: str = "protein", source: str = "<pdb>") -> List[AtomRecord]:
    atoms = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.startswith(("ATOM", "HETATM")):
            continue
        try:
            x, y, z = float(line[30:38]), float(line[38:46]), float(line[46:54])
        except ValueError:
            raise ParseError("bad coordinate columns", line=lineno, source=source) from None
        element = line[76:78].strip() if len(line) >= 77 else ""
        if not element:
            name = "".join(ch for ch in line[12:16] if ch.isalpha())
            if not name:
                raise ParseError("no element symbol or atom name", line=lineno, source=source)
            element = name[0]
        atoms.append(AtomRecord(element.capitalize(), x, y, z, molecule))
    if not atoms:
        raise ParseError("no ATOM/HETATM records", source=source)
    return atoms


def parse_ligand(text: str, source: str = "<ligand>") -> List[AtomRecord]:
    """Ligand atoms from ``element x y z`` lines or JSON-lines ``{"el", "x", "y", "z"}``.

    Blank lines and ``#`` comments are skipped.
    """
    atoms = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            if line.startswith("{"):
                d = json.loads(line)
                atoms.append(AtomRecord(str(d["el"]), float(d["x"]), float(d["y"]), float(d["z"]), "ligand"))
            else:
                parts = line.split()
                if len(parts) != 4:
                    raise ValueError(f"expected 4 fields, got {len(parts)}")
                atoms.append(AtomRecord(parts[0], float(parts[1]), float(parts[2]), float(parts[3]), "ligand"))
        except (ValueError, KeyError, TypeError) as e:
            raise ParseError(f"malformed ligand line ({e})", line=lineno, source=source) from None
    if not atoms:
        raise ParseError("no ligand atoms", source=source)
    return atoms


def parse_complex(protein_source, ligand_source, pkd: Optional[float] = None, id: str = "") -> ComplexRecord:
    ptext, pname = _read_text(protein_source)
    ltext, lname = _read_text(ligand_source)
    protein = parse_pdb(ptext, "protein", pname)
    if lname.endswith(".pdb"):
        ligand = parse_pdb(ltext, "ligand", lname)
    else:
        ligand = parse_ligand(ltext, lname)
    return ComplexRecord(protein + ligand, pkd, id)


def read_dataset(path) -> List[ComplexRecord]:
    """Read a JSON-lines dataset, one complex per line."""
    records = []
    path = Path(path)
    with path.open() as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                records.append(ComplexRecord.from_dict(json.loads(line)))
            except (ValueError, KeyError, TypeError) as e:
                raise ParseError(f"bad complex record ({e})", line=lineno, source=str(path)) from None
    return records


def write_dataset(records: Iterable[ComplexRecord], path) -> None:
    with Path(path).open("w") as fh:
        for r in records:
            fh.write(r.to_json() + "\n")


# --- encoded-vector cache ----------------------------------------------------

@dataclass
class EncodedSet:
    ids: List[str]
    vectors: np.ndarray  # (count, 512)
    pkd: List[Optional[float]] = field(default_factory=list)

    def __len__(self):
        return len(self.ids)

    def amplitudes(self) -> np.ndarray:
        """Columns are the input states, shape ``(512, count)``."""
        return np.ascontiguousarray(self.vectors.T).astype(complex)


def sidecar_path(path) -> Path:
    return Path(str(path) + ".json")


def write_cache(encoded: EncodedSet, path) -> None:
    """Binary vectors plus a JSON sidecar holding ids and pK_d labels."""
    vecs = np.ascontiguousarray(encoded.vectors, dtype="<f8").reshape(-1, VECTOR_SIZE)
    if vecs.shape[0] != len(encoded.ids):
        raise InputError("vector count does not match id count")
    with Path(path).open("wb") as fh:
        fh.write(_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, vecs.shape[0]))
        fh.write(vecs.tobytes())
    pkd = list(encoded.pkd) if encoded.pkd else [None] * len(encoded.ids)
    sidecar_path(path).write_text(json.dumps({"ids": list(encoded.ids), "pkd": pkd}) + "\n")


def read_cache(path) -> EncodedSet:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER.size:
        raise ParseError("truncated cache header", source=str(path))
    magic, version, count = _HEADER.unpack_from(data)
    if magic != CACHE_MAGIC:
        raise ParseError(f"bad cache magic {magic!r}", source=str(path))
    if version != CACHE_VERSION:
        raise ParseError(f"unsupported cache version {version}", source=str(path))
    body = data[_HEADER.size :]
    if len(body) != count * VECTOR_SIZE * 8:
        raise ParseError(f"cache body holds {len(body)} bytes, expected {count * VECTOR_SIZE * 8}", source=str(path))
    vecs = np.frombuffer(body, dtype="<f8").reshape(count, VECTOR_SIZE).astype(float)
    try:
        meta = json.loads(sidecar_path(path).read_text())
    except (OSError, ValueError) as e:
        raise ParseError(f"cannot read cache sidecar ({e})", source=str(sidecar_path(path))) from None
    if len(meta.get("ids", [])) != count:
        raise ParseError("sidecar id count does not match cache", source=str(sidecar_path(path)))
    return EncodedSet(list(meta["ids"]), vecs, list(meta.get("pkd") or [None] * count))
