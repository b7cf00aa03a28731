"""Seeded synthetic complexes and teacher-labelled datasets for tests and experiments."""
from __future__ import annotations

import numpy as np

from .circuit import build_model, init_params
from .encode import AtomRecord, ComplexRecord, EncodedSet, encode
from .grad import forward_many
from .train import dg_to_pkd, pkd_to_dg

ELEMENTS = ("C", "C", "C", "N", "O", "S", "H")


def _ball(rng, n, radius):
    v = rng.normal(size=(n, 3))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    return v * radius * rng.uniform(0, 1, size=(n, 1)) ** (1 / 3)


def synthetic_complex(rng: np.random.Generator, id: str = "", pkd=None,
                      n_ligand=(8, 30), n_protein=(60, 200)) -> ComplexRecord:
    """A ligand blob near a random centre surrounded by a shell of protein atoms."""
    centre = rng.uniform(-50, 50, size=3)
    nl = int(rng.integers(*n_ligand))
    np_ = int(rng.integers(*n_protein))
    lig = centre + _ball(rng, nl, 3.5)
    direction = rng.normal(size=(np_, 3))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    prot = centre + direction * rng.uniform(4.0, 11.0, size=(np_, 1))
    atoms = [AtomRecord(str(rng.choice(ELEMENTS)), *map(float, p), "ligand") for p in lig]
    atoms += [AtomRecord(str(rng.choice(ELEMENTS)), *map(float, p), "protein") for p in prot]
    return ComplexRecord(atoms, pkd, id)


def synthetic_complexes(n: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    return [synthetic_complex(rng, id=f"syn{i:04d}", pkd=float(rng.uniform(2, 11))) for i in range(n)]


def encode_all(records) -> EncodedSet:
    vecs = [encode(r).values for r in records]
    return EncodedSet([r.id for r in records], np.array(vecs), [r.pkd for r in records])


def teacher_dataset(n: int, seed: int, teacher_units: int = 2, teacher_seed: int = 12345):
    """Encoded synthetic complexes labelled by a hidden random circuit.

    Returns ``(EncodedSet, labels_dg)``; the set's pK_d entries are the labels
    converted back so the dataset round-trips through the cache format.
    """
    enc = encode_all(synthetic_complexes(n, seed))
    teacher = build_model(teacher_units)
    theta = init_params(teacher.n_params, teacher_seed)
    labels = forward_many(teacher, theta, enc.amplitudes())
    enc.pkd = [dg_to_pkd(float(y)) for y in labels]
    return enc, np.array([pkd_to_dg(p) for p in enc.pkd])
