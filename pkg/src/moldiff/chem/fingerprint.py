"""ECFP-style circular fingerprints and Tanimoto similarity."""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass

import numpy as np

from moldiff.chem.elements import atomic_number
from moldiff.chem.graph import MolGraph


@dataclass(frozen=True, eq=False)
class BitFingerprint:
    bits: np.ndarray  # bool, shape (width,)
    radius: int = 2

    @property
    def width(self) -> int:
        return int(self.bits.shape[0])

    @property
    def on_bits(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.bits)]

    def popcount(self) -> int:
        return int(self.bits.sum())

    def to_hex(self) -> str:
        """Lowercase hex, most-significant bit (index ``width - 1``) first."""
        value = 0
        for i in self.on_bits:
            value |= 1 << i
        return format(value, f"0{self.width // 4}x")

    @classmethod
    def from_hex(cls, text: str, radius: int = 2) -> "BitFingerprint":
        width = 4 * len(text)
        value = int(text, 16)
        bits = np.array([(value >> i) & 1 for i in range(width)], dtype=bool)
        return cls(bits, radius)

    @classmethod
    def from_on_bits(cls, on: list[int], width: int = 2048, radius: int = 2) -> "BitFingerprint":
        bits = np.zeros(width, dtype=bool)
        bits[list(on)] = True
        return cls(bits, radius)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, BitFingerprint) and np.array_equal(self.bits, other.bits)


def _hash(values: tuple[int, ...]) -> int:
    data = struct.pack(f"<{len(values)}q", *values)
    return int.from_bytes(hashlib.blake2b(data, digest_size=8).digest(), "little") >> 1


def morgan_fingerprint(mol: MolGraph, radius: int = 2, width: int = 2048) -> BitFingerprint:
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if width <= 0 or width & (width - 1):
        raise ValueError("width must be a power of two")
    ids = [
        _hash((
            atomic_number(a.element),
            mol.degree(i),
            a.charge,
            mol.hydrogens[i],
            int(mol.ring_atoms[i]),
        ))
        for i, a in enumerate(mol.atoms)
    ]
    bits = np.zeros(width, dtype=bool)
    for x in ids:
        bits[x % width] = True
    for r in range(1, radius + 1):
        new = []
        for i in range(mol.num_atoms):
            env = sorted((int(mol.bonds[k].order), ids[j]) for j, k in mol.adjacency[i])
            flat = [r, ids[i]]
            for order, nid in env:
                flat.extend((order, nid))
            new.append(_hash(tuple(flat)))
        ids = new
        for x in ids:
            bits[x % width] = True
    return BitFingerprint(bits, radius)


def tanimoto(a: BitFingerprint, b: BitFingerprint) -> float:
    if a.width != b.width:
        raise ValueError(f"fingerprint widths differ: {a.width} vs {b.width}")
    union = int(np.logical_or(a.bits, b.bits).sum())
    if union == 0:
        return 1.0
    return int(np.logical_and(a.bits, b.bits).sum()) / union
