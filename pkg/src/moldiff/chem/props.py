"""Toy property oracle: molecular weight, ring count, heteroatom fraction."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from moldiff.chem.elements import atomic_mass
from moldiff.chem.graph import MolGraph

HYDROGEN_MASS = atomic_mass("H")


@dataclass(frozen=True)
class PropertyVector:
    mw: float
    rings: int
    hetero_frac: float

    def as_dict(self) -> dict[str, float]:
        return {k: float(v) for k, v in asdict(self).items()}


def ring_count(mol: MolGraph) -> int:
    """Size of the smallest set of smallest rings (the cycle rank)."""
    return len(mol.bonds) - mol.num_atoms + len(mol.components)


def toy_properties(mol: MolGraph) -> PropertyVector:
    mw = sum(atomic_mass(a.element) for a in mol.atoms) + HYDROGEN_MASS * sum(mol.hydrogens)
    heavy = mol.heavy_atoms
    hetero = sum(1 for i in heavy if mol.atoms[i].element != "C")
    return PropertyVector(mw=mw, rings=ring_count(mol), hetero_frac=hetero / len(heavy) if heavy else 0.0)
