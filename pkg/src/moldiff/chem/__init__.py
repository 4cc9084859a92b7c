"""Molecular graphs from SMILES: validity, canonical form, fingerprints, fragments."""

from moldiff.chem.canon import canonical_smiles
from moldiff.chem.fingerprint import BitFingerprint, morgan_fingerprint, tanimoto
from moldiff.chem.graph import Atom, Bond, BondOrder, MolGraph
from moldiff.chem.props import PropertyVector, toy_properties
from moldiff.chem.recap import CleavageRecord, recap_fragment
from moldiff.chem.smiles import SmilesError, parse_smiles
from moldiff.chem.valence import ValidityReport, Violation, validate


def canonicalize(smiles: str) -> str | None:
    """Canonical form of ``smiles``, or None when it does not parse and validate."""
    try:
        mol = parse_smiles(smiles)
    except SmilesError:
        return None
    if not validate(mol).valid:
        return None
    return canonical_smiles(mol)


__all__ = [
    "Atom", "Bond", "BondOrder", "MolGraph", "SmilesError", "parse_smiles",
    "ValidityReport", "Violation", "validate", "canonical_smiles", "canonicalize",
    "BitFingerprint", "morgan_fingerprint", "tanimoto", "CleavageRecord",
    "recap_fragment", "PropertyVector", "toy_properties",
]
