"""Valence validation of parsed molecules."""

from __future__ import annotations

from dataclasses import dataclass, field

import networkx as nx

from moldiff.chem.elements import allowed_valences
from moldiff.chem.graph import BondOrder, MolGraph


@dataclass(frozen=True)
class Violation:
    atom: int
    element: str
    reason: str
    valence: int = 0
    allowed: tuple[int, ...] = ()


@dataclass
class ValidityReport:
    valid: bool
    violations: list[Violation] = field(default_factory=list)


def kekule_double_bonds(mol: MolGraph) -> tuple[set[int], list[int]]:
    """Place one double bond on every aromatic atom that needs a pi bond.

    Returns the aromatic bond indices promoted to double, and the atoms that
    could not be matched (an empty list means a Kekule form exists).
    """
    needs = mol.needs_pi
    g = nx.Graph()
    g.add_nodes_from(i for i, flag in enumerate(needs) if flag)
    for k, b in enumerate(mol.bonds):
        if b.order is BondOrder.AROMATIC and needs[b.begin] and needs[b.end]:
            g.add_edge(b.begin, b.end, bond=k)
    matching = nx.max_weight_matching(g, maxcardinality=True)
    doubles = {g.edges[u, v]["bond"] for u, v in matching}
    matched = {u for edge in matching for u in edge}
    unmatched = sorted(i for i in g.nodes if i not in matched)
    return doubles, unmatched


def validate(mol: MolGraph) -> ValidityReport:
    """Check every atom against the charge-adjusted valence table.

    Aromatic bonds count as single bonds plus one double bond per atom that
    requires a pi bond; atoms left without a partner (odd or broken aromatic
    systems) are reported as un-kekulizable.
    """
    violations: list[Violation] = []
    doubles, unmatched = kekule_double_bonds(mol)
    pi_extra = [0] * mol.num_atoms
    for k in doubles:
        b = mol.bonds[k]
        pi_extra[b.begin] += 1
        pi_extra[b.end] += 1
    for i in unmatched:
        violations.append(Violation(i, mol.atoms[i].element, "cannot kekulize aromatic system"))

    for i, atom in enumerate(mol.atoms):
        if atom.aromatic and not mol.ring_atoms[i]:
            violations.append(Violation(i, atom.element, "aromatic atom outside a ring"))
        allowed = allowed_valences(atom.element, atom.charge)
        used = mol.bond_order_sum(i) + pi_extra[i] + mol.hydrogens[i]
        if not allowed:
            violations.append(Violation(i, atom.element, "unsupported charge state", used, allowed))
        elif used > allowed[-1]:
            violations.append(Violation(i, atom.element, "valence exceeded", used, allowed))
    violations.sort(key=lambda v: v.atom)
    return ValidityReport(not violations, violations)


def is_valid(mol: MolGraph) -> bool:
    return validate(mol).valid
