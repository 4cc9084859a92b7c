"""Recap-style retrosynthetic fragmentation.

Eight of the classical Recap bond types are recognised directly on the
graph. Each matching acyclic bond is severed; atoms are never added or
removed, and severed valences are capped with hydrogens.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

from moldiff.chem.graph import BondOrder, MolGraph

RULES = (
    "urea",
    "amide",
    "ester",
    "amine",
    "ether",
    "sulfonamide",
    "aromatic_nitrogen",
    "biaryl",
)


@dataclass(frozen=True)
class CleavageRecord:
    rule_name: str
    label: str
    fragment_ids: tuple[int, int]
    bond: int
    atoms: tuple[int, int]


class _View:
    """Pattern helpers over one molecule."""

    def __init__(self, mol: MolGraph) -> None:
        self.mol = mol
        self.adj = mol.adjacency

    def el(self, i: int) -> str:
        return self.mol.atoms[i].element

    def arom(self, i: int) -> bool:
        return self.mol.atoms[i].aromatic

    def neutral(self, i: int) -> bool:
        return self.mol.atoms[i].charge == 0

    def double_partners(self, i: int) -> list[int]:
        return [j for j, k in self.adj[i] if self.mol.bonds[k].order is BondOrder.DOUBLE]

    def is_carbonyl(self, i: int) -> bool:
        return self.el(i) == "C" and not self.arom(i) and any(self.el(j) == "O" for j in self.double_partners(i))

    def is_acyl_like(self, i: int) -> bool:
        """Carbon double-bonded to N, O, P or S (excludes amine/ether neighbours)."""
        return self.el(i) == "C" and any(self.el(j) in ("N", "O", "P", "S") for j in self.double_partners(i))

    def amine_n(self, i: int) -> bool:
        return self.el(i) == "N" and not self.arom(i) and self.neutral(i) and self.mol.degree(i) >= 2

    def n_neighbors(self, i: int) -> list[int]:
        return [j for j, _ in self.adj[i] if self.el(j) == "N" and not self.arom(j)]

    def sulfonyl(self, i: int) -> bool:
        return self.el(i) == "S" and sum(1 for j in self.double_partners(i) if self.el(j) == "O") == 2


def _match(v: _View, k: int) -> str | None:
    mol = v.mol
    b = mol.bonds[k]
    if b.order is not BondOrder.SINGLE or mol.ring_bonds[k]:
        return None
    i, j = b.begin, b.end
    for a, c in ((i, j), (j, i)):
        if v.is_carbonyl(c) and v.amine_n(a) and len(v.n_neighbors(c)) >= 2:
            # one bond per urea: the nitrogen listed first
            first_n = min(v.n_neighbors(c))
            if a == first_n and all(v.amine_n(x) for x in v.n_neighbors(c)):
                return "urea"
            return None
    for a, c in ((i, j), (j, i)):
        if v.is_carbonyl(c) and v.amine_n(a):
            return "amide"
    for a, c in ((i, j), (j, i)):
        if v.is_carbonyl(c) and v.el(a) == "O" and v.neutral(a) and mol.degree(a) == 2:
            return "ester"
    for a, c in ((i, j), (j, i)):
        # terminal methyls stay on the nitrogen
        if (v.amine_n(a) and v.el(c) == "C" and not v.arom(c) and mol.degree(c) >= 2
                and not any(v.is_acyl_like(x) or v.sulfonyl(x) for x, _ in v.adj[a])):
            return "amine"
    for a, c in ((i, j), (j, i)):
        if (v.el(a) == "O" and not v.arom(a) and v.neutral(a) and mol.degree(a) == 2
                and not mol.ring_atoms[a] and v.el(c) == "C"):
            partners = [x for x, _ in v.adj[a]]
            if all(v.el(x) == "C" for x in partners) and not any(v.is_acyl_like(x) for x in partners):
                # cleave toward the aliphatic carbon; ties go to the lower index
                ranked = sorted(partners, key=lambda x: (v.arom(x), x))
                return "ether" if c == ranked[0] else None
    for a, c in ((i, j), (j, i)):
        if v.amine_n(a) and v.sulfonyl(c):
            return "sulfonamide"
    for a, c in ((i, j), (j, i)):
        if (v.el(c) == "C" and v.arom(c) and v.amine_n(a)
                and not any(v.is_acyl_like(x) or v.sulfonyl(x) for x, _ in v.adj[a])):
            return "aromatic_nitrogen"
        if v.el(a) == "N" and v.arom(a) and v.neutral(a) and v.el(c) == "C" and not v.arom(c):
            return "aromatic_nitrogen"
    if v.el(i) == "C" and v.el(j) == "C" and v.arom(i) and v.arom(j):
        return "biaryl"
    return None


def bond_label(mol: MolGraph, k: int) -> str:
    b = mol.bonds[k]
    lo, hi = sorted((b.begin, b.end))
    return f"{mol.atoms[lo].element} {mol.atoms[hi].element} {b.order.name}"


def recap_fragment(mol: MolGraph, rules: tuple[str, ...] = RULES) -> tuple[list[MolGraph], list[CleavageRecord]]:
    """Sever every acyclic bond matching an enabled rule.

    Fragments are ordered by their lowest original atom index; each
    record's label names the endpoint elements in original atom order,
    e.g. ``"O C SINGLE"``.
    """
    view = _View(mol)
    cut: dict[int, str] = {}
    for k in range(len(mol.bonds)):
        rule = _match(view, k)
        if rule is not None and rule in rules:
            cut[k] = rule
    if not cut:
        return [mol], []

    lost = [0] * mol.num_atoms
    for k in cut:
        lost[mol.bonds[k].begin] += 1
        lost[mol.bonds[k].end] += 1
    capped = [
        replace(a, bracketed=True, explicit_h=mol.hydrogens[i] + lost[i]) if lost[i] else a
        for i, a in enumerate(mol.atoms)
    ]
    broken = MolGraph(capped, mol.bonds).subgraph(list(range(mol.num_atoms)), drop_bonds=set(cut))
    comps = sorted(broken.components, key=min)
    owner = {}
    for f, comp in enumerate(comps):
        for a in comp:
            owner[a] = f
    fragments = [broken.subgraph(comp) for comp in comps]
    records = []
    for k in sorted(cut):
        b = mol.bonds[k]
        lo, hi = sorted((b.begin, b.end))
        records.append(CleavageRecord(cut[k], bond_label(mol, k), (owner[lo], owner[hi]), k, (lo, hi)))
    return fragments, records
