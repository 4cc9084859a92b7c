"""Molecular graph types and derived structure (rings, hydrogens)."""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from functools import cached_property

from moldiff.chem.elements import ELEMENTS, default_valences, allowed_valences


class BondOrder(enum.IntEnum):
    SINGLE = 1
    DOUBLE = 2
    TRIPLE = 3
    AROMATIC = 4

    @property
    def valence(self) -> int:
        """Contribution to the bond-order sum; aromatic bonds count as one."""
        return 1 if self is BondOrder.AROMATIC else int(self)


@dataclass(frozen=True)
class Atom:
    element: str
    charge: int = 0
    explicit_h: int = 0
    aromatic: bool = False
    bracketed: bool = False
    isotope: int = 0

    def __post_init__(self) -> None:
        if self.element not in ELEMENTS:
            raise ValueError(f"unsupported element {self.element!r}")
        if abs(self.charge) > 4:
            raise ValueError(f"charge {self.charge} outside [-4, 4]")
        if not 0 <= self.explicit_h <= 9:
            raise ValueError(f"explicit hydrogen count {self.explicit_h} outside [0, 9]")

    @property
    def symbol(self) -> str:
        return self.element.lower() if self.aromatic else self.element


@dataclass(frozen=True)
class Bond:
    begin: int
    end: int
    order: BondOrder = BondOrder.SINGLE

    def __post_init__(self) -> None:
        if self.begin == self.end:
            raise ValueError("bond endpoints must be distinct")

    def other(self, idx: int) -> int:
        return self.end if idx == self.begin else self.begin


@dataclass(eq=False)
class MolGraph:
    """Atoms and bonds of a (possibly multi-component) molecule.

    Hydrogens on unbracketed atoms are implicit and recomputed from the
    current bonds, so subgraphs produced by bond cleavage pick up the
    hydrogens that cap the broken valence.
    """

    atoms: list[Atom]
    bonds: list[Bond] = field(default_factory=list)

    def __post_init__(self) -> None:
        n = len(self.atoms)
        seen: set[tuple[int, int]] = set()
        for b in self.bonds:
            if not (0 <= b.begin < n and 0 <= b.end < n):
                raise ValueError(f"bond ({b.begin}, {b.end}) outside atom range")
            key = (min(b.begin, b.end), max(b.begin, b.end))
            if key in seen:
                raise ValueError(f"duplicate bond between atoms {key}")
            seen.add(key)

    @property
    def num_atoms(self) -> int:
        return len(self.atoms)

    @cached_property
    def adjacency(self) -> list[list[tuple[int, int]]]:
        """Per atom, list of ``(neighbor, bond index)`` pairs."""
        adj: list[list[tuple[int, int]]] = [[] for _ in self.atoms]
        for k, b in enumerate(self.bonds):
            adj[b.begin].append((b.end, k))
            adj[b.end].append((b.begin, k))
        return adj

    def degree(self, idx: int) -> int:
        return len(self.adjacency[idx])

    def bond_between(self, i: int, j: int) -> Bond | None:
        for nb, k in self.adjacency[i]:
            if nb == j:
                return self.bonds[k]
        return None

    @cached_property
    def ring_bonds(self) -> list[bool]:
        """A bond lies on a ring iff it is not a bridge."""
        n = self.num_atoms
        disc = [-1] * n
        low = [0] * n
        bridge = [False] * len(self.bonds)
        timer = 0
        for root in range(n):
            if disc[root] != -1:
                continue
            disc[root] = low[root] = timer
            timer += 1
            stack = [(root, -1, iter(self.adjacency[root]))]
            while stack:
                u, in_bond, it = stack[-1]
                advanced = False
                for v, k in it:
                    if k == in_bond:
                        continue
                    if disc[v] == -1:
                        disc[v] = low[v] = timer
                        timer += 1
                        stack.append((v, k, iter(self.adjacency[v])))
                        advanced = True
                        break
                    low[u] = min(low[u], disc[v])
                if advanced:
                    continue
                stack.pop()
                if stack:
                    p = stack[-1][0]
                    low[p] = min(low[p], low[u])
                    if low[u] > disc[p]:
                        bridge[in_bond] = True
        return [not x for x in bridge]

    @cached_property
    def ring_atoms(self) -> list[bool]:
        flags = [False] * self.num_atoms
        for b, ring in zip(self.bonds, self.ring_bonds):
            if ring:
                flags[b.begin] = flags[b.end] = True
        return flags

    @cached_property
    def components(self) -> list[list[int]]:
        seen = [False] * self.num_atoms
        comps = []
        for start in range(self.num_atoms):
            if seen[start]:
                continue
            seen[start] = True
            stack, comp = [start], []
            while stack:
                u = stack.pop()
                comp.append(u)
                for v, _ in self.adjacency[u]:
                    if not seen[v]:
                        seen[v] = True
                        stack.append(v)
            comps.append(sorted(comp))
        return comps

    def bond_order_sum(self, idx: int) -> int:
        return sum(self.bonds[k].order.valence for _, k in self.adjacency[idx])

    @cached_property
    def hydrogens(self) -> list[int]:
        """Total attached hydrogen count per atom (explicit or implicit)."""
        return [self._hydrogens(i) for i in range(self.num_atoms)]

    def _hydrogens(self, idx: int) -> int:
        atom = self.atoms[idx]
        if atom.bracketed:
            return atom.explicit_h
        return self.implicit_hydrogens(idx)

    def implicit_hydrogens(self, idx: int) -> int:
        """Hydrogens the organic-subset rule assigns to atom ``idx`` if written bare."""
        atom = self.atoms[idx]
        used = self.bond_order_sum(idx)
        valences = default_valences(atom.element)
        if atom.aromatic:
            low = valences[0]
            if used + 1 <= low:
                return low - used - 1
            return max(0, low - used)
        for v in valences:
            if v >= used:
                return v - used
        return 0

    @cached_property
    def needs_pi(self) -> list[bool]:
        """Aromatic atoms that must receive a double bond in a Kekule form."""
        flags = []
        for i, atom in enumerate(self.atoms):
            if not atom.aromatic:
                flags.append(False)
                continue
            allowed = allowed_valences(atom.element, atom.charge)
            used = self.bond_order_sum(i) + self.hydrogens[i]
            flags.append(bool(allowed) and used + 1 <= allowed[0])
        return flags

    @cached_property
    def heavy_atoms(self) -> list[int]:
        return [i for i, a in enumerate(self.atoms) if a.element != "H"]

    def subgraph(self, atom_indices: list[int], drop_bonds: set[int] = frozenset()) -> "MolGraph":
        """Induced subgraph on ``atom_indices`` (kept in the given order)."""
        remap = {old: new for new, old in enumerate(atom_indices)}
        bonds = [
            Bond(remap[b.begin], remap[b.end], b.order)
            for k, b in enumerate(self.bonds)
            if k not in drop_bonds and b.begin in remap and b.end in remap
        ]
        return MolGraph([self.atoms[i] for i in atom_indices], bonds)

    def permuted(self, order: list[int]) -> "MolGraph":
        """Same molecule with atoms listed in ``order`` (a permutation)."""
        return self.subgraph(list(order))
