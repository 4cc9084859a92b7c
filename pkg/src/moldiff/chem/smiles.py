"""SMILES reader.

Covers the organic subset, bracket atoms (isotope, chirality, hydrogen
count, charge, atom class), explicit and implicit bonds, branches, ring
closures including ``%nn``, aromatic lowercase atoms and dot-separated
components. Stereo markers are consumed and dropped.
"""

from __future__ import annotations

from moldiff.chem.elements import AROMATIC_BRACKET, AROMATIC_ORGANIC, ELEMENTS, ORGANIC_SUBSET
from moldiff.chem.graph import Atom, Bond, BondOrder, MolGraph


class SmilesError(ValueError):
    """Malformed SMILES input; ``position`` is the offending character offset."""

    def __init__(self, message: str, position: int) -> None:
        super().__init__(f"{message} at offset {position}")
        self.reason = message
        self.position = position


_BOND_SYMBOLS = {
    "-": BondOrder.SINGLE,
    "=": BondOrder.DOUBLE,
    "#": BondOrder.TRIPLE,
    ":": BondOrder.AROMATIC,
    "/": BondOrder.SINGLE,
    "\\": BondOrder.SINGLE,
}


def _parse_bracket(body: str, offset: int) -> Atom:
    pos = 0
    n = len(body)
    start = pos
    while pos < n and body[pos].isdigit():
        pos += 1
    isotope = int(body[start:pos]) if pos > start else 0

    symbol = None
    two = body[pos:pos + 2]
    # nothing but a symbol can put a lowercase letter after an uppercase one
    if len(two) == 2 and two[0].isupper() and two[1].islower():
        if two not in ELEMENTS:
            raise SmilesError(f"unknown element {two!r}", offset + 1 + pos)
        symbol = two
    elif two in AROMATIC_BRACKET:
        symbol = two
    elif pos < n and (body[pos] in ELEMENTS or body[pos] in AROMATIC_BRACKET):
        symbol = body[pos]
    if symbol is None:
        if pos < n and body[pos].isalpha():
            raise SmilesError(f"unknown element {body[pos]!r}", offset + 1 + pos)
        raise SmilesError("malformed bracket atom", offset)
    pos += len(symbol)
    aromatic = symbol[0].islower()
    element = symbol.capitalize() if aromatic else symbol

    if pos < n and body[pos] == "@":
        pos += 1
        if pos < n and body[pos] == "@":
            pos += 1
        elif body[pos:pos + 2] in ("TH", "AL", "SP", "TB", "OH"):
            pos += 2
            while pos < n and body[pos].isdigit():
                pos += 1

    hcount = 0
    if pos < n and body[pos] == "H":
        pos += 1
        hcount = 1
        if pos < n and body[pos].isdigit():
            hcount = int(body[pos])
            pos += 1

    charge = 0
    if pos < n and body[pos] in "+-":
        sign = 1 if body[pos] == "+" else -1
        pos += 1
        if pos < n and body[pos].isdigit():
            start = pos
            while pos < n and body[pos].isdigit():
                pos += 1
            charge = sign * int(body[start:pos])
        else:
            charge = sign
            while pos < n and body[pos] == body[pos - 1]:
                charge += sign
                pos += 1

    if pos < n and body[pos] == ":":
        pos += 1
        start = pos
        while pos < n and body[pos].isdigit():
            pos += 1
        if pos == start:
            raise SmilesError("malformed atom class", offset + 1 + pos)

    if pos != n:
        raise SmilesError("malformed bracket atom", offset + 1 + pos)
    if abs(charge) > 4:
        raise SmilesError("charge out of range", offset)
    return Atom(element, charge=charge, explicit_h=hcount, aromatic=aromatic,
                bracketed=True, isotope=isotope)


def parse_smiles(s: str) -> MolGraph:
    """Parse ``s`` into a :class:`MolGraph`.

    Raises:
        SmilesError: unbalanced parenthesis, unmatched ring closure,
            unknown element or malformed bracket atom, with the offset.
    """
    if not s:
        raise SmilesError("empty SMILES", 0)
    atoms: list[Atom] = []
    pending_bonds: list[tuple[int, int, BondOrder | None, int]] = []
    branch_stack: list[tuple[int, int]] = []
    open_rings: dict[int, tuple[int, BondOrder | None, int]] = {}
    prev: int | None = None
    bond_sym: BondOrder | None = None
    bond_pos = -1
    i = 0
    n = len(s)

    def add_atom(atom: Atom, pos: int) -> None:
        nonlocal prev, bond_sym
        atoms.append(atom)
        idx = len(atoms) - 1
        if prev is not None:
            pending_bonds.append((prev, idx, bond_sym, pos))
        elif bond_sym is not None:
            raise SmilesError("bond without preceding atom", bond_pos)
        prev = idx
        bond_sym = None

    while i < n:
        ch = s[i]
        if ch == "(":
            if prev is None:
                raise SmilesError("branch without preceding atom", i)
            if bond_sym is not None:
                raise SmilesError("bond before branch", bond_pos)
            branch_stack.append((prev, i))
            i += 1
        elif ch == ")":
            if not branch_stack:
                raise SmilesError("unbalanced parenthesis", i)
            if bond_sym is not None:
                raise SmilesError("dangling bond", bond_pos)
            prev = branch_stack.pop()[0]
            i += 1
        elif ch in _BOND_SYMBOLS:
            if bond_sym is not None:
                raise SmilesError("consecutive bond symbols", i)
            bond_sym = _BOND_SYMBOLS[ch]
            bond_pos = i
            i += 1
        elif ch == "$":
            raise SmilesError("quadruple bonds are not supported", i)
        elif ch == ".":
            if bond_sym is not None:
                raise SmilesError("dangling bond", bond_pos)
            if branch_stack:
                raise SmilesError("unbalanced parenthesis", branch_stack[-1][1])
            prev = None
            i += 1
        elif ch.isdigit() or ch == "%":
            start = i
            if ch == "%":
                digits = s[i + 1:i + 3]
                if len(digits) != 2 or not digits.isdigit():
                    raise SmilesError("malformed ring closure", i)
                num = int(digits)
                i += 3
            else:
                num = int(ch)
                i += 1
            if prev is None:
                raise SmilesError("ring closure without atom", start)
            if num in open_rings:
                other, sym, _ = open_rings.pop(num)
                if sym is not None and bond_sym is not None and sym != bond_sym:
                    raise SmilesError("conflicting ring-closure bond", start)
                if other == prev:
                    raise SmilesError("ring closure onto the same atom", start)
                pending_bonds.append((other, prev, bond_sym if bond_sym is not None else sym, start))
            else:
                open_rings[num] = (prev, bond_sym, start)
            bond_sym = None
        elif ch == "[":
            end = s.find("]", i)
            if end == -1:
                raise SmilesError("unterminated bracket atom", i)
            add_atom(_parse_bracket(s[i + 1:end], i), i)
            i = end + 1
        elif ch.isalpha():
            two = s[i:i + 2]
            if two in ("Cl", "Br"):
                add_atom(Atom(two), i)
                i += 2
            elif ch in ORGANIC_SUBSET:
                add_atom(Atom(ch), i)
                i += 1
            elif ch in AROMATIC_ORGANIC:
                add_atom(Atom(ch.upper(), aromatic=True), i)
                i += 1
            else:
                raise SmilesError(f"unknown element {ch!r}", i)
        else:
            raise SmilesError(f"unexpected character {ch!r}", i)

    if bond_sym is not None:
        raise SmilesError("dangling bond", bond_pos)
    if branch_stack:
        raise SmilesError("unbalanced parenthesis", branch_stack[-1][1])
    if open_rings:
        raise SmilesError("unmatched ring closure", min(p for _, _, p in open_rings.values()))

    bonds: list[Bond] = []
    seen: set[tuple[int, int]] = set()
    for a, b, order, pos in pending_bonds:
        key = (min(a, b), max(a, b))
        if key in seen:
            raise SmilesError("duplicate bond", pos)
        seen.add(key)
        both_aromatic = atoms[a].aromatic and atoms[b].aromatic
        if order is None:
            order = BondOrder.AROMATIC if both_aromatic else BondOrder.SINGLE
        elif order is BondOrder.AROMATIC and not both_aromatic:
            raise SmilesError("aromatic bond between non-aromatic atoms", pos)
        bonds.append(Bond(a, b, order))

    mol = MolGraph(atoms, bonds)
    # aromatic bonds outside rings (e.g. implicit biaryl links) are single bonds
    if any(b.order is BondOrder.AROMATIC and not r for b, r in zip(bonds, mol.ring_bonds)):
        bonds = [
            Bond(b.begin, b.end, BondOrder.SINGLE) if b.order is BondOrder.AROMATIC and not r else b
            for b, r in zip(bonds, mol.ring_bonds)
        ]
        mol = MolGraph(atoms, bonds)
    return mol
