"""Canonical atom ranking and SMILES emission."""

from __future__ import annotations

from moldiff.chem.elements import AROMATIC_ORGANIC, ORGANIC_SUBSET, atomic_number
from moldiff.chem.graph import BondOrder, MolGraph

# leaves explored when ties survive refinement; beyond it, the first branch wins
TIE_BREAK_BUDGET = 512


def _dense_ranks(keys: list) -> list[int]:
    order = sorted(set(keys))
    lookup = {k: r for r, k in enumerate(order)}
    return [lookup[k] for k in keys]


def initial_invariants(mol: MolGraph) -> list[tuple]:
    invariants = []
    for i, a in enumerate(mol.atoms):
        invariants.append((
            atomic_number(a.element),
            a.isotope,
            mol.degree(i),
            a.charge,
            mol.hydrogens[i],
            int(mol.ring_atoms[i]),
            int(a.aromatic),
        ))
    return invariants


def refine(mol: MolGraph, ranks: list[int]) -> list[int]:
    """Refine ranks by neighbourhood until the partition stops splitting."""
    adj = mol.adjacency
    n_classes = len(set(ranks))
    while True:
        keys = [
            (ranks[i], tuple(sorted((int(mol.bonds[k].order), ranks[j]) for j, k in adj[i])))
            for i in range(mol.num_atoms)
        ]
        new = _dense_ranks(keys)
        n_new = len(set(new))
        if n_new == n_classes:
            return new
        ranks, n_classes = new, n_new


def _atom_text(mol: MolGraph, i: int) -> str:
    a = mol.atoms[i]
    h = mol.hydrogens[i]
    plain = a.charge == 0 and a.isotope == 0 and (
        a.symbol in AROMATIC_ORGANIC if a.aromatic else a.element in ORGANIC_SUBSET
    )
    # bare only when re-parsing reproduces the same hydrogen count
    if plain and mol.implicit_hydrogens(i) == h:
        return a.symbol
    parts = ["["]
    if a.isotope:
        parts.append(str(a.isotope))
    parts.append(a.symbol)
    if h:
        parts.append("H" if h == 1 else f"H{h}")
    if a.charge:
        sign = "+" if a.charge > 0 else "-"
        parts.append(sign if abs(a.charge) == 1 else f"{sign}{abs(a.charge)}")
    parts.append("]")
    return "".join(parts)


def _bond_text(mol: MolGraph, k: int) -> str:
    b = mol.bonds[k]
    if b.order is BondOrder.DOUBLE:
        return "="
    if b.order is BondOrder.TRIPLE:
        return "#"
    if b.order is BondOrder.SINGLE and mol.atoms[b.begin].aromatic and mol.atoms[b.end].aromatic:
        return "-"
    return ""


def _ring_label(num: int) -> str:
    return str(num) if num < 10 else f"%{num:02d}"


def _emit(mol: MolGraph, ranks: list[int], texts: list[str]) -> str:
    adj = mol.adjacency
    visited = [False] * mol.num_atoms
    used_bonds: set[int] = set()
    children: list[list[tuple[int, int]]] = [[] for _ in mol.atoms]
    # ring bonds per atom: (partner rank, bond, partner)
    ring_open: list[list[tuple[int, int, int]]] = [[] for _ in mol.atoms]
    ring_close: list[list[tuple[int, int, int]]] = [[] for _ in mol.atoms]
    order: list[int] = []

    def build(root: int) -> None:
        visited[root] = True
        stack = [root]
        order.append(root)
        # iterative DFS that mirrors recursive neighbour order
        iters = {root: iter(sorted(adj[root], key=lambda nk: ranks[nk[0]]))}
        while stack:
            u = stack[-1]
            for v, k in iters[u]:
                if k in used_bonds:
                    continue
                used_bonds.add(k)
                if visited[v]:
                    ring_open[v].append((ranks[u], k, u))
                    ring_close[u].append((ranks[v], k, v))
                    continue
                visited[v] = True
                children[u].append((v, k))
                order.append(v)
                iters[v] = iter(sorted(adj[v], key=lambda nk: ranks[nk[0]]))
                stack.append(v)
                break
            else:
                stack.pop()

    pieces = []
    comps = sorted(mol.components, key=lambda c: min(ranks[i] for i in c))
    for comp in comps:
        root = min(comp, key=lambda i: ranks[i])
        build(root)
        free: list[int] = []
        assigned: dict[int, int] = {}
        next_label = 1
        out: list[str] = []

        def write(u: int) -> None:
            nonlocal next_label
            stack: list = [("atom", u)]
            while stack:
                kind, val = stack.pop()
                if kind == "text":
                    out.append(val)
                    continue
                u = val
                out.append(texts[u])
                for _, k, _ in sorted(ring_close[u]):
                    num = assigned.pop(k)
                    out.append(_ring_label(num))
                    free.append(num)
                    free.sort()
                for _, k, _ in sorted(ring_open[u]):
                    if free:
                        num = free.pop(0)
                    else:
                        num = next_label
                        next_label += 1
                    assigned[k] = num
                    out.append(_bond_text(mol, k) + _ring_label(num))
                kids = children[u]
                tasks: list = []
                for idx, (v, k) in enumerate(kids):
                    last = idx == len(kids) - 1
                    if not last:
                        tasks.append(("text", "("))
                    tasks.append(("text", _bond_text(mol, k)))
                    tasks.append(("atom", v))
                    if not last:
                        tasks.append(("text", ")"))
                stack.extend(reversed(tasks))

        write(root)
        pieces.append("".join(out))
    return ".".join(pieces)


def _search(mol: MolGraph, ranks: list[int], texts: list[str], budget: list[int]) -> str:
    counts: dict[int, int] = {}
    for r in ranks:
        counts[r] = counts.get(r, 0) + 1
    tied = [r for r, c in counts.items() if c > 1]
    if not tied:
        budget[0] -= 1
        return _emit(mol, ranks, texts)
    target = min(tied)
    candidates = [i for i, r in enumerate(ranks) if r == target]
    best = None
    for pos, atom in enumerate(candidates):
        if pos > 0 and budget[0] <= 0:
            break
        split = [2 * r + (0 if i == atom else 1) if r == target else 2 * r for i, r in enumerate(ranks)]
        s = _search(mol, refine(mol, _dense_ranks(split)), texts, budget)
        if best is None or s < best:
            best = s
    return best


def canonical_ranks(mol: MolGraph) -> list[int]:
    """Refined invariant ranks (ties allowed for symmetry-equivalent atoms)."""
    return refine(mol, _dense_ranks(initial_invariants(mol)))


def canonical_smiles(mol: MolGraph) -> str:
    """Atom-order independent SMILES for ``mol``.

    Ties left after refinement are broken by trying each member of the
    lowest tied class and keeping the lexicographically smallest string,
    which makes the output independent of input order up to the
    exploration budget (only reachable by very symmetric structures).
    """
    if mol.num_atoms == 0:
        return ""
    texts = [_atom_text(mol, i) for i in range(mol.num_atoms)]
    return _search(mol, canonical_ranks(mol), texts, [TIE_BREAK_BUDGET])
