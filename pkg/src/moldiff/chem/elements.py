"""Element data: atomic numbers, masses, and charge-adjusted valence rules."""

from __future__ import annotations

# symbol -> (atomic number, standard atomic mass, valence electrons)
ELEMENTS: dict[str, tuple[int, float, int]] = {
    "H": (1, 1.008, 1),
    "Li": (3, 6.94, 1),
    "B": (5, 10.81, 3),
    "C": (6, 12.011, 4),
    "N": (7, 14.007, 5),
    "O": (8, 15.999, 6),
    "F": (9, 18.998, 7),
    "Na": (11, 22.990, 1),
    "Mg": (12, 24.305, 2),
    "Al": (13, 26.982, 3),
    "Si": (14, 28.085, 4),
    "P": (15, 30.974, 5),
    "S": (16, 32.06, 6),
    "Cl": (17, 35.45, 7),
    "K": (19, 39.098, 1),
    "Ca": (20, 40.078, 2),
    "Fe": (26, 55.845, 0),
    "Cu": (29, 63.546, 0),
    "Zn": (30, 65.38, 2),
    "As": (33, 74.922, 5),
    "Se": (34, 78.971, 6),
    "Br": (35, 79.904, 7),
    "Sn": (50, 118.71, 4),
    "Te": (52, 127.60, 6),
    "I": (53, 126.904, 7),
}

ORGANIC_SUBSET = ("B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I")
AROMATIC_ORGANIC = ("b", "c", "n", "o", "p", "s")
AROMATIC_BRACKET = ("b", "c", "n", "o", "p", "s", "se", "as", "te")

_METALS = {"Li", "Na", "K", "Mg", "Ca", "Zn", "Al"}
_TRANSITION = {"Fe", "Cu"}
_PERIOD2 = {"B", "C", "N", "O", "F"}

_PERIOD2_BY_ELECTRONS = {3: (3,), 4: (4,), 5: (3,), 6: (2,), 7: (1,), 8: (0,)}
_HEAVY_BY_ELECTRONS = {3: (3,), 4: (4,), 5: (3, 5), 6: (2, 4, 6), 7: (1,), 8: (0,)}


def atomic_number(symbol: str) -> int:
    return ELEMENTS[symbol][0]


def atomic_mass(symbol: str) -> float:
    return ELEMENTS[symbol][1]


def allowed_valences(symbol: str, charge: int = 0) -> tuple[int, ...]:
    """Permitted total valences (bond orders plus hydrogens), ascending.

    Charges shift main-group atoms to their isoelectronic neighbour, so
    ``N+`` behaves like carbon and ``O-`` like fluorine. An empty tuple
    means no valence is chemically sensible for that charge state.
    """
    if symbol == "H":
        return (1,) if charge == 0 else (0,)
    if symbol in _TRANSITION:
        return tuple(range(7))
    electrons = ELEMENTS[symbol][2]
    if symbol in _METALS:
        v = electrons - charge
        return (v,) if v >= 0 else ()
    table = _PERIOD2_BY_ELECTRONS if symbol in _PERIOD2 else _HEAVY_BY_ELECTRONS
    return table.get(electrons - charge, ())


def default_valences(symbol: str) -> tuple[int, ...]:
    """Valences used for implicit-hydrogen assignment of organic-subset atoms."""
    return allowed_valences(symbol, 0)
