"""Textual guidance for a matched molecular pair.

A description names the source molecule, its Recap fragments and the
linking bonds, then states one clause per property, for example::

    The target molecule is optimized from ethyl 2-hydroxybenzoate comprising
    that ethanol and 2-hydroxybenzaldehyde links via a O C SINGLE bond. Its
    logd changes between (0.3, 0.5], its solubility is about 2.442, and its
    clint is less than 1.904.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Mapping

from moldiff.chem import SmilesError, canonical_smiles, parse_smiles, recap_fragment, validate

PREFIX = "The target molecule is optimized from"
PhraseMode = Literal["range", "about", "less_than", "greater_than"]
DescMode = Literal["names", "smiles"]
MODES = ("range", "about", "less_than", "greater_than")


class RecordError(ValueError):
    """A dataset record that fails validation."""


@dataclass(frozen=True)
class MMPRecord:
    source: str
    target: str
    props: dict[str, tuple[float, float]]
    names: dict[str, str] | None = None
    id: str | None = None

    def __post_init__(self) -> None:
        if not self.props:
            raise RecordError("record has no properties")
        for role, smi in (("source", self.source), ("target", self.target)):
            try:
                mol = parse_smiles(smi)
            except SmilesError as exc:
                raise RecordError(f"{role} SMILES {smi!r}: {exc}") from exc
            report = validate(mol)
            if not report.valid:
                raise RecordError(f"{role} SMILES {smi!r} fails valence check")

    @classmethod
    def from_dict(cls, obj: Mapping) -> "MMPRecord":
        try:
            props = {str(k): (float(v["src"]), float(v["tgt"])) for k, v in obj["props"].items()}
            return cls(
                source=str(obj["source"]),
                target=str(obj["target"]),
                props=props,
                names=dict(obj["names"]) if obj.get("names") else None,
                id=str(obj["id"]) if obj.get("id") is not None else None,
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise RecordError(f"malformed record: {exc!r}") from exc

    def to_dict(self) -> dict:
        out: dict = {"source": self.source, "target": self.target,
                     "props": {k: {"src": s, "tgt": t} for k, (s, t) in self.props.items()}}
        if self.id is not None:
            out = {"id": self.id, **out}
        if self.names:
            out["names"] = dict(self.names)
        return out


def load_dataset(path: str | Path) -> tuple[list[MMPRecord], list[tuple[int, str]]]:
    """Read JSON-lines records. Returns records and ``(line number, message)`` errors.

    Records without an ``id`` get their 0-based record position as id.
    """
    records: list[MMPRecord] = []
    errors: list[tuple[int, str]] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                rec = MMPRecord.from_dict(obj)
            except (json.JSONDecodeError, RecordError) as exc:
                errors.append((lineno, str(exc)))
                continue
            if rec.id is None:
                rec = MMPRecord(rec.source, rec.target, rec.props, rec.names, str(len(records)))
            records.append(rec)
    return records, errors


def load_names(path: str | Path) -> dict[str, str]:
    """Names file: ``<SMILES>\\t<name>`` per line; keys are re-canonicalized."""
    names: dict[str, str] = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        smi, _, name = line.partition("\t")
        if not name:
            raise ValueError(f"names line lacks a tab-separated name: {line!r}")
        names[canonical_smiles(parse_smiles(smi.strip()))] = name.strip()
    return names


def format_number(x: float) -> str:
    """Three decimals, trailing zeros dropped but one decimal kept."""
    s = f"{x:.3f}".rstrip("0")
    if s.endswith("."):
        s += "0"
    if s in ("-0.0",):
        s = "0.0"
    return s


@dataclass(frozen=True)
class PhrasingConfig:
    modes: dict[str, str] = field(default_factory=lambda: {
        "logd": "range", "solubility": "about", "clint": "less_than"})
    widths: dict[str, float] = field(default_factory=lambda: {"logd": 0.2})
    offsets: dict[str, float] = field(default_factory=lambda: {"logd": 0.1})
    default_mode: str = "about"
    default_width: float = 0.2
    default_offset: float = 0.0

    def mode(self, name: str) -> str:
        m = self.modes.get(name, self.default_mode)
        if m not in MODES:
            raise ValueError(f"unknown phrasing mode {m!r} for {name}")
        return m

    def width(self, name: str) -> float:
        return self.widths.get(name, self.default_width)

    def offset(self, name: str) -> float:
        return self.offsets.get(name, self.default_offset)


@dataclass(frozen=True)
class PropertyPhrase:
    property: str
    mode: str
    rendered: str


def range_bucket(delta: float, width: float, offset: float = 0.0) -> tuple[float, float]:
    """Half-open bucket ``(lo, hi]`` on the grid ``offset + k * width`` containing ``delta``."""
    if width <= 0:
        raise ValueError("bucket width must be positive")
    k = (delta - offset) / width
    nearest = round(k)
    # values on a grid line belong to the bucket they close
    k = nearest if abs(k - nearest) < 1e-9 else math.ceil(k)
    hi = offset + k * width
    return hi - width, hi


def phrase_property(name: str, src: float, tgt: float, cfg: PhrasingConfig | None = None) -> PropertyPhrase:
    cfg = cfg or PhrasingConfig()
    if not (math.isfinite(src) and math.isfinite(tgt)):
        raise ValueError(f"non-finite value for property {name}")
    mode = cfg.mode(name)
    if mode == "range":
        lo, hi = range_bucket(tgt - src, cfg.width(name), cfg.offset(name))
        text = f"changes between ({format_number(lo)}, {format_number(hi)}]"
    elif mode == "about":
        text = f"is about {format_number(tgt)}"
    elif mode == "less_than":
        text = f"is less than {format_number(tgt)}"
    else:
        text = f"is greater than {format_number(tgt)}"
    return PropertyPhrase(name, mode, f"{name} {text}")


def _join_clauses(clauses: list[str]) -> str:
    if len(clauses) == 1:
        return clauses[0]
    if len(clauses) == 2:
        return f"{clauses[0]} and {clauses[1]}"
    return ", ".join(clauses[:-1]) + ", and " + clauses[-1]


def describe(
    rec: MMPRecord,
    mode: DescMode = "names",
    names: Mapping[str, str] | None = None,
    cfg: PhrasingConfig | None = None,
    properties: Iterable[str] | None = None,
) -> str:
    """Render the guiding description of ``rec``.

    Args:
        rec: The matched pair.
        mode: ``"names"`` substitutes dictionary names (canonical SMILES when a
            name is missing); ``"smiles"`` always uses canonical SMILES.
        names: Global name dictionary keyed by canonical SMILES. Names carried
            on the record take precedence.
        cfg: Per-property phrasing.
        properties: Property order; defaults to the record's order.

    Raises:
        KeyError: a requested property is absent from the record.
    """
    lookup: dict[str, str] = dict(names or {})
    if rec.names:
        for smi, name in rec.names.items():
            lookup[canonical_smiles(parse_smiles(smi))] = name

    def label(mol) -> str:
        smi = canonical_smiles(mol)
        return lookup.get(smi, smi) if mode == "names" else smi

    if mode not in ("names", "smiles"):
        raise ValueError(f"unknown description mode {mode!r}")
    source = parse_smiles(rec.source)
    fragments, records = recap_fragment(source)
    text = f"{PREFIX} {label(source)}"
    if records:
        links = [
            f"{label(fragments[r.fragment_ids[0]])} and {label(fragments[r.fragment_ids[1]])} "
            f"links via a {r.label} bond"
            for r in records
        ]
        text += " comprising that " + ", ".join(links)
    order = list(properties) if properties is not None else list(rec.props)
    clauses = []
    for prop in order:
        if prop not in rec.props:
            raise KeyError(f"property {prop!r} missing from record")
        src, tgt = rec.props[prop]
        clauses.append("its " + phrase_property(prop, src, tgt, cfg).rendered)
    if not clauses:
        return f"{text}."
    body = _join_clauses(clauses)
    return f"{text}. {body[0].upper()}{body[1:]}."
