"""Structural, property and multi-objective metrics for generated molecules."""

from __future__ import annotations

import json
import math
import warnings
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from moldiff import _kernels
from moldiff.chem import canonicalize, morgan_fingerprint, parse_smiles, tanimoto, toy_properties
from moldiff.tokenizer import TokenizeError, tokenize

SCHEMA_PATH = Path(__file__).parent / "data" / "report.schema.json"

__all__ = [
    "bleu", "corpus_bleu", "levenshtein", "exact_match", "is_valid_smiles", "fingerprint_similarity",
    "change_class", "property_change_accuracy", "hypervolume_2d", "r2_indicator", "default_weights",
    "EvalPair", "evaluate", "render_table", "validate_report",
]


def _ngrams(tokens: Sequence[str], n: int) -> Counter:
    return Counter(tuple(tokens[i:i + n]) for i in range(len(tokens) - n + 1))


def _bleu_from_counts(matches: list[int], totals: list[int], cand_len: int, ref_len: int) -> float:
    if cand_len == 0:
        return 0.0
    logs = []
    for m, tot in zip(matches, totals):
        if tot == 0:
            continue  # order longer than the candidate
        if m == 0:
            return 0.0
        logs.append(math.log(m / tot))
    bp = 1.0 if cand_len > ref_len else math.exp(1.0 - ref_len / cand_len)
    return bp * math.exp(sum(logs) / len(logs))


def bleu(candidate: Sequence[str], reference: Sequence[str], max_n: int = 4) -> float:
    """Unsmoothed sentence BLEU with uniform weights over orders ``1..max_n``.

    Any order with candidate n-grams but no clipped match gives 0. Orders the
    candidate is too short to form are left out of the geometric mean, so a
    short sequence scores 1 against itself.
    """
    matches, totals = [], []
    for n in range(1, max_n + 1):
        cand, ref = _ngrams(candidate, n), _ngrams(reference, n)
        matches.append(sum(min(c, ref[g]) for g, c in cand.items()))
        totals.append(sum(cand.values()))
    return _bleu_from_counts(matches, totals, len(candidate), len(reference))


def corpus_bleu(candidates: Sequence[Sequence[str]], references: Sequence[Sequence[str]], max_n: int = 4) -> float:
    """Corpus BLEU: clipped counts and lengths pooled before the geometric mean."""
    matches, totals = [0] * max_n, [0] * max_n
    c_len = r_len = 0
    for cand, ref in zip(candidates, references, strict=True):
        c_len += len(cand)
        r_len += len(ref)
        for n in range(1, max_n + 1):
            cg, rg = _ngrams(cand, n), _ngrams(ref, n)
            matches[n - 1] += sum(min(c, rg[g]) for g, c in cg.items())
            totals[n - 1] += sum(cg.values())
    return _bleu_from_counts(matches, totals, c_len, r_len)


def levenshtein(a: str, b: str) -> int:
    """Minimal number of single-character insertions, deletions and substitutions."""
    return _kernels.levenshtein(a, b)


def is_valid_smiles(s: str) -> bool:
    return canonicalize(s) is not None


def exact_match(a: str, b: str) -> bool:
    """Same molecule by canonical SMILES; any invalid input gives False."""
    ca, cb = canonicalize(a), canonicalize(b)
    return ca is not None and ca == cb


def fingerprint_similarity(a: str, b: str, radius: int = 2, width: int = 2048) -> float:
    """Morgan/Tanimoto similarity; 0 when either side is invalid."""
    if not (is_valid_smiles(a) and is_valid_smiles(b)):
        return 0.0
    return tanimoto(morgan_fingerprint(parse_smiles(a), radius, width),
                    morgan_fingerprint(parse_smiles(b), radius, width))


# --- property-change accuracy ---------------------------------------------

Threshold = tuple[str, float]  # ("abs", value) or ("rel", fraction of |source value|)
DEFAULT_THRESHOLDS: dict[str, Threshold] = {"logd": ("abs", 0.1)}
DEFAULT_RELATIVE: Threshold = ("rel", 0.05)


def _epsilon(name: str, source_value: float, thresholds: Mapping[str, Threshold]) -> float:
    kind, value = thresholds.get(name, DEFAULT_THRESHOLDS.get(name, DEFAULT_RELATIVE))
    if kind == "abs":
        return value
    if kind == "rel":
        return value * abs(source_value)
    raise ValueError(f"unknown threshold kind {kind!r}")


def change_class(delta: float, eps: float) -> str:
    if abs(delta) <= eps:
        return "remain"
    return "increase" if delta > 0 else "decrease"


@dataclass(frozen=True)
class EvalPair:
    generated: str
    reference: str
    source: str
    required: Mapping[str, str] | None = None


Oracle = Callable[[str], Mapping[str, float]]


def toy_oracle(smiles: str) -> dict[str, float]:
    return toy_properties(parse_smiles(smiles)).as_dict()


def property_change_accuracy(
    pairs: Sequence[EvalPair],
    oracle: Oracle = toy_oracle,
    thresholds: Mapping[str, Threshold] | None = None,
    properties: Sequence[str] | None = None,
) -> dict[str, float]:
    """Fraction of pairs whose generated change class matches the required one.

    When a pair has no explicit ``required`` classes they are derived from
    ``oracle(reference) - oracle(source)``. Invalid generations fail every
    property. The ``"All"`` entry counts pairs meeting every property at once.
    """
    thresholds = dict(thresholds or {})
    if not pairs:
        raise ValueError("no pairs to score")
    hits: Counter = Counter()
    all_hits = 0
    names: list[str] | None = list(properties) if properties is not None else None
    for p in pairs:
        src_vals = oracle(p.source)
        if names is None:
            names = list(p.required) if p.required else list(src_vals)
        if p.required is not None:
            required = dict(p.required)
        else:
            ref_vals = oracle(p.reference)
            required = {k: change_class(ref_vals[k] - src_vals[k], _epsilon(k, src_vals[k], thresholds)) for k in names}
        ok_all = True
        gen_vals = oracle(p.generated) if is_valid_smiles(p.generated) else None
        for k in names:
            ok = gen_vals is not None and change_class(
                gen_vals[k] - src_vals[k], _epsilon(k, src_vals[k], thresholds)) == required[k]
            hits[k] += ok
            ok_all &= ok
        all_hits += ok_all
    out = {k: hits[k] / len(pairs) for k in names or []}
    out["All"] = all_hits / len(pairs)
    return out


# --- multi-objective indicators -------------------------------------------

def hypervolume_2d(points: Iterable[Sequence[float]], ref: Sequence[float]) -> float:
    """Area dominated by ``points`` (maximization) and bounded below by ``ref``.

    Points that do not strictly dominate ``ref`` are dropped with a warning.
    """
    pts = np.asarray(list(points), dtype=np.float64).reshape(-1, 2)
    ref = np.asarray(ref, dtype=np.float64)
    if not np.isfinite(pts).all():
        raise ValueError("objective values must be finite")
    keep = (pts > ref).all(axis=1)
    if not keep.all():
        warnings.warn(f"{int((~keep).sum())} point(s) do not dominate the reference and were ignored",
                      stacklevel=2)
    pts = pts[keep]
    order = np.lexsort((-pts[:, 1], -pts[:, 0]))
    hv, y_max = 0.0, ref[1]
    for x, y in pts[order]:
        if y > y_max:
            hv += (x - ref[0]) * (y - y_max)
            y_max = y
    return float(hv)


def default_weights(count: int = 101) -> np.ndarray:
    lam = np.linspace(0.0, 1.0, count)
    return np.stack([lam, 1.0 - lam], axis=1)


def r2_indicator(points: Iterable[Sequence[float]], ideal: Sequence[float],
                 weights: np.ndarray | None = None) -> float:
    """Mean over weights of the best Tchebycheff distance to ``ideal`` (lower is better)."""
    pts = np.asarray(list(points), dtype=np.float64)
    if pts.size == 0:
        raise ValueError("R2 needs at least one point")
    pts = pts.reshape(len(pts), -1)
    w = default_weights() if weights is None else np.asarray(weights, dtype=np.float64)
    w = w.reshape(len(w), -1)
    if (w < 0).any() or not np.allclose(w.sum(axis=1), 1.0):
        raise ValueError("weights must be non-negative and sum to one")
    gaps = np.abs(np.asarray(ideal, dtype=np.float64)[None, :] - pts)  # (P, k)
    util = (w[:, None, :] * gaps[None, :, :]).max(axis=2)  # (W, P)
    return float(util.min(axis=1).mean())


def toy_objectives(smiles: str) -> tuple[float, float]:
    """Two maximized objectives in [0, 1] from the toy oracle."""
    p = toy_properties(parse_smiles(smiles))
    return p.hetero_frac, 1.0 / (1.0 + p.mw / 500.0)


# --- aggregate report -----------------------------------------------------

def _tokens(s: str) -> list[str]:
    try:
        return tokenize(s)
    except TokenizeError:
        return list(s)


def evaluate(
    outputs: Sequence[Mapping],
    references: Mapping[str, tuple[str, str]],
    thresholds: Mapping[str, Threshold] | None = None,
) -> dict:
    """Aggregate metrics of generated molecules.

    Args:
        outputs: Records with ``id`` and ``output_smiles``.
        references: ``id -> (source SMILES, target SMILES)``.
        thresholds: Remain thresholds for the toy property oracle.

    Raises:
        ValueError: empty outputs or ids that do not line up with ``references``.
    """
    if not outputs:
        raise ValueError("no outputs to evaluate")
    ids = [str(o["id"]) for o in outputs]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate output ids")
    if set(ids) != set(references):
        missing = sorted(set(references) - set(ids))[:5]
        unknown = sorted(set(ids) - set(references))[:5]
        raise ValueError(f"output ids do not match dataset ids (missing {missing}, unknown {unknown})")
    gens, refs, pairs = [], [], []
    for o in outputs:
        src, tgt = references[str(o["id"])]
        gen = str(o["output_smiles"])
        gens.append(gen)
        refs.append(tgt)
        pairs.append(EvalPair(gen, tgt, src))
    n = len(gens)
    valid = [is_valid_smiles(g) for g in gens]
    points = [toy_objectives(g) for g, ok in zip(gens, valid) if ok]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        hv = hypervolume_2d(points, (0.0, 0.0)) if points else 0.0
    return {
        "count": n,
        "bleu": corpus_bleu([_tokens(g) for g in gens], [_tokens(r) for r in refs]),
        "exact": sum(exact_match(g, r) for g, r in zip(gens, refs)) / n,
        "levenshtein": float(np.mean([levenshtein(g, r) for g, r in zip(gens, refs)])),
        "morgan_tanimoto": float(np.mean([fingerprint_similarity(g, r) for g, r in zip(gens, refs)])),
        "validity": sum(valid) / n,
        "fcd": {"value": None, "available": False, "reason": "requires pretrained ChemNet weights"},
        "property_accuracy": property_change_accuracy(pairs, toy_oracle, thresholds),
        "hv": hv,
        "r2": r2_indicator(points, (1.0, 1.0)) if points else None,
        "objectives": ["hetero_frac", "inverse_scaled_mw"],
    }


def validate_report(report: Mapping) -> None:
    """Raise ``jsonschema.ValidationError`` if the report breaks the bundled schema."""
    import jsonschema

    schema = json.loads(SCHEMA_PATH.read_text(encoding="utf-8"))
    jsonschema.validate(dict(report), schema)


def render_table(report: Mapping) -> str:
    """Aligned two-column text rendering of a report."""
    rows: list[tuple[str, str]] = []

    def fmt(v) -> str:
        if v is None:
            return "n/a"
        if isinstance(v, float):
            return f"{v:.4f}"
        return str(v)

    for key in ("count", "bleu", "exact", "levenshtein", "morgan_tanimoto", "validity", "hv", "r2"):
        rows.append((key, fmt(report.get(key))))
    rows.append(("fcd", "unavailable" if not report["fcd"]["available"] else fmt(report["fcd"]["value"])))
    for k, v in report["property_accuracy"].items():
        rows.append((f"acc[{k}]", fmt(v)))
    width = max(len(k) for k, _ in rows)
    return "\n".join(f"{k.ljust(width)}  {v}" for k, v in rows)
