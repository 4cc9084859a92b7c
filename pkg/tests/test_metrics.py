from __future__ import annotations

import itertools
import math
from functools import lru_cache

import jsonschema
import numpy as np
import pytest

from moldiff.metrics import (
    EvalPair, bleu, change_class, corpus_bleu, evaluate, exact_match, fingerprint_similarity, hypervolume_2d,
    is_valid_smiles, levenshtein, property_change_accuracy, r2_indicator, render_table, validate_report,
)


def brute_levenshtein(a: str, b: str) -> int:
    @lru_cache(maxsize=None)
    def d(i: int, j: int) -> int:
        if i == 0 or j == 0:
            return i + j
        return min(d(i - 1, j) + 1, d(i, j - 1) + 1, d(i - 1, j - 1) + (a[i - 1] != b[j - 1]))

    return d(len(a), len(b))


def two_point_hv(p, q, ref):
    area = lambda x, y: max(x - ref[0], 0) * max(y - ref[1], 0)
    return area(*p) + area(*q) - area(min(p[0], q[0]), min(p[1], q[1]))


class TestLevenshtein:
    def test_exhaustive_three_letters(self):
        words = ["".join(w) for k in range(6) for w in itertools.product("abc", repeat=k)]
        sub = words[::7] + ["", "abcab", "cbacb"]
        for a in sub:
            for b in words:
                assert levenshtein(a, b) == brute_levenshtein(a, b), (a, b)

    def test_random_pairs(self, rng):
        alphabet = list("CNO()=1c")
        for _ in range(10_000):
            a = "".join(rng.choice(alphabet, size=rng.integers(0, 8)))
            b = "".join(rng.choice(alphabet, size=rng.integers(0, 8)))
            assert levenshtein(a, b) == brute_levenshtein(a, b)

    def test_metric_axioms(self, rng):
        for _ in range(200):
            a, b, c = ("".join(rng.choice(list("ab"), size=rng.integers(0, 6))) for _ in range(3))
            assert levenshtein(a, b) == levenshtein(b, a)
            assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)


class TestBleu:
    def test_hand_computed(self):
        cand = "the cat sat on the mat".split()
        ref = "the cat is on the mat".split()
        # p1 = 5/6, p2 = 3/5, p3 = 1/4, equal lengths
        assert bleu(cand, ref, max_n=3) == pytest.approx(0.5, abs=1e-12)
        assert bleu(cand, ref, max_n=4) == 0.0

    def test_brevity_penalty(self):
        assert bleu(list("ab"), list("abcd"), max_n=2) == pytest.approx(math.exp(-1.0), abs=1e-12)

    def test_clipping(self):
        # "the" x4 against one "the": p1 = 1/4
        assert bleu(["the"] * 4, ["the", "cat", "a", "b"], max_n=1) == pytest.approx(0.25)

    def test_identity_and_empty(self):
        assert bleu(list("CCO"), list("CCO")) == pytest.approx(1.0)
        assert bleu([], list("CCO")) == 0.0

    def test_corpus_pools_counts(self):
        # pooled p1 = (1 + 2) / (2 + 2), pooled p2 = (0 + 1) / (1 + 1)
        value = corpus_bleu([["a", "x"], ["b", "c"]], [["a", "y"], ["b", "c"]], max_n=2)
        assert value == pytest.approx(math.sqrt(0.75 * 0.5), abs=1e-12)


class TestR2:
    def test_single_point(self):
        assert r2_indicator([(0.5, 0.5)], (1, 1), np.array([[0.5, 0.5], [1.0, 0.0]])) == pytest.approx(0.375)

    def test_two_extremes(self):
        w = np.array([[0.0, 1.0], [0.5, 0.5], [1.0, 0.0]])
        assert r2_indicator([(1, 0), (0, 1)], (1, 1), w) == pytest.approx(1 / 6)

    def test_ideal_point_is_zero(self):
        assert r2_indicator([(1, 1), (0, 0)], (1, 1)) == 0.0

    @pytest.mark.parametrize("w", [np.array([[0.7, 0.7]]), np.array([[-0.5, 1.5]])])
    def test_bad_weights(self, w):
        with pytest.raises(ValueError):
            r2_indicator([(0, 0)], (1, 1), w)

    def test_empty(self):
        with pytest.raises(ValueError):
            r2_indicator([], (1, 1))


class TestHypervolume:
    def test_monte_carlo(self):
        rng = np.random.default_rng(7)
        for _ in range(20):
            p, q = rng.uniform(0.05, 1.0, size=(2, 2))
            hv = hypervolume_2d([p, q], (0.0, 0.0))
            top = np.maximum(p, q)
            u = rng.uniform(0, 1, size=(200_000, 2)) * top
            inside = ((u <= p).all(axis=1) | (u <= q).all(axis=1)).mean() * top.prod()
            assert abs(hv - inside) <= 0.01 * inside
            assert hv == pytest.approx(two_point_hv(p, q, (0, 0)), rel=1e-12)

    def test_dominated_point_adds_nothing(self):
        assert hypervolume_2d([(2, 2), (1, 1)], (0, 0)) == 4.0

    def test_staircase(self):
        assert hypervolume_2d([(1, 3), (2, 2), (3, 1)], (0, 0)) == 6.0

    def test_points_below_reference(self):
        with pytest.warns(UserWarning):
            assert hypervolume_2d([(1, 1), (-1, 5)], (0, 0)) == 1.0

    def test_non_finite(self):
        with pytest.raises(ValueError):
            hypervolume_2d([(np.nan, 1)], (0, 0))


class TestMoleculeMetrics:
    def test_exact_match_is_canonical(self):
        assert exact_match("OCC", "CCO")
        assert not exact_match("CCO", "CCN")
        assert not exact_match("C1CC", "C1CC")

    def test_validity(self):
        assert is_valid_smiles("c1ccccc1") and not is_valid_smiles("c1cccc1") and not is_valid_smiles("C(")

    def test_fingerprint_similarity(self):
        assert fingerprint_similarity("CCO", "OCC") == pytest.approx(1.0)
        assert 0 < fingerprint_similarity("CCO", "CCN") < 1
        assert fingerprint_similarity("CCO", "C(") == 0.0

    @pytest.mark.parametrize("delta, cls", [(0.05, "remain"), (-0.1, "remain"), (0.2, "increase"), (-0.3, "decrease")])
    def test_change_class(self, delta, cls):
        assert change_class(delta, 0.1) == cls

    def test_property_accuracy(self):
        pairs = [EvalPair("CCO", "CCO", "CC"), EvalPair("C(", "CCO", "CC")]
        acc = property_change_accuracy(pairs)
        assert acc["All"] == 0.5 and set(acc) > {"All"}
        with pytest.raises(ValueError):
            property_change_accuracy([])


class TestEvaluate:
    @pytest.fixture
    def refs(self, toy_records):
        return {r.id: (r.source, r.target) for r in toy_records}

    def test_perfect_copy_of_targets(self, refs):
        report = evaluate([{"id": k, "output_smiles": t} for k, (_, t) in refs.items()], refs)
        validate_report(report)
        assert report["exact"] == 1.0 and report["bleu"] == pytest.approx(1.0)
        assert report["levenshtein"] == 0.0 and report["validity"] == 1.0
        assert report["morgan_tanimoto"] == pytest.approx(1.0)
        assert all(v == 1.0 for v in report["property_accuracy"].values())
        assert report["fcd"]["available"] is False and report["fcd"]["value"] is None

    def test_copy_of_sources(self, refs):
        report = evaluate([{"id": k, "output_smiles": s} for k, (s, _) in refs.items()], refs)
        assert report["exact"] == 0.0 and report["levenshtein"] > 0 and report["bleu"] < 1

    def test_schema_key_set(self, refs):
        report = evaluate([{"id": k, "output_smiles": "C("} for k in refs], refs)
        validate_report(report)
        assert sorted(report) == sorted([
            "count", "bleu", "exact", "levenshtein", "morgan_tanimoto", "validity", "fcd",
            "property_accuracy", "hv", "r2", "objectives"])
        assert report["validity"] == 0.0 and report["hv"] == 0.0 and report["r2"] is None

    def test_schema_rejects_extra_keys(self, refs):
        report = evaluate([{"id": k, "output_smiles": t} for k, (_, t) in refs.items()], refs)
        report["surprise"] = 1
        with pytest.raises(jsonschema.ValidationError):
            validate_report(report)

    def test_empty(self, refs):
        with pytest.raises(ValueError, match="no outputs"):
            evaluate([], refs)

    def test_mismatched_ids(self, refs):
        with pytest.raises(ValueError, match="do not match"):
            evaluate([{"id": "zz", "output_smiles": "C"}], refs)
        k = next(iter(refs))
        with pytest.raises(ValueError, match="duplicate"):
            evaluate([{"id": k, "output_smiles": "C"}] * 2, refs)

    def test_render_table(self, refs):
        table = render_table(evaluate([{"id": k, "output_smiles": t} for k, (_, t) in refs.items()], refs))
        assert "exact" in table and "fcd" in table and "unavailable" in table
