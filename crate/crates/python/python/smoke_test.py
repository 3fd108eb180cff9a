"""Smoke test for the sgr extension module.

Run after `maturin develop` in crates/python, or point PYTHONPATH at a
directory holding the built library renamed to sgr.so.
"""

import sgr

g = sgr.SceneGraph.parse("( Cat , on , mat ) , ( dog , on , mat ) , ( image )", lenient=True)
assert len(g) == 2 and g.malformed_units == ["( image )"]
assert g.canonicalize().triples()[0] == ("cat", "on", "mat")

try:
    sgr.SceneGraph.parse("( a , b )")
except ValueError as e:
    assert "unit 0" in str(e), e
else:
    raise AssertionError("strict parse accepted an arity-2 unit")

initial = sgr.SceneGraph([("cat", "on", "mat"), ("dog", "on", "mat")])
gold = sgr.SceneGraph([("cat", "on", "mat"), ("mat", "under", "window")])
flags, inserts = sgr.derive_edits(initial, gold)
assert flags == [False, True] and inserts == [("mat", "under", "window")]
assert sgr.apply_edits(initial, flags, inserts) == gold

s = sgr.spice(sgr.SceneGraph([("man", "on", "table")]), sgr.SceneGraph([("guy", "on", "desk"), ("dog", "near", "table")]),
              synonyms=[["man", "guy"], ["table", "desk"]])
assert s.precision == 1.0 and s.recall == 0.5 and abs(s.f1 - 2 / 3) < 1e-12
assert sgr.bsspice(gold, gold) == 1.0
assert abs(sgr.bsspice(initial, gold) - sgr.bsspice(gold, initial)) < 1e-12

variants = sgr.corrupt(gold, n_variants=3, seed=7, perturb=True)
assert len(variants) == 3
assert [v.to_flat() for v in variants] == [v.to_flat() for v in sgr.corrupt(gold, n_variants=3, seed=7, perturb=True)]

assert sgr.split_sentences("A cat sits. It is approx. 5 m. wide.") == ["A cat sits.", "It is approx. 5 m. wide."]
merged = sgr.merge_graphs([sgr.SceneGraph([("cat", "on", "mat")]), sgr.SceneGraph([("Cat", "on", "mat"), ("cat", "is", "small")])])
assert len(merged) == 2

assert abs(sgr.kendall_tau_b([1, 1, 2, 3], [1, 2, 3, 3]) - 0.8) < 1e-12
assert sgr.spearman_rho([1, 2, 3], [3, 2, 1]) == -1.0
assert sgr.mattr("a b a b", window=2) == 1.0
assert abs(sgr.mtld("a b c d e f g h i j a b") - 20.16) < 1e-9

corpus = ["a cat sits on a mat", "a dog runs in the park", "boats in the harbor"]
assert sgr.tfidf_retrieve("dog park", corpus, 1)[0][0] == 1
assert sorted(sgr.select_diverse(corpus, 3, seed=1)) == [0, 1, 2]
assert sgr.heuristic_edits(gold, "A cat on a mat under a window.") == [False, False]

print("sgr", sgr.__version__, "smoke test passed")
