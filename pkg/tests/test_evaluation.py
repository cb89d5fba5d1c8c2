import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from iterex.evaluation import (
    EvaluationError,
    PRCurve,
    greedy_assignment,
    match_scores,
    pr_curve,
    read_gold,
    redundancy_metrics,
    system_pr,
    write_gold,
)
from iterex.tuples import Extraction

E = Extraction.from_strings
G1 = E("he", "was appointed", "commander")
G2 = E("he", "was knighted", "in 1953")
WRONG = E("cats", "eat", "fish")


def brute_force_recall(recall):
    """Best one-to-one assignment by enumerating every matching."""
    n_p = len(recall)
    n_g = len(recall[0]) if recall else 0
    best = 0.0
    for k in range(min(n_p, n_g) + 1):
        for ps in itertools.permutations(range(n_p), k):
            for gs in itertools.combinations(range(n_g), k):
                best = max(best, sum(recall[p][g] for p, g in zip(ps, gs)))
    return best


class TestMatch:
    def test_identical(self):
        assert match_scores(G1, G1) == (1.0, 1.0)

    def test_partial(self):
        p, r = match_scores(G1, E("he", "was appointed", "commander of the order"))
        assert p == 1.0 and r == pytest.approx(4 / 7)

    def test_disjoint(self):
        assert match_scores(G1, WRONG) == (0.0, 0.0)

    def test_slot_aligned(self):
        # same words, wrong slots
        assert match_scores(E("commander", "was appointed", "he"), G1) == (0.5, 0.5)

    def test_confidence_free(self):
        assert match_scores(G1.with_(confidence=0.1), G2) == match_scores(G1.with_(confidence=0.9), G2)


class TestSystemPR:
    def test_perfect(self):
        golds = {"s": [G1, G2]}
        assert system_pr(golds, golds) == (1.0, 1.0)

    def test_no_predictions(self):
        assert system_pr({}, {"s": [G1]}) == (1.0, 0.0)

    def test_half_recall(self):
        assert system_pr({"s": [G1]}, {"s": [G1, G2]}) == (1.0, 0.5)

    def test_greedy_vs_brute_force(self):
        rng = np.random.default_rng(0)
        exact, gaps = 0, []
        for _ in range(500):
            m = rng.uniform(0, 1, (int(rng.integers(1, 5)), int(rng.integers(1, 5))))
            m[rng.random(m.shape) < 0.4] = 0
            g, b = greedy_assignment(m.tolist()), brute_force_recall(m.tolist())
            assert g <= b + 1e-12
            assert g >= b / 2 - 1e-12  # greedy matching is a 1/2-approximation
            exact += abs(g - b) < 1e-12
            gaps.append(b - g)
        # record the gap; greedy is exact on most small instances
        assert exact / 500 > 0.6, (exact, max(gaps))

    def test_greedy_exact_on_identity(self):
        golds = [G1, G2, E("a", "b", "c")]
        m = [[match_scores(p, g)[1] for g in golds] for p in golds]
        assert greedy_assignment(m) == brute_force_recall(m) == 3.0


class TestCurve:
    def test_hand_enumerated(self):
        preds = {"s": [G1.with_(confidence=0.9), WRONG.with_(confidence=0.5), G2.with_(confidence=0.2)]}
        curve = pr_curve(preds, {"s": [G1, G2]})
        assert curve.points == [(0.9, 1.0, 0.5), (0.5, 0.5, 0.5), (0.2, 2 / 3, 1.0)]
        assert curve.auc == pytest.approx(7 / 24, abs=1e-15)
        assert curve.optimal_f1 == pytest.approx(0.8, abs=1e-15)
        assert curve.last_f1 == pytest.approx(0.8, abs=1e-15)

    def test_single_point(self):
        preds = {"s": [G1.with_(confidence=1.0), WRONG.with_(confidence=1.0)]}
        curve = pr_curve(preds, {"s": [G1, G2]})
        assert len(curve.points) == 1
        assert curve.optimal_f1 == curve.last_f1
        assert curve.auc == 0.0

    def test_perfect(self):
        golds = {"s": [G1, G2], "t": [WRONG]}
        preds = {k: [e.with_(confidence=0.7) for e in v] for k, v in golds.items()}
        c = pr_curve(preds, golds)
        assert (c.optimal_f1, c.last_f1) == (1.0, 1.0)

    def test_empty_gold_refused(self):
        with pytest.raises(EvaluationError):
            pr_curve({"s": [G1]}, {})

    def test_csv_and_svg(self):
        curve = PRCurve([(0.9, 1.0, 0.5), (0.2, 0.5, 1.0)])
        lines = curve.to_csv().splitlines()
        assert lines[0] == "threshold,precision,recall,f1"
        assert lines[-2] == "optimal_f1,auc,last_f1"
        assert curve.to_svg().startswith("<svg")


WORDS = ["he", "was", "born", "in", "paris", "city", "big", "the", "went", "home"]
tuple_st = st.builds(lambda a, r, b: Extraction(tuple(a), tuple(r), tuple(b)),
                     st.lists(st.sampled_from(WORDS), min_size=1, max_size=3),
                     st.lists(st.sampled_from(WORDS), min_size=1, max_size=2),
                     st.lists(st.sampled_from(WORDS), max_size=3))


@settings(max_examples=100, deadline=None)
@given(st.lists(tuple_st, min_size=1, max_size=4), st.lists(tuple_st, max_size=6),
       st.lists(st.sampled_from([0.1, 0.3, 0.5, 0.7, 0.9]), min_size=6, max_size=6))
def test_curve_invariants(golds, preds, confs):
    preds = {"s": [p.with_(confidence=c) for p, c in zip(preds, confs)]}
    curve = pr_curve(preds, {"s": golds})
    ts = [t for t, _, _ in curve.points]
    assert ts == sorted(set(ts), reverse=True)
    recalls = [r for _, _, r in curve.points]
    assert all(b >= a - 1e-12 for a, b in zip(recalls, recalls[1:]))
    assert 0.0 <= curve.auc <= 1.0
    assert curve.optimal_f1 >= curve.last_f1
    assert all(0 <= p <= 1 and 0 <= r <= 1 for _, p, r in curve.points)


class TestRedundancy:
    def test_duplicate_pair(self):
        assert redundancy_metrics({"s": [G1, G1]}).iou == 1.0

    def test_disjoint_pair(self):
        st_ = redundancy_metrics({"s": [E("paris", "hosts", "games"), E("cats", "eat", "fish")]})
        assert (st_.iou, st_.mno, st_.tuples) == (0.0, 1.0, 2)

    def test_duplicated_corpus(self):
        preds = {f"s{i}": [E(f"x{i}", f"r{i}", f"y{i}")] * 2 for i in range(10)}
        assert redundancy_metrics(preds).mno == 2.0

    def test_stopwords_removed(self):
        st_ = redundancy_metrics({"s": [E("the cat", "is", "on the mat"), E("the dog", "is", "in the yard")]})
        assert st_.iou == 0.0

    def test_single_tuple_sentences_no_pairs(self):
        assert redundancy_metrics({"a": [G1], "b": [G2]}).iou == 0.0


def test_gold_round_trip(tmp_path):
    golds = {"s1": [G1, E("the man", "trembled")], "s2": [G2]}
    p = tmp_path / "gold.tsv"
    write_gold(p, golds)
    assert read_gold(p) == golds
