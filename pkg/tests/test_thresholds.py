import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pgupdate.errors import DataError
from pgupdate.thresholds import (
    ScoreWeights,
    ThresholdSearchSpace,
    classification_score,
    optimise_thresholds,
)
from pgupdate.truncation import thresholds_from_proportions


def brute_force_score(y_true, y_pred, w1=0.5, w2=0.5):
    """Independent recomputation straight from confusion-matrix counts."""
    classes = sorted(set(y_true) | set(y_pred))
    table = {(a, b): 0 for a in classes for b in classes}
    for a, b in zip(y_true, y_pred):
        table[(a, b)] += 1
    f1s, recalls = [], []
    for c in classes:
        tp = table[(c, c)]
        fn = sum(table[(c, b)] for b in classes if b != c)
        fp = sum(table[(a, c)] for a in classes if a != c)
        f1s.append(2 * tp / (2 * tp + fp + fn) if (2 * tp + fp + fn) else 0.0)
        if tp + fn:
            recalls.append(tp / (tp + fn))
    gmean = float(np.prod(recalls)) ** (1 / len(recalls)) if recalls else 0.0
    return w1 * float(np.mean(f1s)) + w2 * gmean


class TestScore:
    def test_perfect_is_one(self):
        assert classification_score(list("AABB"), list("AABB")) == pytest.approx(1.0)

    def test_missed_class_zeroes_gmean(self):
        # class B never predicted -> its recall is 0 -> G-Mean term vanishes
        y_true = list("AAAB")
        y_pred = list("AAAA")
        score = classification_score(y_true, y_pred)
        f1_a = 2 * 3 / (2 * 3 + 1 + 0)
        f1_b = 0.0
        assert score == pytest.approx(0.5 * (f1_a + f1_b) / 2)

    def test_hand_computed_confusion(self):
        # TP_A=8 FN_A=2 FP_A=4; TP_B=6 FN_B=4 FP_B=2
        y_true = ["A"] * 10 + ["B"] * 10
        y_pred = ["A"] * 8 + ["B"] * 2 + ["A"] * 4 + ["B"] * 6
        score = classification_score(y_true, y_pred)
        assert score == pytest.approx(0.6949, abs=2e-4)
        assert score == pytest.approx(brute_force_score(y_true, y_pred), abs=1e-12)

    def test_matches_brute_force_on_random_sets(self):
        rng = np.random.default_rng(0)
        labels = np.array(list("ABCDE"))
        for _ in range(200):
            n = rng.integers(2, 60)
            y_true = labels[rng.integers(0, 5, n)].tolist()
            y_pred = labels[rng.integers(0, 5, n)].tolist()
            assert classification_score(y_true, y_pred) == pytest.approx(
                brute_force_score(y_true, y_pred), abs=1e-12
            )

    @given(st.lists(st.tuples(st.sampled_from("ABC"), st.sampled_from("ABC")),
                    min_size=1, max_size=40), st.randoms())
    @settings(max_examples=60, deadline=None)
    def test_permutation_invariant(self, pairs, rand):
        y_true = [a for a, _ in pairs]
        y_pred = [b for _, b in pairs]
        base = classification_score(y_true, y_pred)
        idx = list(range(len(pairs)))
        rand.shuffle(idx)
        shuffled = classification_score([y_true[i] for i in idx], [y_pred[i] for i in idx])
        assert shuffled == pytest.approx(base, abs=1e-12)

    def test_score_one_iff_perfect(self):
        assert classification_score(list("AB"), list("AB")) == 1.0
        assert classification_score(list("AB"), list("AA")) < 1.0

    def test_weights_validated(self):
        with pytest.raises(DataError):
            ScoreWeights(0.7, 0.7)
        with pytest.raises(DataError):
            ScoreWeights(-0.1, 1.1)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            classification_score([], [])


def _planted_ensemble(rule_truth, n_obs, n_real, seed):
    rng = np.random.default_rng(seed)
    g_true = rng.standard_normal((n_obs, 2))
    labels = rule_truth.truncate(g_true[:, 0], g_true[:, 1])
    ens = g_true[None, :, :] + 0.2 * rng.standard_normal((n_real, n_obs, 2))
    return ens, labels


class TestOptimise:
    def test_budget_one_returns_prior(self, five_domain_rule):
        rng = np.random.default_rng(1)
        ens = rng.standard_normal((10, 30, 2))
        labels = five_domain_rule.truncate(ens[0, :, 0], ens[0, :, 1])
        space = ThresholdSearchSpace.around(five_domain_rule, budget=1)
        best, score, trials = optimise_thresholds(ens, labels, five_domain_rule, space)
        assert len(trials) == 1
        assert np.array_equal(best.threshold_vector(), five_domain_rule.threshold_vector())

    def test_perfect_prior_returned_unchanged(self):
        rule = thresholds_from_proportions(("A", "B"), (0.5, 0.5))
        # ensemble values all well away from the boundary: prior scores 1.0
        g = np.array([[-2.0, 0.0], [2.0, 0.0]])
        ens = np.tile(g[None, :, :], (8, 1, 1))
        labels = ["A", "B"]
        space = ThresholdSearchSpace.around(rule, budget=50, seed=3)
        best, score, _ = optimise_thresholds(ens, labels, rule, space)
        assert score == pytest.approx(1.0)
        assert np.array_equal(best.threshold_vector(), rule.threshold_vector())

    def test_never_below_prior(self, five_domain_rule):
        ens, labels = _planted_ensemble(five_domain_rule, 200, 20, seed=5)
        space = ThresholdSearchSpace.around(five_domain_rule, budget=60, seed=6)
        _, best_score, trials = optimise_thresholds(ens, labels, five_domain_rule, space)
        assert best_score >= trials[0][2]

    def test_planted_threshold_recovery(self):
        # truth generated at +0.3 but the prior rule says 0.0
        truth = thresholds_from_proportions(("A", "B"), (0.5, 0.5)).with_thresholds([0.3])
        prior = thresholds_from_proportions(("A", "B"), (0.5, 0.5))
        ens, labels = _planted_ensemble(truth, 500, 50, seed=7)
        space = ThresholdSearchSpace.around(prior, margin=0.6, budget=200, seed=8)
        best, _, _ = optimise_thresholds(ens, labels, prior, space)
        assert best.g1_threshold == pytest.approx(0.3, abs=0.1)

    def test_space_must_contain_prior(self, five_domain_rule):
        theta = five_domain_rule.threshold_vector()
        space = ThresholdSearchSpace(theta + 1.0, theta + 2.0, budget=10)
        rng = np.random.default_rng(9)
        ens = rng.standard_normal((5, 10, 2))
        with pytest.raises(DataError):
            optimise_thresholds(ens, ["HEM"] * 10, five_domain_rule, space)

    def test_recall_tradeoff_direction(self):
        # raising the boundary between a small domain (below) and a large
        # neighbour (above) lifts the small domain's recall and cuts the
        # neighbour's
        rule = thresholds_from_proportions(("SMALL", "BIG", "REST"), (0.15, 0.85 * 0.7, 0.85 * 0.3))
        rng = np.random.default_rng(10)
        g = rng.standard_normal((4000, 2))
        labels = rule.truncate(g[:, 0], g[:, 1])
        ens = g[None, :, :] + 0.35 * rng.standard_normal((30, 4000, 2))

        def recalls(theta):
            cand = rule.with_thresholds(theta)
            from pgupdate.thresholds import most_probable_codes

            codes = cand.truncate_codes(ens[:, :, 0], ens[:, :, 1])
            modal = most_probable_codes(codes, 3)
            truth_codes = np.array([rule.domain_code(l) for l in labels])
            out = []
            for c in range(3):
                mask = truth_codes == c
                out.append(np.mean(modal[mask] == c))
            return out

        base = rule.threshold_vector()
        raised = base.copy()
        raised[0] += 0.25  # boundary between SMALL (below, on g1) and the stack
        r_base = recalls(base)
        r_raised = recalls(raised)
        assert r_raised[0] > r_base[0]  # small domain gains
        assert r_raised[1] < r_base[1]  # large neighbour loses
