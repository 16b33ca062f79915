"""Tests for margin-family heuristics: scores, batch selectors, diversity."""

import numpy as np
import pytest

from activepool.heuristics import (
    HeuristicError,
    ScoreVector,
    SscDegenerateError,
    margin_scores,
    mclu_scores,
    score_mclu,
    score_ms,
    select_csv,
    select_hmcs_i,
    select_mao,
    select_mclu_abd,
    select_mclu_ecbd,
    select_ssc,
)
from activepool.kernels import KernelConfig, gram_matrix, normalized_gram
from activepool.models.multiclass import train_multiclass_svm
from activepool.models.smo import train_binary_svm

KERNEL = KernelConfig("rbf", 0.5)


def trained_model(seed, n_classes=3, n_per_class=10, c_penalty=10.0):
    rng = np.random.default_rng(seed)
    means = np.array([[0.0, 0.0], [6.0, 0.0], [3.0, 5.0]])[:n_classes]
    x = np.vstack([rng.normal(m, 0.5, size=(n_per_class, 2)) for m in means])
    y = np.repeat(np.arange(n_classes), n_per_class)
    return train_multiclass_svm(x, y, n_classes, KERNEL, c_penalty), x, y


def make_pool(seed, n=10, center=(3.0, 2.0), spread=2.0):
    return np.random.default_rng(seed).normal(center, spread, size=(n, 2))


def subset_positions(score_vector, pool_size, q, subset_size=None):
    """Prefilter replay: the (default 3q) best-scored positions, pool order."""
    if subset_size is None:
        subset_size = 3 * q
    subset_size = min(subset_size, pool_size)
    key = score_vector.scores
    if score_vector.orientation == "maximize":
        key = -key
    return np.sort(np.argsort(key, kind="stable")[:subset_size])


def greedy_replay(positions, uncertainty, similarity, q, lam):
    """Step-by-step argmin replay of the diversity batch construction."""
    chosen = [int(np.argmin(uncertainty))]
    for _ in range(q - 1):
        max_sim = similarity[:, chosen].max(axis=1)
        crit = lam * uncertainty + (1.0 - lam) * max_sim
        crit[chosen] = np.inf
        chosen.append(int(np.argmin(crit)))
    return positions[np.array(chosen)]


class TestScoreVector:
    def test_ranking_breaks_ties_by_position(self):
        sv = ScoreVector(np.array([0.3, 0.1, 0.1]), "minimize")
        np.testing.assert_array_equal(sv.ranking(), [1, 2, 0])
        sv = ScoreVector(np.array([0.5, 0.9, 0.9]), "maximize")
        np.testing.assert_array_equal(sv.ranking(), [1, 2, 0])

    def test_top_validates_q(self):
        sv = ScoreVector(np.array([1.0, 2.0]), "minimize")
        np.testing.assert_array_equal(sv.top(2), [0, 1])
        with pytest.raises(ValueError, match="out of range"):
            sv.top(0)
        with pytest.raises(ValueError, match="out of range"):
            sv.top(3)

    def test_rejects_nan_and_winning_infinity(self):
        with pytest.raises(ValueError, match="NaN"):
            ScoreVector(np.array([0.0, np.nan]), "minimize")
        with pytest.raises(ValueError, match="infinity"):
            ScoreVector(np.array([0.0, -np.inf]), "minimize")
        with pytest.raises(ValueError, match="infinity"):
            ScoreVector(np.array([0.0, np.inf]), "maximize")

    def test_losing_side_infinity_ranks_last(self):
        sv = ScoreVector(np.array([0.5, np.inf, 0.2]), "minimize")
        np.testing.assert_array_equal(sv.ranking(), [2, 0, 1])

    def test_scores_read_only_and_orientation_checked(self):
        sv = ScoreVector(np.array([1.0]), "minimize")
        with pytest.raises(ValueError):
            sv.scores[0] = 2.0
        with pytest.raises(ValueError, match="orientation"):
            ScoreVector(np.array([1.0]), "smallest")


class TestMarginScores:
    def test_known_values(self):
        sv = margin_scores([[0.5, -2.0], [-0.1, 3.0]])
        assert sv.orientation == "minimize"
        np.testing.assert_allclose(sv.scores, [0.5, 0.1], atol=1e-15)
        np.testing.assert_array_equal(sv.ranking(), [1, 0])

    def test_positive_scaling_preserves_ranking(self):
        rng = np.random.default_rng(0)
        decisions = rng.normal(size=(12, 3))
        base = margin_scores(decisions).ranking()
        scaled = margin_scores(7.3 * decisions).ranking()
        np.testing.assert_array_equal(base, scaled)

    def test_shape_validation(self):
        with pytest.raises(ValueError, match="decision matrix"):
            margin_scores([0.5, 1.0])
        with pytest.raises(ValueError, match="decision matrix"):
            margin_scores([[0.5], [1.0]])


class TestMcluScores:
    def test_gap_between_two_largest_magnitudes(self):
        sv = mclu_scores([[2.0, -1.5, 0.3]])
        np.testing.assert_allclose(sv.scores, [0.5], atol=1e-15)
        assert sv.orientation == "minimize"

    def test_tied_magnitudes_score_zero(self):
        np.testing.assert_allclose(mclu_scores([[1.0, -1.0]]).scores, [0.0], atol=1e-15)

    def test_signs_do_not_matter(self):
        rng = np.random.default_rng(1)
        decisions = rng.normal(size=(9, 4))
        np.testing.assert_allclose(
            mclu_scores(decisions).scores, mclu_scores(-decisions).scores, atol=1e-15
        )

    def test_score_helpers_use_model_decisions(self):
        model, x, _ = trained_model(3)
        pool = make_pool(4)
        np.testing.assert_allclose(
            score_ms(model, pool).scores,
            margin_scores(model.decision_matrix(pool)).scores,
        )
        np.testing.assert_allclose(
            score_mclu(model, pool).scores,
            mclu_scores(model.decision_matrix(pool)).scores,
        )


class TestSelectMao:
    def test_matches_greedy_replay(self):
        for seed in range(20):
            model, _, _ = trained_model(seed % 5)
            pool = make_pool(100 + seed, n=10)
            q = 2 + seed % 3
            batch = select_mao(model, pool, q)
            scores = score_ms(model, pool)
            positions = subset_positions(scores, len(pool), q)
            sub = pool[positions]
            sim = gram_matrix(model.kernel, sub, sub)
            expected = greedy_replay(positions, scores.scores[positions], sim, q, lam=0.0)
            np.testing.assert_array_equal(batch, expected)

    def test_batch_shape_and_membership(self):
        model, _, _ = trained_model(2)
        pool = make_pool(11, n=12)
        batch = select_mao(model, pool, 4)
        assert len(batch) == 4
        assert len(np.unique(batch)) == 4
        positions = subset_positions(score_ms(model, pool), 12, 4)
        assert set(batch) <= set(positions)

    def test_q_validation(self):
        model, _, _ = trained_model(2)
        pool = make_pool(11, n=5)
        with pytest.raises(ValueError, match="exceeds the pool"):
            select_mao(model, pool, 6)
        with pytest.raises(ValueError, match="subset_size"):
            select_mao(model, pool, 3, subset_size=2)


class TestSelectMcluAbd:
    def test_matches_greedy_replay(self):
        for seed in range(20):
            model, _, _ = trained_model(seed % 5)
            pool = make_pool(200 + seed, n=10)
            q = 2 + seed % 3
            batch = select_mclu_abd(model, pool, q)
            scores = score_mclu(model, pool)
            positions = subset_positions(scores, len(pool), q)
            sub = pool[positions]
            sim = normalized_gram(model.kernel, sub, sub)
            expected = greedy_replay(positions, scores.scores[positions], sim, q, lam=0.6)
            np.testing.assert_array_equal(batch, expected)

    def test_lam_one_reduces_to_pure_uncertainty_order(self):
        model, _, _ = trained_model(4)
        pool = make_pool(21, n=12)
        scores = score_mclu(model, pool)
        positions = subset_positions(scores, len(pool), 4)
        expected = positions[
            np.argsort(scores.scores[positions], kind="stable")[:4]
        ]
        batch = select_mclu_abd(model, pool, 4, lam=1.0)
        np.testing.assert_array_equal(batch, expected)

    def test_lam_validation(self):
        model, _, _ = trained_model(4)
        with pytest.raises(ValueError, match="lam"):
            select_mclu_abd(model, make_pool(5), 2, lam=1.5)


class TestSelectCsv:
    @staticmethod
    def closest_support_ids(model, candidates):
        sv = model.train_features[model.support_mask]
        if model.kernel.kind == "rbf":
            dist2 = 2.0 - 2.0 * gram_matrix(model.kernel, candidates, sv)
        else:
            dist2 = (
                np.sum(candidates**2, axis=1)[:, None]
                - 2.0 * candidates @ sv.T
                + np.sum(sv**2, axis=1)[None, :]
            )
        return np.argmin(dist2, axis=1)

    def test_matches_distinct_support_replay(self):
        for seed in range(20):
            model, _, _ = trained_model(seed % 5)
            pool = make_pool(300 + seed, n=10)
            q = 2 + seed % 3
            batch = select_csv(model, pool, q)
            scores = score_ms(model, pool)
            positions = subset_positions(scores, len(pool), q)
            closest = self.closest_support_ids(model, pool[positions])
            order = np.argsort(scores.scores[positions], kind="stable")
            picked, used, skipped = [], set(), []
            for pos in order:
                if len(picked) == q:
                    break
                if closest[pos] in used:
                    skipped.append(pos)
                    continue
                used.add(closest[pos])
                picked.append(pos)
            for pos in skipped:
                if len(picked) == q:
                    break
                picked.append(pos)
            np.testing.assert_array_equal(batch, positions[np.array(picked)])

    def test_duplicate_support_targets_fall_back_to_margin_order(self):
        model, _, _ = trained_model(1, n_classes=2)
        # A tight clump of candidates shares one closest support vector, so
        # only the first can claim it and the rest fill in margin order.
        clump = np.random.default_rng(31).normal([3.0, 0.0], 0.01, size=(6, 2))
        batch = select_csv(model, clump, 3)
        closest = self.closest_support_ids(model, clump)
        assert len(set(closest)) == 1
        scores = score_ms(model, clump)
        expected = np.argsort(scores.scores, kind="stable")[:3]
        np.testing.assert_array_equal(np.sort(batch), np.sort(expected))

    def test_model_without_support_vectors_rejected(self):
        model, _, _ = trained_model(1)
        model.support_mask = np.zeros(model.n_train, dtype=bool)
        with pytest.raises(HeuristicError, match="no support vectors"):
            select_csv(model, make_pool(2), 2)


class TestSelectSsc:
    def test_positive_candidates_drawn_with_seeded_permutation(self):
        model, lx, _ = trained_model(6, n_per_class=15)
        pool = make_pool(41, n=20, center=(3.0, 1.5))
        sv_mask = model.support_mask
        assert 0 < sv_mask.sum() < len(lx)
        signed = np.where(sv_mask, 1.0, -1.0)
        machine = train_binary_svm(lx, signed, model.kernel, model.c_penalty)
        values = machine.decision_values(pool)
        positive = np.flatnonzero(values > 0)
        q = 4
        batch = select_ssc(model, lx, pool, q, seed=9)
        assert len(batch) == q
        assert len(np.unique(batch)) == q
        if len(positive) >= q:
            perm = np.random.default_rng(9).permutation(len(positive))
            np.testing.assert_array_equal(batch, positive[perm[:q]])
        else:
            np.testing.assert_array_equal(batch[: len(positive)], positive)
            negative = np.flatnonzero(values <= 0)
            fill = negative[np.argsort(np.abs(values[negative]), kind="stable")]
            np.testing.assert_array_equal(batch[len(positive):], fill[: q - len(positive)])

    def test_all_support_vector_model_is_degenerate(self):
        x = np.array([[0.0, 0.0], [0.5, 0.5], [4.0, 4.0], [4.5, 4.5]])
        y = np.array([0, 0, 1, 1])
        model = train_multiclass_svm(x, y, 2, KERNEL, 0.5)
        assert model.support_mask.all()
        with pytest.raises(SscDegenerateError, match="no separating machine"):
            select_ssc(model, x, make_pool(3, n=5), 2)

    def test_labeled_matrix_must_match_training(self):
        model, lx, _ = trained_model(6)
        with pytest.raises(ValueError, match="trained on"):
            select_ssc(model, lx[:-1], make_pool(3, n=5), 2)

    def test_q_validation(self):
        model, lx, _ = trained_model(6)
        with pytest.raises(ValueError, match="exceeds the pool"):
            select_ssc(model, lx, make_pool(3, n=3), 4)


class TestSelectMcluEcbd:
    def test_one_pick_per_cluster_at_minimum_gap(self):
        from activepool.clustering import kernel_kmeans

        for seed in range(8):
            model, _, _ = trained_model(seed % 4)
            pool = make_pool(400 + seed, n=12)
            q = 3
            batch = select_mclu_ecbd(model, pool, q, seed=seed)
            scores = score_mclu(model, pool)
            positions = subset_positions(scores, len(pool), q)
            clusters = kernel_kmeans(pool[positions], model.kernel, k=q, seed=seed)
            sub_scores = scores.scores[positions]
            expected = []
            for cluster in range(q):
                members = np.flatnonzero(clusters.labels == cluster)
                expected.append(positions[members[int(np.argmin(sub_scores[members]))]])
            np.testing.assert_array_equal(batch, np.array(expected))

    def test_deterministic_for_fixed_seed(self):
        model, _, _ = trained_model(3)
        pool = make_pool(51, n=15)
        a = select_mclu_ecbd(model, pool, 4, seed=2)
        b = select_mclu_ecbd(model, pool, 4, seed=2)
        np.testing.assert_array_equal(a, b)


class TestSelectHmcsI:
    def steering_setup(self):
        rng = np.random.default_rng(7)
        means = np.array([[0.0, 0.0], [6.0, 0.0], [3.0, 5.0]])
        lx = np.vstack([rng.normal(m, 0.5, size=(10, 2)) for m in means])
        ly = np.repeat(np.arange(3), 10)
        model = train_multiclass_svm(lx, ly, 3, KERNEL, 10.0)
        group_a = rng.normal([3.0, 0.0], 0.05, size=(4, 2))
        group_b = rng.normal([1.5, 2.5], 0.05, size=(4, 2))
        return model, np.vstack([group_a, group_b])

    def test_anchored_region_is_avoided(self):
        model, pool = self.steering_setup()
        free = select_hmcs_i(model, pool, q=1, subset_size=8, seed=0)
        # Unconstrained, the best-gap candidate lives in the second clump.
        assert free[0] >= 4
        anchored = select_hmcs_i(
            model, pool, q=1, subset_size=8,
            bounded_sv_features=np.array([[1.5, 2.5]]), seed=0,
        )
        # With a bounded vector anchoring that clump the pick moves out.
        assert anchored[0] < 4

    def test_batch_shape_membership_determinism(self):
        model, _, _ = trained_model(5)
        pool = make_pool(61, n=14)
        a = select_hmcs_i(model, pool, q=4, subset_size=12, seed=3)
        b = select_hmcs_i(model, pool, q=4, subset_size=12, seed=3)
        np.testing.assert_array_equal(a, b)
        assert len(a) == 4
        assert len(np.unique(a)) == 4
        positions = subset_positions(score_mclu(model, pool), 14, 4, subset_size=12)
        assert set(a) <= set(positions)

    def test_empty_bounded_array_treated_as_none(self):
        model, pool = self.steering_setup()
        free = select_hmcs_i(model, pool, q=2, subset_size=8, seed=1)
        empty = select_hmcs_i(
            model, pool, q=2, subset_size=8, bounded_sv_features=np.empty((0, 2)), seed=1
        )
        np.testing.assert_array_equal(free, empty)
