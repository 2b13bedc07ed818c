import itertools

import numpy as np
import pytest

from csicl import coreset as cs
from csicl import model as m
from csicl import sim


def brute_force_pair_objective(points):
    """Exhaustive minimum of the clustering objective over all member pairs."""
    best = np.inf
    for pair in itertools.combinations(range(len(points)), 2):
        best = min(best, cs.kmeans_objective(points, points[list(pair)]))
    return best


class TestKmeansSelect:
    def test_select_all(self):
        pts = np.random.default_rng(0).standard_normal((5, 3))
        assert sorted(cs.kmeans_select(pts, 5, seed=1)) == [0, 1, 2, 3, 4]

    @pytest.mark.oracle
    def test_matches_exhaustive_pair_optimum(self):
        """Unit-square corner instance, m = 2, 30 selection seeds: every split
        costs exactly 2, so any non-degenerate selection must attain the
        brute-force member-pair optimum; allow 2 seeds of slack."""
        pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
        best = brute_force_pair_objective(pts)
        assert best == pytest.approx(2.0)
        hits = 0
        for seed in range(30):
            picks, trace = cs.kmeans_select(pts, 2, seed=seed, return_trace=True)
            assert len(set(picks)) == 2
            assert all(b <= a * (1 + 1e-9) + 1e-12 for a, b in zip(trace, trace[1:]))
            if cs.kmeans_objective(pts, pts[picks]) <= best * (1 + 1e-9):
                hits += 1
        assert hits >= 28

    def test_usually_matches_pair_optimum_on_random_instances(self):
        """On fully random 4-point instances a single seeded restart still
        finds the exhaustive member-pair optimum most of the time."""
        hits = 0
        for seed in range(30):
            pts = np.random.default_rng(seed).random((4, 2))
            picks = cs.kmeans_select(pts, 2, seed=seed)
            if cs.kmeans_objective(pts, pts[picks]) \
                    <= brute_force_pair_objective(pts) * (1 + 1e-9):
                hits += 1
        assert hits >= 20

    @pytest.mark.oracle
    def test_separated_blobs(self):
        for seed in range(10):
            rng = np.random.default_rng(seed)
            blob_a = rng.normal(0.0, 0.01, size=(15, 2))
            blob_b = rng.normal(0.0, 0.01, size=(15, 2)) + 10.0
            pts = np.vstack([blob_a, blob_b])
            picks = cs.kmeans_select(pts, 2, seed=seed)
            sides = {int(pts[p, 0] > 5.0) for p in picks}
            assert sides == {0, 1}

    def test_objective_beats_random_selection(self):
        """Clustering should beat uniformly random member picks on nearly
        every random instance."""
        rng = np.random.default_rng(7)
        wins = 0
        for trial in range(100):
            pts = rng.standard_normal((50, 4))
            picks = cs.kmeans_select(pts, 5, seed=trial)
            obj = cs.kmeans_objective(pts, pts[picks])
            rand = pts[rng.choice(50, size=5, replace=False)]
            if obj <= cs.kmeans_objective(pts, rand):
                wins += 1
        assert wins >= 95

    def test_bad_budget_rejected(self):
        pts = np.zeros((3, 2))
        with pytest.raises(ValueError):
            cs.kmeans_select(pts, 4, seed=0)
        with pytest.raises(ValueError):
            cs.kmeans_select(pts, 0, seed=0)


class TestHerdingSelect:
    def test_single_pick_is_nearest_to_mean(self):
        rng = np.random.default_rng(3)
        pts = rng.standard_normal((20, 4))
        mean = pts.mean(axis=0)
        pick = cs.herding_select(pts, [], 1)[0]
        assert pick == int(np.linalg.norm(pts - mean, axis=1).argmin())

    def test_hand_worked_greedy_step(self):
        pts = np.array([[0.0, 0.0], [2.0, 0.0], [1.0, 1.0], [1.0, -1.0]])
        assert cs.herding_select(pts, fixed=[1], m_select=1) == [0]

    def test_select_rest_deterministic(self):
        rng = np.random.default_rng(5)
        pts = rng.standard_normal((8, 3))
        rest = cs.herding_select(pts, fixed=[2, 5], m_select=6)
        assert sorted(rest + [2, 5]) == list(range(8))
        assert rest == cs.herding_select(pts, fixed=[2, 5], m_select=6)

    @pytest.mark.oracle
    def test_every_step_is_exhaustively_optimal(self):
        """Each greedy pick must beat every other unchosen candidate at its
        step, on 100 random 30-point instances."""
        for trial in range(100):
            rng = np.random.default_rng(trial)
            pts = rng.standard_normal((30, 3))
            mean = pts.mean(axis=0)
            picks = cs.herding_select(pts, [], 8)
            chosen, running = [], np.zeros(3)
            for pick in picks:
                count = len(chosen) + 1
                dists = np.linalg.norm((running + pts) / count - mean, axis=1)
                dists[chosen] = np.inf
                assert dists[pick] <= dists.min() + 1e-12
                chosen.append(pick)
                running = running + pts[pick]

    def test_infeasible_rejected(self):
        with pytest.raises(ValueError):
            cs.herding_select(np.zeros((3, 2)), [0], 3)


class TestSelectExemplars:
    def test_boundary_ratios(self):
        rng = np.random.default_rng(11)
        pts = rng.standard_normal((30, 4))
        pure_cluster = cs.select_exemplars(pts, 6, beta=1.0, seed=9)
        assert pure_cluster == cs.kmeans_select(pts, 6, seed=9)
        pure_herd = cs.select_exemplars(pts, 6, beta=0.0, seed=9)
        assert pure_herd == cs.herding_select(pts, [], 6)

    def test_default_budget_split(self):
        """budget 10 at ratio 0.9 puts 9 picks on clustering and 1 on herding."""
        rng = np.random.default_rng(13)
        pts = rng.standard_normal((30, 4))
        picks = cs.select_exemplars(pts, 10, beta=0.9, seed=21)
        cluster_part = cs.kmeans_select(pts, 9, seed=21)
        assert picks[:9] == cluster_part
        assert picks[9:] == cs.herding_select(pts, cluster_part, 1)

    def test_distinct_indices(self):
        rng = np.random.default_rng(17)
        pts = rng.standard_normal((30, 4))
        picks = cs.select_exemplars(pts, 10, beta=0.9, seed=3)
        assert len(picks) == 10
        assert len(set(picks)) == 10
        assert all(0 <= p < 30 for p in picks)

    def test_sum_form_is_available_and_differs_in_general(self):
        rng = np.random.default_rng(19)
        pts = rng.standard_normal((25, 3))
        mean_form = cs.select_exemplars(pts, 5, beta=0.0, seed=1, herding_form="mean")
        sum_form = cs.select_exemplars(pts, 5, beta=0.0, seed=1, herding_form="sum")
        assert len(sum_form) == 5 and len(set(sum_form)) == 5
        assert mean_form[0] == sum_form[0]     # first greedy step coincides


class TestFeaturesAndLabels:
    def test_feature_set_partition(self, tiny_model_config, rng):
        params = m.init_params(tiny_model_config, 0)
        xs = [rng.standard_normal((4, tiny_model_config.input_width))
              for _ in range(10)]
        class_ids = np.array([1, 2] * 5)
        fs = cs.build_feature_set(params, xs, class_ids)
        assert len(fs) == 10
        assert fs.classes == [1, 2]
        assert sum(len(ix) for _, ix in fs.per_class.values()) == 10
        again = cs.build_feature_set(params, xs, class_ids)
        for c in fs.classes:
            assert np.array_equal(fs.per_class[c][0], again.per_class[c][0])

    def test_distill_eta_one_equals_predictions(self, tiny_model_config, rng):
        params = m.init_params(tiny_model_config, 0)
        xs = [rng.standard_normal((3, tiny_model_config.input_width))
              for _ in range(4)]
        labels = cs.distill_labels(params, xs, eta=1.0)
        direct = np.stack([m.forward(params, x)[0] for x in xs])
        assert np.allclose(labels, direct, atol=1e-12)

    def test_distillation_raises_entropy(self, tiny_model_config, rng):
        def entropy(p):
            return -np.sum(p * np.log(np.maximum(p, 1e-12)), axis=1)

        params = m.init_params(tiny_model_config, 0)
        xs = [rng.standard_normal((3, tiny_model_config.input_width))
              for _ in range(8)]
        prev = cs.distill_labels(params, xs, eta=1.0)
        for eta in (1.5, 2.0, 4.0, 1e6):
            cur = cs.distill_labels(params, xs, eta=eta)
            assert np.all(entropy(cur) >= entropy(prev) - 1e-12)
            assert np.allclose(cur.sum(axis=1), 1.0, atol=1e-9)
            prev = cur


def _dummy_entry(domain, class_id, n=4, l_h=3):
    times = np.linspace(0.1, 2.9, n)
    samples = np.arange(n * l_h, dtype=float).reshape(n, l_h) * (1 + 1j)
    seq = sim.CsiSequence(times, samples, label=class_id)
    label = np.zeros(10)
    label[class_id - 1] = 1.0
    return cs.CoreSetEntry(seq, label, domain_id=domain, class_id=class_id)


class TestKnowledgeCoreSet:
    def test_linear_growth(self):
        ks = cs.KnowledgeCoreSet(budget_per_class=10, eta=2.0)
        for k in range(1, 9):
            entries = [_dummy_entry(k, c) for c in range(1, 11) for _ in range(10)]
            cs.update_knowledge(ks, k, entries)
            assert len(ks) == k * 100
        assert len(ks) == 800
        assert ks.domains == list(range(1, 9))

    def test_duplicate_domain_rejected(self):
        ks = cs.KnowledgeCoreSet(budget_per_class=1, eta=2.0)
        cs.update_knowledge(ks, 1, [_dummy_entry(1, 1)])
        with pytest.raises(ValueError):
            cs.update_knowledge(ks, 1, [_dummy_entry(1, 1)])

    def test_wrong_domain_rejected(self):
        ks = cs.KnowledgeCoreSet(budget_per_class=1, eta=2.0)
        with pytest.raises(ValueError):
            cs.update_knowledge(ks, 2, [_dummy_entry(1, 1)])


class TestMemoryReport:
    def test_model_float_count(self):
        ks = cs.KnowledgeCoreSet(budget_per_class=1, eta=2.0)
        cs.update_knowledge(ks, 1, [_dummy_entry(1, c) for c in range(1, 11)])
        report = cs.memory_report(ks, dataset_size=300, typical_n=60, n_links=32,
                                  n_classes=10, budget_per_class=10)
        assert report.model_float_count == (60 * 32 + 10) * 100

    def test_paper_scale_fraction(self):
        ks = cs.KnowledgeCoreSet(budget_per_class=10, eta=2.0)
        report = cs.memory_report(ks, dataset_size=3013, typical_n=60, n_links=234,
                                  n_classes=10, budget_per_class=10)
        assert report.exemplar_fraction == 100 / 3013
        assert report.exemplar_fraction == pytest.approx(0.0332, abs=5e-4)

    def test_empty_is_zero_bytes(self):
        ks = cs.KnowledgeCoreSet(budget_per_class=10, eta=2.0)
        report = cs.memory_report(ks, 300, 60, 32, 10)
        assert report.stored_bytes == 0

    def test_stored_bytes_match_serialization(self, tmp_path):
        from csicl import persist

        ks = cs.KnowledgeCoreSet(budget_per_class=1, eta=2.0)
        cs.update_knowledge(ks, 1, [_dummy_entry(1, c, n=3 + c) for c in (1, 2)])
        report = cs.memory_report(ks, 300, 60, 3, 10)
        persist.save_coreset(ks, str(tmp_path / "ks"))
        assert report.stored_bytes == (tmp_path / "ks" / "data.bin").stat().st_size
