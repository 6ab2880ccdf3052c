import itertools

import numpy as np
import pytest

from lookalike_lab import datamodel as dm
from lookalike_lab import pairing
from lookalike_lab.errors import DegeneratePool, EmptyTrainingSet, InsufficientCandidates


def tiny_world(subject_images, twin_edges=(), family_edges=(), dim=2, seed=0):
    """Build (graph, store, owners) from {subject: n_images} plus edges."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    twin_of, twin_kind = {}, {}
    for a, b, kind in twin_edges:
        twin_of[a], twin_of[b] = b, a
        twin_kind[a] = twin_kind[b] = kind
    graph = dm.IdentityGraph(
        subjects=frozenset(subject_images),
        twin_of=twin_of, twin_kind=twin_kind,
        family_label={frozenset((a, b)): lab for a, b, lab in family_edges},
    )
    ids, vecs, owners = [], [], []
    for sid in sorted(subject_images):
        for i in range(subject_images[sid]):
            ids.append(f"{sid}_i{i}")
            vecs.append(rng.uniform(-1, 1, size=dim))
            owners.append(sid)
    store = dm.EmbeddingStore(tuple(ids), np.asarray(vecs, dtype=np.float32))
    return graph, store, tuple(owners)


def naive_pairs(store, owners):
    """Enumeration oracle: every unordered index pair via double loop."""
    mated, nonmated = [], []
    n = len(store)
    for i in range(n):
        for j in range(i + 1, n):
            pair = tuple(sorted((store.image_ids[i], store.image_ids[j])))
            (mated if owners[i] == owners[j] else nonmated).append(pair)
    return mated, nonmated


class TestEnumeration:
    def test_one_subject_three_images(self):
        graph, store, owners = tiny_world({"A": 3})
        assert len(list(pairing.enumerate_mated(store, owners, graph))) == 3

    def test_one_subject_one_image_degenerate(self):
        graph, store, owners = tiny_world({"A": 1})
        assert list(pairing.enumerate_mated(store, owners, graph)) == []
        assert list(pairing.enumerate_nonmated(store, owners, graph)) == []

    def test_three_subjects_two_images_each(self):
        graph, store, owners = tiny_world({"A": 2, "B": 2, "C": 2})
        mated = list(pairing.enumerate_mated(store, owners, graph))
        nonmated = list(pairing.enumerate_nonmated(store, owners, graph))
        oracle_mated, oracle_nonmated = naive_pairs(store, owners)
        assert len(mated) == 3
        assert len(nonmated) == 12
        assert sorted(p.key() for p in mated) == sorted(oracle_mated)
        assert sorted(p.key() for p in nonmated) == sorted(oracle_nonmated)

    def test_twin_pair_single_images_classed(self):
        graph, store, owners = tiny_world(
            {"A": 1, "B": 1}, twin_edges=[("A", "B", dm.TwinKind.IDENTICAL)])
        nonmated = list(pairing.enumerate_nonmated(store, owners, graph))
        assert len(nonmated) == 1
        assert nonmated[0].pair_class == dm.IDENTICAL_TWIN

    def test_closed_form_count_property(self):
        # T(T-1)/2 - sum k_s(k_s-1)/2 nonmated pairs, vs the double loop
        rng = np.random.Generator(np.random.Philox(key=42))
        worlds = [{f"s{i}": int(rng.integers(1, 6)) for i in range(int(rng.integers(2, 12)))}
                  for _ in range(10)]
        worlds.append({f"s{i}": 5 for i in range(40)})   # T = 200 images
        for trial, subjects in enumerate(worlds):
            graph, store, owners = tiny_world(subjects, seed=trial)
            total = len(store)
            expected = total * (total - 1) // 2 - sum(k * (k - 1) // 2 for k in subjects.values())
            got = list(pairing.enumerate_nonmated(store, owners, graph))
            oracle = naive_pairs(store, owners)[1]
            assert len(got) == expected == len(oracle)


class TestMineLookalikes:
    def test_nearest_unrelated_on_line(self):
        # 1-D embeddings A:0.0, twin:0.1, C:0.2, D:5.0; scorer = -L2
        graph, store, owners = tiny_world(
            {"A": 1, "B": 1, "C": 1, "D": 1},
            twin_edges=[("A", "B", dm.TwinKind.IDENTICAL)], dim=1)
        coords = {"A": 0.0, "B": 0.1, "C": 0.2, "D": 5.0}
        vecs = np.asarray([[coords[s]] for s in sorted(coords)], dtype=np.float32)
        store = dm.EmbeddingStore(store.image_ids, vecs)
        scorer = lambda u, v: -abs(float(u[0] - v[0]))
        out = pairing.mine_lookalikes(store, owners, graph, scorer, k=1)
        assert out["A"] == ["C"]
        assert out["B"] == ["C"]

    def test_insufficient_candidates(self):
        graph, store, owners = tiny_world(
            {"A": 1, "B": 1}, twin_edges=[("A", "B", dm.TwinKind.IDENTICAL)])
        with pytest.raises(InsufficientCandidates):
            pairing.mine_lookalikes(store, owners, graph, lambda u, v: 0.0, k=1)

    def test_exact_tie_breaks_to_ascending_subject(self):
        graph, store, owners = tiny_world(
            {"A": 1, "B": 1, "C": 1, "Z": 1},
            twin_edges=[("A", "B", dm.TwinKind.IDENTICAL)])
        out = pairing.mine_lookalikes(store, owners, graph, lambda u, v: 0.5, k=1)
        assert out["A"] == ["C"]

    def test_never_returns_self_twin_or_family(self):
        graph, store, owners = tiny_world(
            {"A": 2, "B": 2, "C": 1, "D": 1, "E": 1},
            twin_edges=[("A", "B", dm.TwinKind.IDENTICAL)],
            family_edges=[("A", "C", "Mother")])
        out = pairing.mine_lookalikes(store, owners, graph, lambda u, v: 1.0, k=2)
        assert set(out["A"]) <= {"D", "E"}

    def test_fast_path_matches_scalar_path(self):
        graph, store, owners = tiny_world(
            {"A": 2, "B": 2, "C": 2, "D": 2, "E": 2},
            twin_edges=[("A", "B", dm.TwinKind.IDENTICAL)], dim=4, seed=9)
        from lookalike_lab.scoring import comparison_score
        slow = pairing.mine_lookalikes(store, owners, graph,
                                       lambda u, v: comparison_score(u, v), k=2)
        fast = pairing.mine_lookalikes(store, owners, graph, k=2)
        assert slow == fast


class TestTrainingSet:
    def twin_world(self, n_pairs, images=2, extras=0, seed=0):
        subjects = {}
        twin_edges = []
        for p in range(n_pairs):
            a, b = f"t{p:03d}a", f"t{p:03d}b"
            subjects[a] = subjects[b] = images
            twin_edges.append((a, b, dm.TwinKind.IDENTICAL))
        for s in range(extras):
            subjects[f"x{s:03d}"] = images
        return tiny_world(subjects, twin_edges=twin_edges, dim=4, seed=seed)

    def test_two_pair_split_disjoint(self):
        graph, store, owners = self.twin_world(2, extras=2)
        lookalikes = pairing.mine_lookalikes(store, owners, graph, k=1)
        train, test, split = pairing.build_training_set(
            store, owners, graph, lookalikes, split_fraction=0.5, seed=1)
        assert split.train_subjects and split.test_subjects
        assert not (split.train_subjects & split.test_subjects)
        assert train and test

    def test_no_twin_edges_raises(self):
        graph, store, owners = tiny_world({"A": 2, "B": 2})
        with pytest.raises(EmptyTrainingSet):
            pairing.build_training_set(store, owners, graph, {}, 0.5, seed=0)

    def test_labels_and_classes(self):
        graph, store, owners = self.twin_world(2, extras=2)
        lookalikes = pairing.mine_lookalikes(store, owners, graph, k=1)
        train, test, _ = pairing.build_training_set(
            store, owners, graph, lookalikes, split_fraction=0.5, seed=1)
        for p in train + test:
            if p.label == pairing.LABEL_SIMILAR:
                assert p.pair_class == dm.IDENTICAL_TWIN
            else:
                assert p.label == pairing.LABEL_DISSIMILAR
                assert p.pair_class != dm.SAME_SUBJECT

    def test_balanced_counts_per_side(self):
        graph, store, owners = self.twin_world(4, extras=4)
        lookalikes = pairing.mine_lookalikes(store, owners, graph, k=1)
        train, test, _ = pairing.build_training_set(
            store, owners, graph, lookalikes, split_fraction=0.5, seed=1)
        for side in (train, test):
            pos = sum(1 for p in side if p.label == pairing.LABEL_SIMILAR)
            neg = sum(1 for p in side if p.label == pairing.LABEL_DISSIMILAR)
            assert pos == neg

    def test_no_subject_leaks_across_split_100_seeds(self):
        graph, store, owners = self.twin_world(6, extras=6, seed=3)
        lookalikes = pairing.mine_lookalikes(store, owners, graph, k=2)
        owner_of = dict(zip(store.image_ids, owners))
        for seed in range(100):
            train, test, _ = pairing.build_training_set(
                store, owners, graph, lookalikes, split_fraction=0.7, seed=seed)
            train_subjects = {owner_of[p.a] for p in train} | {owner_of[p.b] for p in train}
            test_subjects = {owner_of[p.a] for p in test} | {owner_of[p.b] for p in test}
            assert not (train_subjects & test_subjects)

    def test_reference_scale_cardinality_split_shape(self):
        # shape check at the reference configuration's scale:
        # 322 twin pairs (~645 identities), ~3,203 images, 80/20 by subject
        graph, store, owners = self.twin_world(322, images=5, seed=11)
        assert len(graph.subjects) == 644
        assert len(store) == 3220
        lookalikes = {}
        subjects = sorted(graph.subjects)
        for i, sid in enumerate(subjects):
            for cand in subjects[i:] + subjects[:i]:
                if not graph.related(sid, cand):
                    lookalikes[sid] = [cand]
                    break
        train, test, split = pairing.build_training_set(
            store, owners, graph, lookalikes, split_fraction=0.8, seed=0)
        n_train = len(split.train_subjects)
        n_test = len(split.test_subjects)
        assert n_train + n_test == 644
        assert abs(n_train / 644 - 0.8) < 0.01
        owner_of = dict(zip(store.image_ids, owners))
        train_subjects = {owner_of[p.a] for p in train} | {owner_of[p.b] for p in train}
        test_subjects = {owner_of[p.a] for p in test} | {owner_of[p.b] for p in test}
        assert not (train_subjects & test_subjects)


class TestHardestSelection:
    def test_fraction_one_keeps_everyone(self):
        graph, store, owners = TestTrainingSet().twin_world(3, extras=1)
        got = pairing.select_hardest_twin_pairs(
            store, owners, graph, lambda u, v: 0.0, fraction=1.0)
        assert len(got) == 6

    def test_half_keeps_highest_scoring_pairs(self):
        subjects = {"t0a": 1, "t0b": 1, "t1a": 1, "t1b": 1}
        twin_edges = [("t0a", "t0b", dm.TwinKind.IDENTICAL),
                      ("t1a", "t1b", dm.TwinKind.IDENTICAL)]
        graph, store, owners = tiny_world(subjects, twin_edges=twin_edges, dim=1)
        coords = {"t0a": 0.0, "t0b": 10.0, "t1a": 0.0, "t1b": 0.1}
        vecs = np.asarray([[coords[s]] for s in sorted(coords)], dtype=np.float32)
        store = dm.EmbeddingStore(store.image_ids, vecs)
        got = pairing.select_hardest_twin_pairs(
            store, owners, graph, lambda u, v: -abs(float(u[0] - v[0])), fraction=0.5)
        assert got == ["t1a", "t1b"]


class TestBalancedSampler:
    def pools(self):
        pos = pairing.PairSpec("a", "b", dm.IDENTICAL_TWIN, pairing.LABEL_SIMILAR)
        neg = pairing.PairSpec("a", "c", dm.NO_RELATION, pairing.LABEL_DISSIMILAR)
        return [pos, neg]

    def test_fair_coin_within_3_sigma(self):
        stream = pairing.balanced_sampler(self.pools(), seed=123)
        draws = list(itertools.islice(stream, 10_000))
        frac = sum(1 for p in draws if p.label == pairing.LABEL_SIMILAR) / 10_000
        assert 0.47 <= frac <= 0.53

    def test_same_seed_identical_sequence(self):
        a = list(itertools.islice(pairing.balanced_sampler(self.pools(), seed=7), 200))
        b = list(itertools.islice(pairing.balanced_sampler(self.pools(), seed=7), 200))
        assert a == b

    def test_all_positive_pool_rejected(self):
        pos = pairing.PairSpec("a", "b", dm.IDENTICAL_TWIN, pairing.LABEL_SIMILAR)
        with pytest.raises(DegeneratePool):
            pairing.balanced_sampler([pos, pos], seed=0)


class TestPairSpec:
    def test_rejects_identical_images(self):
        with pytest.raises(ValueError, match="distinct"):
            pairing.PairSpec("i1", "i1", dm.SAME_SUBJECT)

    def test_rejects_bad_label(self):
        with pytest.raises(ValueError, match="label"):
            pairing.PairSpec("i1", "i2", dm.IDENTICAL_TWIN, 2)

    def test_key_is_order_invariant(self):
        assert pairing.PairSpec("b", "a", dm.NO_RELATION).key() == ("a", "b")


class TestPairsCsv:
    def test_round_trip(self, tmp_path):
        pairs = [
            pairing.PairSpec("i1", "i2", dm.IDENTICAL_TWIN, 0),
            pairing.PairSpec("i1", "i3", dm.PairClass(dm.PairKind.FAMILY, "Mother"), 1),
            pairing.PairSpec("i2", "i3", dm.NO_RELATION, None),
        ]
        path = tmp_path / "pairs.csv"
        pairing.write_pairs_csv(path, pairs, header_lines=["procedure=test"])
        assert pairing.read_pairs_csv(path) == pairs
