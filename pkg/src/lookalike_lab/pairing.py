"""Pair enumeration and training-set construction.

Mated pairs are image pairs of one subject; non-mated pairs cross subjects.
The verification training set pairs twin images as positives (label 0,
similar) against mined look-alike images as negatives (label 1,
dissimilar), split subject-disjointly into train and test.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator

import numpy as np

from .datamodel import (
    EmbeddingStore,
    IdentityGraph,
    ImageId,
    PairClass,
    SubjectId,
    SAME_SUBJECT,
    classify_pair,
)
from .errors import DegeneratePool, EmptyTrainingSet, InsufficientCandidates

# label convention: 0 = similar (twin pair), 1 = dissimilar (look-alike pair);
# the distance-squared term of the contrastive loss is weighted by (1 - label)
LABEL_SIMILAR = 0
LABEL_DISSIMILAR = 1


@dataclass(frozen=True)
class PairSpec:
    """One unordered image pair, optionally carrying a training label."""

    a: ImageId
    b: ImageId
    pair_class: PairClass
    label: int | None = None

    def __post_init__(self):
        if self.a == self.b:
            raise ValueError(f"pair needs two distinct images, got {self.a!r} twice")
        if self.label not in (None, LABEL_SIMILAR, LABEL_DISSIMILAR):
            raise ValueError(f"label must be 0, 1, or absent, got {self.label!r}")

    def key(self) -> tuple[ImageId, ImageId]:
        return (self.a, self.b) if self.a <= self.b else (self.b, self.a)


@dataclass(frozen=True)
class TrainTestSplit:
    """Subject-disjoint train/test partition of the selected subjects."""

    train_subjects: frozenset[SubjectId]
    test_subjects: frozenset[SubjectId]
    fraction: float

    def __post_init__(self):
        if self.train_subjects & self.test_subjects:
            raise ValueError("train and test subjects overlap")
        if not 0.0 < self.fraction < 1.0:
            raise ValueError(f"split fraction must be in (0, 1), got {self.fraction}")


def _images_by_subject(store: EmbeddingStore,
                       owners: tuple[SubjectId, ...]) -> dict[SubjectId, list[int]]:
    """Store row indices per subject, preserving store order."""
    per: dict[SubjectId, list[int]] = {}
    for idx, sid in enumerate(owners):
        per.setdefault(sid, []).append(idx)
    return per


def enumerate_mated(store: EmbeddingStore, owners: tuple[SubjectId, ...],
                    graph: IdentityGraph) -> Iterator[PairSpec]:
    """All unordered same-subject image pairs; k images yield k(k-1)/2 pairs."""
    per = _images_by_subject(store, owners)
    for sid in sorted(per):
        rows = per[sid]
        for i in range(len(rows)):
            for j in range(i + 1, len(rows)):
                a, b = store.image_ids[rows[i]], store.image_ids[rows[j]]
                if a > b:
                    a, b = b, a
                yield PairSpec(a, b, SAME_SUBJECT)


def enumerate_nonmated(store: EmbeddingStore, owners: tuple[SubjectId, ...],
                       graph: IdentityGraph) -> Iterator[PairSpec]:
    """All unordered cross-subject image pairs, each tagged with its pair class."""
    n = len(store)
    for i in range(n):
        for j in range(i + 1, n):
            if owners[i] == owners[j]:
                continue
            cls = classify_pair(owners[i], owners[j], graph)
            a, b = store.image_ids[i], store.image_ids[j]
            if a > b:
                a, b = b, a
            yield PairSpec(a, b, cls)


def mine_lookalikes(store: EmbeddingStore, owners: tuple[SubjectId, ...],
                    graph: IdentityGraph,
                    scorer: Callable[[np.ndarray, np.ndarray], float] | None = None,
                    k: int = 1, metric: str | None = None) -> dict[SubjectId, list[SubjectId]]:
    """Top-k look-alike subjects per twin subject under a comparison scorer.

    A candidate's score is the best (max) score over all image pairs between
    the two subjects; the subject itself, its twin, and family members are
    excluded.  Ties break toward the ascending SubjectId so mining is
    deterministic.  With no custom ``scorer`` the built-in comparison metric
    runs vectorized over image blocks.
    """
    from .scoring import COSINE_MAPPED, comparison_score_matrix

    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    per = _images_by_subject(store, owners)
    subjects = sorted(per)
    twins = [s for s in subjects if s in graph.twin_of]
    matrix = store.matrix64() if scorer is None else None
    result: dict[SubjectId, list[SubjectId]] = {}
    for sid in twins:
        if scorer is None:
            all_scores = comparison_score_matrix(matrix[per[sid]], matrix,
                                                 metric or COSINE_MAPPED)
        candidates: list[tuple[float, SubjectId]] = []
        for other in subjects:
            if graph.related(sid, other):
                continue
            if scorer is None:
                best = all_scores[:, per[other]].max()
            else:
                best = max(
                    scorer(store.row(i), store.row(j))
                    for i in per[sid] for j in per[other]
                )
            candidates.append((-float(best), other))
        if len(candidates) < k:
            raise InsufficientCandidates(
                f"subject {sid!r} has {len(candidates)} unrelated candidates, need {k}")
        candidates.sort()
        result[sid] = [sub for _, sub in candidates[:k]]
    return result


def split_subjects(subjects: Iterable[SubjectId], fraction: float,
                   seed: int, graph: IdentityGraph | None = None) -> TrainTestSplit:
    """Seeded subject-disjoint split; twins are kept on the same side.

    Splitting by twin pair (not by individual) prevents one pair's images
    from leaking across the boundary through the co-twin.
    """
    pool = sorted(set(subjects))
    units: list[tuple[SubjectId, ...]] = []
    seen: set[SubjectId] = set()
    for sid in pool:
        if sid in seen:
            continue
        twin = graph.twin_of.get(sid) if graph is not None else None
        if twin is not None and twin in set(pool):
            units.append((sid, twin))
            seen.update((sid, twin))
        else:
            units.append((sid,))
            seen.add(sid)
    rng = np.random.Generator(np.random.Philox(key=seed))
    order = rng.permutation(len(units))
    n_train = int(round(fraction * len(units)))
    n_train = min(max(n_train, 1), len(units) - 1) if len(units) > 1 else len(units)
    train: set[SubjectId] = set()
    test: set[SubjectId] = set()
    for rank, unit_idx in enumerate(order):
        (train if rank < n_train else test).update(units[unit_idx])
    return TrainTestSplit(frozenset(train), frozenset(test), fraction)


def select_hardest_twin_pairs(store: EmbeddingStore, owners: tuple[SubjectId, ...],
                              graph: IdentityGraph,
                              scorer: Callable[[np.ndarray, np.ndarray], float],
                              fraction: float = 1.0) -> list[SubjectId]:
    """Twin subjects from the `fraction` of twin pairs scoring highest against
    their co-twin (best image pair, ties toward ascending subject ids).

    ``fraction=1.0`` keeps every twin pair.  Selecting only the
    highest-scoring (hardest) pairs is a configurable policy, not a default,
    because it biases any similarity baseline computed downstream upward.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    per = _images_by_subject(store, owners)
    pair_scores: list[tuple[float, SubjectId, SubjectId]] = []
    for a in sorted(per):
        b = graph.twin_of.get(a)
        if b is None or b not in per or a > b:
            continue
        best = max(scorer(store.row(i), store.row(j)) for i in per[a] for j in per[b])
        pair_scores.append((-float(best), a, b))
    pair_scores.sort()
    keep = max(1, int(round(fraction * len(pair_scores)))) if pair_scores else 0
    selected: list[SubjectId] = []
    for _, a, b in pair_scores[:keep]:
        selected.extend((a, b))
    return sorted(selected)


def _mine_per_side(store: EmbeddingStore, owners: tuple[SubjectId, ...],
                   graph: IdentityGraph, sides, singles: list[SubjectId],
                   split_fraction: float, seed: int, k: int,
                   metric: str | None) -> dict[SubjectId, list[SubjectId]]:
    """Mine look-alikes separately inside each split side.

    Single (non-twin) subjects are themselves split so each serves one side
    only; mining never crosses the train/test boundary, so no negatives are
    lost to the leakage guard.
    """
    single_sides: tuple[frozenset[SubjectId], frozenset[SubjectId]]
    if singles:
        s_split = split_subjects(singles, split_fraction, seed + 1)
        single_sides = (s_split.train_subjects, s_split.test_subjects)
    else:
        single_sides = (frozenset(), frozenset())

    lookalikes: dict[SubjectId, list[SubjectId]] = {}
    for twins_side, singles_side in zip(sides, single_sides):
        pool = twins_side | singles_side
        idx = [i for i, sid in enumerate(owners) if sid in pool]
        if not idx:
            continue
        sub_store = EmbeddingStore(tuple(store.image_ids[i] for i in idx),
                                   store.vectors[idx])
        sub_owners = tuple(owners[i] for i in idx)
        for k_try in dict.fromkeys((k, 1)):
            try:
                lookalikes.update(mine_lookalikes(sub_store, sub_owners, graph,
                                                  k=k_try, metric=metric))
                break
            except InsufficientCandidates:
                continue
    return lookalikes


def build_training_set(store: EmbeddingStore, owners: tuple[SubjectId, ...],
                       graph: IdentityGraph,
                       lookalikes: dict[SubjectId, list[SubjectId]] | None = None,
                       split_fraction: float = 0.8, seed: int = 0,
                       subject_filter: Iterable[SubjectId] | None = None,
                       lookalike_k: int = 1, metric: str | None = None,
                       ) -> tuple[list[PairSpec], list[PairSpec], TrainTestSplit]:
    """Labelled twin-positive / look-alike-negative pairs, split by subject.

    Positives pair every image of a twin with every image of the co-twin
    (label 0); negatives pair the twin's images with its mined look-alikes'
    images (label 1), truncated per subject so the two pools stay balanced
    where possible.  With ``lookalikes=None`` mining runs separately inside
    each split side; a supplied map is used as-is, except that candidates
    already claimed by the other side are skipped (no identity leakage).
    """
    per = _images_by_subject(store, owners)
    twin_subjects = sorted(s for s in per if s in graph.twin_of and graph.twin_of[s] in per)
    if subject_filter is not None:
        allowed = set(subject_filter)
        twin_subjects = [s for s in twin_subjects if s in allowed]
    if not twin_subjects:
        raise EmptyTrainingSet("identity graph has no twin edges with stored images")

    split = split_subjects(twin_subjects, split_fraction, seed, graph)

    if lookalikes is None:
        singles = sorted(s for s in per if s not in split.train_subjects
                         and s not in split.test_subjects)
        lookalikes = _mine_per_side(store, owners, graph,
                                    (split.train_subjects, split.test_subjects),
                                    singles, split_fraction, seed, lookalike_k, metric)

    # a subject's images may serve only one side; look-alike subjects are
    # committed to the side that first uses them so no identity leaks across
    committed: dict[SubjectId, frozenset[SubjectId]] = {}
    for side in (split.train_subjects, split.test_subjects):
        for sid in side:
            committed[sid] = side

    def pairs_for(side: frozenset[SubjectId]) -> list[PairSpec]:
        out: list[PairSpec] = []
        done_pairs: set[frozenset[SubjectId]] = set()
        for sid in sorted(side):
            co = graph.twin_of.get(sid)
            if co is None or co not in per or frozenset((sid, co)) in done_pairs:
                continue
            done_pairs.add(frozenset((sid, co)))
            positives = [
                PairSpec(*sorted((store.image_ids[i], store.image_ids[j])),
                         pair_class=classify_pair(sid, co, graph), label=LABEL_SIMILAR)
                for i in per[sid] for j in per[co]
            ]
            negatives: list[PairSpec] = []
            for anchor in (sid, co):
                for candidate in lookalikes.get(anchor, ()):
                    if candidate not in per or committed.get(candidate, side) is not side:
                        continue
                    committed[candidate] = side
                    negatives.extend(
                        PairSpec(*sorted((store.image_ids[i], store.image_ids[j])),
                                 pair_class=classify_pair(anchor, candidate, graph),
                                 label=LABEL_DISSIMILAR)
                        for i in per[anchor] for j in per[candidate]
                    )
            # equal per-subject counts where possible
            n = min(len(positives), len(negatives))
            if n == 0:
                continue
            out.extend(positives[:n])
            out.extend(negatives[:n])
        return out

    train = pairs_for(split.train_subjects)
    test = pairs_for(split.test_subjects)
    if not train:
        raise EmptyTrainingSet("no labelled pairs available on the training side")
    return train, test, split


def balanced_sampler(train: list[PairSpec], seed: int) -> Iterator[PairSpec]:
    """Infinite stream drawing positives and negatives with equal probability.

    Each draw flips a fair coin between the positive and negative pools then
    picks uniformly inside the chosen pool; the stream is a pure function of
    the seed.  Pools are validated eagerly, before the first draw.
    """
    positives = [p for p in train if p.label == LABEL_SIMILAR]
    negatives = [p for p in train if p.label == LABEL_DISSIMILAR]
    if not positives or not negatives:
        raise DegeneratePool(
            f"sampler needs both labels, got {len(positives)} positives / {len(negatives)} negatives")

    def stream() -> Iterator[PairSpec]:
        rng = np.random.Generator(np.random.Philox(key=seed))
        while True:
            pool = positives if rng.integers(2) == 0 else negatives
            yield pool[int(rng.integers(len(pool)))]

    return stream()


# --- pair list CSV ---

_PAIRS_HEADER = ["image_a", "image_b", "label", "pair_class"]


def write_pairs_csv(path, pairs: Iterable[PairSpec], header_lines: Iterable[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        w = csv.writer(f)
        w.writerow(_PAIRS_HEADER)
        for p in pairs:
            w.writerow([p.a, p.b, "" if p.label is None else p.label, p.pair_class.label])


def read_pairs_csv(path) -> list[PairSpec]:
    pairs: list[PairSpec] = []
    with open(path, newline="", encoding="utf-8") as f:
        rows = csv.reader(line for line in f if not line.startswith("#"))
        header = next(rows)
        if header != _PAIRS_HEADER:
            raise ValueError(f"{path}: bad pairs header {header!r}")
        for row in rows:
            if not row:
                continue
            a, b, label, cls = row
            pairs.append(PairSpec(a, b, PairClass.from_label(cls),
                                  None if label == "" else int(label)))
    return pairs
