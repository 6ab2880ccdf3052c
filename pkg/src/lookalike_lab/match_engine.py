"""All-to-all pairwise scoring with streaming, mergeable accumulation.

The image set is tiled into blocks and the upper triangle of block pairs is
scored independently; per-block partial accumulators are merged in
ascending block order, so results are bit-identical for any worker count
and do not depend on the block size.  Peak memory is O(block^2 + bins +
retained pairs) -- the full score matrix never exists.

Batch-relative similarity jobs need the global maximum raw distance before
inversion, so they make one extra max-finding sweep; memory stays O(1).
"""
from __future__ import annotations

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator

import numpy as np

from .datamodel import (
    EmbeddingStore,
    IdentityGraph,
    ImageId,
    SubjectId,
    classify_pair,
    resolve_owners,
)
from .errors import EmptyInput, IncompatibleAccumulators, ValidationError
from .head import HeadParams
from .scoring import (
    BATCH_RELATIVE,
    CALIBRATED,
    COSINE_MAPPED,
    comparison_score_matrix,
    raw_similarity_matrix,
)

MATED_ONLY = "mated"
NONMATED_ONLY = "nonmated"
ALL_PAIRS = "all"
PAIR_FILTERS = (MATED_ONLY, NONMATED_ONLY, ALL_PAIRS)

DEFAULT_BINS = 512
DEFAULT_BLOCK = 512


@dataclass(frozen=True)
class ComparisonKind:
    """Score pairs with a matcher-style comparison metric on raw embeddings."""

    metric: str = COSINE_MAPPED

    @property
    def score_range(self) -> tuple[float, float]:
        return (0.0, 1.0)


@dataclass(frozen=True)
class SimilarityKind:
    """Score pairs with inverted head-space distance.

    ``batch_relative`` inverts against the run's own maximum raw distance
    (one extra sweep); ``calibrated`` inverts against a frozen
    ``reference_max`` carried over from a calibration run.
    """

    params: HeadParams
    inversion: str = BATCH_RELATIVE
    reference_max: float | None = None

    def __post_init__(self):
        if self.inversion not in (BATCH_RELATIVE, CALIBRATED):
            raise ValidationError(f"unknown inversion mode {self.inversion!r}")
        if self.inversion == CALIBRATED and self.reference_max is None:
            raise ValidationError("calibrated inversion needs reference_max")


@dataclass(frozen=True)
class MatchJob:
    """One all-to-all scoring run over a store joined to its identity graph."""

    store: EmbeddingStore
    graph: IdentityGraph
    image_map: dict[ImageId, SubjectId]
    kind: "ComparisonKind | SimilarityKind" = ComparisonKind()
    pair_filter: str = ALL_PAIRS
    block_size: int = DEFAULT_BLOCK
    bins: int = DEFAULT_BINS
    workers: int = 1

    def __post_init__(self):
        if self.pair_filter not in PAIR_FILTERS:
            raise ValidationError(f"unknown pair filter {self.pair_filter!r}")
        if self.block_size < 1:
            raise ValidationError(f"block size must be >= 1, got {self.block_size}")
        if self.bins < 1 or self.workers < 1:
            raise ValidationError("bins and workers must be >= 1")


@dataclass
class ClassStats:
    count: int = 0
    total: float = 0.0
    total_sq: float = 0.0
    minimum: float = np.inf
    maximum: float = -np.inf

    @property
    def mean(self) -> float:
        return self.total / self.count if self.count else float("nan")

    @property
    def std(self) -> float:
        """Population standard deviation of the class's scores."""
        if not self.count:
            return float("nan")
        var = self.total_sq / self.count - self.mean ** 2
        return float(np.sqrt(max(var, 0.0)))


@dataclass(frozen=True)
class RetainedPair:
    image_a: ImageId
    image_b: ImageId
    class_label: str
    score: float
    raw_distance: float | None = None

    def sort_key(self):
        return (-self.score, self.image_a, self.image_b)


@dataclass
class ScoreAccumulator:
    """Streaming per-pair-class statistics for one scoring run.

    Histogram mass always equals the number of scored pairs: scores outside
    [lo, hi] are clamped into the boundary bins.  ``subject_max`` tracks the
    best non-mated score seen per subject (look-alike sweep input).
    """

    bin_edges: np.ndarray
    retain_threshold: float | None = None
    histograms: dict[str, np.ndarray] = field(default_factory=dict)
    stats: dict[str, ClassStats] = field(default_factory=dict)
    retained: list[RetainedPair] = field(default_factory=list)
    subject_max: dict[SubjectId, float] = field(default_factory=dict)

    @property
    def pair_count(self) -> int:
        return sum(s.count for s in self.stats.values())

    def class_stats(self, label: str) -> ClassStats:
        return self.stats.get(label, ClassStats())

    def add_scores(self, label: str, scores: np.ndarray) -> None:
        if scores.size == 0:
            return
        st = self.stats.setdefault(label, ClassStats())
        st.count += int(scores.size)
        st.total += float(scores.sum())
        st.total_sq += float((scores * scores).sum())
        st.minimum = min(st.minimum, float(scores.min()))
        st.maximum = max(st.maximum, float(scores.max()))
        lo, hi = self.bin_edges[0], self.bin_edges[-1]
        hist, _ = np.histogram(np.clip(scores, lo, hi), bins=self.bin_edges)
        if label in self.histograms:
            self.histograms[label] += hist
        else:
            self.histograms[label] = hist

    def merge(self, other: "ScoreAccumulator") -> None:
        if not np.array_equal(self.bin_edges, other.bin_edges):
            raise IncompatibleAccumulators("bin edges differ")
        if self.retain_threshold != other.retain_threshold:
            raise IncompatibleAccumulators("retain thresholds differ")
        for label, hist in other.histograms.items():
            if label in self.histograms:
                self.histograms[label] += hist
            else:
                self.histograms[label] = hist.copy()
        for label, st in other.stats.items():
            mine = self.stats.setdefault(label, ClassStats())
            mine.count += st.count
            mine.total += st.total
            mine.total_sq += st.total_sq
            mine.minimum = min(mine.minimum, st.minimum)
            mine.maximum = max(mine.maximum, st.maximum)
        self.retained.extend(other.retained)
        for sid, val in other.subject_max.items():
            if val > self.subject_max.get(sid, -np.inf):
                self.subject_max[sid] = val


def merge_accumulators(a: ScoreAccumulator, b: ScoreAccumulator) -> ScoreAccumulator:
    """Pure merge: counts, sums, extrema, histograms and retained lists add.

    Associative and commutative up to retained-pair order; retained lists
    are kept canonically sorted so equal runs compare equal.
    """
    out = ScoreAccumulator(bin_edges=a.bin_edges.copy(), retain_threshold=a.retain_threshold)
    out.merge(a)
    out.merge(b)
    out.retained.sort(key=RetainedPair.sort_key)
    return out


# --- relationship lookup tables ---

class _ClassIndex:
    """Subject-level relationship lookup vectorized over image blocks."""

    def __init__(self, graph: IdentityGraph, owners: tuple[SubjectId, ...]):
        self.owners = owners
        subjects = sorted(set(owners))
        self.subjects = subjects
        self.subject_code = {s: i for i, s in enumerate(subjects)}
        self.owner_codes = np.array([self.subject_code[s] for s in owners], dtype=np.int64)
        self.incomplete = np.array(
            [not graph.meta_complete.get(s, True) for s in subjects], dtype=bool)
        # sparse map: subject code -> {related subject code: class label}
        self.related: dict[int, dict[int, str]] = {}
        for a, b in graph.twin_of.items():
            if a in self.subject_code and b in self.subject_code:
                label = classify_pair(a, b, graph).label
                self.related.setdefault(self.subject_code[a], {})[self.subject_code[b]] = label
        for pair in graph.family_label:
            a, b = sorted(pair)
            if a in self.subject_code and b in self.subject_code:
                label = classify_pair(a, b, graph).label
                ca, cb = self.subject_code[a], self.subject_code[b]
                self.related.setdefault(ca, {})[cb] = label
                self.related.setdefault(cb, {})[ca] = label

    def block_labels(self, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
        """Class label of every (row, col) image pair as an object array."""
        oc_r = self.owner_codes[rows]
        oc_c = self.owner_codes[cols]
        labels = np.full((rows.size, cols.size), "no_relation", dtype=object)
        unknown = self.incomplete[oc_r][:, None] | self.incomplete[oc_c][None, :]
        labels[unknown] = "unknown"
        for i, code in enumerate(oc_r):
            rel = self.related.get(int(code))
            if rel:
                for other_code, label in rel.items():
                    labels[i, oc_c == other_code] = label
        labels[oc_r[:, None] == oc_c[None, :]] = "same_subject"
        return labels


def _blocks(n: int, size: int) -> list[tuple[int, int]]:
    starts = list(range(0, n, size))
    return [(i, j) for i in starts for j in starts if j >= i]


def _score_block(matrix: np.ndarray, rows: np.ndarray, cols: np.ndarray, kind) -> np.ndarray:
    if isinstance(kind, ComparisonKind):
        return comparison_score_matrix(matrix[rows], matrix[cols], kind.metric)
    return raw_similarity_matrix(kind.params, matrix[rows], matrix[cols])


def _block_pair_mask(rows: np.ndarray, cols: np.ndarray, labels: np.ndarray,
                     pair_filter: str) -> np.ndarray:
    """Unordered-pair mask: strict upper triangle plus the class filter."""
    mask = rows[:, None] < cols[None, :]
    if pair_filter == MATED_ONLY:
        mask &= labels == "same_subject"
    elif pair_filter == NONMATED_ONLY:
        mask &= labels != "same_subject"
    return mask


def run_match(job: MatchJob, retain_threshold: float | None = None) -> ScoreAccumulator:
    """Score every unordered image pair passing the filter exactly once.

    Returns the merged accumulator; pairs scoring at or above
    ``retain_threshold`` are kept individually (canonically sorted).
    """
    if len(job.store) == 0:
        raise EmptyInput("embedding store is empty")
    owners = resolve_owners(job.store, job.image_map, job.graph)
    index = _ClassIndex(job.graph, owners)
    matrix = job.store.matrix64()
    n = len(job.store)
    block_pairs = _blocks(n, job.block_size)

    kind = job.kind
    reference_max = None
    if isinstance(kind, SimilarityKind):
        if kind.inversion == CALIBRATED:
            reference_max = float(kind.reference_max)
        else:
            reference_max = _max_raw_distance(job, matrix, index, block_pairs)
        lo, hi = 0.0, reference_max if reference_max > 0 else 1.0
    else:
        lo, hi = kind.score_range
    edges = np.linspace(lo, hi, job.bins + 1)

    def score_one(block: tuple[int, int]) -> ScoreAccumulator:
        bi, bj = block
        rows = np.arange(bi, min(bi + job.block_size, n))
        cols = np.arange(bj, min(bj + job.block_size, n))
        scores = _score_block(matrix, rows, cols, kind)
        raw = None
        if isinstance(kind, SimilarityKind):
            raw = scores
            scores = np.maximum(reference_max - raw, 0.0)
        labels = index.block_labels(rows, cols)
        mask = _block_pair_mask(rows, cols, labels, job.pair_filter)
        part = ScoreAccumulator(bin_edges=edges, retain_threshold=retain_threshold)
        for label in np.unique(labels[mask]):
            part.add_scores(str(label), scores[mask & (labels == label)])
        if retain_threshold is not None:
            keep = mask & (scores >= retain_threshold)
            for i, j in zip(*np.nonzero(keep)):
                a, b = sorted((job.store.image_ids[rows[i]], job.store.image_ids[cols[j]]))
                part.retained.append(RetainedPair(
                    a, b, str(labels[i, j]), float(scores[i, j]),
                    float(raw[i, j]) if raw is not None else None))
        nm_i, nm_j = np.nonzero(mask & (labels != "same_subject"))
        if nm_i.size:
            vals = scores[nm_i, nm_j]
            codes = np.concatenate([index.owner_codes[rows[nm_i]],
                                    index.owner_codes[cols[nm_j]]])
            best = np.full(len(index.subjects), -np.inf)
            np.maximum.at(best, codes, np.concatenate([vals, vals]))
            for c in np.unique(codes):
                part.subject_max[index.subjects[c]] = float(best[c])
        return part

    total = ScoreAccumulator(bin_edges=edges, retain_threshold=retain_threshold)
    for part in _map_blocks(score_one, block_pairs, job.workers):
        total.merge(part)
    total.retained.sort(key=RetainedPair.sort_key)
    return total


def _max_raw_distance(job: MatchJob, matrix: np.ndarray, index: _ClassIndex,
                      block_pairs: list[tuple[int, int]]) -> float:
    """Maximum raw head-space distance over pairs passing the filter."""
    n = matrix.shape[0]

    def block_max(block: tuple[int, int]) -> float:
        bi, bj = block
        rows = np.arange(bi, min(bi + job.block_size, n))
        cols = np.arange(bj, min(bj + job.block_size, n))
        raw = _score_block(matrix, rows, cols, job.kind)
        labels = index.block_labels(rows, cols)
        mask = _block_pair_mask(rows, cols, labels, job.pair_filter)
        return float(raw[mask].max()) if mask.any() else -np.inf

    best = max(_map_blocks(block_max, block_pairs, job.workers), default=-np.inf)
    if best == -np.inf:
        return 0.0
    return best


def _map_blocks(fn, block_pairs: list[tuple[int, int]], workers: int) -> Iterator:
    """Apply fn to blocks, yielding results in ascending block order.

    Chunked submission bounds the number of in-flight results regardless of
    completion order; the yield order (and therefore every merge) is fixed.
    """
    if workers == 1:
        for block in block_pairs:
            yield fn(block)
        return
    chunk = workers * 4
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for start in range(0, len(block_pairs), chunk):
            yield from pool.map(fn, block_pairs[start:start + chunk])


def top_k_pairs(job: MatchJob, k: int) -> list[tuple[ImageId, ImageId, str, float]]:
    """The k highest-scoring pairs passing the filter, ties broken by
    ascending (image_a, image_b); returns fewer when fewer pairs exist."""
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    owners = resolve_owners(job.store, job.image_map, job.graph)
    index = _ClassIndex(job.graph, owners)
    matrix = job.store.matrix64()
    n = len(job.store)

    kind = job.kind
    invert_ref = None
    block_pairs = _blocks(n, job.block_size)
    if isinstance(kind, SimilarityKind):
        invert_ref = (float(kind.reference_max) if kind.inversion == CALIBRATED
                      else _max_raw_distance(job, matrix, index, block_pairs))

    def block_candidates(block):
        bi, bj = block
        rows = np.arange(bi, min(bi + job.block_size, n))
        cols = np.arange(bj, min(bj + job.block_size, n))
        scores = _score_block(matrix, rows, cols, kind)
        if invert_ref is not None:
            scores = np.maximum(invert_ref - scores, 0.0)
        labels = index.block_labels(rows, cols)
        mask = _block_pair_mask(rows, cols, labels, job.pair_filter)
        if not mask.any():
            return []
        vals = scores[mask]
        if vals.size > k:
            kth = np.partition(vals, vals.size - k)[vals.size - k]
            keep = mask & (scores >= kth)
        else:
            keep = mask
        out = []
        for i, j in zip(*np.nonzero(keep)):
            a, b = sorted((job.store.image_ids[rows[i]], job.store.image_ids[cols[j]]))
            out.append((a, b, str(labels[i, j]), float(scores[i, j])))
        return out

    candidates: list[tuple[ImageId, ImageId, str, float]] = []
    for part in _map_blocks(block_candidates, block_pairs, job.workers):
        candidates.extend(part)
    candidates.sort(key=lambda t: (-t[3], t[0], t[1]))
    return candidates[:k]


# --- CSV serialization ---

def write_histogram_csv(path, acc: ScoreAccumulator, header_lines: Iterable[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        w = csv.writer(f)
        w.writerow(["bin_lo", "bin_hi", "pair_class", "count"])
        edges = acc.bin_edges
        for label in sorted(acc.histograms):
            hist = acc.histograms[label]
            for b in range(len(hist)):
                if hist[b]:
                    w.writerow([f"{edges[b]:.12g}", f"{edges[b + 1]:.12g}", label, int(hist[b])])


def write_summary_csv(path, acc: ScoreAccumulator, header_lines: Iterable[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        w = csv.writer(f)
        w.writerow(["pair_class", "count", "mean", "std", "min", "max"])
        for label in sorted(acc.stats):
            st = acc.stats[label]
            w.writerow([label, st.count, f"{st.mean:.12g}", f"{st.std:.12g}",
                        f"{st.minimum:.12g}", f"{st.maximum:.12g}"])


def write_retained_csv(path, acc: ScoreAccumulator, kind, header_lines: Iterable[str] = ()) -> None:
    """Retained pairs in the shared score-table layout; the columns not
    produced by this run's score kind stay empty."""
    is_similarity = isinstance(kind, SimilarityKind)
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        w = csv.writer(f)
        w.writerow(["image_a", "image_b", "pair_class",
                    "comparison_score", "raw_similarity", "similarity_score"])
        for r in acc.retained:
            if is_similarity:
                w.writerow([r.image_a, r.image_b, r.class_label, "",
                            f"{r.raw_distance:.12g}", f"{r.score:.12g}"])
            else:
                w.writerow([r.image_a, r.image_b, r.class_label,
                            f"{r.score:.12g}", "", ""])


def write_subject_max_csv(path, acc: ScoreAccumulator, header_lines: Iterable[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        w = csv.writer(f)
        w.writerow(["subject_id", "max_nonmated_score"])
        for sid in sorted(acc.subject_max):
            w.writerow([sid, f"{acc.subject_max[sid]:.12g}"])


def read_retained_csv(path) -> list[RetainedPair]:
    out: list[RetainedPair] = []
    with open(path, newline="", encoding="utf-8") as f:
        rows = csv.reader(line for line in f if not line.startswith("#"))
        header = next(rows, None)
        expected = ["image_a", "image_b", "pair_class",
                    "comparison_score", "raw_similarity", "similarity_score"]
        if header != expected:
            raise ValidationError(f"{path}: bad retained-pairs header {header!r}")
        for row in rows:
            if not row:
                continue
            a, b, label, comp, raw, sim = row
            if sim:
                out.append(RetainedPair(a, b, label, float(sim), float(raw)))
            else:
                out.append(RetainedPair(a, b, label, float(comp)))
    return out
