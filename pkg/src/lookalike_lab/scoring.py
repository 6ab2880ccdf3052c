"""Comparison scores and inverted-distance similarity scores.

Two score families are kept strictly apart:

* a *comparison score* is a matcher-style output in [0, 1], higher meaning
  a more confident identity match (cosine mapped to [0, 1] by default);
* a *similarity score* is the L2 distance between projection-head outputs,
  inverted so resemblance reads as "higher is more similar".

Inversion comes in two modes.  Batch-relative inversion subtracts every raw
distance from the batch maximum, which renders scores incomparable across
runs; calibrated inversion reuses a frozen ``reference_max`` so thresholds
keep their meaning on new data.  Reports must state which mode produced a
number.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, EmptyInput, ZeroVector

COSINE_MAPPED = "cosine_mapped"
INVERSE_L2 = "inverse_l2"
COMPARISON_METRICS = (COSINE_MAPPED, INVERSE_L2)

BATCH_RELATIVE = "batch_relative"
CALIBRATED = "calibrated"
INVERSION_MODES = (BATCH_RELATIVE, CALIBRATED)


@dataclass(frozen=True)
class SimilarityScore:
    """Raw head-space L2 distance plus its inverted form."""

    raw_distance: float
    inverted: float
    reference_max: float
    mode: str


def comparison_score(u: np.ndarray, v: np.ndarray, metric: str = COSINE_MAPPED) -> float:
    """Symmetric matcher-style score in [0, 1] between two embedding vectors.

    ``cosine_mapped`` is (1 + cos(u, v)) / 2; ``inverse_l2`` is
    1 / (1 + ||u - v||).  Both give identical vectors a score of 1.
    """
    u = np.asarray(u, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    if u.shape != v.shape:
        raise DimensionMismatch(f"shapes {u.shape} and {v.shape} differ")
    if metric == COSINE_MAPPED:
        # sqrt of the product (not product of sqrts) keeps parallel and
        # antipodal pairs exactly at cosine +1 / -1
        nu2 = float((u * u).sum())
        nv2 = float((v * v).sum())
        if nu2 == 0.0 or nv2 == 0.0:
            raise ZeroVector("cosine comparison undefined for a zero vector")
        cos = float((u * v).sum()) / float(np.sqrt(nu2 * nv2))
        return (1.0 + min(1.0, max(-1.0, cos))) / 2.0
    if metric == INVERSE_L2:
        d = u - v
        return 1.0 / (1.0 + float(np.sqrt((d * d).sum())))
    raise ValueError(f"unknown comparison metric {metric!r}")


def comparison_score_matrix(block_u: np.ndarray, block_v: np.ndarray,
                            metric: str = COSINE_MAPPED) -> np.ndarray:
    """Pairwise comparison scores between two row blocks (m x d, n x d) -> (m, n)."""
    block_u = np.asarray(block_u, dtype=np.float64)
    block_v = np.asarray(block_v, dtype=np.float64)
    if block_u.shape[1] != block_v.shape[1]:
        raise DimensionMismatch(f"dims {block_u.shape[1]} and {block_v.shape[1]} differ")
    if metric == COSINE_MAPPED:
        nu2 = (block_u * block_u).sum(axis=1)
        nv2 = (block_v * block_v).sum(axis=1)
        if np.any(nu2 == 0.0) or np.any(nv2 == 0.0):
            raise ZeroVector("cosine comparison undefined for a zero vector")
        out = np.empty((block_u.shape[0], block_v.shape[0]))
        for i in range(block_u.shape[0]):
            out[i] = (block_v * block_u[i]).sum(axis=1) / np.sqrt(nu2[i] * nv2)
        return (1.0 + np.clip(out, -1.0, 1.0)) / 2.0
    if metric == INVERSE_L2:
        return 1.0 / (1.0 + _pairwise_l2(block_u, block_v))
    raise ValueError(f"unknown comparison metric {metric!r}")


def _pairwise_l2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise L2 distances via per-row subtraction.

    No squared-norm expansion (cancellation error) and no matmul: per-row
    elementwise reductions give bit-identical values regardless of how the
    inputs were blocked, which the match engine's determinism contract needs.
    """
    out = np.empty((a.shape[0], b.shape[0]))
    for i in range(a.shape[0]):
        d = b - a[i]
        out[i] = np.sqrt((d * d).sum(axis=1))
    return out


def raw_similarity(params, x1: np.ndarray, x2: np.ndarray) -> float:
    """L2 distance between the head projections of two embeddings."""
    p1 = params.forward(x1)
    p2 = params.forward(x2)
    return float(np.linalg.norm(p1 - p2))


def similarity_score(params, x1: np.ndarray, x2: np.ndarray,
                     reference_max: float) -> SimilarityScore:
    """Single-pair similarity against a frozen calibration reference.

    Batch-relative inversion needs the whole batch, so the one-pair form is
    always calibrated.
    """
    raw = raw_similarity(params, x1, x2)
    inverted = float(invert_with_reference([raw], reference_max)[0])
    return SimilarityScore(raw, inverted, float(reference_max), CALIBRATED)


def raw_similarity_matrix(params, block_x1: np.ndarray, block_x2: np.ndarray) -> np.ndarray:
    """Pairwise head-space L2 distances between two row blocks."""
    p1 = params.forward_batch(block_x1)
    p2 = params.forward_batch(block_x2)
    return _pairwise_l2(p1, p2)


def invert_scores(raw: "list[float] | np.ndarray") -> tuple[np.ndarray, float]:
    """Batch-relative inversion: subtract every value from the batch maximum.

    The element attaining the max maps to 0 and ordering reverses.  Returns
    the inverted scores and the reference max for calibrated reuse.
    """
    arr = np.asarray(raw, dtype=np.float64)
    if arr.size == 0:
        raise EmptyInput("cannot invert an empty score list")
    if not np.isfinite(arr).all():
        raise ValueError("scores must be finite")
    reference_max = float(arr.max())
    return reference_max - arr, reference_max


def invert_with_reference(raw: "list[float] | np.ndarray", reference_max: float) -> np.ndarray:
    """Calibrated inversion against a frozen reference, clamped at 0.

    Raw distances beyond the calibration maximum would go negative under
    plain subtraction; clamping keeps new batches on the same [0, ref] scale.
    """
    if not np.isfinite(reference_max):
        raise ValueError(f"reference_max must be finite, got {reference_max}")
    arr = np.asarray(raw, dtype=np.float64)
    return np.maximum(reference_max - arr, 0.0)
