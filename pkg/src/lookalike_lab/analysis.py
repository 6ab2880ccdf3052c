"""Statistical procedures over score collections.

Conventions, stated once and carried into every report header:

* higher score means a more confident match (similarity orientation);
* percentiles interpolate linearly between order statistics;
* AUC counts ties as one half (Mann-Whitney convention);
* EER and FNMR@FMR are linearly interpolated between bracketing
  thresholds, the standard choice for finite score sets;
* Bland-Altman standard deviations are population (ddof = 0).
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    DegenerateVariance,
    EmptyClass,
    NoTwinPairs,
    TooFewSamples,
)
from .match_engine import RetainedPair, ScoreAccumulator

IDENTICAL_TWIN_LABEL = "identical_twin"

MINMAX = "minmax"
ZSCORE = "zscore"


# --- experimental twin threshold ---

@dataclass(frozen=True)
class TwinThreshold:
    """Mean identical-twin non-mated score: the extraction bar for
    look-alike candidates."""

    value: float
    source: str            # "comparison" or "similarity"
    n_pairs: int


def twin_threshold(acc: ScoreAccumulator, source: str) -> TwinThreshold:
    """T = arithmetic mean of the identical-twin non-mated scores."""
    st = acc.class_stats(IDENTICAL_TWIN_LABEL)
    if st.count == 0:
        raise NoTwinPairs("no identical-twin non-mated pairs were scored")
    return TwinThreshold(st.mean, source, st.count)


# --- above-threshold relationship table ---

@dataclass(frozen=True)
class TableRow:
    pair_class: str
    count: int
    mean: float
    minimum: float
    maximum: float
    percent_of_matches: float


def above_threshold_table(retained: Sequence[RetainedPair], threshold: float,
                          total_pairs: int) -> list[TableRow]:
    """Per-relationship breakdown of pairs scoring at or above the threshold.

    The percentage denominator is the total number of unordered pairs the
    run scored (``total_pairs``), not just the retained ones; a totals row
    labelled "total" closes the table.
    """
    kept = [r for r in retained if r.score >= threshold]
    by_class: dict[str, list[float]] = {}
    for r in kept:
        by_class.setdefault(r.class_label, []).append(r.score)
    rows = []
    for label in sorted(by_class):
        scores = np.asarray(by_class[label])
        rows.append(TableRow(
            label, int(scores.size), float(scores.mean()),
            float(scores.min()), float(scores.max()),
            100.0 * scores.size / total_pairs if total_pairs else 0.0))
    total = len(kept)
    rows.append(TableRow("total", total, float("nan"), float("nan"), float("nan"),
                         100.0 * total / total_pairs if total_pairs else 0.0))
    return rows


# --- ROC and verification metrics ---

@dataclass(frozen=True)
class RocCurve:
    """FMR/FNMR sweep over the union of observed scores.

    Orientation: a pair matches when its score is >= the threshold, so FMR
    falls and FNMR rises as the threshold increases.
    """

    thresholds: np.ndarray
    fmr: np.ndarray
    fnmr: np.ndarray
    genuine_count: int
    impostor_count: int


def roc(genuine: Sequence[float], impostor: Sequence[float]) -> RocCurve:
    """Exact ROC: at each candidate threshold t, FMR is the impostor
    fraction scoring >= t and FNMR the genuine fraction scoring < t."""
    g = np.sort(np.asarray(genuine, dtype=np.float64))
    i = np.sort(np.asarray(impostor, dtype=np.float64))
    if g.size == 0 or i.size == 0:
        raise EmptyClass("ROC needs at least one genuine and one impostor score")
    all_scores = np.unique(np.concatenate([g, i]))
    # one threshold below every score (FMR 1, FNMR 0) and one above (FMR 0, FNMR 1)
    thresholds = np.concatenate([[all_scores[0] - 1.0], all_scores, [all_scores[-1] + 1.0]])
    fmr = 1.0 - np.searchsorted(i, thresholds, side="left") / i.size
    fnmr = np.searchsorted(g, thresholds, side="left") / g.size
    return RocCurve(thresholds, fmr, fnmr, int(g.size), int(i.size))


def mann_whitney_auc(genuine: Sequence[float], impostor: Sequence[float]) -> float:
    """P(random genuine > random impostor) with ties counting one half."""
    g = np.sort(np.asarray(genuine, dtype=np.float64))
    i = np.sort(np.asarray(impostor, dtype=np.float64))
    if g.size == 0 or i.size == 0:
        raise EmptyClass("AUC needs at least one genuine and one impostor score")
    wins = np.searchsorted(i, g, side="left").sum()
    ties = (np.searchsorted(i, g, side="right") - np.searchsorted(i, g, side="left")).sum()
    return float((wins + 0.5 * ties) / (g.size * i.size))


@dataclass(frozen=True)
class VerificationMetrics:
    auc: float
    eer: float
    eer_threshold: float
    fnmr_at_fmr: float
    fmr_target: float
    fmr_floor: float            # smallest positive FMR the impostor count allows
    fmr_target_reachable: bool


def _interp_crossing(x: np.ndarray, y: np.ndarray, k: int) -> tuple[float, float]:
    """Linear interpolation of the x where y crosses 0 between k and k+1,
    returning (x*, fraction along the segment)."""
    y0, y1 = y[k], y[k + 1]
    if y1 == y0:
        return float(x[k]), 0.0
    t = -y0 / (y1 - y0)
    return float(x[k] + t * (x[k + 1] - x[k])), float(t)


def verification_metrics(curve: RocCurve, genuine: Sequence[float],
                         impostor: Sequence[float], fmr_target: float = 1e-3,
                         ) -> VerificationMetrics:
    """AUC (Mann-Whitney), interpolated EER, and FNMR at the target FMR.

    When the impostor count is too small to express the target FMR
    (impostors < 1/target), the metric is evaluated at the achievable floor
    of one impostor acceptance and flagged unreachable.
    """
    auc = mann_whitney_auc(genuine, impostor)

    diff = curve.fmr - curve.fnmr      # non-increasing minus non-decreasing
    sign_change = np.nonzero(diff[:-1] * diff[1:] <= 0)[0]
    if diff[0] <= 0:
        eer = float((curve.fmr[0] + curve.fnmr[0]) / 2.0)
        eer_thr = float(curve.thresholds[0])
    elif sign_change.size == 0:
        eer = float((curve.fmr[-1] + curve.fnmr[-1]) / 2.0)
        eer_thr = float(curve.thresholds[-1])
    else:
        k = int(sign_change[0])
        eer_thr, t = _interp_crossing(curve.thresholds, diff, k)
        eer = float(curve.fmr[k] + t * (curve.fmr[k + 1] - curve.fmr[k]))

    fmr_floor = 1.0 / curve.impostor_count
    reachable = fmr_target >= fmr_floor
    target = fmr_target if reachable else fmr_floor
    # several thresholds can share an FMR (a plateau); the operating point
    # at that FMR is the one with the lowest FNMR, and interpolation runs
    # over that envelope so the abscissae are strictly increasing
    uniq_fmr, inverse = np.unique(curve.fmr, return_inverse=True)
    best_fnmr = np.full(uniq_fmr.size, np.inf)
    np.minimum.at(best_fnmr, inverse, curve.fnmr)
    fnmr_at = float(np.interp(target, uniq_fmr, best_fnmr))
    return VerificationMetrics(auc, eer, eer_thr, fnmr_at, fmr_target,
                               fmr_floor, reachable)


# --- twin similarity baseline ---

@dataclass(frozen=True)
class SimilarityBaseline:
    """Mean and quartiles of identical-twin similarity; the 75th percentile
    is the stricter fourth-quartile entry bar."""

    mean: float
    q1: float
    q2: float
    q3: float
    n: int

    @property
    def q4_threshold(self) -> float:
        return self.q3


def similarity_baseline(twin_scores: Sequence[float]) -> SimilarityBaseline:
    """Baseline statistics over identical-twin similarity scores; quartiles
    use linear interpolation between order statistics."""
    arr = np.asarray(twin_scores, dtype=np.float64)
    if arr.size < 4:
        raise TooFewSamples(f"need >= 4 twin scores for quartiles, got {arr.size}")
    q1, q2, q3 = (float(np.percentile(arr, p)) for p in (25, 50, 75))
    return SimilarityBaseline(float(arr.mean()), q1, q2, q3, int(arr.size))


# --- correlation and agreement ---

@dataclass(frozen=True)
class CorrelationReport:
    pearson_r: float
    slope: float
    intercept: float
    n: int


def correlate(pairs: Sequence[tuple[float, float]]) -> CorrelationReport:
    """Pearson r and the least-squares line through (comparison, similarity)
    score points."""
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise TooFewSamples("correlation needs at least 2 score pairs")
    x, y = arr[:, 0], arr[:, 1]
    vx = float(((x - x.mean()) ** 2).mean())
    vy = float(((y - y.mean()) ** 2).mean())
    if vx == 0.0 or vy == 0.0:
        raise DegenerateVariance("an axis has zero variance")
    cov = float(((x - x.mean()) * (y - y.mean())).mean())
    slope = cov / vx
    intercept = float(y.mean() - slope * x.mean())
    r = cov / float(np.sqrt(vx * vy))
    return CorrelationReport(r, slope, intercept, int(arr.shape[0]))


@dataclass(frozen=True)
class BlandAltmanReport:
    """Agreement analysis of two score families after normalization."""

    means: np.ndarray
    diffs: np.ndarray
    mean_diff: float
    loa_low: float
    loa_high: float
    normalization: str


def _normalize(values: np.ndarray, how: str) -> np.ndarray:
    if how == MINMAX:
        span = float(values.max() - values.min())
        if span == 0.0:
            # constant family: maps to 0 by convention
            return np.zeros_like(values)
        return (values - values.min()) / span
    if how == ZSCORE:
        sd = float(values.std())
        if sd == 0.0:
            raise DegenerateVariance("zscore normalization of a constant family")
        return (values - values.mean()) / sd
    raise ValueError(f"unknown normalization {how!r}")


def bland_altman(pairs: Sequence[tuple[float, float]],
                 normalization: str = MINMAX) -> BlandAltmanReport:
    """Per-pair (mean, difference) points of the two normalized score
    families with 1.96-sigma limits of agreement (population sd)."""
    arr = np.asarray(pairs, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 2:
        raise TooFewSamples("agreement analysis needs at least 2 score pairs")
    a = _normalize(arr[:, 0], normalization)
    b = _normalize(arr[:, 1], normalization)
    diffs = a - b
    means = (a + b) / 2.0
    mean_diff = float(diffs.mean())
    sd = float(diffs.std())
    return BlandAltmanReport(means, diffs, mean_diff,
                             mean_diff - 1.96 * sd, mean_diff + 1.96 * sd,
                             normalization)


# --- look-alike frequency sweep ---

@dataclass(frozen=True)
class SweepPoint:
    threshold: float
    identities: int
    fraction: float


def lookalike_sweep(subject_max: dict[str, float],
                    thresholds: Iterable[float]) -> list[SweepPoint]:
    """How many identities keep at least one non-mated score >= threshold.

    Input is one maximum score per identity; counts are non-increasing in
    the threshold.
    """
    maxima = np.asarray(sorted(subject_max.values()), dtype=np.float64)
    n = maxima.size
    out = []
    for t in thresholds:
        count = int(n - np.searchsorted(maxima, t, side="left"))
        out.append(SweepPoint(float(t), count, count / n if n else 0.0))
    return out


# --- CSV emission ---

def write_table_csv(path, rows: list[TableRow], header_lines: Iterable[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        w = csv.writer(f)
        w.writerow(["pair_class", "count", "mean", "min", "max", "percent_of_matches"])
        for r in rows:
            w.writerow([r.pair_class, r.count, f"{r.mean:.12g}", f"{r.minimum:.12g}",
                        f"{r.maximum:.12g}", f"{r.percent_of_matches:.12g}"])


def write_roc_csv(path, curve: RocCurve, header_lines: Iterable[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        w = csv.writer(f)
        w.writerow(["threshold", "fmr", "fnmr"])
        for t, fm, fn in zip(curve.thresholds, curve.fmr, curve.fnmr):
            w.writerow([f"{t:.12g}", f"{fm:.12g}", f"{fn:.12g}"])


def write_sweep_csv(path, points: list[SweepPoint], header_lines: Iterable[str] = ()) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        for line in header_lines:
            f.write(f"# {line}\n")
        w = csv.writer(f)
        w.writerow(["threshold", "identities", "fraction"])
        for p in points:
            w.writerow([f"{p.threshold:.12g}", p.identities, f"{p.fraction:.12g}"])
