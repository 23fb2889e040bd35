"""Scene segmentation metrics: AP, Miou, exact Recall and Recall@3s.

All functions take boundary vectors over boundaries 1..n-1 (index 0 of the
vector is the boundary after the first shot).
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)


def average_precision(scores, labels) -> float:
    """Non-interpolated AP; equal scores are ranked by boundary index.

    Returns NaN when there are no positive labels.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels).astype(bool)
    if scores.shape != labels.shape:
        raise ValueError(f"length mismatch: {scores.shape} vs {labels.shape}")
    n_pos = int(labels.sum())
    if n_pos == 0:
        return math.nan
    order = np.argsort(-scores, kind="stable")
    hits = labels[order]
    ranks = np.flatnonzero(hits) + 1
    precision = np.arange(1, n_pos + 1) / ranks
    return float(precision.sum() / n_pos)


def scene_intervals(bits) -> list[tuple[int, int]]:
    """Inclusive shot ranges of the scenes implied by a boundary vector."""
    bits = np.asarray(bits)
    n = len(bits) + 1
    starts = [0] + [int(i) + 1 for i in np.flatnonzero(bits)]
    ends = starts[1:] + [n]
    return [(a, b - 1) for a, b in zip(starts, ends)]


def _best_iou(src, dst) -> np.ndarray:
    a = np.array(src)
    b = np.array(dst)
    inter = np.minimum(a[:, None, 1], b[None, :, 1]) - np.maximum(a[:, None, 0], b[None, :, 0]) + 1
    inter = np.maximum(inter, 0)
    union = (a[:, None, 1] - a[:, None, 0] + 1) + (b[None, :, 1] - b[None, :, 0] + 1) - inter
    return (inter / union).max(axis=1)


def miou(pred, gt, n_shots: int | None = None) -> float:
    """Symmetric mean of each scene's best IoU against the other partition."""
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gt.shape}")
    if n_shots is not None and len(gt) != n_shots - 1:
        raise ValueError(f"boundary vectors must have length n_shots - 1 = {n_shots - 1}")
    P, G = scene_intervals(pred), scene_intervals(gt)
    return float(0.5 * (_best_iou(G, P).mean() + _best_iou(P, G).mean()))


def boundary_recall(pred, gt, boundary_times=None, window_s: float = 0.0) -> float:
    """Share of ground-truth boundaries with a prediction within ``window_s``.

    ``boundary_times[i]`` is the time of boundary i (the end of the shot it
    follows); a full list of shot end times is also accepted. ``window_s=0``
    compares boundary indices exactly. Returns NaN without ground-truth
    boundaries.
    """
    if window_s < 0:
        raise ValueError("window_s must be >= 0")
    pred = np.asarray(pred).astype(bool)
    gt = np.asarray(gt).astype(bool)
    if pred.shape != gt.shape:
        raise ValueError(f"length mismatch: {pred.shape} vs {gt.shape}")
    if not gt.any():
        return math.nan
    if window_s == 0:
        return float((pred & gt).sum() / gt.sum())
    if boundary_times is None:
        raise ValueError("boundary_times are required for a nonzero window")
    t = np.asarray(boundary_times, dtype=float)[:len(gt)]
    tg, tp = t[gt], t[pred]
    if len(tp) == 0:
        return 0.0
    hit = (np.abs(tg[:, None] - tp[None, :]) <= window_s + 1e-9).any(axis=1)
    return float(hit.mean())


@dataclass
class MovieMetrics:
    movie_id: str
    ap: float
    miou: float
    recall: float
    recall_at_3s: float
    n_boundaries: int
    n_positives: int

    @property
    def excluded(self) -> bool:
        return self.n_positives == 0


@dataclass
class MetricsReport:
    movies: list[MovieMetrics] = field(default_factory=list)

    def _mean(self, attr) -> float:
        vals = [getattr(m, attr) for m in self.movies if not math.isnan(getattr(m, attr))]
        return float(np.mean(vals)) if vals else math.nan

    @property
    def ap(self) -> float:
        return self._mean("ap")

    @property
    def miou(self) -> float:
        return self._mean("miou")

    @property
    def recall(self) -> float:
        return self._mean("recall")

    @property
    def recall_at_3s(self) -> float:
        return self._mean("recall_at_3s")

    def to_csv(self) -> str:
        def fmt(v):
            return "" if isinstance(v, float) and math.isnan(v) else f"{v:.6f}"

        lines = ["movie_id,ap,miou,recall,recall_at_3s,n_boundaries,n_positives,excluded"]
        for m in self.movies:
            lines.append(f"{m.movie_id},{fmt(m.ap)},{fmt(m.miou)},{fmt(m.recall)},"
                         f"{fmt(m.recall_at_3s)},{m.n_boundaries},{m.n_positives},{int(m.excluded)}")
        lines.append(f"MEAN,{fmt(self.ap)},{fmt(self.miou)},{fmt(self.recall)},"
                     f"{fmt(self.recall_at_3s)},{sum(m.n_boundaries for m in self.movies)},"
                     f"{sum(m.n_positives for m in self.movies)},"
                     f"{sum(m.excluded for m in self.movies)}")
        return "\n".join(lines) + "\n"


def evaluate_movie(movie_id, scores, bits, gt, boundary_times=None, window_s=3.0) -> MovieMetrics:
    gt = np.asarray(gt)
    ap = average_precision(scores, gt)
    if math.isnan(ap):
        log.warning("movie %s has no ground-truth boundaries; excluded from AP and recall means",
                    movie_id)
    r3 = (boundary_recall(bits, gt, boundary_times, window_s)
          if boundary_times is not None else math.nan)
    return MovieMetrics(movie_id, ap, miou(bits, gt), boundary_recall(bits, gt), r3,
                        len(gt), int(np.sum(gt)))


def evaluate_corpus(preds: dict, gts: dict, times: dict | None = None,
                    window_s: float = 3.0) -> MetricsReport:
    """Per-movie metrics and unweighted means.

    ``preds[movie] = (scores, bits)``, ``gts[movie] = bits`` and, for
    Recall@3s, ``times[movie]`` = boundary times.
    """
    if set(preds) != set(gts):
        missing = sorted(set(preds) ^ set(gts))
        raise KeyError(f"prediction and ground-truth movie sets differ: {missing}")
    report = MetricsReport()
    for mid in sorted(preds):
        scores, bits = preds[mid]
        t = None if times is None else times.get(mid)
        report.movies.append(evaluate_movie(mid, scores, bits, gts[mid], t, window_s))
    return report
