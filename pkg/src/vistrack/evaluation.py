"""Spatio-temporal track evaluation: AP over an IoU-threshold grid plus
average recall at capped detections per video.

The track IoU pools pixels over time: sum of per-frame intersections
divided by the sum of per-frame unions, with absent entries (or absent
masks) counting as empty frames. Matching is greedy per video and
category in descending score order; precision/recall curves follow the
standard envelope construction sampled at evenly spaced recall points.
Ties between equal scores break on the stable key (video id, track
emission order).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import Track, VideoGroundTruth, rle_intersection_area
from .errors import ConfigError, DimensionMismatch, UnknownCategory, UnknownVideoId

DEFAULT_IOU_THRESHOLDS = tuple(round(0.5 + 0.05 * i, 2) for i in range(10))


@dataclass(frozen=True)
class EvalConfig:
    iou_thresholds: tuple[float, ...] = DEFAULT_IOU_THRESHOLDS
    recall_points: int = 101
    max_detections: tuple[int, ...] = (1, 10)
    category_agnostic: bool = False

    def __post_init__(self):
        object.__setattr__(self, "iou_thresholds", tuple(float(t) for t in self.iou_thresholds))
        object.__setattr__(self, "max_detections", tuple(int(k) for k in self.max_detections))
        if not self.iou_thresholds:
            raise ConfigError("iou_thresholds must be non-empty")
        if any(not 0.0 < t <= 1.0 for t in self.iou_thresholds):
            raise ConfigError("iou_thresholds must lie in (0, 1]")
        if list(self.iou_thresholds) != sorted(set(self.iou_thresholds)):
            raise ConfigError("iou_thresholds must be strictly increasing")
        if self.recall_points < 2:
            raise ConfigError("recall_points must be at least 2")
        if not self.max_detections or any(k < 1 for k in self.max_detections):
            raise ConfigError("max_detections entries must be positive")


@dataclass(frozen=True)
class Metrics:
    """AP averaged over the threshold grid, AP at 0.50/0.75, and AR@k."""

    ap: float
    ap50: float
    ap75: float
    ar: Mapping[int, float]


@dataclass
class EvalReport:
    per_category: dict[int, Metrics | None]
    overall: Metrics | None = None


# ---------------------------------------------------------------------------
# Spatio-temporal IoU


def st_iou(
    a: Track,
    b: Track,
    video_length: int,
    video_dims: tuple[int, int] | None = None,
) -> float:
    """Sum of per-frame intersections over the sum of per-frame unions.

    A frame missing from a track (or present without a mask) contributes
    an empty mask. When both sums are zero the tracks are identical as
    pixel sets, so the value is 1.0.
    """
    inter_sum = 0
    union_sum = 0
    for f in set(a.entries) | set(b.entries):
        if f >= video_length:
            raise DimensionMismatch("track entry frame index must be below the video length")
        ea = a.entries.get(f)
        eb = b.entries.get(f)
        ma = ea.mask if ea is not None else None
        mb = eb.mask if eb is not None else None
        for m in (ma, mb):
            if m is not None and video_dims is not None and (m.height, m.width) != video_dims:
                raise DimensionMismatch("track mask dimensions must equal video dimensions")
        area_a = ma.area if ma is not None else 0
        area_b = mb.area if mb is not None else 0
        inter = rle_intersection_area(ma, mb) if (ma is not None and mb is not None) else 0
        inter_sum += inter
        union_sum += area_a + area_b - inter
    if union_sum == 0:
        return 1.0
    return inter_sum / union_sum


# ---------------------------------------------------------------------------
# Matching and average precision


def _score_order(tracks: Sequence[Track]) -> list[int]:
    """Indices in descending score; equal scores keep emission order."""
    return sorted(range(len(tracks)), key=lambda i: (-tracks[i].score, i))


def _greedy_tp_flags(
    iou: np.ndarray, threshold: float, limit: int | None = None
) -> tuple[list[bool], int]:
    """Row-by-row greedy matching of score-sorted predictions.

    Each prediction takes the unmatched ground-truth column with the
    highest IoU at or above the threshold (ties: lowest column index).
    Returns per-prediction hit flags and the number of matched columns.
    """
    n_pred, n_gt = iou.shape
    rows = n_pred if limit is None else min(n_pred, limit)
    matched_cols: set[int] = set()
    flags = []
    for r in range(rows):
        best_j = -1
        best_v = -1.0
        for j in range(n_gt):
            if j in matched_cols:
                continue
            v = iou[r, j]
            if v >= threshold and v > best_v:
                best_v = v
                best_j = j
        if best_j >= 0:
            matched_cols.add(best_j)
            flags.append(True)
        else:
            flags.append(False)
    return flags, len(matched_cols)


def match_tracks(
    pred_tracks: Sequence[Track],
    gt_tracks: Sequence[Track],
    iou_threshold: float,
    video_length: int,
    video_dims: tuple[int, int] | None = None,
    category: int | None = None,
) -> list[tuple[Track, Track | None]]:
    """Greedy score-ordered matching for one video.

    Returns (prediction, matched ground truth or None) pairs in
    descending prediction score. When ``category`` is given both lists
    are filtered to it first.
    """
    preds = list(pred_tracks)
    gts = list(gt_tracks)
    if category is not None:
        preds = [t for t in preds if t.category_id == category]
        gts = [t for t in gts if t.category_id == category]
    order = _score_order(preds)
    iou = np.zeros((len(preds), len(gts)))
    for r, p in enumerate(order):
        for j, g in enumerate(gts):
            iou[r, j] = st_iou(preds[p], g, video_length, video_dims)
    out: list[tuple[Track, Track | None]] = []
    matched_cols: set[int] = set()
    for r, p in enumerate(order):
        best_j = -1
        best_v = -1.0
        for j in range(len(gts)):
            if j in matched_cols:
                continue
            if iou[r, j] >= iou_threshold and iou[r, j] > best_v:
                best_v = iou[r, j]
                best_j = j
        if best_j >= 0:
            matched_cols.add(best_j)
            out.append((preds[p], gts[best_j]))
        else:
            out.append((preds[p], None))
    return out


def _ap_from_flags(flags: Sequence[bool], n_gt: int, recall_points: int) -> float:
    """Envelope average precision sampled at evenly spaced recall points."""
    if n_gt <= 0:
        raise ValueError("n_gt must be positive")
    if not flags:
        return 0.0
    tp = np.cumsum(np.asarray(flags, dtype=np.float64))
    fp = np.cumsum(1.0 - np.asarray(flags, dtype=np.float64))
    recall = tp / n_gt
    precision = tp / (tp + fp)
    for i in range(precision.size - 1, 0, -1):
        if precision[i] > precision[i - 1]:
            precision[i - 1] = precision[i]
    grid = np.linspace(0.0, 1.0, recall_points)
    idx = np.searchsorted(recall, grid, side="left")
    sampled = [precision[i] if i < precision.size else 0.0 for i in idx]
    return float(np.mean(sampled))


def average_precision(
    matches: Iterable[tuple[float, bool]],
    n_gt: int,
    recall_points: int = 101,
) -> float | None:
    """AP from pooled (score, is_true_positive) rows of one category.

    Rows are sorted by descending score (stable in the given order);
    returns None when there is no ground truth to recall.
    """
    rows = list(matches)
    if n_gt <= 0:
        return None
    order = sorted(range(len(rows)), key=lambda i: (-rows[i][0], i))
    return _ap_from_flags([rows[i][1] for i in order], n_gt, recall_points)


# ---------------------------------------------------------------------------
# Corpus evaluation


@dataclass
class _CategoryPool:
    n_gt: int = 0
    # one row per prediction: (score, video_id, emission index, {thr: tp})
    rows: list[tuple[float, int, int, dict[float, bool]]] = field(default_factory=list)
    # (thr, k) -> matched ground-truth count
    recalled: dict[tuple[float, int], int] = field(default_factory=dict)


def evaluate(
    predictions: Mapping[int, Sequence[Track]],
    ground_truth: Sequence[VideoGroundTruth],
    cfg: EvalConfig,
) -> EvalReport:
    """Corpus metrics per category and averaged over categories with
    ground truth.

    ``predictions`` maps video id to that video's tracks in emission
    order. Categories with no ground-truth track anywhere stay absent
    (None) and are excluded from the overall average. AP pools
    predictions of all videos; AR@k truncates each video's predictions
    of a category to its k highest scores before matching.
    """
    gt_by_vid: dict[int, VideoGroundTruth] = {}
    for g in ground_truth:
        if g.video_id in gt_by_vid:
            raise UnknownVideoId(f"duplicate ground-truth video id {g.video_id}")
        gt_by_vid[g.video_id] = g
    for vid in predictions:
        if vid not in gt_by_vid:
            raise UnknownVideoId(f"predictions reference unknown video id {vid}")

    def cat_of(track: Track) -> int:
        return 0 if cfg.category_agnostic else track.category_id

    if cfg.category_agnostic:
        categories = [0]
    else:
        categories = sorted({c for g in ground_truth for c in g.category_set})
        known = set(categories)
        for g in ground_truth:
            for t in g.gt_tracks:
                if t.category_id not in known:
                    raise UnknownCategory(f"ground-truth category {t.category_id} not in category set")
        for vid, tracks in predictions.items():
            for t in tracks:
                if t.category_id not in known:
                    raise UnknownCategory(f"predicted category {t.category_id} not in category set")

    thresholds = list(cfg.iou_thresholds)
    all_thr = sorted(set(thresholds) | {0.5, 0.75})
    pools: dict[int, _CategoryPool] = {c: _CategoryPool() for c in categories}
    for c in categories:
        for t in all_thr:
            for k in cfg.max_detections:
                pools[c].recalled[(t, k)] = 0

    for vid in sorted(gt_by_vid):
        g = gt_by_vid[vid]
        dims = (g.height, g.width)
        vid_preds = list(predictions.get(vid, ()))
        for c in categories:
            gts = [t for t in g.gt_tracks if cat_of(t) == c]
            pool = pools[c]
            pool.n_gt += len(gts)
            emitted = [(i, t) for i, t in enumerate(vid_preds) if cat_of(t) == c]
            if not emitted:
                continue
            order = sorted(range(len(emitted)), key=lambda i: (-emitted[i][1].score, i))
            iou = np.zeros((len(emitted), len(gts)))
            for r, e in enumerate(order):
                for j, gt_track in enumerate(gts):
                    iou[r, j] = st_iou(emitted[e][1], gt_track, g.length, dims)
            flags_by_thr: dict[float, list[bool]] = {}
            for t in all_thr:
                flags, _ = _greedy_tp_flags(iou, t)
                flags_by_thr[t] = flags
                for k in cfg.max_detections:
                    _, matched = _greedy_tp_flags(iou, t, limit=k)
                    pool.recalled[(t, k)] += matched
            for r, e in enumerate(order):
                emission_idx, track = emitted[e]
                pool.rows.append(
                    (track.score, vid, emission_idx, {t: flags_by_thr[t][r] for t in all_thr})
                )

    per_category: dict[int, Metrics | None] = {}
    for c in categories:
        pool = pools[c]
        if pool.n_gt == 0:
            per_category[c] = None
            continue
        order = sorted(
            range(len(pool.rows)),
            key=lambda i: (-pool.rows[i][0], pool.rows[i][1], pool.rows[i][2]),
        )
        ap_by_thr = {
            t: _ap_from_flags([pool.rows[i][3][t] for i in order], pool.n_gt, cfg.recall_points)
            for t in all_thr
        }
        ar = {
            k: float(np.mean([pool.recalled[(t, k)] / pool.n_gt for t in thresholds]))
            for k in cfg.max_detections
        }
        per_category[c] = Metrics(
            ap=float(np.mean([ap_by_thr[t] for t in thresholds])),
            ap50=ap_by_thr[0.5],
            ap75=ap_by_thr[0.75],
            ar=ar,
        )

    scored = [m for m in per_category.values() if m is not None]
    overall = None
    if scored:
        overall = Metrics(
            ap=float(np.mean([m.ap for m in scored])),
            ap50=float(np.mean([m.ap50 for m in scored])),
            ap75=float(np.mean([m.ap75 for m in scored])),
            ar={
                k: float(np.mean([m.ar[k] for m in scored]))
                for k in cfg.max_detections
            },
        )
    return EvalReport(per_category=per_category, overall=overall)
