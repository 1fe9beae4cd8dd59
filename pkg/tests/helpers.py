"""Shared brute-force oracles and fixture builders.

Everything here recomputes results from definitions on decoded pixel
grids or by exhaustive enumeration, deliberately avoiding the library's
run-length and envelope shortcuts, so the tests compare two independent
routes to the same quantity.
"""

from __future__ import annotations

import itertools

import numpy as np

from vistrack import BBox, RleMask, Track, TrackEntry, rle_decode, rle_encode


# ---------------------------------------------------------------------------
# Mask and track builders


def mask_from_rows(rows: list[str]) -> RleMask:
    """Build a mask from strings of '.' and '#', one per pixel row."""
    grid = np.array([[c == "#" for c in row] for row in rows], dtype=bool)
    return rle_encode(grid)


def random_grid(rng: np.random.Generator, h: int, w: int, density: float = 0.4) -> np.ndarray:
    return rng.random((h, w)) < density


def track_from_grids(track_id: int, category_id: int, score: float, grids: dict[int, np.ndarray]) -> Track:
    entries = {}
    for f, g in grids.items():
        mask = rle_encode(g)
        ys, xs = np.nonzero(g)
        if ys.size:
            bbox = BBox(float(xs.min()), float(ys.min()), float(xs.max() - xs.min() + 1), float(ys.max() - ys.min() + 1))
        else:
            bbox = BBox(0.0, 0.0, 0.0, 0.0)
        entries[f] = TrackEntry(bbox=bbox, mask=mask, score=score)
    return Track(track_id=track_id, category_id=category_id, score=score, entries=entries)


# ---------------------------------------------------------------------------
# Decoded-grid spatio-temporal IoU


def grid_st_iou(a: Track, b: Track, length: int, h: int, w: int) -> float:
    """Pixel-count ST-IoU on fully decoded dense grids."""
    inter = 0
    union = 0
    for f in range(length):
        ga = np.zeros((h, w), dtype=bool)
        gb = np.zeros((h, w), dtype=bool)
        ea = a.entries.get(f)
        eb = b.entries.get(f)
        if ea is not None and ea.mask is not None:
            ga = rle_decode(ea.mask).astype(bool)
        if eb is not None and eb.mask is not None:
            gb = rle_decode(eb.mask).astype(bool)
        inter += int(np.logical_and(ga, gb).sum())
        union += int(np.logical_or(ga, gb).sum())
    if union == 0:
        return 1.0
    return inter / union


# ---------------------------------------------------------------------------
# Definition-level corpus evaluator


def _greedy_match_rows(iou_rows: list[list[float]], threshold: float, limit=None) -> tuple[list[bool], int]:
    rows = len(iou_rows) if limit is None else min(limit, len(iou_rows))
    taken: set[int] = set()
    flags = []
    for r in range(rows):
        best, best_v = -1, -1.0
        for j, v in enumerate(iou_rows[r]):
            if j in taken or v < threshold:
                continue
            if v > best_v:
                best, best_v = j, v
        if best >= 0:
            taken.add(best)
            flags.append(True)
        else:
            flags.append(False)
    return flags, len(taken)


def _literal_ap(rows: list[tuple[float, int, int, bool]], n_gt: int, recall_points: int) -> float:
    """AP by the literal definition: for each recall level take the
    maximum precision among operating points whose recall reaches it."""
    order = sorted(range(len(rows)), key=lambda i: (-rows[i][0], rows[i][1], rows[i][2]))
    tp = 0
    points = []  # (recall, precision)
    for rank, i in enumerate(order, start=1):
        tp += 1 if rows[i][3] else 0
        points.append((tp / n_gt, tp / rank))
    total = 0.0
    for r in np.linspace(0.0, 1.0, recall_points):
        best = 0.0
        for rec, prec in points:
            if rec >= r and prec > best:
                best = prec
        total += best
    return total / recall_points


def evaluate_brute(predictions, ground_truth, thresholds, recall_points=101, max_dets=(1, 10)):
    """Returns {category: None | {"ap", "ap50", "ap75", "ar": {k: v}}}
    plus an "overall" entry, straight from the metric definitions."""
    cats = sorted({c for g in ground_truth for c in g.category_set})
    thr_list = list(thresholds)
    all_thr = sorted(set(thr_list) | {0.5, 0.75})
    out = {}
    for c in cats:
        n_gt = sum(1 for g in ground_truth for t in g.gt_tracks if t.category_id == c)
        if n_gt == 0:
            out[c] = None
            continue
        rows_by_thr = {t: [] for t in all_thr}
        recalled = {(t, k): 0 for t in all_thr for k in max_dets}
        for g in sorted(ground_truth, key=lambda g: g.video_id):
            gts = [t for t in g.gt_tracks if t.category_id == c]
            preds = [(i, t) for i, t in enumerate(predictions.get(g.video_id, [])) if t.category_id == c]
            preds.sort(key=lambda it: (-it[1].score, it[0]))
            iou_rows = [
                [grid_st_iou(p, q, g.length, g.height, g.width) for q in gts]
                for _, p in preds
            ]
            for t in all_thr:
                flags, _ = _greedy_match_rows(iou_rows, t)
                for (i, p), hit in zip(preds, flags):
                    rows_by_thr[t].append((p.score, g.video_id, i, hit))
                for k in max_dets:
                    _, matched = _greedy_match_rows(iou_rows, t, limit=k)
                    recalled[(t, k)] += matched
        ap_by_thr = {t: _literal_ap(rows_by_thr[t], n_gt, recall_points) for t in all_thr}
        out[c] = {
            "ap": float(np.mean([ap_by_thr[t] for t in thr_list])),
            "ap50": ap_by_thr[0.5],
            "ap75": ap_by_thr[0.75],
            "ar": {k: float(np.mean([recalled[(t, k)] / n_gt for t in thr_list])) for k in max_dets},
        }
    present = [m for m in out.values() if m is not None]
    out["overall"] = None
    if present:
        out["overall"] = {
            "ap": float(np.mean([m["ap"] for m in present])),
            "ap50": float(np.mean([m["ap50"] for m in present])),
            "ap75": float(np.mean([m["ap75"] for m in present])),
            "ar": {k: float(np.mean([m["ar"][k] for m in present])) for k in max_dets},
        }
    return out


# ---------------------------------------------------------------------------
# Random micro-corpora for evaluator cross-checks


def random_micro_corpus(seed: int):
    """A tiny random corpus: ≤ 3 videos, ≤ 4 GT tracks each, ≤ 5 frames,
    8x8 masks, plus predictions that are a mix of perturbed truths and
    junk. Returns (predictions dict, ground-truth list)."""
    from vistrack import VideoGroundTruth

    rng = np.random.default_rng(seed)
    h = w = 8
    categories = [1, 2]
    gts = []
    predictions = {}
    duplicate_scores = rng.random() < 0.25
    for vid in range(1, int(rng.integers(1, 4)) + 1):
        length = int(rng.integers(1, 6))
        gt_tracks = []
        for tid in range(1, int(rng.integers(0, 5)) + 1):
            grids = {}
            for f in range(length):
                if rng.random() < 0.75:
                    g = random_grid(rng, h, w, density=float(rng.uniform(0.2, 0.7)))
                    if g.any():
                        grids[f] = g
            if not grids:
                grids[int(rng.integers(0, length))] = np.ones((h, w), dtype=bool)
            cat = int(rng.choice(categories))
            gt_tracks.append(track_from_grids(tid, cat, 1.0, grids))
        gts.append(
            VideoGroundTruth(
                video_id=vid,
                height=h,
                width=w,
                length=length,
                gt_tracks=gt_tracks,
                category_set=categories,
            )
        )
        preds = []
        next_id = 1
        for t in gt_tracks:
            if rng.random() < 0.85:  # mostly detected, sometimes missed
                grids = {}
                for f, e in t.entries.items():
                    if rng.random() < 0.9:
                        g = rle_decode(e.mask).astype(bool)
                        flips = random_grid(rng, h, w, density=float(rng.uniform(0.0, 0.25)))
                        grids[f] = np.logical_xor(g, flips)
                if not any(g.any() for g in grids.values()):
                    grids = {f: rle_decode(e.mask).astype(bool) for f, e in t.entries.items()}
                score = 0.5 if duplicate_scores else float(rng.uniform(0.3, 1.0))
                cat = t.category_id if rng.random() < 0.8 else int(rng.choice(categories))
                preds.append(track_from_grids(next_id, cat, score, grids))
                next_id += 1
        for _ in range(int(rng.integers(0, 3))):  # junk
            f = int(rng.integers(0, length))
            g = random_grid(rng, h, w, density=0.3)
            if not g.any():
                g[0, 0] = True
            score = 0.5 if duplicate_scores else float(rng.uniform(0.05, 0.6))
            preds.append(track_from_grids(next_id, int(rng.choice(categories)), score, {f: g}))
            next_id += 1
        predictions[vid] = preds
    return predictions, gts


# ---------------------------------------------------------------------------
# Exhaustive one-to-one assignment enumeration


def all_partial_matchings(n: int, m: int):
    """Every injective partial assignment of rows to columns."""
    for k in range(0, min(n, m) + 1):
        for rows in itertools.combinations(range(n), k):
            for cols in itertools.permutations(range(m), k):
                yield list(zip(rows, cols))


def best_matching(scores: np.ndarray, threshold: float) -> tuple[float, set[tuple[int, int]]]:
    """Highest-total-score matching using only pairs above threshold.

    Ties are broken toward the lexicographically smallest pair set so
    the oracle itself is deterministic.
    """
    n, m = scores.shape
    best_val = 0.0
    best_pairs: set[tuple[int, int]] = set()
    for matching in all_partial_matchings(n, m):
        if any(scores[i, j] <= threshold for i, j in matching):
            continue
        val = sum(float(scores[i, j]) for i, j in matching)
        key = sorted(matching)
        if val > best_val + 1e-12 or (abs(val - best_val) <= 1e-12 and key < sorted(best_pairs)):
            best_val = val
            best_pairs = set(matching)
    return best_val, best_pairs


def matching_margin(scores: np.ndarray, pairs: set[tuple[int, int]]) -> float:
    """Smallest lead a matched pair has over its row/column competitors."""
    if not pairs:
        return float("inf")
    margin = float("inf")
    for i, j in pairs:
        rivals = [scores[i, q] for q in range(scores.shape[1]) if q != j]
        rivals += [scores[p, j] for p in range(scores.shape[0]) if p != i]
        if rivals:
            margin = min(margin, float(scores[i, j]) - max(float(r) for r in rivals))
    return margin
