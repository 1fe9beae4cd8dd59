"""Merging track sets from multiple sources into one ranked output.

Tracks from all sources are pooled in descending score order and
clustered per category by greedy spatio-temporal non-maximum
suppression: each unclaimed track seeds a cluster and absorbs every
remaining same-category track whose ST-IoU with the seed reaches the
merge threshold. The seed's geometry is kept; the cluster score is
either the weight-averaged or the maximum member score.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

from .core import Track
from .errors import ConfigError, VideoMismatch
from .evaluation import st_iou


class ScoreRule(str, Enum):
    MEAN = "mean"
    MAX = "max"


@dataclass(frozen=True)
class FusionConfig:
    merge_iou: float = 0.5
    score_rule: ScoreRule = ScoreRule.MEAN
    max_output_tracks: int = 10
    source_weights: tuple[float, ...] | None = None

    def __post_init__(self):
        if not 0.0 < self.merge_iou <= 1.0:
            raise ConfigError("merge_iou must lie in (0, 1]")
        try:
            object.__setattr__(self, "score_rule", ScoreRule(self.score_rule))
        except ValueError as e:
            raise ConfigError(f"unknown score_rule: {self.score_rule!r}") from e
        if self.max_output_tracks < 1:
            raise ConfigError("max_output_tracks must be positive")
        if self.source_weights is not None:
            ws = tuple(float(w) for w in self.source_weights)
            object.__setattr__(self, "source_weights", ws)
            if any(w < 0 for w in ws) or sum(ws) <= 0:
                raise ConfigError("source_weights must be non-negative with positive sum")


def fuse_tracks(
    track_sets: Sequence[Sequence[Track]],
    video_length: int,
    cfg: FusionConfig,
    video_dims: tuple[int, int] | None = None,
) -> list[Track]:
    """Fuse per-source track lists for one video into a single ranking.

    Sources are weighted uniformly unless ``cfg.source_weights`` gives
    one weight per source. Output is sorted by descending fused score
    (ties keep pool order), truncated to ``max_output_tracks``, and
    track ids are reassigned where two sources supplied the same id.
    """
    if cfg.source_weights is not None and len(cfg.source_weights) != len(track_sets):
        raise ConfigError("source_weights must match the number of track sets")
    weights = cfg.source_weights or tuple(1.0 for _ in track_sets)

    for ts in track_sets:
        for t in ts:
            for f in t.entries:
                if f >= video_length:
                    raise VideoMismatch("track entry beyond the stated video length")

    # Pool in descending score; ties keep (source, position) order.
    pool = [
        (t, weights[s], s, p)
        for s, ts in enumerate(track_sets)
        for p, t in enumerate(ts)
    ]
    pool.sort(key=lambda row: (-row[0].score, row[2], row[3]))

    claimed = [False] * len(pool)
    fused: list[Track] = []
    for i, (seed, w_i, _, _) in enumerate(pool):
        if claimed[i]:
            continue
        claimed[i] = True
        members = [(seed, w_i)]
        for j in range(i + 1, len(pool)):
            if claimed[j]:
                continue
            cand, w_j, _, _ = pool[j]
            if cand.category_id != seed.category_id:
                continue
            if st_iou(seed, cand, video_length, video_dims) >= cfg.merge_iou:
                claimed[j] = True
                members.append((cand, w_j))
        if cfg.score_rule is ScoreRule.MAX:
            score = max(t.score for t, _ in members)
        else:
            wsum = sum(w for _, w in members)
            score = sum(t.score * w for t, w in members) / wsum
        fused.append(replace(seed, score=score))

    order = sorted(range(len(fused)), key=lambda i: (-fused[i].score, i))
    out = [fused[i] for i in order[: cfg.max_output_tracks]]

    # Same id arriving from different sources must not collide downstream.
    seen: set[int] = set()
    next_id = max((t.track_id for t in out), default=0) + 1
    result = []
    for t in out:
        if t.track_id in seen:
            t = replace(t, track_id=next_id)
            next_id += 1
        seen.add(t.track_id)
        result.append(t)
    return result
