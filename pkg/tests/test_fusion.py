"""Cross-run track fusion: pooling, greedy merging, score rules,
truncation, and id hygiene."""

import numpy as np
import pytest

from helpers import track_from_grids
from vistrack import (
    ConfigError,
    FusionConfig,
    ScoreRule,
    VideoMismatch,
    fuse_tracks,
    st_iou,
)


def square(y, x, side, h=8, w=8):
    g = np.zeros((h, w), dtype=bool)
    g[y : y + side, x : x + side] = True
    return g


def test_empty_inputs():
    assert fuse_tracks([], 4, FusionConfig()) == []
    assert fuse_tracks([[], []], 4, FusionConfig()) == []


def test_identical_sets_collapse_to_one():
    t = track_from_grids(1, 1, 0.9, {0: square(0, 0, 4)})
    out = fuse_tracks([[t], [t]], 2, FusionConfig())
    assert len(out) == 1
    assert out[0].entries == t.entries
    assert out[0].score == pytest.approx(0.9)


def test_max_rule_is_idempotent():
    a = track_from_grids(1, 1, 0.9, {0: square(0, 0, 4)})
    b = track_from_grids(2, 2, 0.6, {1: square(3, 3, 4)})
    cfg = FusionConfig(score_rule=ScoreRule.MAX)
    once = fuse_tracks([[a, b]], 2, cfg)
    twice = fuse_tracks([once, once], 2, cfg)
    assert [(t.category_id, t.score, t.entries) for t in twice] == [
        (t.category_id, t.score, t.entries) for t in once
    ]


def test_mean_rule_fixture():
    a = track_from_grids(1, 1, 0.9, {0: square(0, 0, 4)})
    b = track_from_grids(1, 1, 0.7, {0: square(0, 0, 4)})
    out = fuse_tracks([[a], [b]], 2, FusionConfig(score_rule=ScoreRule.MEAN))
    assert len(out) == 1
    assert out[0].score == pytest.approx(0.8, abs=1e-12)
    # seed comes from the higher-scoring source
    assert out[0].entries == a.entries


def test_max_rule_fixture():
    a = track_from_grids(1, 1, 0.9, {0: square(0, 0, 4)})
    b = track_from_grids(1, 1, 0.7, {0: square(0, 0, 4)})
    out = fuse_tracks([[a], [b]], 2, FusionConfig(score_rule=ScoreRule.MAX))
    assert out[0].score == pytest.approx(0.9)


def test_source_weights_shift_the_mean():
    a = track_from_grids(1, 1, 0.9, {0: square(0, 0, 4)})
    b = track_from_grids(1, 1, 0.7, {0: square(0, 0, 4)})
    cfg = FusionConfig(source_weights=(3.0, 1.0))
    out = fuse_tracks([[a], [b]], 2, cfg)
    assert out[0].score == pytest.approx((3 * 0.9 + 1 * 0.7) / 4, abs=1e-12)


def test_weight_count_must_match_sources():
    a = track_from_grids(1, 1, 0.9, {0: square(0, 0, 4)})
    with pytest.raises(ConfigError):
        fuse_tracks([[a]], 2, FusionConfig(source_weights=(1.0, 1.0)))


def test_categories_never_merge():
    a = track_from_grids(1, 1, 0.9, {0: square(0, 0, 4)})
    b = track_from_grids(2, 2, 0.7, {0: square(0, 0, 4)})
    assert st_iou(a, b, 2) == 1.0
    out = fuse_tracks([[a], [b]], 2, FusionConfig())
    assert len(out) == 2


def test_below_merge_iou_stays_separate():
    a = track_from_grids(1, 1, 0.9, {0: square(0, 0, 4)})
    b = track_from_grids(2, 1, 0.7, {0: square(4, 4, 4)})
    out = fuse_tracks([[a], [b]], 2, FusionConfig(merge_iou=0.5))
    assert len(out) == 2
    assert out[0].score >= out[1].score


def test_output_sorted_and_truncated():
    tracks = [
        track_from_grids(k + 1, 1, 0.1 * (k + 1), {0: square(0, k, 1, h=4, w=16)})
        for k in range(6)
    ]
    out = fuse_tracks([tracks], 1, FusionConfig(max_output_tracks=3))
    assert len(out) == 3
    scores = [t.score for t in out]
    assert scores == sorted(scores, reverse=True)
    assert scores[0] == pytest.approx(0.6)


def test_duplicate_ids_get_fresh_ones():
    a = track_from_grids(1, 1, 0.9, {0: square(0, 0, 3)})
    b = track_from_grids(1, 1, 0.7, {0: square(5, 5, 3)})
    out = fuse_tracks([[a], [b]], 2, FusionConfig())
    assert len(out) == 2
    ids = {t.track_id for t in out}
    assert len(ids) == 2
    assert 1 in ids and 2 in ids  # survivor keeps 1, clash remapped past the max


def test_distinct_ids_survive():
    a = track_from_grids(3, 1, 0.9, {0: square(0, 0, 3)})
    b = track_from_grids(7, 1, 0.7, {0: square(5, 5, 3)})
    out = fuse_tracks([[a], [b]], 2, FusionConfig())
    assert {t.track_id for t in out} == {3, 7}


def test_entry_beyond_length_rejected():
    a = track_from_grids(1, 1, 0.9, {3: square(0, 0, 3)})
    with pytest.raises(VideoMismatch):
        fuse_tracks([[a]], 2, FusionConfig())


def test_config_validation():
    with pytest.raises(ConfigError):
        FusionConfig(merge_iou=0.0)
    with pytest.raises(ConfigError):
        FusionConfig(merge_iou=1.5)
    with pytest.raises(ConfigError):
        FusionConfig(max_output_tracks=0)
    with pytest.raises(ConfigError):
        FusionConfig(source_weights=(-1.0, 2.0))
    with pytest.raises(ConfigError):
        FusionConfig(source_weights=(0.0, 0.0))
    with pytest.raises(ConfigError):
        FusionConfig(score_rule="median")


def test_chain_merge_uses_seed_not_transitivity():
    """A cluster is claimed against its seed: a mid box that overlaps the
    seed joins it even when a farther box would not."""
    seed = track_from_grids(1, 1, 0.9, {0: square(0, 0, 4)})
    near = track_from_grids(2, 1, 0.8, {0: square(0, 1, 4)})
    far = track_from_grids(3, 1, 0.7, {0: square(0, 3, 4)})
    assert st_iou(seed, near, 1) >= 0.5
    assert st_iou(seed, far, 1) < 0.5
    out = fuse_tracks([[seed, near, far]], 1, FusionConfig(merge_iou=0.5))
    assert len(out) == 2
    assert out[0].entries == seed.entries
