"""Deterministic synthetic video corpus: moving rectangles and ellipses
with exact ground-truth tracks plus detector-style outputs.

Per object the generator fixes one unit base embedding (rejection
sampled so pairwise dots stay below the separation bound) and emits,
per visible frame, a detection whose embedding is the noisy,
renormalized, scaled base. Motion is a uniform integer step per axis
per frame, clipped to the canvas, which makes consecutive boxes overlap
little or not at all; identity must come from the embeddings.

Dropout models occlusion: a dropped (video, object, frame) cell has
neither a detection nor a ground-truth entry. Clutter detections carry
fresh random unit embeddings and low scores and are marked CLUTTER in
the identity key.

Everything is a pure function of the config; the per-video stream is
seeded with rng_seed + video_id, so videos are independent and the
corpus is byte-stable under serialization.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .core import (
    BBox,
    Detection,
    Embedding,
    FrameDetections,
    Track,
    TrackEntry,
    VideoGroundTruth,
    bbox_of_mask,
    rle_encode,
)
from .errors import ConfigError, ConfigInfeasible
from .rng import SplitMix64

# identity_key value for detections that correspond to no object
CLUTTER = -1

_MAX_BASE_ATTEMPTS = 10_000
_BASE_SEPARATION = 0.3


@dataclass(frozen=True)
class SynthConfig:
    n_videos: int = 10
    frames_per_video: int = 20
    objects_per_video: int = 4
    canvas: tuple[int, int] = (96, 96)  # (width, height)
    embedding_dim: int = 8
    embedding_noise_sigma: float = 0.05
    detector_dropout: float = 0.0
    clutter_rate: float = 0.0
    motion_step_max: int = 16
    embedding_scale: float = 3.0
    rng_seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "canvas", (int(self.canvas[0]), int(self.canvas[1])))
        if self.n_videos < 1 or self.frames_per_video < 1:
            raise ConfigError("n_videos and frames_per_video must be positive")
        if not 1 <= self.objects_per_video <= 6:
            raise ConfigError("objects_per_video must lie in [1, 6]")
        if min(self.canvas) < 16:
            raise ConfigError("canvas sides must be at least 16 pixels")
        if self.embedding_dim < 2:
            raise ConfigError("embedding_dim must be at least 2")
        if not 0.0 <= self.detector_dropout < 1.0:
            raise ConfigError("detector_dropout must lie in [0, 1)")
        if self.clutter_rate < 0.0 or not math.isfinite(self.clutter_rate):
            raise ConfigError("clutter_rate must be finite and non-negative")
        if self.embedding_noise_sigma < 0.0:
            raise ConfigError("embedding_noise_sigma must be non-negative")
        if self.motion_step_max < 0:
            raise ConfigError("motion_step_max must be non-negative")
        if self.embedding_scale <= 0.0 or not math.isfinite(self.embedding_scale):
            raise ConfigError("embedding_scale must be positive")


@dataclass
class SynthCorpus:
    ground_truth: list[VideoGroundTruth]
    detections: dict[int, list[FrameDetections]]
    # (video_id, frame_index, detection index) -> GT track id, or CLUTTER
    identity_key: dict[tuple[int, int, int], int] = field(default_factory=dict)


def _unit_gaussian(rng: SplitMix64, dim: int) -> np.ndarray:
    while True:
        v = np.array([rng.gauss(1.0) for _ in range(dim)])
        n = float(np.linalg.norm(v))
        if n > 1e-12:
            return v / n


def _sample_bases(rng: SplitMix64, count: int, dim: int) -> list[np.ndarray]:
    """Unit vectors with pairwise dot products at most _BASE_SEPARATION."""
    bases: list[np.ndarray] = []
    attempts = 0
    while len(bases) < count:
        attempts += 1
        if attempts > _MAX_BASE_ATTEMPTS:
            raise ConfigInfeasible(
                f"could not place {count} unit embeddings with pairwise dot "
                f"<= {_BASE_SEPARATION} in {dim} dimensions"
            )
        cand = _unit_gaussian(rng, dim)
        if all(float(np.dot(cand, b)) <= _BASE_SEPARATION for b in bases):
            bases.append(cand)
    for i in range(len(bases)):
        for j in range(i + 1, len(bases)):
            assert float(np.dot(bases[i], bases[j])) <= _BASE_SEPARATION
    return bases


def _render(shape: str, x: int, y: int, w: int, h: int, canvas_w: int, canvas_h: int) -> np.ndarray:
    grid = np.zeros((canvas_h, canvas_w), dtype=bool)
    if shape == "rect":
        grid[y : y + h, x : x + w] = True
        return grid
    # ellipse inscribed in the box, sampled at pixel centers
    cy, cx = y + h / 2.0, x + w / 2.0
    ry, rx = h / 2.0, w / 2.0
    rows = (np.arange(canvas_h) + 0.5 - cy) / ry
    cols = (np.arange(canvas_w) + 0.5 - cx) / rx
    grid[:] = rows[:, None] ** 2 + cols[None, :] ** 2 <= 1.0
    return grid


def _noisy_embedding(base: np.ndarray, rng: SplitMix64, sigma: float, scale: float) -> Embedding:
    if sigma > 0.0:
        vec = base + np.array([rng.gauss(sigma) for _ in range(base.size)])
        n = float(np.linalg.norm(vec))
        if n <= 1e-12:
            vec = base.copy()
        else:
            vec = vec / n
    else:
        vec = base
    return Embedding(tuple(float(v) for v in vec * scale))


def _generate_video(cfg: SynthConfig, video_id: int) -> tuple[VideoGroundTruth, list[FrameDetections], dict]:
    rng = SplitMix64(cfg.rng_seed + video_id)
    cw, ch = cfg.canvas
    n_obj = cfg.objects_per_video
    side_lo = max(4, min(cw, ch) // 8)
    side_hi = min(cw, ch) // 3

    bases = _sample_bases(rng, n_obj, cfg.embedding_dim)
    shapes: list[str] = []
    sizes: list[tuple[int, int]] = []
    pos: list[tuple[int, int]] = []
    for _ in range(n_obj):
        shapes.append("rect" if rng.next_float() < 0.5 else "ellipse")
        w = rng.randint(side_lo, side_hi)
        h = rng.randint(side_lo, side_hi)
        sizes.append((w, h))
        pos.append((rng.randint(0, cw - w), rng.randint(0, ch - h)))

    n_cats = n_obj  # one category per object; ids are 1-based
    frames: list[FrameDetections] = []
    entries: list[dict[int, TrackEntry]] = [dict() for _ in range(n_obj)]
    identity: dict[tuple[int, int, int], int] = {}

    for f in range(cfg.frames_per_video):
        if f > 0:
            step = cfg.motion_step_max
            for k in range(n_obj):
                dx = rng.randint(-step, step)
                dy = rng.randint(-step, step)
                w, h = sizes[k]
                x, y = pos[k]
                pos[k] = (
                    min(max(x + dx, 0), cw - w),
                    min(max(y + dy, 0), ch - h),
                )
        dets: list[Detection] = []
        for k in range(n_obj):
            if cfg.detector_dropout > 0.0 and rng.next_float() < cfg.detector_dropout:
                continue  # occluded: neither GT entry nor detection
            emb = _noisy_embedding(bases[k], rng, cfg.embedding_noise_sigma, cfg.embedding_scale)
            score = 0.6 + 0.35 * rng.next_float()
            x, y = pos[k]
            w, h = sizes[k]
            mask = rle_encode(_render(shapes[k], x, y, w, h, cw, ch))
            bbox = bbox_of_mask(mask)
            assert bbox is not None
            cat = k + 1
            probs = [0.0] * (n_cats + 1)
            probs[cat] = score
            identity[(video_id, f, len(dets))] = k + 1
            dets.append(
                Detection(
                    bbox=bbox,
                    score=score,
                    category_id=cat,
                    class_probs=tuple(probs),
                    embedding=emb,
                    mask=mask,
                )
            )
            entries[k][f] = TrackEntry(bbox=bbox, mask=mask, score=1.0)
        if cfg.clutter_rate > 0.0:
            for _ in range(rng.poisson(cfg.clutter_rate)):
                w = rng.randint(side_lo, side_hi)
                h = rng.randint(side_lo, side_hi)
                x = rng.randint(0, cw - w)
                y = rng.randint(0, ch - h)
                cat = rng.randint(1, n_cats)
                emb = Embedding(tuple(float(v) for v in _unit_gaussian(rng, cfg.embedding_dim)))
                score = 0.05 + 0.25 * rng.next_float()
                mask = rle_encode(_render("rect", x, y, w, h, cw, ch))
                probs = [0.0] * (n_cats + 1)
                probs[cat] = score
                identity[(video_id, f, len(dets))] = CLUTTER
                dets.append(
                    Detection(
                        bbox=BBox(float(x), float(y), float(w), float(h)),
                        score=score,
                        category_id=cat,
                        class_probs=tuple(probs),
                        embedding=emb,
                        mask=mask,
                    )
                )
        frames.append(FrameDetections(frame_index=f, detections=dets))

    tracks = [
        Track(track_id=k + 1, category_id=k + 1, score=1.0, entries=entries[k])
        for k in range(n_obj)
        if entries[k]  # fully occluded objects leave no track
    ]
    gt = VideoGroundTruth(
        video_id=video_id,
        height=ch,
        width=cw,
        length=cfg.frames_per_video,
        gt_tracks=tracks,
        category_set=list(range(1, n_cats + 1)),
        category_names={c: f"class_{c}" for c in range(1, n_cats + 1)},
    )
    return gt, frames, identity


def generate(cfg: SynthConfig) -> SynthCorpus:
    """Build the full corpus for ``cfg``; identical inputs give an
    identical corpus."""
    ground_truth: list[VideoGroundTruth] = []
    detections: dict[int, list[FrameDetections]] = {}
    identity_key: dict[tuple[int, int, int], int] = {}
    for v in range(cfg.n_videos):
        vid = v + 1
        gt, frames, identity = _generate_video(cfg, vid)
        ground_truth.append(gt)
        detections[vid] = frames
        identity_key.update(identity)
    return SynthCorpus(ground_truth=ground_truth, detections=detections, identity_key=identity_key)
