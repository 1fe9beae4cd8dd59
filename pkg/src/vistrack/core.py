"""Domain types and mask/box geometry shared by every other module.

Masks are stored run-length encoded in column-major scan order: the image
is read top-to-bottom within each column, columns left to right, and
``counts`` alternates runs of zeros and ones starting with the number of
leading zeros (possibly 0). Pixel arithmetic on masks (areas,
intersections) is exact integer arithmetic on the runs; decoding to a
dense grid is only needed at the edges (cropping, synthesis, test
oracles).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import CountsMismatch, DegenerateBox, DimensionMismatch


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: (x, y) is the top-left corner, sizes in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.w, self.h)):
            raise ValueError("box coordinates must be finite")
        if self.w < 0.0 or self.h < 0.0:
            raise ValueError("box sides must be non-negative")

    @property
    def x1(self) -> float:
        return self.x + self.w

    @property
    def y1(self) -> float:
        return self.y + self.h

    @property
    def area(self) -> float:
        return self.w * self.h


@dataclass(frozen=True)
class RleMask:
    """Column-major run-length encoded binary mask.

    Invariants: counts are non-negative, sum to ``height * width``, and
    only the leading zero-run may be empty.
    """

    height: int
    width: int
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if self.height <= 0 or self.width <= 0:
            raise CountsMismatch("mask dimensions must be positive")
        if any(c < 0 for c in self.counts):
            raise CountsMismatch("counts must be non-negative")
        if any(c == 0 for c in self.counts[1:]):
            raise CountsMismatch("counts must have no internal zero entries except the first")
        if sum(self.counts) != self.height * self.width:
            raise CountsMismatch("counts must sum to height*width")

    @property
    def area(self) -> int:
        """Number of foreground pixels (sum of the one-runs)."""
        return sum(self.counts[1::2])


@dataclass(frozen=True)
class Embedding:
    """Fixed-length appearance vector attached to a detection."""

    values: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        if not self.values:
            raise ValueError("embedding must be non-empty")
        if not all(math.isfinite(v) for v in self.values):
            raise ValueError("embedding entries must be finite")

    def __len__(self) -> int:
        return len(self.values)

    @property
    def vector(self) -> np.ndarray:
        return np.asarray(self.values, dtype=np.float64)

    def dot(self, other: Embedding) -> float:
        if len(other) != len(self):
            raise DimensionMismatch("embeddings must have equal length")
        return float(np.dot(self.vector, other.vector))


@dataclass(frozen=True)
class Detection:
    """One per-frame detection as emitted by an upstream detector."""

    bbox: BBox
    score: float
    category_id: int
    class_probs: tuple[float, ...]
    embedding: Embedding
    mask: RleMask | None = None

    def __post_init__(self):
        object.__setattr__(self, "class_probs", tuple(float(p) for p in self.class_probs))
        if not self.class_probs:
            raise ValueError("class_probs must be non-empty")
        if any(not math.isfinite(p) or p < 0.0 for p in self.class_probs):
            raise ValueError("class probabilities must be finite and non-negative")
        # tolerances leave room for 6-significant-digit serialization
        if sum(self.class_probs) > 1.0 + 1e-4:
            raise ValueError("class probabilities must sum to at most 1")
        if not (0.0 <= self.score <= 1.0) or not math.isfinite(self.score):
            raise ValueError("score must lie in [0, 1]")
        if abs(self.score - max(self.class_probs)) > 1e-6:
            raise ValueError("score must equal max(class_probs)")
        if self.category_id < 0:
            raise ValueError("category_id must be non-negative")


@dataclass
class FrameDetections:
    """All detections of one frame."""

    frame_index: int
    detections: list[Detection] = field(default_factory=list)

    def __post_init__(self):
        if self.frame_index < 0:
            raise ValueError("frame_index must be non-negative")


@dataclass(frozen=True)
class TrackEntry:
    """Per-frame payload of a track: box, optional mask, per-frame score."""

    bbox: BBox
    mask: RleMask | None
    score: float


@dataclass
class Track:
    """One instance trajectory: sparse map from frame index to entries."""

    track_id: int
    category_id: int
    score: float
    entries: dict[int, TrackEntry]

    def __post_init__(self):
        if not self.entries:
            raise ValueError("track must have at least one entry")
        if not (0.0 <= self.score <= 1.0) or not math.isfinite(self.score):
            raise ValueError("track score must lie in [0, 1]")
        if any(f < 0 for f in self.entries):
            raise ValueError("track entry frame indices must be non-negative")


@dataclass
class VideoGroundTruth:
    """Reference tracks and metadata for one video."""

    video_id: int
    height: int
    width: int
    length: int
    gt_tracks: list[Track]
    category_set: list[int]
    category_names: dict[int, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.height <= 0 or self.width <= 0 or self.length <= 0:
            raise ValueError("video dimensions and length must be positive")
        known = set(self.category_set)
        seen_ids = set()
        for t in self.gt_tracks:
            if t.track_id in seen_ids:
                raise ValueError("ground-truth track ids must be unique within a video")
            seen_ids.add(t.track_id)
            if t.category_id not in known:
                raise ValueError("ground-truth track category must be in category_set")
            for f, e in t.entries.items():
                if f >= self.length:
                    raise ValueError("track entry frame index must be below video length")
                if e.mask is not None and (e.mask.height, e.mask.width) != (self.height, self.width):
                    raise ValueError("ground-truth mask dimensions must equal video dimensions")


@dataclass(frozen=True)
class VideoMeta:
    """Lightweight per-video geometry handed to tracking/fusion."""

    length: int
    height: int | None = None
    width: int | None = None
    video_id: int | None = None

    def __post_init__(self):
        if self.length <= 0:
            raise ValueError("video length must be positive")


# ---------------------------------------------------------------------------
# Run-length operations


def rle_encode(bitmap) -> RleMask:
    """Encode a 2-D binary grid into column-major run-length counts."""
    grid = np.asarray(bitmap)
    if grid.ndim != 2 or grid.size == 0:
        raise ValueError("bitmap must be a non-empty 2-D array")
    flat = np.asarray(grid != 0).flatten(order="F")
    boundaries = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    starts = np.concatenate(([0], boundaries))
    ends = np.concatenate((boundaries, [flat.size]))
    counts = (ends - starts).tolist()
    if flat[0]:
        counts = [0] + counts
    return RleMask(height=int(grid.shape[0]), width=int(grid.shape[1]), counts=tuple(counts))


def rle_decode(mask: RleMask) -> np.ndarray:
    """Decode run-length counts back into a dense boolean (H, W) grid."""
    if sum(mask.counts) != mask.height * mask.width:
        raise CountsMismatch("counts must sum to height*width")
    flat = np.zeros(mask.height * mask.width, dtype=bool)
    pos = 0
    value = False
    for c in mask.counts:
        if value:
            flat[pos : pos + c] = True
        pos += c
        value = not value
    return flat.reshape((mask.height, mask.width), order="F")


def _runs(counts: tuple[int, ...]):
    """Yield (value, length) runs, skipping zero-length entries."""
    value = False
    for c in counts:
        if c:
            yield value, c
        value = not value


def rle_intersection_area(a: RleMask, b: RleMask) -> int:
    """Overlap pixel count of two masks, computed directly on the runs."""
    if (a.height, a.width) != (b.height, b.width):
        raise DimensionMismatch("masks must share height and width")
    it_a = _runs(a.counts)
    it_b = _runs(b.counts)
    run_a = next(it_a, None)
    run_b = next(it_b, None)
    area = 0
    while run_a is not None and run_b is not None:
        va, la = run_a
        vb, lb = run_b
        step = min(la, lb)
        if va and vb:
            area += step
        la -= step
        lb -= step
        run_a = (va, la) if la else next(it_a, None)
        run_b = (vb, lb) if lb else next(it_b, None)
    return area


def mask_iou(a: RleMask, b: RleMask) -> float:
    """Intersection-over-union of two masks. Two empty masks give 1.0."""
    inter = rle_intersection_area(a, b)
    union = a.area + b.area - inter
    if union == 0:
        return 1.0
    return inter / union


def bbox_of_mask(mask: RleMask) -> BBox | None:
    """Tight bounding box of the foreground, or None for an empty mask."""
    grid = rle_decode(mask)
    rows, cols = np.nonzero(grid)
    if rows.size == 0:
        return None
    x0 = float(cols.min())
    y0 = float(rows.min())
    return BBox(x0, y0, float(cols.max()) + 1.0 - x0, float(rows.max()) + 1.0 - y0)


def rle_crop(mask: RleMask, x0: int, y0: int, x1: int, y1: int) -> RleMask:
    """Re-encode the window [x0, x1) x [y0, y1) of a mask in window coordinates."""
    if not (0 <= x0 < x1 <= mask.width and 0 <= y0 < y1 <= mask.height):
        raise ValueError("crop window must be non-empty and inside the mask")
    grid = rle_decode(mask)
    return rle_encode(grid[y0:y1, x0:x1])


# ---------------------------------------------------------------------------
# Box geometry


def box_giou(a: BBox, b: BBox) -> float:
    """Generalized IoU in [-1, 1]: IoU minus the normalized empty share
    of the smallest enclosing box.

    Raises DegenerateBox when both boxes have zero area (the enclosing
    box may also be degenerate, leaving the value undefined).
    """
    if a.area == 0.0 and b.area == 0.0:
        raise DegenerateBox("generalized IoU is undefined when both boxes have zero area")
    iw = min(a.x1, b.x1) - max(a.x, b.x)
    ih = min(a.y1, b.y1) - max(a.y, b.y)
    inter = max(0.0, iw) * max(0.0, ih)
    union = a.area + b.area - inter
    enclosure = (max(a.x1, b.x1) - min(a.x, b.x)) * (max(a.y1, b.y1) - min(a.y, b.y))
    return inter / union - (enclosure - union) / enclosure
