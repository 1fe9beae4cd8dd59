"""Online embedding association against a per-video memory bank.

Frames are processed in order. Each frame's detections are compared to
the remembered instances by embedding similarity, greedily matched
one-to-one in descending similarity, and the memory is updated with an
exponential moving average. Unmatched detections either open a new
track (high class score) or are discarded.
"""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .core import Detection, Embedding, FrameDetections, Track, TrackEntry, VideoMeta
from .errors import ConfigError, DimensionMismatch, EmptyInput, UnknownTrackId


class SimilarityKind(str, Enum):
    BISOFTMAX = "bisoftmax"
    COSINE = "cosine"


class Outcome(str, Enum):
    MATCHED = "matched"
    NEW_INSTANCE = "new_instance"
    DISCARDED = "discarded"


@dataclass(frozen=True)
class MemoryInstance:
    """One remembered instance: smoothed embedding plus bookkeeping."""

    track_id: int
    embedding: Embedding
    category_id: int
    last_seen_frame: int
    hit_count: int = 1

    def __post_init__(self):
        if self.hit_count < 1:
            raise ValueError("hit_count must be at least 1")


@dataclass
class MemoryBank:
    """Ordered memory instances plus the next fresh track id."""

    instances: list[MemoryInstance] = field(default_factory=list)
    next_id: int = 1

    def __post_init__(self):
        ids = [inst.track_id for inst in self.instances]
        if len(ids) != len(set(ids)):
            raise ValueError("memory track ids must be unique")
        if ids and self.next_id <= max(ids):
            raise ValueError("next_id must exceed every stored track id")

    def __len__(self) -> int:
        return len(self.instances)


@dataclass(frozen=True)
class AssociationConfig:
    match_threshold: float = 0.5
    new_instance_score: float = 0.2
    similarity_kind: SimilarityKind = SimilarityKind.BISOFTMAX
    memory_momentum: float = 0.5
    keep_top_n_per_frame: int = 10

    def __post_init__(self):
        if not 0.0 <= self.match_threshold <= 1.0:
            raise ConfigError("match_threshold must lie in [0, 1]")
        if not 0.0 <= self.new_instance_score <= 1.0:
            raise ConfigError("new_instance_score must lie in [0, 1]")
        if not 0.0 <= self.memory_momentum <= 1.0:
            raise ConfigError("memory_momentum must lie in [0, 1]")
        if self.keep_top_n_per_frame < 1:
            raise ConfigError("keep_top_n_per_frame must be at least 1")
        if not isinstance(self.similarity_kind, SimilarityKind):
            raise ConfigError("similarity_kind must be 'bisoftmax' or 'cosine'")


@dataclass(frozen=True)
class Assignment:
    """Outcome for one prediction index of a frame."""

    pred_index: int
    outcome: Outcome
    track_id: int | None = None


# ---------------------------------------------------------------------------
# Similarity


def _stack(embeddings: list[Embedding]) -> np.ndarray:
    dims = {len(e) for e in embeddings}
    if len(dims) != 1:
        raise DimensionMismatch("embeddings must share one length")
    return np.stack([e.vector for e in embeddings])


def row_softmax(dots: np.ndarray) -> np.ndarray:
    """Row-wise softmax of a dot-product matrix, overflow safe."""
    d = np.asarray(dots, dtype=np.float64)
    shifted = d - d.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def bisoftmax_scores(dots: np.ndarray) -> np.ndarray:
    """Average of the row-wise and column-wise softmax of a dot matrix.

    Rows are predictions, columns memory instances; the row term
    normalizes each prediction over memory, the column term each memory
    instance over predictions.
    """
    d = np.asarray(dots, dtype=np.float64)
    return 0.5 * (row_softmax(d) + row_softmax(d.T).T)


def cosine_scores(pred: np.ndarray, mem: np.ndarray) -> np.ndarray:
    """0.5 * (1 + cos) pairwise similarity; zero vectors count as orthogonal."""
    pn = np.linalg.norm(pred, axis=1)
    mn = np.linalg.norm(mem, axis=1)
    denom = np.outer(pn, mn)
    dots = pred @ mem.T
    with np.errstate(invalid="ignore", divide="ignore"):
        cos = np.where(denom > 0.0, dots / np.where(denom > 0.0, denom, 1.0), 0.0)
    return 0.5 * (1.0 + cos)


def pairwise_dots(pred_embeddings: list[Embedding], memory: MemoryBank) -> np.ndarray:
    pred = _stack(pred_embeddings)
    mem = _stack([inst.embedding for inst in memory.instances])
    if pred.shape[1] != mem.shape[1]:
        raise DimensionMismatch("prediction and memory embeddings must share one length")
    return pred @ mem.T


def similarity(
    pred_embeddings: list[Embedding],
    memory: MemoryBank,
    kind: SimilarityKind = SimilarityKind.BISOFTMAX,
) -> np.ndarray:
    """N x M similarity matrix between predictions and memory instances.

    Raises EmptyInput when either side is empty; callers short-circuit
    the empty-memory case before scoring.
    """
    if not pred_embeddings or not memory.instances:
        raise EmptyInput("similarity requires at least one prediction and one memory instance")
    pred = _stack(pred_embeddings)
    mem = _stack([inst.embedding for inst in memory.instances])
    if pred.shape[1] != mem.shape[1]:
        raise DimensionMismatch("prediction and memory embeddings must share one length")
    if kind is SimilarityKind.COSINE:
        return cosine_scores(pred, mem)
    return bisoftmax_scores(pred @ mem.T)


# ---------------------------------------------------------------------------
# Assignment protocol


def assign(
    scores: np.ndarray,
    detections: list[Detection],
    memory: MemoryBank,
    cfg: AssociationConfig,
) -> list[Assignment]:
    """Greedy one-to-one assignment of predictions to memory instances.

    Candidate pairs are taken in descending similarity; a claimed memory
    instance becomes unavailable and losing predictions re-evaluate over
    what remains. A prediction whose best remaining similarity is not
    strictly above ``match_threshold`` opens a new instance when its
    detection score reaches ``new_instance_score`` and is discarded
    otherwise. Ties break toward the lowest prediction index, then the
    lowest (oldest) memory index.
    """
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2 or s.shape != (len(detections), len(memory.instances)):
        raise DimensionMismatch("scores must be an N x M matrix over detections and memory")
    n, m = s.shape
    available = [True] * m
    pending = list(range(n))
    matched: dict[int, int] = {}
    while pending and any(available):
        best_value = -np.inf
        best_pair = None
        for i in pending:
            for j in range(m):
                if available[j] and s[i, j] > best_value:
                    best_value = s[i, j]
                    best_pair = (i, j)
        if best_pair is None or best_value <= cfg.match_threshold:
            break
        i, j = best_pair
        matched[i] = j
        available[j] = False
        pending.remove(i)
    out = []
    for i in range(n):
        if i in matched:
            out.append(Assignment(i, Outcome.MATCHED, memory.instances[matched[i]].track_id))
        elif detections[i].score >= cfg.new_instance_score:
            out.append(Assignment(i, Outcome.NEW_INSTANCE))
        else:
            out.append(Assignment(i, Outcome.DISCARDED))
    return out


def _updated_bank(
    memory: MemoryBank,
    assignments: list[Assignment],
    detections: list[Detection],
    frame_index: int,
    cfg: AssociationConfig,
) -> tuple[MemoryBank, dict[int, int]]:
    """Apply assignments, returning the new bank and fresh ids by pred index."""
    index_of = {inst.track_id: k for k, inst in enumerate(memory.instances)}
    instances = list(memory.instances)
    next_id = memory.next_id
    minted: dict[int, int] = {}
    rho = cfg.memory_momentum
    for a in sorted(assignments, key=lambda a: a.pred_index):
        det = detections[a.pred_index]
        if a.outcome is Outcome.MATCHED:
            k = index_of.get(a.track_id)
            if k is None:
                raise UnknownTrackId(f"assignment references unknown track id {a.track_id}")
            inst = instances[k]
            if len(inst.embedding) != len(det.embedding):
                raise DimensionMismatch("detection embedding length must match memory")
            blended = (1.0 - rho) * inst.embedding.vector + rho * det.embedding.vector
            instances[k] = replace(
                inst,
                embedding=Embedding(tuple(blended)),
                last_seen_frame=frame_index,
                hit_count=inst.hit_count + 1,
            )
        elif a.outcome is Outcome.NEW_INSTANCE:
            minted[a.pred_index] = next_id
            instances.append(
                MemoryInstance(next_id, det.embedding, det.category_id, frame_index, 1)
            )
            next_id += 1
    return MemoryBank(instances, next_id), minted


def update_memory(
    memory: MemoryBank,
    assignments: list[Assignment],
    detections: list[Detection],
    frame_index: int,
    cfg: AssociationConfig,
) -> MemoryBank:
    """Blend matched embeddings (EMA with ``memory_momentum``), append new
    instances with fresh ids in ascending prediction order, keep the rest."""
    bank, _ = _updated_bank(memory, assignments, detections, frame_index, cfg)
    return bank


# ---------------------------------------------------------------------------
# Whole-video tracking


def _keep_top(detections: list[Detection], cap: int) -> list[int]:
    order = sorted(range(len(detections)), key=lambda i: (-detections[i].score, i))
    return sorted(order[:cap])


def _majority_category(entries: list[tuple[int, Detection]]) -> int:
    counts = Counter(det.category_id for _, det in entries)
    best_score: dict[int, float] = {}
    for _, det in entries:
        prev = best_score.get(det.category_id)
        if prev is None or det.score > prev:
            best_score[det.category_id] = det.score
    # majority count, then the category holding the highest-scoring entry,
    # then the smallest category id
    return max(counts, key=lambda c: (counts[c], best_score[c], -c))


def track_video_with_trace(
    frames: list[FrameDetections],
    cfg: AssociationConfig,
    video_meta: VideoMeta,
) -> tuple[list[Track], dict[tuple[int, int], int]]:
    """Run the tracker and also report which track id each detection joined.

    The trace maps (frame_index, detection index within the frame) to the
    assigned track id; discarded or capacity-dropped detections are absent.
    """
    bank = MemoryBank()
    history: dict[int, list[tuple[int, Detection]]] = {}
    spawn_order: list[int] = []
    trace: dict[tuple[int, int], int] = {}
    last_frame = -1
    for fd in frames:
        if fd.frame_index <= last_frame:
            raise ValueError("frames must arrive in ascending frame_index order")
        if fd.frame_index >= video_meta.length:
            raise ValueError("frame_index must be below the video length")
        last_frame = fd.frame_index
        kept_indices = _keep_top(fd.detections, cfg.keep_top_n_per_frame)
        dets = [fd.detections[i] for i in kept_indices]
        if video_meta.height is not None and video_meta.width is not None:
            for det in dets:
                if det.mask is not None and (det.mask.height, det.mask.width) != (
                    video_meta.height,
                    video_meta.width,
                ):
                    raise DimensionMismatch("detection mask dimensions must equal video dimensions")
        if not dets:
            continue
        if len(bank) == 0:
            scores = np.zeros((len(dets), 0))
        else:
            scores = similarity([d.embedding for d in dets], bank, cfg.similarity_kind)
        assignments = assign(scores, dets, bank, cfg)
        bank, minted = _updated_bank(bank, assignments, dets, fd.frame_index, cfg)
        for a in assignments:
            if a.outcome is Outcome.MATCHED:
                tid = a.track_id
            elif a.outcome is Outcome.NEW_INSTANCE:
                tid = minted[a.pred_index]
            else:
                continue
            if tid not in history:
                history[tid] = []
                spawn_order.append(tid)
            history[tid].append((fd.frame_index, dets[a.pred_index]))
            trace[(fd.frame_index, kept_indices[a.pred_index])] = tid
    tracks = []
    for tid in spawn_order:
        recorded = history[tid]
        entries = {f: TrackEntry(det.bbox, det.mask, det.score) for f, det in recorded}
        score = sum(det.score for _, det in recorded) / len(recorded)
        tracks.append(Track(tid, _majority_category(recorded), score, entries))
    return tracks, trace


def track_video(
    frames: list[FrameDetections],
    cfg: AssociationConfig,
    video_meta: VideoMeta,
) -> list[Track]:
    """Associate one video's detections into tracks.

    Per frame at most ``keep_top_n_per_frame`` detections (by score)
    participate. Track category is the majority category over entries
    (ties: the category of the highest-scoring entry, then the smallest
    id); track score is the mean per-frame score.
    """
    tracks, _ = track_video_with_trace(frames, cfg, video_meta)
    return tracks
