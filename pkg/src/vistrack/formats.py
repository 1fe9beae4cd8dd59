"""Bit-exact JSON formats for annotations, detections, results, crop
pairs, evaluation reports, and run configuration.

All writers quantize floats to 6 significant digits and serialize with
sorted keys and 2-space indentation, so repeated runs produce
byte-identical files. Loaders accept and ignore unknown object keys,
but reject values that violate a documented invariant with an error
naming it; malformed JSON raises ParseError carrying the line and
column.

Annotation ids are scoped per video: two videos may both carry an
annotation id 1, and loaders group by (video_id, id).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields
from typing import Any, Iterable, Mapping, Sequence

from .association import AssociationConfig, SimilarityKind
from .contrastive import LossWeights, MatchWeights
from .core import (
    BBox,
    Detection,
    Embedding,
    FrameDetections,
    RleMask,
    Track,
    TrackEntry,
    VideoGroundTruth,
    VideoMeta,
    bbox_of_mask,
)
from .errors import ConfigError, CountsMismatch, ParseError, SchemaError
from .evaluation import EvalConfig, EvalReport
from .fusion import FusionConfig, ScoreRule
from .pseudo_pair import CropConfig, CropPairSample
from .synth import SynthConfig


# ---------------------------------------------------------------------------
# Primitive encoding helpers


def _q(x: float) -> float:
    """Quantize to 6 significant digits; the idempotent float grid all
    writers share."""
    return float(f"{float(x):.6g}")


def dumps_json(obj: Any) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _write(obj: Any, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_json(obj))


def _read_json(path: str) -> Any:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as e:
        raise ParseError(f"{path}: line {e.lineno} column {e.colno}: {e.msg}") from e
    except UnicodeDecodeError as e:
        raise ParseError(f"{path}: not valid UTF-8: {e}") from e


def _expect_object(value: Any, where: str) -> dict:
    if not isinstance(value, dict):
        raise SchemaError(f"{where}: expected a JSON object")
    return value


def _expect_list(value: Any, where: str) -> list:
    if not isinstance(value, list):
        raise SchemaError(f"{where}: expected a JSON array")
    return value


def _get(obj: dict, key: str, where: str) -> Any:
    if key not in obj:
        raise SchemaError(f"{where}: missing required field '{key}'")
    return obj[key]


def _as_int(value: Any, where: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise SchemaError(f"{where}: expected an integer")
    return value


def _as_number(value: Any, where: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"{where}: expected a number")
    v = float(value)
    if not math.isfinite(v):
        raise SchemaError(f"{where}: value must be finite")
    return v


def _bbox_json(b: BBox) -> list[float]:
    return [_q(b.x), _q(b.y), _q(b.w), _q(b.h)]


def _bbox_from(value: Any, where: str) -> BBox:
    arr = _expect_list(value, where)
    if len(arr) != 4:
        raise SchemaError(f"{where}: bbox must be [x, y, w, h]")
    x, y, w, h = (_as_number(v, where) for v in arr)
    try:
        return BBox(x, y, w, h)
    except ValueError as e:
        raise SchemaError(f"{where}: {e}") from e


def _rle_json(m: RleMask) -> dict:
    return {"size": [m.height, m.width], "counts": list(m.counts)}


def _rle_from(value: Any, where: str) -> RleMask:
    obj = _expect_object(value, where)
    size = _expect_list(_get(obj, "size", where), f"{where}.size")
    if len(size) != 2:
        raise SchemaError(f"{where}.size: must be [height, width]")
    counts = _get(obj, "counts", where)
    if isinstance(counts, str):
        raise SchemaError(f"{where}.counts: compressed string counts are not supported; use an integer array")
    counts = _expect_list(counts, f"{where}.counts")
    h = _as_int(size[0], f"{where}.size")
    w = _as_int(size[1], f"{where}.size")
    vals = tuple(_as_int(c, f"{where}.counts") for c in counts)
    try:
        return RleMask(height=h, width=w, counts=vals)
    except CountsMismatch as e:
        raise CountsMismatch(f"{where}: {e}") from e


# ---------------------------------------------------------------------------
# Annotations (ground truth)


def save_annotations(ground_truth: Sequence[VideoGroundTruth], path: str) -> None:
    videos = [
        {"id": g.video_id, "width": g.width, "height": g.height, "length": g.length}
        for g in sorted(ground_truth, key=lambda g: g.video_id)
    ]
    cat_names: dict[int, str] = {}
    for g in ground_truth:
        for c in g.category_set:
            cat_names.setdefault(c, g.category_names.get(c, f"category_{c}"))
    categories = [{"id": c, "name": cat_names[c]} for c in sorted(cat_names)]
    annotations = []
    for g in sorted(ground_truth, key=lambda g: g.video_id):
        for t in sorted(g.gt_tracks, key=lambda t: t.track_id):
            segs: list[Any] = [None] * g.length
            boxes: list[Any] = [None] * g.length
            for f, e in t.entries.items():
                segs[f] = _rle_json(e.mask) if e.mask is not None else None
                boxes[f] = _bbox_json(e.bbox)
            annotations.append(
                {
                    "id": t.track_id,
                    "video_id": g.video_id,
                    "category_id": t.category_id,
                    "segmentations": segs,
                    "bboxes": boxes,
                }
            )
    _write({"videos": videos, "annotations": annotations, "categories": categories}, path)


def load_annotations(path: str) -> list[VideoGroundTruth]:
    root = _expect_object(_read_json(path), "annotations")
    video_meta: dict[int, tuple[int, int, int]] = {}
    for i, v in enumerate(_expect_list(_get(root, "videos", "annotations"), "videos")):
        where = f"videos[{i}]"
        obj = _expect_object(v, where)
        vid = _as_int(_get(obj, "id", where), f"{where}.id")
        if vid in video_meta:
            raise SchemaError(f"{where}: duplicate video id {vid}")
        video_meta[vid] = (
            _as_int(_get(obj, "width", where), f"{where}.width"),
            _as_int(_get(obj, "height", where), f"{where}.height"),
            _as_int(_get(obj, "length", where), f"{where}.length"),
        )
    cat_names: dict[int, str] = {}
    for i, c in enumerate(_expect_list(_get(root, "categories", "annotations"), "categories")):
        where = f"categories[{i}]"
        obj = _expect_object(c, where)
        cid = _as_int(_get(obj, "id", where), f"{where}.id")
        name = _get(obj, "name", where)
        if not isinstance(name, str):
            raise SchemaError(f"{where}.name: expected a string")
        if cid in cat_names:
            raise SchemaError(f"{where}: duplicate category id {cid}")
        cat_names[cid] = name

    tracks_by_video: dict[int, list[Track]] = {vid: [] for vid in video_meta}
    for i, a in enumerate(_expect_list(_get(root, "annotations", "annotations"), "annotations")):
        where = f"annotations[{i}]"
        obj = _expect_object(a, where)
        tid = _as_int(_get(obj, "id", where), f"{where}.id")
        vid = _as_int(_get(obj, "video_id", where), f"{where}.video_id")
        cid = _as_int(_get(obj, "category_id", where), f"{where}.category_id")
        if vid not in video_meta:
            raise SchemaError(f"{where}: unknown video_id {vid}")
        if cid not in cat_names:
            raise SchemaError(f"{where}: unknown category_id {cid}")
        width, height, length = video_meta[vid]
        segs = _expect_list(_get(obj, "segmentations", where), f"{where}.segmentations")
        boxes = _expect_list(_get(obj, "bboxes", where), f"{where}.bboxes")
        if len(segs) != length or len(boxes) != length:
            raise SchemaError(
                f"{where}: segmentations and bboxes must have exactly video length ({length}) entries"
            )
        entries: dict[int, TrackEntry] = {}
        for f in range(length):
            seg = segs[f]
            box = boxes[f]
            if seg is None and box is None:
                continue
            mask = _rle_from(seg, f"{where}.segmentations[{f}]") if seg is not None else None
            if box is not None:
                bbox = _bbox_from(box, f"{where}.bboxes[{f}]")
            else:
                bbox = bbox_of_mask(mask) if mask is not None else None
                if bbox is None:
                    continue  # empty mask with no box: nothing on this frame
            entries[f] = TrackEntry(bbox=bbox, mask=mask, score=1.0)
        try:
            track = Track(track_id=tid, category_id=cid, score=1.0, entries=entries)
        except ValueError as e:
            raise SchemaError(f"{where}: {e}") from e
        tracks_by_video[vid].append(track)

    out = []
    for vid in sorted(video_meta):
        width, height, length = video_meta[vid]
        try:
            out.append(
                VideoGroundTruth(
                    video_id=vid,
                    height=height,
                    width=width,
                    length=length,
                    gt_tracks=tracks_by_video[vid],
                    category_set=sorted(cat_names),
                    category_names=dict(cat_names),
                )
            )
        except ValueError as e:
            raise SchemaError(f"video {vid}: {e}") from e
    return out


# ---------------------------------------------------------------------------
# Detections


@dataclass
class DetectionsFile:
    """Parsed detections file: declared embedding width plus per-video
    frame lists and geometry."""

    embedding_dim: int
    videos: dict[int, list[FrameDetections]] = field(default_factory=dict)
    metas: dict[int, VideoMeta] = field(default_factory=dict)


def _detection_json(d: Detection) -> dict:
    return {
        "bbox": _bbox_json(d.bbox),
        "score": _q(d.score),
        "category_id": d.category_id,
        "class_probs": [_q(p) for p in d.class_probs],
        "segmentation": _rle_json(d.mask) if d.mask is not None else None,
        "embedding": [_q(v) for v in d.embedding.values],
    }


def save_detections(
    videos: Mapping[int, Sequence[FrameDetections]],
    path: str,
    metas: Mapping[int, VideoMeta] | None = None,
    embedding_dim: int | None = None,
) -> None:
    if embedding_dim is None:
        dims = {len(d.embedding) for frames in videos.values() for fr in frames for d in fr.detections}
        if len(dims) > 1:
            raise SchemaError("detections mix embedding dimensions; they must be constant per file")
        embedding_dim = dims.pop() if dims else 0
    rows = []
    for vid in sorted(videos):
        row: dict[str, Any] = {"video_id": vid}
        meta = (metas or {}).get(vid)
        if meta is not None:
            row["length"] = meta.length
            if meta.height is not None:
                row["height"] = meta.height
            if meta.width is not None:
                row["width"] = meta.width
        row["frames"] = [
            {
                "frame_index": fr.frame_index,
                "detections": [_detection_json(d) for d in fr.detections],
            }
            for fr in videos[vid]
        ]
        rows.append(row)
    _write({"embedding_dim": embedding_dim, "videos": rows}, path)


def load_detections(path: str) -> DetectionsFile:
    root = _expect_object(_read_json(path), "detections")
    dim = _as_int(_get(root, "embedding_dim", "detections"), "embedding_dim")
    if dim < 1:
        raise SchemaError("embedding_dim: must be at least 1")
    out = DetectionsFile(embedding_dim=dim)
    for i, v in enumerate(_expect_list(_get(root, "videos", "detections"), "videos")):
        where = f"videos[{i}]"
        obj = _expect_object(v, where)
        vid = _as_int(_get(obj, "video_id", where), f"{where}.video_id")
        if vid in out.videos:
            raise SchemaError(f"{where}: duplicate video_id {vid}")
        height = _as_int(obj["height"], f"{where}.height") if "height" in obj else None
        width = _as_int(obj["width"], f"{where}.width") if "width" in obj else None
        frames: list[FrameDetections] = []
        last_frame = -1
        for j, fr in enumerate(_expect_list(_get(obj, "frames", where), f"{where}.frames")):
            fwhere = f"{where}.frames[{j}]"
            fobj = _expect_object(fr, fwhere)
            fidx = _as_int(_get(fobj, "frame_index", fwhere), f"{fwhere}.frame_index")
            if fidx <= last_frame:
                raise SchemaError(f"{fwhere}: frame_index must be strictly increasing within a video")
            last_frame = fidx
            dets = []
            for k, d in enumerate(_expect_list(_get(fobj, "detections", fwhere), f"{fwhere}.detections")):
                dets.append(_detection_from(d, f"{fwhere}.detections[{k}]", dim, height, width))
            try:
                frames.append(FrameDetections(frame_index=fidx, detections=dets))
            except ValueError as e:
                raise SchemaError(f"{fwhere}: {e}") from e
        length = _as_int(obj["length"], f"{where}.length") if "length" in obj else last_frame + 1
        length = max(length, 1)
        if last_frame >= length:
            raise SchemaError(f"{where}: frame_index {last_frame} outside declared length {length}")
        out.videos[vid] = frames
        out.metas[vid] = VideoMeta(length=length, height=height, width=width, video_id=vid)
    return out


def _detection_from(value: Any, where: str, dim: int, height: int | None, width: int | None) -> Detection:
    obj = _expect_object(value, where)
    bbox = _bbox_from(_get(obj, "bbox", where), f"{where}.bbox")
    score = _as_number(_get(obj, "score", where), f"{where}.score")
    cid = _as_int(_get(obj, "category_id", where), f"{where}.category_id")
    probs = tuple(
        _as_number(p, f"{where}.class_probs")
        for p in _expect_list(_get(obj, "class_probs", where), f"{where}.class_probs")
    )
    emb_vals = tuple(
        _as_number(x, f"{where}.embedding")
        for x in _expect_list(_get(obj, "embedding", where), f"{where}.embedding")
    )
    if len(emb_vals) != dim:
        raise SchemaError(
            f"{where}.embedding: length {len(emb_vals)} violates the declared "
            f"embedding_dim {dim} (dimension must be constant per file)"
        )
    seg = obj.get("segmentation")
    mask = _rle_from(seg, f"{where}.segmentation") if seg is not None else None
    if mask is not None and height is not None and width is not None:
        if (mask.height, mask.width) != (height, width):
            raise SchemaError(f"{where}.segmentation: mask dimensions must equal video dimensions")
    try:
        return Detection(
            bbox=bbox,
            score=score,
            category_id=cid,
            class_probs=probs,
            embedding=Embedding(emb_vals),
            mask=mask,
        )
    except ValueError as e:
        raise SchemaError(f"{where}: {e}") from e


# ---------------------------------------------------------------------------
# Results (tracker / fusion output)


def save_results(
    tracks: Mapping[int, Sequence[Track]],
    path: str,
    video_lengths: Mapping[int, int],
) -> None:
    """One record per track, sorted by (video, descending score, id)."""
    records = []
    for vid in sorted(tracks):
        if vid not in video_lengths:
            raise SchemaError(f"no video length provided for video {vid}")
        length = video_lengths[vid]
        for t in sorted(tracks[vid], key=lambda t: (-t.score, t.track_id)):
            segs: list[Any] = [None] * length
            boxes: list[Any] = [None] * length
            for f, e in t.entries.items():
                if f >= length:
                    raise SchemaError(f"track {t.track_id} entry frame {f} outside video length {length}")
                segs[f] = _rle_json(e.mask) if e.mask is not None else None
                boxes[f] = _bbox_json(e.bbox)
            records.append(
                {
                    "video_id": vid,
                    "id": t.track_id,
                    "category_id": t.category_id,
                    "score": _q(t.score),
                    "segmentations": segs,
                    "bboxes": boxes,
                }
            )
    _write(records, path)


def load_results(path: str) -> tuple[dict[int, list[Track]], dict[int, int]]:
    """Tracks grouped per video (file order preserved) plus the
    segmentation-array length of each video."""
    root = _expect_list(_read_json(path), "results")
    tracks: dict[int, list[Track]] = {}
    lengths: dict[int, int] = {}
    seen: set[tuple[int, int]] = set()
    for i, r in enumerate(root):
        where = f"results[{i}]"
        obj = _expect_object(r, where)
        vid = _as_int(_get(obj, "video_id", where), f"{where}.video_id")
        tid = _as_int(_get(obj, "id", where), f"{where}.id")
        if (vid, tid) in seen:
            raise SchemaError(f"{where}: duplicate track id {tid} for video {vid}")
        seen.add((vid, tid))
        cid = _as_int(_get(obj, "category_id", where), f"{where}.category_id")
        score = _as_number(_get(obj, "score", where), f"{where}.score")
        segs = _expect_list(_get(obj, "segmentations", where), f"{where}.segmentations")
        boxes = _expect_list(_get(obj, "bboxes", where), f"{where}.bboxes")
        if len(boxes) != len(segs):
            raise SchemaError(f"{where}: segmentations and bboxes must have equal length")
        if vid in lengths and lengths[vid] != len(segs):
            raise SchemaError(f"{where}: inconsistent video length for video {vid}")
        lengths.setdefault(vid, len(segs))
        entries: dict[int, TrackEntry] = {}
        for f in range(len(segs)):
            seg, box = segs[f], boxes[f]
            if seg is None and box is None:
                continue
            mask = _rle_from(seg, f"{where}.segmentations[{f}]") if seg is not None else None
            if box is not None:
                bbox = _bbox_from(box, f"{where}.bboxes[{f}]")
            else:
                bbox = bbox_of_mask(mask) if mask is not None else None
                if bbox is None:
                    continue
            entries[f] = TrackEntry(bbox=bbox, mask=mask, score=score)
        try:
            track = Track(track_id=tid, category_id=cid, score=score, entries=entries)
        except ValueError as e:
            raise SchemaError(f"{where}: {e}") from e
        tracks.setdefault(vid, []).append(track)
    return tracks, lengths


# ---------------------------------------------------------------------------
# Evaluation report, crop pairs, identity key


def _metrics_json(m) -> dict | None:
    if m is None:
        return None
    return {
        "ap": _q(m.ap),
        "ap50": _q(m.ap50),
        "ap75": _q(m.ap75),
        "ar": {str(k): _q(v) for k, v in m.ar.items()},
    }


def save_report(report: EvalReport, path: str) -> None:
    _write(
        {
            "overall": _metrics_json(report.overall),
            "per_category": {str(c): _metrics_json(m) for c, m in report.per_category.items()},
        },
        path,
    )


def _view_json(view) -> dict:
    w = view.window
    return {
        "window": [_q(w.x0), _q(w.y0), _q(w.x1), _q(w.y1)],
        "annotations": [
            {
                "instance_id": a.instance_id,
                "category_id": a.category_id,
                "bbox": _bbox_json(a.bbox),
                "segmentation": _rle_json(a.mask) if a.mask is not None else None,
            }
            for a in view.annotations
        ],
    }


def save_pairs(samples: Sequence[CropPairSample], path: str) -> None:
    _write(
        [
            {
                "source_image_id": s.source_image_id,
                "view_a": _view_json(s.view_a),
                "view_b": _view_json(s.view_b),
                "correspondence": [[a, b] for a, b in s.correspondence],
            }
            for s in samples
        ],
        path,
    )


def save_identity(identity_key: Mapping[tuple[int, int, int], int], path: str) -> None:
    rows = [[v, f, d, t] for (v, f, d), t in sorted(identity_key.items())]
    _write(rows, path)


def load_identity(path: str) -> dict[tuple[int, int, int], int]:
    root = _expect_list(_read_json(path), "identity")
    out: dict[tuple[int, int, int], int] = {}
    for i, row in enumerate(root):
        arr = _expect_list(row, f"identity[{i}]")
        if len(arr) != 4:
            raise SchemaError(f"identity[{i}]: expected [video, frame, detection, track]")
        v, f, d, t = (_as_int(x, f"identity[{i}]") for x in arr)
        out[(v, f, d)] = t
    return out


# ---------------------------------------------------------------------------
# Run configuration


@dataclass
class RunConfig:
    association: AssociationConfig = field(default_factory=AssociationConfig)
    crop: CropConfig = field(default_factory=CropConfig)
    eval: EvalConfig = field(default_factory=EvalConfig)
    fusion: FusionConfig = field(default_factory=FusionConfig)
    match_weights: MatchWeights = field(default_factory=MatchWeights)
    loss_weights: LossWeights = field(default_factory=LossWeights)
    synth: SynthConfig = field(default_factory=SynthConfig)


_ENUM_FIELDS = {
    ("association", "similarity"): SimilarityKind,
    ("fusion", "score_rule"): ScoreRule,
}
_TUPLE_FIELDS = {
    ("synth", "canvas"),
    ("eval", "iou_thresholds"),
    ("eval", "max_detections"),
    ("fusion", "source_weights"),
}


def load_run_config(path: str | None) -> RunConfig:
    """Run configuration from a JSON file of per-section objects.

    Every section and every field is optional and falls back to the
    dataclass default; unknown sections or fields raise ConfigError.
    """
    if path is None:
        return RunConfig()
    root = _expect_object(_read_json(path), "config")
    sections = {f.name: f for f in fields(RunConfig)}
    kwargs = {}
    for name, value in root.items():
        if name not in sections:
            raise ConfigError(f"config: unknown section '{name}'")
        cls = sections[name].default_factory  # the config dataclass itself
        obj = _expect_object(value, f"config.{name}")
        allowed = {f.name for f in fields(cls)}
        ctor_kwargs = {}
        for key, raw in obj.items():
            if key not in allowed:
                raise ConfigError(f"config.{name}: unknown field '{key}'")
            enum_cls = _ENUM_FIELDS.get((name, key))
            if enum_cls is not None:
                try:
                    raw = enum_cls(raw)
                except ValueError as e:
                    raise ConfigError(f"config.{name}.{key}: {e}") from e
            elif (name, key) in _TUPLE_FIELDS and isinstance(raw, list):
                raw = tuple(raw)
            ctor_kwargs[key] = raw
        try:
            kwargs[name] = cls(**ctor_kwargs)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"config.{name}: {e}") from e
    return RunConfig(**kwargs)
