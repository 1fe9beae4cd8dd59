"""Command-line front end.

Subcommands: track, eval, pseudopair, fuse, synth, losscheck. All file
outputs go through the deterministic writers in formats, so repeated
runs on identical inputs are byte-identical. Exit codes: 0 success,
2 parse/schema error, 3 configuration error, 4 violated internal
invariant, 1 I/O failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace

from . import formats
from .association import track_video
from .core import VideoMeta
from .contrastive import gradient_check_suite
from .errors import ConfigError, SchemaError, ToolkitError, VideoMismatch
from .evaluation import EvalReport, evaluate
from .fusion import fuse_tracks
from .pseudo_pair import ImageMeta, SourceAnnotation, make_pair
from .rng import SplitMix64
from .synth import generate

GRAD_REL_BOUND = 1e-4
GRAD_ABS_BOUND = 1e-7


def _cmd_track(args) -> int:
    cfg = formats.load_run_config(args.config)
    det_file = formats.load_detections(args.detections)
    vids = sorted(det_file.videos)

    def run(vid: int):
        return track_video(det_file.videos[vid], cfg.association, det_file.metas[vid])

    if args.threads > 1 and len(vids) > 1:
        with ThreadPoolExecutor(max_workers=args.threads) as pool:
            tracked = list(pool.map(run, vids))
    else:
        tracked = [run(vid) for vid in vids]
    results = dict(zip(vids, tracked))
    lengths = {vid: det_file.metas[vid].length for vid in vids}
    formats.save_results(results, args.out, lengths)
    return 0


def _format_table(report: EvalReport, ks: tuple[int, ...]) -> str:
    headers = ["category", "AP", "AP50", "AP75"] + [f"AR@{k}" for k in ks]
    rows = []

    def fmt(m):
        if m is None:
            return ["-"] * (3 + len(ks))
        return [f"{m.ap:.4f}", f"{m.ap50:.4f}", f"{m.ap75:.4f}"] + [f"{m.ar[k]:.4f}" for k in ks]

    for c in sorted(report.per_category):
        rows.append([str(c)] + fmt(report.per_category[c]))
    rows.append(["overall"] + fmt(report.overall))
    widths = [max(len(r[i]) for r in rows + [headers]) for i in range(len(headers))]
    lines = [
        "  ".join(h.rjust(w) for h, w in zip(headers, widths)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(v.rjust(w) for v, w in zip(r, widths)) for r in rows]
    return "\n".join(lines)


def _cmd_eval(args) -> int:
    cfg = formats.load_run_config(args.config)
    ground_truth = formats.load_annotations(args.gt)
    predictions, lengths = formats.load_results(args.results)
    gt_lengths = {g.video_id: g.length for g in ground_truth}
    for vid, length in lengths.items():
        if vid in gt_lengths and length != gt_lengths[vid]:
            raise VideoMismatch(
                f"results declare length {length} for video {vid}, ground truth says {gt_lengths[vid]}"
            )
    report = evaluate(predictions, ground_truth, cfg.eval)
    formats.save_report(report, args.out)
    if args.table:
        print(_format_table(report, cfg.eval.max_detections))
    return 0


def _cmd_pseudopair(args) -> int:
    cfg = formats.load_run_config(args.config)
    ground_truth = formats.load_annotations(args.annotations)
    seed = cfg.crop.rng_seed if args.seed is None else args.seed
    rng = SplitMix64(seed)
    samples = []
    image_id = 0
    for g in sorted(ground_truth, key=lambda g: g.video_id):
        for f in range(g.length):
            anns = [
                SourceAnnotation(
                    instance_id=t.track_id,
                    category_id=t.category_id,
                    bbox=t.entries[f].bbox,
                    mask=t.entries[f].mask,
                )
                for t in g.gt_tracks
                if f in t.entries
            ]
            if not anns:
                continue
            image_id += 1
            meta = ImageMeta(image_id=image_id, width=g.width, height=g.height)
            samples.append(make_pair(meta, anns, cfg.crop, rng))
    formats.save_pairs(samples, args.out)
    return 0


def _cmd_fuse(args) -> int:
    cfg = formats.load_run_config(args.config)
    loaded = [formats.load_results(p) for p in args.inputs]
    lengths: dict[int, int] = {}
    for _, ls in loaded:
        for vid, length in ls.items():
            if lengths.setdefault(vid, length) != length:
                raise VideoMismatch(f"input files disagree on the length of video {vid}")
    merged = {}
    for vid in sorted(lengths):
        track_sets = [tracks.get(vid, []) for tracks, _ in loaded]
        merged[vid] = fuse_tracks(track_sets, lengths[vid], cfg.fusion)
    formats.save_results(merged, args.out, lengths)
    return 0


def _cmd_synth(args) -> int:
    cfg = formats.load_run_config(args.config).synth
    if args.seed is not None:
        cfg = replace(cfg, rng_seed=args.seed)
    corpus = generate(cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    formats.save_annotations(corpus.ground_truth, os.path.join(args.out_dir, "annotations.json"))
    metas = {
        g.video_id: VideoMeta(length=g.length, height=g.height, width=g.width, video_id=g.video_id)
        for g in corpus.ground_truth
    }
    formats.save_detections(
        corpus.detections,
        os.path.join(args.out_dir, "detections.json"),
        metas=metas,
        embedding_dim=cfg.embedding_dim,
    )
    formats.save_identity(corpus.identity_key, os.path.join(args.out_dir, "identity.json"))
    return 0


def _cmd_losscheck(args) -> int:
    worst_rel, worst_abs = gradient_check_suite(samples=args.samples, seed=args.seed)
    ok = worst_rel <= GRAD_REL_BOUND and worst_abs <= GRAD_ABS_BOUND
    print(f"max relative error: {worst_rel:.3e} (bound {GRAD_REL_BOUND:.0e})")
    print(f"max absolute error near zero: {worst_abs:.3e} (bound {GRAD_ABS_BOUND:.0e})")
    print("PASS" if ok else "FAIL")
    return 0 if ok else 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vistrack",
        description="Deterministic tracking-by-association toolkit for video instance segmentation outputs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("track", help="associate per-frame detections into tracks")
    p.add_argument("--detections", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--threads", type=int, default=1)
    p.set_defaults(func=_cmd_track)

    p = sub.add_parser("eval", help="score tracks against ground truth")
    p.add_argument("--gt", required=True)
    p.add_argument("--results", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--table", action="store_true")
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("pseudopair", help="sample key/reference crop pairs from annotations")
    p.add_argument("--annotations", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_pseudopair)

    p = sub.add_parser("fuse", help="merge several results files into one")
    p.add_argument("--inputs", nargs="+", required=True)
    p.add_argument("--config", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_fuse)

    p = sub.add_parser("synth", help="generate a synthetic corpus")
    p.add_argument("--config", default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("losscheck", help="finite-difference check of the embedding loss gradients")
    p.add_argument("--samples", type=int, default=100)
    p.add_argument("--seed", type=int, default=7)
    p.set_defaults(func=_cmd_losscheck)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


def entrypoint(argv=None) -> int:
    try:
        return main(argv)
    except SchemaError as e:  # ParseError included
        print(f"error: {e}", file=sys.stderr)
        return 2
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except ToolkitError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
