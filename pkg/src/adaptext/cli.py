"""Command-line entry point.

Exit codes: 0 success, 1 input error, 2 numeric failure.
Set ``ADAPTEXT_LOG`` (e.g. ``DEBUG``, ``INFO``) to control log verbosity.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import detection, io
from .geometry import InvalidPolygonError, polygon_area
from .representation import AdaptiveTextRegion, pair_totaltext, quad_to_pairs, reduce_ctw1500

log = logging.getLogger("adaptext")

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2

CONVERTERS = {"ctw14": reduce_ctw1500, "totaltext": pair_totaltext, "quad": quad_to_pairs}


class InputError(Exception):
    pass


def _load_records(path: str, fmt: str, ctw_relative: bool) -> list[io.AnnotationRecord]:
    p = Path(path)
    if not p.exists():
        raise InputError(f"{path}: no such file")
    if p.suffix == ".jsonl":
        return io.read_jsonl(p, fmt)
    if p.is_dir():
        return [io.read_text_annotations(f, fmt, ctw_relative) for f in sorted(p.glob("*.txt"))]
    return [io.read_text_annotations(p, fmt, ctw_relative)]


def run_convert(in_path: str, fmt: str, out_path: str, ctw_relative: bool = False) -> dict:
    """Convert raw annotations to pairwise regions; returns the summary."""
    convert = CONVERTERS[fmt]
    out_records, per_record = [], []
    for rec in _load_records(in_path, fmt, ctw_relative):
        regions, counts, ratios = [], [], []
        for k, pts in enumerate(rec.regions):
            try:
                region = convert(np.asarray(pts, dtype=np.float64))
            except (InvalidPolygonError, ValueError) as e:
                raise InputError(f"record {rec.image_id!r} region {k}: {e}") from None
            regions.append(region)
            counts.append(region.num_pairs)
            ratios.append(region.area() / polygon_area(pts))
        out_records.append(io.AnnotationRecord(rec.image_id, regions, "pairs", None, rec.ignore))
        per_record.append({"image_id": rec.image_id, "pair_counts": counts, "area_ratios": ratios})
    if out_path == "-":
        io.write_jsonl(out_records, sys.stdout)
    else:
        io.write_jsonl(out_records, out_path)
    hist: dict[int, int] = {}
    for r in per_record:
        for c in r["pair_counts"]:
            hist[c] = hist.get(c, 0) + 1
    return {
        "records": len(out_records),
        "regions": sum(len(r["pair_counts"]) for r in per_record),
        "pair_count_histogram": {str(k): v for k, v in sorted(hist.items())},
        "per_record": per_record,
    }


def _detections(rec: io.AnnotationRecord) -> list[detection.Detection]:
    if rec.scores is None:
        raise InputError(f"record {rec.image_id!r} has no scores")
    return [detection.Detection(p, s) for p, s in zip(rec.polygons(), rec.scores)]


def _ground_truths(rec: io.AnnotationRecord) -> list[detection.GroundTruth]:
    flags = rec.ignore or [False] * len(rec.regions)
    return [detection.GroundTruth(p, bool(f)) for p, f in zip(rec.polygons(), flags)]


def run_eval(dets_path: str, gts_path: str, threshold: float = detection.EVAL_IOU, macro: bool = False) -> detection.EvalReport:
    dets = {r.image_id: r for r in io.read_jsonl(dets_path, "raw")}
    gts = {r.image_id: r for r in io.read_jsonl(gts_path, "raw")}
    missing = sorted(set(gts) - set(dets))
    extra = sorted(set(dets) - set(gts))
    if extra:
        raise InputError(f"image ids in detections but not ground truth: {extra}")
    if missing:
        log.warning("no detections for %d images: %s", len(missing), missing)
    ids = sorted(gts)
    det_lists = [_detections(dets[i]) if i in dets else [] for i in ids]
    gt_lists = [_ground_truths(gts[i]) for i in ids]
    return detection.evaluate(det_lists, gt_lists, threshold, macro)


def run_nms(in_path: str, out_path: str, threshold: float) -> int:
    src = sys.stdin if in_path == "-" else open(in_path)
    out = []
    with src:
        for lineno, line in enumerate(src, 1):
            if not line.strip():
                continue
            rec = io.record_from_json(line, "raw", in_path, lineno)
            dets = detection.polygon_nms(_detections(rec), threshold)
            out.append(io.AnnotationRecord(rec.image_id, [d.polygon for d in dets], "raw", [d.score for d in dets]))
    if out_path == "-":
        io.write_jsonl(out, sys.stdout)
    else:
        io.write_jsonl(out, out_path)
    return len(out)


def run_plot(in_path: str, out_path: str, dets_path: str | None = None, image_id: str | None = None):
    gts = io.read_jsonl(in_path, "pairs")
    if image_id is not None:
        gts = [r for r in gts if r.image_id == image_id]
    elif gts:
        gts = gts[:1]
    regions = [r for rec in gts for r in rec.regions]
    detections = []
    if dets_path:
        ids = {rec.image_id for rec in gts}
        for rec in io.read_jsonl(dets_path, "pairs"):
            if rec.image_id in ids:
                detections.extend(zip(rec.regions, rec.scores or [1.0] * len(rec.regions)))
    io.emit_svg(regions, detections, out_path)


def run_grad_check(seed: int, hidden_dim: int = 32, steps: int = 5, input_dim: int = 12, epsilon: float = 1e-5):
    from .nnet import DecodeTarget, grad_check, init_decoder

    rng = np.random.default_rng(seed)
    params = init_decoder(input_dim, hidden_dim, rng, proposal_heads=True)
    X = rng.normal(size=(2, input_dim))
    targets = [
        DecodeTarget(rng.uniform(-1.5, 1.5, (steps - 1, 4)), 1, rng.normal(size=4)),
        DecodeTarget(rng.uniform(-1.5, 1.5, (2, 4)), 1, rng.normal(size=4)),
    ]
    return grad_check(params, X, targets, epsilon)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="adaptext", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("convert", help="convert raw annotations to pairwise regions")
    p.add_argument("--from", dest="fmt", required=True, choices=sorted(CONVERTERS))
    p.add_argument("--in", dest="inp", required=True, help=".jsonl, a .txt annotation file, or a directory of .txt")
    p.add_argument("--out", required=True, help="output .jsonl, or - for stdout")
    p.add_argument("--ctw-relative", action="store_true", help="ctw14 lines are native box + 28 relative offsets")

    p = sub.add_parser("nms", help="polygon NMS over scored detections")
    p.add_argument("--iou", type=float, default=detection.NMS_IOU)
    p.add_argument("--in", dest="inp", default="-")
    p.add_argument("--out", default="-")

    p = sub.add_parser("eval", help="recall / precision / Hmean")
    p.add_argument("--dets", required=True)
    p.add_argument("--gts", required=True)
    p.add_argument("--iou", type=float, default=detection.EVAL_IOU)
    p.add_argument("--macro", action="store_true", help="average per image instead of pooling counts")
    p.add_argument("--per-image", action="store_true", help="include per-image matches in the report")

    p = sub.add_parser("toy-train", help="train the decoder on synthetic ribbons")
    p.add_argument("--config", help="key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out-dir")

    p = sub.add_parser("grad-check", help="analytic vs finite-difference gradients")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--hidden", type=int, default=32)
    p.add_argument("--steps", type=int, default=5)
    p.add_argument("--epsilon", type=float, default=1e-5)
    p.add_argument("--tol", type=float, default=1e-4)

    p = sub.add_parser("plot", help="render regions (and detections) to SVG")
    p.add_argument("--in", dest="inp", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--dets")
    p.add_argument("--image-id")
    return ap


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("ADAPTEXT_LOG", "WARNING").upper(), format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    try:
        if args.command == "convert":
            summary = run_convert(args.inp, args.fmt, args.out, args.ctw_relative)
            print(json.dumps(summary), file=sys.stderr if args.out == "-" else sys.stdout)
        elif args.command == "nms":
            run_nms(args.inp, args.out, args.iou)
        elif args.command == "eval":
            report = run_eval(args.dets, args.gts, args.iou, args.macro).to_dict()
            if not args.per_image:
                report.pop("per_image")
            print(json.dumps(report, indent=2))
        elif args.command == "toy-train":
            from .train import NumericFailure, TrainConfig, train

            cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
            if args.seed is not None:
                cfg.seed = args.seed
            if args.out_dir:
                cfg.out_dir = args.out_dir
            try:
                result = train(cfg)
            except NumericFailure as e:
                log.error("%s", e)
                return EXIT_NUMERIC
            print(json.dumps(result.final))
        elif args.command == "grad-check":
            res = run_grad_check(args.seed, args.hidden, args.steps, epsilon=args.epsilon)
            print(json.dumps({"max_rel_error": res.max_rel_error, "param": res.param, "index": list(res.index),
                              "analytic": res.analytic, "numeric": res.numeric}))
            return EXIT_OK if res.max_rel_error <= args.tol else EXIT_NUMERIC
        elif args.command == "plot":
            run_plot(args.inp, args.out, args.dets, args.image_id)
    except (InputError, io.ParseError, InvalidPolygonError, ValueError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INPUT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
