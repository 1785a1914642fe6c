"""Annotation ingestion, the JSON-lines interchange format, and SVG output.

Interchange: one image per line::

    {"image_id": "img_1", "regions": [[[x, y], ...], ...], "scores": [0.9, ...], "ignore": [false, ...]}

``scores`` (detections) and ``ignore`` (ground truth) are optional.  A
pairwise region is written as its polygon: top points in order, then
bottom points in reverse.  Coordinates carry 3 fractional digits.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .representation import AdaptiveTextRegion

DECIMALS = 3
IGNORE_TEXT = "###"
SOURCE_FORMATS = ("ctw14", "totaltext", "quad", "pairs")


class ParseError(ValueError):
    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.lineno = lineno


@dataclass
class AnnotationRecord:
    image_id: str
    regions: list = field(default_factory=list)  # raw (n, 2) arrays or AdaptiveTextRegion
    source_format: str = "pairs"
    scores: list[float] | None = None
    ignore: list[bool] | None = None

    def polygons(self) -> list[np.ndarray]:
        return [r.polygon() if isinstance(r, AdaptiveTextRegion) else np.asarray(r, dtype=np.float64) for r in self.regions]


def _round(v: float) -> float:
    r = round(float(v), DECIMALS)
    return 0.0 if r == 0 else r


def record_to_json(rec: AnnotationRecord) -> str:
    doc = {
        "image_id": rec.image_id,
        "regions": [[[_round(x), _round(y)] for x, y in poly] for poly in rec.polygons()],
    }
    if rec.scores is not None:
        doc["scores"] = [float(s) for s in rec.scores]
    if rec.ignore is not None:
        doc["ignore"] = [bool(b) for b in rec.ignore]
    return json.dumps(doc)


def record_from_json(line: str, source_format: str = "pairs", path="<string>", lineno: int = 1) -> AnnotationRecord:
    try:
        doc = json.loads(line)
    except json.JSONDecodeError as e:
        raise ParseError(path, lineno, f"invalid JSON: {e.msg}") from None
    if not isinstance(doc, dict) or "image_id" not in doc or "regions" not in doc:
        raise ParseError(path, lineno, "record needs 'image_id' and 'regions'")
    regions = []
    for k, poly in enumerate(doc["regions"]):
        arr = np.asarray(poly, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2:
            raise ParseError(path, lineno, f"region {k} is not a list of [x, y] points")
        if source_format == "pairs":
            try:
                arr = AdaptiveTextRegion.from_polygon(arr)
            except ValueError as e:
                raise ParseError(path, lineno, f"region {k}: {e}") from None
        regions.append(arr)
    scores, ignore = doc.get("scores"), doc.get("ignore")
    for name, vals in (("scores", scores), ("ignore", ignore)):
        if vals is not None and len(vals) != len(regions):
            raise ParseError(path, lineno, f"{len(vals)} {name} for {len(regions)} regions")
    return AnnotationRecord(str(doc["image_id"]), regions, source_format, scores, ignore)


def read_jsonl(path, source_format: str = "pairs") -> list[AnnotationRecord]:
    out = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            if line.strip():
                out.append(record_from_json(line, source_format, path, lineno))
    return out


def write_jsonl(records: Iterable[AnnotationRecord], path_or_stream):
    lines = "".join(record_to_json(r) + "\n" for r in records)
    if hasattr(path_or_stream, "write"):
        path_or_stream.write(lines)
    else:
        Path(path_or_stream).write_text(lines)


def read_text_annotations(path, source_format: str, ctw_relative: bool = False) -> AnnotationRecord:
    """One region per line of comma-separated coordinates.

    ``ctw14`` lines hold 28 values ``x1,y1,...,x14,y14``; with
    ``ctw_relative`` they hold the native 32 values (box ``xmin,ymin,xmax,ymax``
    then 28 offsets from ``xmin,ymin``).  ``quad`` lines hold 8 values and
    ``totaltext`` any even count >= 8.  A trailing non-numeric field is a
    transcription; ``###`` marks the region as ignored.
    """
    regions, ignore = [], []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip().lstrip("﻿")
            if not line:
                continue
            fields_ = [f.strip() for f in line.split(",")]
            values = []
            text = None
            for k, f in enumerate(fields_):
                try:
                    values.append(float(f))
                except ValueError:
                    text = ",".join(fields_[k:])
                    break
            n = len(values)
            if source_format == "ctw14":
                want = 32 if ctw_relative else 28
                if n != want:
                    raise ParseError(path, lineno, f"expected {want} numbers for ctw14, got {n}")
                if ctw_relative:
                    x0, y0 = values[0], values[1]
                    pts = np.asarray(values[4:]).reshape(14, 2) + [x0, y0]
                else:
                    pts = np.asarray(values).reshape(14, 2)
            elif source_format == "quad":
                if n != 8:
                    raise ParseError(path, lineno, f"expected 8 numbers for quad, got {n}")
                pts = np.asarray(values).reshape(4, 2)
            elif source_format == "totaltext":
                if n < 8 or n % 2:
                    raise ParseError(path, lineno, f"expected an even count >= 8 of numbers, got {n}")
                pts = np.asarray(values).reshape(-1, 2)
            else:
                raise ValueError(f"unknown source format {source_format!r}")
            regions.append(pts)
            ignore.append(text is not None and text.strip() == IGNORE_TEXT)
    return AnnotationRecord(Path(path).stem, regions, source_format, None, ignore if any(ignore) else None)


# -- SVG ---------------------------------------------------------------------

GT_COLOR = "#1a9850"
DET_COLOR = "#d73027"


def _fmt(v: float) -> str:
    return f"{v:.{DECIMALS}f}"


def _region_svg(region: AdaptiveTextRegion, color: str, cls: str, label: str | None = None) -> list[str]:
    pts = " ".join(f"{_fmt(x)},{_fmt(y)}" for x, y in region.polygon())
    out = [f'<g class="{cls}">', f'<polygon points="{pts}" fill="none" stroke="{color}" stroke-width="2"/>']
    for (tx, ty), (bx, by) in zip(region.tops, region.bottoms):
        out.append(f'<line class="rung" x1="{_fmt(tx)}" y1="{_fmt(ty)}" x2="{_fmt(bx)}" y2="{_fmt(by)}" stroke="{color}" stroke-width="1"/>')
    for x, y in np.vstack([region.tops, region.bottoms]):
        out.append(f'<circle class="pt" cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" fill="{color}"/>')
    if label:
        x, y = region.tops[0]
        out.append(f'<text x="{_fmt(x)}" y="{_fmt(y - 4)}" fill="{color}" font-size="12">{escape(label)}</text>')
    out.append("</g>")
    return out


def emit_svg(regions: Sequence[AdaptiveTextRegion], detections: Sequence[tuple[AdaptiveTextRegion, float]] = (),
             path=None, width: float | None = None, height: float | None = None) -> str:
    """Render ground-truth regions and scored detections.

    Each region becomes a polygon, one ``rung`` line per pair joining top
    to bottom, and one dot per point.  Returns the SVG text and writes it
    to ``path`` if given.
    """
    all_pts = [r.polygon() for r in regions] + [d.polygon() for d, _ in detections]
    if all_pts:
        hi = np.vstack(all_pts).max(axis=0)
        width = width or float(np.ceil(hi[0] + 10))
        height = height or float(np.ceil(hi[1] + 10))
    width, height = width or 100.0, height or 100.0
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_fmt(width)}" height="{_fmt(height)}" '
        f'viewBox="0 0 {_fmt(width)} {_fmt(height)}">',
    ]
    for r in regions:
        lines.extend(_region_svg(r, GT_COLOR, "gt"))
    for d, score in detections:
        lines.extend(_region_svg(d, DET_COLOR, "det", f"{score:.2f}"))
    lines.append("</svg>")
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text)
    return text
