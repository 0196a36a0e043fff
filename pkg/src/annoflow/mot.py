"""MOT-style CSV reading and writing.

Line format: frame,id,bb_left,bb_top,bb_width,bb_height,conf,-1,-1,-1 with
frame and id 1-based. Internally boxes are corner-inclusive, so bb_width =
x_max - x_min + 1; readers invert that.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

from .geometry import BBox


@dataclass(frozen=True)
class MotRecord:
    frame: int  # 1-based
    track_id: int  # 1-based
    bbox: BBox
    score: float = 1.0


def format_line(rec: MotRecord) -> str:
    b = rec.bbox
    conf = f"{rec.score:g}"
    return f"{rec.frame},{rec.track_id},{b.x_min},{b.y_min},{b.width},{b.height},{conf},-1,-1,-1"


def write_mot(records: Iterable[MotRecord], path: str | Path) -> None:
    lines = [format_line(r) for r in records]
    Path(path).write_text("\n".join(lines) + ("\n" if lines else ""))


def parse_line(line: str, lineno: int = 0) -> MotRecord:
    parts = line.strip().split(",")
    if len(parts) < 7:
        raise ValueError(f"line {lineno}: expected at least 7 fields, got {len(parts)}")
    try:
        frame = int(float(parts[0]))
        track_id = int(float(parts[1]))
        left = int(round(float(parts[2])))
        top = int(round(float(parts[3])))
        width = int(round(float(parts[4])))
        height = int(round(float(parts[5])))
        score = float(parts[6])
    except ValueError as exc:
        raise ValueError(f"line {lineno}: {exc}") from exc
    if width <= 0 or height <= 0:
        raise ValueError(f"line {lineno}: non-positive box size {width}x{height}")
    bbox = BBox(left, top, left + width - 1, top + height - 1)
    return MotRecord(frame=frame, track_id=track_id, bbox=bbox, score=score)


def read_mot(path: str | Path) -> list[MotRecord]:
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        records.append(parse_line(line, lineno))
    return records
