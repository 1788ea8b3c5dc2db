"""Line-delimited JSON annotation files.

One frame per line::

    {"frame": 12, "objects": [{"class": "car", "box": [0.1, 0.2, 0.3, 0.4],
                               "track": 7, "attrs": {"color": "red"}, "score": 0.9}]}

``track``, ``attrs`` and ``score`` are optional. Frame ids must strictly
increase. Blank lines are ignored.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import IO, Iterable, Iterator, Union

from .core import BBox, ClassTable, FrameAnnotation, ObjectInstance
from .exceptions import AnnotationFormatError, VmqError

PathLike = Union[str, Path]


def frame_to_record(frame: FrameAnnotation, classes: ClassTable) -> dict:
    objs = []
    for o in frame.objects:
        rec = {"class": classes.label_of(o.class_id), "box": list(o.bbox.as_tuple())}
        if o.track_id is not None:
            rec["track"] = o.track_id
        if o.attrs:
            rec["attrs"] = dict(sorted(o.attrs.items()))
        if o.score is not None:
            rec["score"] = o.score
        objs.append(rec)
    return {"frame": frame.frame_id, "objects": objs}


def record_to_frame(rec, classes: ClassTable) -> FrameAnnotation:
    if not isinstance(rec, dict):
        raise ValueError("record must be a JSON object")
    unknown = set(rec) - {"frame", "objects"}
    if unknown:
        raise ValueError(f"unknown record fields {sorted(unknown)}")
    frame_id = rec.get("frame")
    if isinstance(frame_id, bool) or not isinstance(frame_id, int):
        raise ValueError(f"'frame' must be an integer, got {frame_id!r}")
    raw_objs = rec.get("objects", [])
    if not isinstance(raw_objs, list):
        raise ValueError("'objects' must be an array")
    objs = []
    for k, o in enumerate(raw_objs):
        if not isinstance(o, dict):
            raise ValueError(f"object {k} must be a JSON object")
        extra = set(o) - {"class", "box", "track", "attrs", "score"}
        if extra:
            raise ValueError(f"object {k}: unknown fields {sorted(extra)}")
        box = o.get("box")
        if not isinstance(box, list) or len(box) != 4 or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in box):
            raise ValueError(f"object {k}: 'box' must be 4 numbers")
        attrs = o.get("attrs", {})
        if not isinstance(attrs, dict) or not all(isinstance(v, str) for v in attrs.values()):
            raise ValueError(f"object {k}: 'attrs' must map names to strings")
        objs.append(ObjectInstance(classes.id_of(o.get("class")), BBox.from_seq(box), o.get("track"),
                                   o.get("score"), attrs))
    return FrameAnnotation(frame_id, tuple(objs))


def iter_annotations(fh: IO[str], classes: ClassTable, source=None) -> Iterator[FrameAnnotation]:
    last = None
    for lineno, line in enumerate(fh, start=1):
        if not line.strip():
            continue
        try:
            frame = record_to_frame(json.loads(line), classes)
        except (ValueError, VmqError) as exc:
            raise AnnotationFormatError(str(exc), source, lineno) from None
        if last is not None and frame.frame_id <= last:
            raise AnnotationFormatError(f"frame {frame.frame_id} is out of order (previous frame {last})",
                                        source, lineno)
        last = frame.frame_id
        yield frame


def read_annotations(path: PathLike, classes: ClassTable) -> Iterator[FrameAnnotation]:
    """Stream frames from an annotation file, validating every record."""
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        yield from iter_annotations(fh, classes, source=str(path))


def write_annotations(path: PathLike, frames: Iterable[FrameAnnotation], classes: ClassTable) -> int:
    """Write frames one per line; returns the number of frames written."""
    path = Path(path)
    n = 0
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        for frame in frames:
            fh.write(json.dumps(frame_to_record(frame, classes), separators=(",", ":")) + "\n")
            n += 1
    return n


def dump_record(record: dict) -> str:
    """One report record as a single JSON line (keys sorted for byte-stable output)."""
    return json.dumps(record, sort_keys=True, separators=(",", ":"), allow_nan=True)
