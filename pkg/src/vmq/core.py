"""Value types shared across the package: classes, boxes, objects, frames, counts, regions.

All coordinates are normalized to the unit frame, with x growing to the right
and y growing downward (image convention).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .exceptions import ClassTableError, GeometryError, ParameterError


@dataclass(frozen=True)
class ClassTable:
    """Ordered class labels; the class id of a label is its position."""

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if not labels:
            raise ClassTableError("class table must contain at least one class")
        for label in labels:
            if not isinstance(label, str) or not label:
                raise ClassTableError(f"invalid class label {label!r}")
        if len(set(labels)) != len(labels):
            raise ClassTableError(f"duplicate class labels in {labels}")

    @property
    def n(self) -> int:
        return len(self.labels)

    def __len__(self):
        return len(self.labels)

    @property
    def entries(self) -> list[tuple[int, str]]:
        return list(enumerate(self.labels))

    def id_of(self, label: str) -> int:
        try:
            return self.labels.index(label)
        except ValueError:
            raise ClassTableError(f"unknown class label {label!r}") from None

    def label_of(self, class_id: int) -> str:
        self.check(class_id)
        return self.labels[class_id]

    def check(self, class_id: int) -> int:
        if not isinstance(class_id, (int, np.integer)) or not 0 <= class_id < self.n:
            raise ClassTableError(f"class id {class_id!r} not in class table of size {self.n}")
        return int(class_id)


@dataclass(frozen=True)
class BBox:
    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        vals = (self.x_min, self.y_min, self.x_max, self.y_max)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError(f"non-finite box coordinates {vals}")
        if not (0.0 <= self.x_min < self.x_max <= 1.0 and 0.0 <= self.y_min < self.y_max <= 1.0):
            raise GeometryError(
                f"box {vals} violates 0 <= min < max <= 1 on some axis"
            )

    @classmethod
    def from_seq(cls, seq: Sequence[float]) -> "BBox":
        if len(seq) != 4:
            raise GeometryError(f"box needs 4 coordinates, got {len(seq)}")
        return cls(*(float(v) for v in seq))

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    @property
    def center(self) -> tuple[float, float]:
        return ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)

    @property
    def area(self) -> float:
        return (self.x_max - self.x_min) * (self.y_max - self.y_min)

    def intersection_area(self, other: "BBox") -> float:
        w = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        h = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        if w <= 0.0 or h <= 0.0:
            return 0.0
        return w * h

    def contains_point(self, x: float, y: float) -> bool:
        """Closed containment: boundary points are inside."""
        return self.x_min <= x <= self.x_max and self.y_min <= y <= self.y_max


@dataclass(frozen=True)
class ObjectInstance:
    class_id: int
    bbox: BBox
    track_id: Optional[int] = None
    score: Optional[float] = None
    attrs: Mapping[str, str] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if not isinstance(self.class_id, (int, np.integer)) or self.class_id < 0:
            raise ClassTableError(f"invalid class id {self.class_id!r}")
        object.__setattr__(self, "class_id", int(self.class_id))
        if self.track_id is not None and (not isinstance(self.track_id, (int, np.integer)) or self.track_id < 0):
            raise ParameterError(f"track id must be a non-negative integer, got {self.track_id!r}")
        if self.score is not None and not 0.0 <= self.score <= 1.0:
            raise ParameterError(f"score must lie in [0, 1], got {self.score!r}")
        object.__setattr__(self, "attrs", dict(self.attrs))


@dataclass(frozen=True)
class FrameAnnotation:
    frame_id: int
    objects: tuple[ObjectInstance, ...] = ()

    def __post_init__(self):
        if not isinstance(self.frame_id, (int, np.integer)) or self.frame_id < 0:
            raise ParameterError(f"frame id must be a non-negative integer, got {self.frame_id!r}")
        object.__setattr__(self, "frame_id", int(self.frame_id))
        object.__setattr__(self, "objects", tuple(self.objects))

    def __len__(self):
        return len(self.objects)


@dataclass(frozen=True)
class CountVector:
    counts: tuple[int, ...]

    def __post_init__(self):
        counts = tuple(int(c) for c in self.counts)
        if any(c < 0 for c in counts):
            raise ParameterError(f"counts must be non-negative, got {counts}")
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return sum(self.counts)

    def __getitem__(self, class_id: int) -> int:
        return self.counts[class_id]

    def __len__(self):
        return len(self.counts)

    def get(self, class_id: Optional[int]) -> int:
        """Count for one class, or the total when ``class_id`` is None."""
        return self.total if class_id is None else self.counts[class_id]

    @classmethod
    def zeros(cls, n: int) -> "CountVector":
        return cls((0,) * n)


@dataclass(frozen=True)
class Region:
    name: str
    rect: BBox

    def __post_init__(self):
        if not self.name:
            raise ParameterError("region name must be non-empty")
        if not isinstance(self.rect, BBox):
            object.__setattr__(self, "rect", BBox.from_seq(self.rect))


def quadrant_regions() -> dict[str, Region]:
    """The four frame quadrants, named with y pointing down (lower = larger y)."""
    return {
        "upper_left": Region("upper_left", BBox(0.0, 0.0, 0.5, 0.5)),
        "upper_right": Region("upper_right", BBox(0.5, 0.0, 1.0, 0.5)),
        "lower_left": Region("lower_left", BBox(0.0, 0.5, 0.5, 1.0)),
        "lower_right": Region("lower_right", BBox(0.5, 0.5, 1.0, 1.0)),
    }


def _n_classes(classes) -> int:
    if isinstance(classes, ClassTable):
        return classes.n
    return int(classes)


def count_objects(frame: FrameAnnotation, classes, class_filter: Optional[int] = None) -> CountVector:
    """Per-class object counts of ``frame``.

    ``classes`` is a ClassTable or a class count. With ``class_filter`` set,
    every entry except that class is zero.
    """
    n = _n_classes(classes)
    if class_filter is not None and not (isinstance(class_filter, (int, np.integer)) and 0 <= class_filter < n):
        raise ClassTableError(f"class filter {class_filter!r} not in class table of size {n}")
    counts = [0] * n
    for obj in frame.objects:
        if obj.class_id >= n:
            raise ClassTableError(
                f"frame {frame.frame_id}: object class id {obj.class_id} not in class table of size {n}"
            )
        counts[obj.class_id] += 1
    if class_filter is not None:
        counts = [c if i == class_filter else 0 for i, c in enumerate(counts)]
    return CountVector(tuple(counts))


def object_in_region(obj: ObjectInstance, region: Region, mode: str = "center",
                     min_overlap: float = 0.5) -> bool:
    """Region membership of an object.

    ``mode="center"`` tests the box centroid against the closed region
    rectangle. ``mode="overlap"`` requires the fraction of the box area that
    lies inside the region to be at least ``min_overlap``.
    """
    if mode == "center":
        cx, cy = obj.bbox.center
        return region.rect.contains_point(cx, cy)
    if mode == "overlap":
        if not (0.0 < min_overlap <= 1.0):
            raise ParameterError(f"min_overlap must lie in (0, 1], got {min_overlap!r}")
        return obj.bbox.intersection_area(region.rect) / obj.bbox.area >= min_overlap
    raise ParameterError(f"unknown region mode {mode!r}")


def iter_class_objects(frame: FrameAnnotation, class_id: int) -> Iterable[ObjectInstance]:
    return (o for o in frame.objects if o.class_id == class_id)
