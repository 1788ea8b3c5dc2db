"""Deterministic synthetic annotation streams.

Objects arrive per class in Poisson-distributed bursts, live for a geometric
number of frames, and move linearly. An object leaves when its dwell time
expires or its box drifts entirely off the frame. Emitted boxes are clamped
to the unit frame; motion is tracked on the unclamped box.

Random draws are keyed by ``(seed, frame_id)`` for arrivals and by
``(seed, frame_id, track_id)`` for the properties of each new object.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping, Optional

import numpy as np

from ._rng import keyed_rng
from .core import BBox, ClassTable, FrameAnnotation, ObjectInstance
from .exceptions import ConfigurationError


def _pair(v, name) -> tuple[float, float]:
    lo, hi = (float(x) for x in v)
    if not 0.0 < lo <= hi <= 1.0:
        raise ConfigurationError(f"{name} range must satisfy 0 < lo <= hi <= 1, got {v}")
    return lo, hi


@dataclass(frozen=True)
class ClassProfile:
    label: str
    arrival_rate: float = 0.0
    dwell_mean: float = 30.0
    width: tuple[float, float] = (0.05, 0.15)
    height: tuple[float, float] = (0.05, 0.15)
    speed: float = 0.0
    burst_mean: float = 1.0
    attributes: Mapping[str, Mapping[str, float]] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        if self.arrival_rate < 0:
            raise ConfigurationError(f"{self.label}: arrival_rate must be >= 0")
        if self.dwell_mean < 1:
            raise ConfigurationError(f"{self.label}: dwell_mean must be >= 1")
        if self.burst_mean < 1:
            raise ConfigurationError(f"{self.label}: burst_mean must be >= 1")
        if self.speed < 0:
            raise ConfigurationError(f"{self.label}: speed must be >= 0")
        object.__setattr__(self, "width", _pair(self.width, f"{self.label}.width"))
        object.__setattr__(self, "height", _pair(self.height, f"{self.label}.height"))
        attrs = {}
        for name, palette in self.attributes.items():
            probs = {str(k): float(p) for k, p in palette.items()}
            if not probs or abs(sum(probs.values()) - 1.0) > 1e-9 or min(probs.values()) < 0:
                raise ConfigurationError(f"{self.label}.{name}: attribute probabilities must sum to 1")
            attrs[str(name)] = probs
        object.__setattr__(self, "attributes", attrs)

    @property
    def steady_state_mean(self) -> float:
        """Expected objects per frame if none drift off-frame (rate x dwell)."""
        return self.arrival_rate * self.dwell_mean


@dataclass(frozen=True)
class StreamConfig:
    n_frames: int
    classes: tuple[ClassProfile, ...]
    seed: int = 0
    start_frame: int = 0

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(self.classes))
        if self.n_frames < 0 or self.start_frame < 0 or self.seed < 0:
            raise ConfigurationError("n_frames, start_frame and seed must be non-negative")
        if not self.classes:
            raise ConfigurationError("stream config needs at least one class")

    @property
    def class_table(self) -> ClassTable:
        return ClassTable(tuple(c.label for c in self.classes))

    @classmethod
    def from_dict(cls, d: Mapping, seed: Optional[int] = None) -> "StreamConfig":
        d = dict(d)
        raw = d.pop("classes", None)
        if not raw:
            raise ConfigurationError("simulator.classes is required")
        if isinstance(raw, Mapping):
            profiles = [ClassProfile(label=label, **(spec or {})) for label, spec in raw.items()]
        else:
            profiles = [ClassProfile(**spec) for spec in raw]
        if seed is not None:
            d["seed"] = seed
        try:
            return cls(classes=tuple(profiles), **d)
        except TypeError as exc:
            raise ConfigurationError(f"bad simulator config: {exc}") from None


def coral_like(n_frames: int = 20000, seed: int = 0) -> StreamConfig:
    """Single-class crowd profile: about 8.7 objects per frame, std about 5."""
    return StreamConfig(n_frames, (
        ClassProfile("person", arrival_rate=8.7 / 40.0, dwell_mean=40.0, width=(0.03, 0.08),
                     height=(0.08, 0.2), speed=0.001, burst_mean=3.0),
    ), seed)


def traffic_like(n_frames: int = 20000, seed: int = 0) -> StreamConfig:
    """Sparse two-to-three class traffic profile (car-dominated) with colors."""
    colors = {"red": 0.2, "blue": 0.2, "white": 0.4, "black": 0.2}
    return StreamConfig(n_frames, (
        ClassProfile("person", arrival_rate=0.3 / 25.0, dwell_mean=25.0, width=(0.03, 0.06),
                     height=(0.08, 0.15), speed=0.004),
        ClassProfile("car", arrival_rate=1.0 / 25.0, dwell_mean=25.0, width=(0.08, 0.2),
                     height=(0.06, 0.12), speed=0.01, attributes={"color": colors}),
        ClassProfile("bus", arrival_rate=0.3 / 30.0, dwell_mean=30.0, width=(0.15, 0.3),
                     height=(0.1, 0.2), speed=0.008, attributes={"color": colors}),
    ), seed)


@dataclass
class _Live:
    track_id: int
    class_id: int
    box: np.ndarray
    velocity: np.ndarray
    dwell: int
    age: int
    attrs: dict


def _draw_attrs(rng: np.random.Generator, palette: Mapping[str, Mapping[str, float]]) -> dict:
    out = {}
    for name in sorted(palette):
        values = list(palette[name])
        cdf = np.cumsum([palette[name][v] for v in values])
        out[name] = values[min(int(np.searchsorted(cdf, rng.random(), side="right")), len(values) - 1)]
    return out


def _off_frame(box: np.ndarray) -> bool:
    return box[2] <= 0.0 or box[0] >= 1.0 or box[3] <= 0.0 or box[1] >= 1.0


def iter_raw_states(config: StreamConfig) -> Iterator[tuple[int, list[_Live]]]:
    """Yield ``(frame_id, live objects)`` with unclamped boxes."""
    live: list[_Live] = []
    next_track = 0
    for t in range(config.n_frames):
        frame_id = config.start_frame + t
        survivors = []
        for obj in live:
            obj.box = obj.box + np.concatenate([obj.velocity, obj.velocity])
            obj.age += 1
            if obj.age < obj.dwell and not _off_frame(obj.box):
                survivors.append(obj)
        live = survivors

        rng = keyed_rng(config.seed, frame_id)
        for class_id, prof in enumerate(config.classes):
            if prof.arrival_rate == 0:
                continue
            n_bursts = rng.poisson(prof.arrival_rate / prof.burst_mean)
            n_new = int(rng.geometric(1.0 / prof.burst_mean, size=n_bursts).sum()) if n_bursts else 0
            for _ in range(n_new):
                orng = keyed_rng(config.seed, frame_id, next_track)
                w = orng.uniform(*prof.width)
                h = orng.uniform(*prof.height)
                x0 = orng.uniform(0.0, 1.0 - w)
                y0 = orng.uniform(0.0, 1.0 - h)
                vel = orng.uniform(-prof.speed, prof.speed, size=2)
                dwell = int(orng.geometric(1.0 / prof.dwell_mean))
                attrs = _draw_attrs(orng, prof.attributes)
                live.append(_Live(next_track, class_id, np.array([x0, y0, x0 + w, y0 + h]), vel, dwell, 0, attrs))
                next_track += 1
        yield frame_id, live


def _visible(obj: _Live) -> Optional[ObjectInstance]:
    x0, y0, x1, y1 = np.clip(obj.box, 0.0, 1.0)
    if not (x0 < x1 and y0 < y1):
        return None
    return ObjectInstance(obj.class_id, BBox(float(x0), float(y0), float(x1), float(y1)), obj.track_id,
                          attrs=obj.attrs)


def generate(config: StreamConfig) -> Iterator[FrameAnnotation]:
    """The annotation stream of ``config``; identical for identical configs."""
    for frame_id, live in iter_raw_states(config):
        objs = [o for o in (_visible(obj) for obj in live) if o is not None]
        yield FrameAnnotation(frame_id, tuple(objs))


@dataclass(frozen=True)
class StreamProfile:
    n_frames: int
    class_mean: tuple[float, ...]
    class_std: tuple[float, ...]
    total_mean: float
    total_std: float

    def to_dict(self, classes: Optional[ClassTable] = None) -> dict:
        labels = classes.labels if classes is not None else [str(i) for i in range(len(self.class_mean))]
        return {
            "n_frames": self.n_frames,
            "total": {"mean": self.total_mean, "std": self.total_std},
            "classes": {lab: {"mean": m, "std": s} for lab, m, s in zip(labels, self.class_mean, self.class_std)},
        }


def profile(stream: Iterable[FrameAnnotation], n_classes: int) -> StreamProfile:
    """Per-class and total mean / population std of objects per frame."""
    rows = []
    for frame in stream:
        row = np.zeros(n_classes, dtype=np.int64)
        for obj in frame.objects:
            row[obj.class_id] += 1
        rows.append(row)
    if not rows:
        raise ConfigurationError("cannot profile an empty stream")
    counts = np.vstack(rows).astype(float)
    totals = counts.sum(axis=1)
    return StreamProfile(len(rows), tuple(counts.mean(axis=0).tolist()), tuple(counts.std(axis=0).tolist()),
                         float(totals.mean()), float(totals.std()))
