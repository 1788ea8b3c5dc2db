"""Count predicates, directional relations and exact per-frame query evaluation."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Optional, Union

import numpy as np

from .core import BBox, CountVector, FrameAnnotation, ObjectInstance, Region, count_objects, object_in_region
from .exceptions import ParameterError
from .gridding import OccupancyGrid, check_same_g


class SpatialRelation(str, Enum):
    LEFT = "LEFT"
    RIGHT = "RIGHT"
    ABOVE = "ABOVE"
    BELOW = "BELOW"

    @property
    def dual(self) -> "SpatialRelation":
        return _DUAL[self]


_DUAL = {
    SpatialRelation.LEFT: SpatialRelation.RIGHT,
    SpatialRelation.RIGHT: SpatialRelation.LEFT,
    SpatialRelation.ABOVE: SpatialRelation.BELOW,
    SpatialRelation.BELOW: SpatialRelation.ABOVE,
}


class Comparator(str, Enum):
    EQ = "="
    GE = ">="
    LE = "<="

    def __call__(self, lhs: int, rhs: int) -> bool:
        if self is Comparator.EQ:
            return lhs == rhs
        if self is Comparator.GE:
            return lhs >= rhs
        return lhs <= rhs


@dataclass(frozen=True)
class CountPredicate:
    """``class_id=None`` refers to the total count over all classes."""

    class_id: Optional[int]
    comparator: Comparator
    value: int

    def __post_init__(self):
        object.__setattr__(self, "comparator", Comparator(self.comparator))
        if not isinstance(self.value, (int, np.integer)) or self.value < 0:
            raise ParameterError(f"count predicate value must be a non-negative integer, got {self.value!r}")
        object.__setattr__(self, "value", int(self.value))


def eval_count(pred: CountPredicate, counts: CountVector) -> bool:
    return pred.comparator(counts.get(pred.class_id), pred.value)


def count_range_satisfies(pred: CountPredicate, reported: int, relax: int) -> bool:
    """True if some count within ``relax`` of ``reported`` (and >= 0) satisfies ``pred``."""
    lo, hi = max(0, reported - relax), reported + relax
    if pred.comparator is Comparator.EQ:
        return lo <= pred.value <= hi
    if pred.comparator is Comparator.GE:
        return hi >= pred.value
    return lo <= pred.value


Boxlike = Union[ObjectInstance, Region, BBox]


def _box(x: Boxlike) -> BBox:
    if isinstance(x, ObjectInstance):
        return x.bbox
    if isinstance(x, Region):
        return x.rect
    return x


def relation_between_objects(a: Boxlike, b: Boxlike, rel: SpatialRelation, mode: str = "centroid") -> bool:
    """Whether ``a`` stands in relation ``rel`` to ``b`` (LEFT: a is left of b).

    ``centroid`` compares box centers strictly; ``extent`` requires the boxes'
    projections on the relevant axis to be disjoint.
    """
    rel = SpatialRelation(rel)
    ba, bb = _box(a), _box(b)
    if mode == "centroid":
        (ax, ay), (bx, by) = ba.center, bb.center
        if rel is SpatialRelation.LEFT:
            return ax < bx
        if rel is SpatialRelation.RIGHT:
            return ax > bx
        if rel is SpatialRelation.ABOVE:
            return ay < by
        return ay > by
    if mode == "extent":
        if rel is SpatialRelation.LEFT:
            return ba.x_max < bb.x_min
        if rel is SpatialRelation.RIGHT:
            return ba.x_min > bb.x_max
        if rel is SpatialRelation.ABOVE:
            return ba.y_max < bb.y_min
        return ba.y_min > bb.y_max
    raise ParameterError(f"unknown relation mode {mode!r}")


def _as_mask(g) -> np.ndarray:
    if isinstance(g, OccupancyGrid):
        if g.n_classes != 1:
            raise ParameterError("pass a single-class grid (use grid.for_class(c))")
        return g.cells[0]
    return np.asarray(g, dtype=bool)


def relation_between_grids(ga, gb, rel: SpatialRelation, mode: str = "exists") -> bool:
    """Directional relation between two single-class occupancy masks.

    ``exists``: some true cell of A and some true cell of B satisfy the strict
    column (LEFT/RIGHT) or row (ABOVE/BELOW) inequality. ``centroid``: the
    inequality holds between the mean indices of the true cells.
    False whenever either mask is empty.
    """
    rel = SpatialRelation(rel)
    a, b = _as_mask(ga), _as_mask(gb)
    check_same_g(a, b)
    ra, ca = np.nonzero(a)
    rb, cb = np.nonzero(b)
    if ra.size == 0 or rb.size == 0:
        return False
    horizontal = rel in (SpatialRelation.LEFT, SpatialRelation.RIGHT)
    ia, ib = (ca, cb) if horizontal else (ra, rb)
    less = rel in (SpatialRelation.LEFT, SpatialRelation.ABOVE)
    if mode == "exists":
        return bool(ia.min() < ib.max()) if less else bool(ia.max() > ib.min())
    if mode == "centroid":
        ma, mb = ia.mean(), ib.mean()
        return bool(ma < mb) if less else bool(ma > mb)
    raise ParameterError(f"unknown grid relation mode {mode!r}")


# Query evaluation against exact annotations. ``query`` is a vmq.querylang.QueryAst.

def _attrs_match(obj: ObjectInstance, attrs) -> bool:
    return all(obj.attrs.get(k) == v for k, v in attrs)


def _region_ok(obj: ObjectInstance, rp) -> bool:
    inside = object_in_region(obj, rp.region, rp.mode, rp.min_overlap if rp.mode == "overlap" else 0.5)
    return inside != rp.negated


def var_candidates(query, frame: FrameAnnotation, relation_mode: str = "centroid") -> dict[str, list[int]]:
    """Indices of the frame objects each query variable may bind to (unary constraints only)."""
    out = {}
    for var in query.object_vars:
        regions = [rp for rp in query.region_preds if rp.var == var.name]
        region_orders = [sp for sp in query.spatial_preds if sp.var_a == var.name and sp.target_is_region]
        idx = []
        for k, obj in enumerate(frame.objects):
            if obj.class_id != var.class_id or not _attrs_match(obj, var.attrs):
                continue
            if not all(_region_ok(obj, rp) for rp in regions):
                continue
            # ORDER(a, R) = rel: the region lies ``rel`` of the object.
            if not all(relation_between_objects(sp.region, obj, sp.relation, relation_mode) for sp in region_orders):
                continue
            idx.append(k)
        out[var.name] = idx
    return out


def find_assignment(query, frame: FrameAnnotation, relation_mode: str = "centroid") -> Optional[dict[str, int]]:
    """An injective binding of query variables to object indices, or None."""
    cands = var_candidates(query, frame, relation_mode)
    names = sorted(cands, key=lambda v: len(cands[v]))
    if any(not cands[v] for v in names):
        return None
    binary = [sp for sp in query.spatial_preds if not sp.target_is_region]
    objs = frame.objects

    def consistent(binding):
        for sp in binary:
            if sp.var_a in binding and sp.target in binding:
                # ORDER(a, b) = rel: b lies ``rel`` of a.
                if not relation_between_objects(objs[binding[sp.target]], objs[binding[sp.var_a]],
                                                 sp.relation, relation_mode):
                    return False
        return True

    binding: dict[str, int] = {}
    used: set[int] = set()

    def search(pos):
        if pos == len(names):
            return True
        var = names[pos]
        for k in cands[var]:
            if k in used:
                continue
            binding[var] = k
            used.add(k)
            if consistent(binding) and search(pos + 1):
                return True
            used.discard(k)
            del binding[var]
        return False

    return dict(binding) if search(0) else None


def eval_frame_exact(query, frame: FrameAnnotation, relation_mode: str = "centroid") -> bool:
    """Evaluate the WHERE clause of ``query`` on exact annotations."""
    if query.count_preds:
        counts = count_objects(frame, query.classes)
        if not all(eval_count(p, counts) for p in query.count_preds):
            return False
    if not query.object_vars:
        return True
    return find_assignment(query, frame, relation_mode) is not None


def frame_value(query, frame: FrameAnnotation, relation_mode: str = "centroid") -> float:
    """Per-frame aggregate input: 0/1 for frame-counting queries; for
    ``AVG(class)`` the number of qualifying objects of that class when the
    frame satisfies the query, else 0."""
    if not eval_frame_exact(query, frame, relation_mode):
        return 0.0
    if query.avg_class is None:
        return 1.0
    return float(qualifying_class_count(query, frame, relation_mode))


def qualifying_class_count(query, frame: FrameAnnotation, relation_mode: str = "centroid") -> int:
    var = next((v for v in query.object_vars if v.class_id == query.avg_class), None)
    if var is None:
        return sum(1 for o in frame.objects if o.class_id == query.avg_class)
    return len(var_candidates(query, frame, relation_mode)[var.name])
